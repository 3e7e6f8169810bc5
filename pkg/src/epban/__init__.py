"""Efficient-PBAN full-reference quality metric and perceptual SR loss, on a numpy autodiff core."""

__version__ = "0.1.0"
