"""Quality regression loss and the normalized distortion + perceptual mixture."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ContractError, ValidationError
from .pban import forward
from .ssim import SsimConfig, ssim
from .tensor import Tensor, as_tensor

EPS_DEN = 1e-6


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValidationError("loss weights must be finite")
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError(f"loss weights must be nonnegative, got ({self.alpha}, {self.beta})")
        if self.alpha + self.beta <= 0:
            raise ValidationError("alpha + beta must be positive")

    @classmethod
    def from_ratio(cls, text):
        """``"1/9"`` (beta/alpha) -> LossWeights(alpha=0.9, beta=0.1)."""
        try:
            num, den = (Fraction(p.strip()) for p in str(text).split("/"))
        except ValueError:
            raise ValidationError(f"ratio must look like 'beta/alpha', got {text!r}") from None
        total = num + den
        if num < 0 or den < 0 or total == 0:
            raise ValidationError(f"invalid ratio {text!r}")
        return cls(alpha=float(den / total), beta=float(num / total))

    @property
    def ratio(self):
        return self.beta / self.alpha if self.alpha else float("inf")


def quality_regression_loss(pred, target):
    """Mean squared error between predicted and ground-truth quality scores."""
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if not np.all(np.isfinite(target)):
        raise ValidationError("quality target is not finite")
    r = pred - Tensor(np.broadcast_to(target, pred.shape).copy(), dtype=pred.dtype)
    return (r * r).mean()


@dataclass
class CombinedLoss:
    loss: Tensor
    distortion: float
    perceptual: float
    denominator: float


def combined_loss(x_sr, x_hr, metric, ssim_cfg=SsimConfig(), weights=LossWeights(), stopgrad=True,
                  eps_den=EPS_DEN):
    """Mixture of L_D = -SSIM and L_P = -metric score, normalized by |L_D + L_P|.

    With ``stopgrad`` (default) the normalizer is a per-call constant, so the
    gradient is ``(alpha dL_D + beta dL_P) / den``. Without it the literal ratio
    form is differentiated, which for alpha == beta is a constant with zero
    gradient. A zero weight drops its term together with the normalizer.
    """
    if metric.trainable:
        raise ContractError("combined_loss needs a frozen metric; call metric.freeze() first")
    x_sr = as_tensor(x_sr)
    x_hr = as_tensor(x_hr, dtype=x_sr.dtype)
    a, b = weights.alpha, weights.beta

    if b == 0:
        l_d = -ssim(x_sr, x_hr, ssim_cfg)
        return CombinedLoss(l_d * a, float(l_d.data), float("nan"), 1.0)
    l_p = -forward(metric, x_sr, x_hr, mode="eval").mean()
    if a == 0:
        return CombinedLoss(l_p * b, float("nan"), float(l_p.data), 1.0)
    l_d = -ssim(x_sr, x_hr, ssim_cfg)

    total = l_d + l_p
    den = abs(float(total.data)) + eps_den
    if stopgrad:
        loss = (l_d * a + l_p * b) * (1.0 / den)
    else:
        loss = l_d * a / total + l_p * b / total
    return CombinedLoss(loss, float(l_d.data), float(l_p.data), den)


def degeneracy_gradient(x_sr, x_hr, metric, ssim_cfg=SsimConfig(), weights=LossWeights(0.5, 0.5)):
    """Max |d loss / d x_sr| when the literal ratio mixture is differentiated end to end.

    For alpha == beta this is analytically zero: the mixture collapses to alpha.
    """
    x = Tensor(np.array(as_tensor(x_sr).data), requires_grad=True)
    out = combined_loss(x, x_hr, metric, ssim_cfg, weights, stopgrad=False)
    out.loss.backward()
    return float(np.abs(x.grad).max())
