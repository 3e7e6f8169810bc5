"""Differentiable SSIM on luma with a Gaussian window and valid-mode filtering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .functional import conv2d
from .imaging import LUMA_WEIGHTS
from .tensor import Tensor, as_tensor, no_grad


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValidationError("SSIM constants K1, K2 must be positive")
        if self.window < 1 or self.sigma <= 0:
            raise ValidationError("SSIM window must be >= 1 with positive sigma")

    def kernel_1d(self):
        x = np.arange(self.window, dtype=np.float64) - (self.window - 1) / 2
        g = np.exp(-(x * x) / (2 * self.sigma ** 2))
        return g / g.sum()

    def window_2d(self):
        g = self.kernel_1d()
        return np.outer(g, g)


def to_luma(x):
    """(B,3,H,W) tensor -> (B,1,H,W) BT.601 luma."""
    w = Tensor(np.asarray(LUMA_WEIGHTS).reshape(1, 3, 1, 1), dtype=x.dtype)
    return (x * w).sum(axis=1, keepdims=True)


def ssim_map(a, b, cfg=SsimConfig()):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim == 3:
        a = a.reshape((1,) + a.shape)
    if b.ndim == 3:
        b = b.reshape((1,) + b.shape)
    if a.shape != b.shape:
        raise ShapeError(f"ssim of mismatched images {a.shape} vs {b.shape}")
    h, w = a.shape[-2:]
    if h < cfg.window or w < cfg.window:
        raise ShapeError(f"image {h}x{w} smaller than the {cfg.window}x{cfg.window} SSIM window")

    g = cfg.kernel_1d()
    kv = Tensor(g.reshape(1, 1, -1, 1), dtype=a.dtype)
    kh = Tensor(g.reshape(1, 1, 1, -1), dtype=a.dtype)

    def blur(t):
        return conv2d(conv2d(t, kv), kh)

    ya, yb = to_luma(a), to_luma(b)
    mu_a, mu_b = blur(ya), blur(yb)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    var_a = blur(ya * ya) - mu_aa
    var_b = blur(yb * yb) - mu_bb
    cov = blur(ya * yb) - mu_ab
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    num = (2 * mu_ab + c1) * (2 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return num / den


def ssim_per_image(a, b, cfg=SsimConfig()):
    return ssim_map(a, b, cfg).mean(axis=(1, 2, 3))


def ssim(a, b, cfg=SsimConfig()):
    """Mean local SSIM over all valid windows (and over the batch)."""
    return ssim_map(a, b, cfg).mean()


def ssim_value(a, b, cfg=SsimConfig()):
    """Plain-float SSIM of two numpy images, computed in float64."""
    with no_grad():
        return float(ssim(Tensor(a, dtype="f64"), Tensor(b, dtype="f64"), cfg).data)
