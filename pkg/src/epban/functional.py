"""Neural-network operators built on :mod:`epban.tensor`."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, ValidationError
from .tensor import Tensor, mean, reshape, transpose

DROPOUT_MODES = ("train", "eval")


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D cross-correlation (no kernel flip) of ``x[B,C,H,W]`` with ``w[O,C,kh,kw]``."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape} and {w.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, weight {w.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    Hp, Wp = H + 2 * ph, W + 2 * pw
    if kh > Hp or kw > Wp:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // sh + 1
    Wo = (Wp - kw) // sw + 1

    xd = x.data
    if ph or pw:
        xd = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if kh == 1 and kw == 1 and sh == 1 and sw == 1:
        cols = xd.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, C)
    else:
        win = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :Ho, :Wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    wm = w.data.reshape(O, -1)
    out = cols @ wm.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2))

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gw = (gm.T @ cols).reshape(w.shape) if w.requires_grad else None
        gb = gm.sum(axis=0) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gm @ wm).reshape(B, Ho, Wo, C, kh, kw)
            gxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, ph:ph + H, pw:pw + W]
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor._make(out, parents, backward, "conv2d")


def linear(x, w, b=None):
    """``x[N,in] @ w[out,in].T + b``."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd.T
    if b is not None:
        out = out + b.data

    def backward(g):
        gx = g @ wd if x.requires_grad else None
        gw = g.T @ xd if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, (g.sum(axis=0) if b.requires_grad else None)

    parents = (x, w, b) if b is not None else (x, w)
    return Tensor._make(out, parents, backward, "linear")


def mean_pool2d_global(x):
    if x.ndim != 4:
        raise ShapeError(f"global pooling expects B,C,H,W, got {x.shape}")
    return mean(x, axis=(2, 3))


def avg_pool2d(x, k):
    B, C, H, W = x.shape
    if H % k or W % k:
        raise ShapeError(f"avg_pool2d: spatial size {H}x{W} not divisible by {k}")
    out = x.data.reshape(B, C, H // k, k, W // k, k).mean(axis=(3, 5))

    def backward(g):
        g = np.repeat(np.repeat(g, k, axis=2), k, axis=3)
        return (g / (k * k),)

    return Tensor._make(out, (x,), backward, "avg_pool2d")


def flatten(x):
    return reshape(x, (x.shape[0], -1))


def dropout(x, p, mode, rng=None):
    """Inverted dropout: identity in eval mode, ``x * mask / (1 - p)`` in train mode."""
    if mode not in DROPOUT_MODES:
        raise ValidationError(f"dropout mode must be one of {DROPOUT_MODES}, got {mode!r}")
    if not 0 <= p < 1:
        raise ValidationError(f"dropout probability must lie in [0, 1), got {p}")
    if mode == "eval" or p == 0:
        return x
    if rng is None:
        raise ValidationError("train-mode dropout needs a random generator")
    mask = ((rng.random(x.shape) >= p) / (1.0 - p)).astype(x.dtype)
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def pixel_shuffle(x, r):
    B, C, H, W = x.shape
    if C % (r * r):
        raise ShapeError(f"pixel_shuffle: channels {C} not divisible by r^2={r * r}")
    c = C // (r * r)
    y = reshape(x, (B, c, r, r, H, W))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (B, c, H * r, W * r))


def pixel_unshuffle(x, r):
    B, C, H, W = x.shape
    if H % r or W % r:
        raise ShapeError(f"pixel_unshuffle: spatial size {H}x{W} not divisible by r={r}")
    y = reshape(x, (B, C, H // r, r, W // r, r))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (B, C * r * r, H // r, W // r))


def channel_shuffle(x, groups):
    B, C, H, W = x.shape
    if C % groups:
        raise ShapeError(f"channel_shuffle: channels {C} not divisible by groups={groups}")
    y = reshape(x, (B, groups, C // groups, H, W))
    y = transpose(y, (0, 2, 1, 3, 4))
    return reshape(y, (B, C, H, W))
