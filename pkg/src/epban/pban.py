"""Efficient-PBAN: a full-reference quality network over (SR, HR) image pairs.

Pipeline: shared stem -> per-branch residual block -> bi-directional axial
cross-attention (PBA+) -> SubEC gated fusion -> pooled MLP quality head.
"""
from __future__ import annotations

import numpy as np

from . import functional as F
from .errors import ShapeError, ValidationError
from .nn import Conv2d, Linear, Module, ResBlock
from .tensor import (Tensor, as_tensor, concat, matmul, no_grad, relu, resolve_dtype, sigmoid, softmax,
                     stddev_all)

BRANCHES = ("sr", "hr")
AXES = ("h", "w")
SUBEC_GROUPS = 4
SUBEC_SCALE = 2
HEAD_DROPOUT = 0.2
# images in [0, 1] are mapped to [-1, 1] before the stem
INPUT_SCALE = 2.0
INPUT_SHIFT = -1.0


class Stem(Module):
    """Stride-2 3x3 conv + ReLU followed by one residual block ("Layer1")."""

    def __init__(self, channels, rng, dtype):
        self.conv = Conv2d(3, channels, 3, rng, stride=2, padding=1, dtype=dtype)
        self.layer1 = ResBlock(channels, rng, dtype=dtype)

    def __call__(self, x):
        return self.layer1(relu(self.conv(x)))


class QKV(Module):
    def __init__(self, channels, rng, dtype):
        self.q = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.k = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.v = Conv2d(channels, channels, 1, rng, dtype=dtype)


class PBA(Module):
    """Independent Q/K/V projections for each branch and each attention axis."""

    def __init__(self, channels, rng, dtype):
        for branch in BRANCHES:
            for axis in AXES:
                setattr(self, f"{branch}_{axis}", QKV(channels, rng, dtype))

    def get(self, branch, axis):
        return getattr(self, f"{branch}_{axis}")


class SubEC(Module):
    """Channel gate (shuffle -> pool -> FC -> sigmoid) and spatial gate
    (unshuffle -> 1x1 -> shuffle -> 1x1 -> sigmoid)."""

    def __init__(self, channels, rng, dtype):
        r2 = SUBEC_SCALE * SUBEC_SCALE
        self.channel_fc = Linear(channels, channels, rng, dtype=dtype)
        self.pixel_conv = Conv2d(channels * r2, channels * r2, 1, rng, dtype=dtype)
        self.spatial_conv = Conv2d(channels, 1, 1, rng, dtype=dtype)

    def channel_gate(self, x):
        y = F.channel_shuffle(x, SUBEC_GROUPS)
        y = F.flatten(F.mean_pool2d_global(y))
        y = sigmoid(self.channel_fc(y))
        return y.reshape(y.shape + (1, 1))

    def spatial_gate(self, x):
        y = F.pixel_unshuffle(x, SUBEC_SCALE)
        y = F.pixel_shuffle(self.pixel_conv(y), SUBEC_SCALE)
        return sigmoid(self.spatial_conv(y))


class DirectionMLP(Module):
    def __init__(self, channels, rng, dtype):
        self.fc1 = Linear(channels, channels // 2, rng, dtype=dtype)
        self.fc2 = Linear(channels // 2, channels // 4, rng, dtype=dtype)

    def __call__(self, x, mode, rng):
        y = F.flatten(F.mean_pool2d_global(x))
        y = F.dropout(relu(self.fc1(y)), HEAD_DROPOUT, mode, rng)
        return F.dropout(relu(self.fc2(y)), HEAD_DROPOUT, mode, rng)


class QualityHead(Module):
    def __init__(self, channels, rng, dtype, score_offset):
        self.hr_to_sr = DirectionMLP(channels, rng, dtype)
        self.sr_to_hr = DirectionMLP(channels, rng, dtype)
        self.fuse = Linear(channels // 2, channels // 4, rng, dtype=dtype)
        self.out = Linear(channels // 4, 1, rng, dtype=dtype)
        self.out.bias.data[...] = score_offset


class PbanModel(Module):
    def __init__(self, channels=16, eps=1e-8, seed=0, dtype=np.float32, score_offset=3.0):
        if channels < 8 or channels % 4:
            raise ValidationError(f"channels must be >= 8 and divisible by 4, got {channels}")
        if eps <= 0:
            raise ValidationError(f"eps must be positive, got {eps}")
        dtype = resolve_dtype(dtype)
        rng = np.random.default_rng(seed)
        self.channels = channels
        self.eps = eps
        self.dtype = dtype
        self.stem = Stem(channels, rng, dtype)
        self.branch_sr = ResBlock(channels, rng, dtype=dtype)
        self.branch_hr = ResBlock(channels, rng, dtype=dtype)
        self.pba = PBA(channels, rng, dtype)
        self.subec = SubEC(channels, rng, dtype)
        self.head = QualityHead(channels, rng, dtype, score_offset)

    def config(self):
        return {"channels": self.channels, "eps": self.eps}

    def __call__(self, x_sr, x_hr, mode="eval", rng=None):
        return forward(self, x_sr, x_hr, mode, rng)


# -- stages ------------------------------------------------------------------------


def extract_features(x_sr, x_hr, model):
    x_sr = as_tensor(x_sr, dtype=model.dtype)
    x_hr = as_tensor(x_hr, dtype=model.dtype)
    if x_sr.ndim != 4 or x_sr.shape != x_hr.shape or x_sr.shape[1] != 3:
        raise ShapeError(f"expected matching (B,3,H,W) inputs, got {x_sr.shape} and {x_hr.shape}")
    h, w = x_sr.shape[-2:]
    if h % 4 or w % 4:
        raise ShapeError(f"input size {h}x{w} must be divisible by 4 (stem stride 2 x shuffle factor 2)")
    f_sr = model.branch_sr(model.stem(x_sr * INPUT_SCALE + INPUT_SHIFT))
    f_hr = model.branch_hr(model.stem(x_hr * INPUT_SCALE + INPUT_SHIFT))
    return f_sr, f_hr


def qkv_project(f, model, branch, axis):
    proj = model.pba.get(branch, axis)
    return proj.q(f), proj.k(f), proj.v(f)


def attention_weights(scores, eps):
    """Std-normalized softmax over the first index of each trailing N x N score matrix."""
    std = stddev_all(scores, batch_axes=tuple(range(scores.ndim - 2)), keepdims=True)
    return softmax(scores / (std + eps), axis=-2)


# B,C,H,W -> slices whose last two axes are (C, N) with N the attended axis
_SLICE_PERM = {"h": (0, 3, 1, 2), "w": (0, 2, 1, 3)}
_UNSLICE_PERM = {"h": (0, 2, 3, 1), "w": (0, 2, 1, 3)}


def axial_cross_attention(q, k, v, axis, eps, return_weights=False):
    """Attention along one spatial axis between query/value and key features.

    For ``axis="h"`` each of the B*W columns is a C x H matrix; scores are
    ``Q^T K`` (H x H) and the output column is ``V A``. ``axis="w"`` does the
    same over the B*H rows.
    """
    if axis not in _SLICE_PERM:
        raise ValidationError(f"axis must be 'h' or 'w', got {axis!r}")
    if not (q.shape == k.shape == v.shape) or q.ndim != 4:
        raise ShapeError(f"q/k/v shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    if q.shape[2] < 2 or q.shape[3] < 2:
        raise ShapeError(f"axial attention needs H, W >= 2, got {q.shape[2]}x{q.shape[3]}")
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    perm = _SLICE_PERM[axis]
    qs, ks, vs = q.transpose(perm), k.transpose(perm), v.transpose(perm)
    a = attention_weights(matmul(qs.swapaxes(-1, -2), ks), eps)
    o = matmul(vs, a).transpose(_UNSLICE_PERM[axis])
    return (o, a) if return_weights else o


def pba_plus_forward(f_sr, f_hr, model, return_weights=False):
    """Returns (O_hr_to_sr, O_sr_to_hr), each the mean of H- and W-axis attention."""
    proj = {(b, ax): qkv_project(f, model, b, ax)
            for b, f in (("sr", f_sr), ("hr", f_hr)) for ax in AXES}
    outs = {}
    weights = {}
    for direction, (src, other) in (("hr_to_sr", ("sr", "hr")), ("sr_to_hr", ("hr", "sr"))):
        per_axis = []
        for ax in AXES:
            q, _, v = proj[(src, ax)]
            k = proj[(other, ax)][1]
            o, a = axial_cross_attention(q, k, v, ax, model.eps, return_weights=True)
            per_axis.append(o)
            weights[(direction, ax)] = a
        outs[direction] = (per_axis[0] + per_axis[1]) * 0.5
    result = (outs["hr_to_sr"], outs["sr_to_hr"])
    return (result, weights) if return_weights else result


def subec_fuse(attn, f_sr, f_hr, model):
    o_hr_to_sr, o_sr_to_hr = attn
    c = o_hr_to_sr.shape[1]
    if c % SUBEC_GROUPS or o_hr_to_sr.shape[2] % SUBEC_SCALE or o_hr_to_sr.shape[3] % SUBEC_SCALE:
        raise ShapeError(f"SubEC needs C % {SUBEC_GROUPS} == 0 and even H, W; got {o_hr_to_sr.shape}")
    fused = []
    for f, i in ((f_sr, o_hr_to_sr), (f_hr, o_sr_to_hr)):
        fused.append(f + i * model.subec.channel_gate(i) * model.subec.spatial_gate(i))
    return tuple(fused)


def quality_head_forward(o_hr_to_sr, o_sr_to_hr, model, mode="eval", rng=None):
    head = model.head
    a = head.hr_to_sr(o_hr_to_sr, mode, rng)
    b = head.sr_to_hr(o_sr_to_hr, mode, rng)
    q = head.out(head.fuse(concat([a, b], axis=1)))
    return q.reshape((q.shape[0],))


def forward(model, x_sr, x_hr, mode="eval", rng=None):
    """Predicted quality score, one per batch item."""
    f_sr, f_hr = extract_features(x_sr, x_hr, model)
    attn = pba_plus_forward(f_sr, f_hr, model)
    fused = subec_fuse(attn, f_sr, f_hr, model)
    return quality_head_forward(*fused, model, mode=mode, rng=rng)


def predict(model, x_sr, x_hr, batch_size=32):
    """Eval-mode scores for numpy image batches, without building a graph."""
    scores = []
    with no_grad():
        for i in range(0, len(x_sr), batch_size):
            q = forward(model, Tensor(x_sr[i:i + batch_size], dtype=model.dtype),
                        Tensor(x_hr[i:i + batch_size], dtype=model.dtype), "eval")
            scores.append(q.data.astype(np.float64))
    return np.concatenate(scores) if scores else np.zeros(0)
