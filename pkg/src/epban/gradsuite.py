"""Finite-difference checks over every differentiable op and the full network."""
from __future__ import annotations

import time

import numpy as np

from . import functional as F
from . import tensor as T
from .gradcheck import check_gradients
from .pban import (PbanModel, attention_weights, axial_cross_attention, forward, pba_plus_forward,
                   qkv_project, quality_head_forward, subec_fuse)
from .ssim import ssim, ssim_map

TOLERANCE = 1e-4


def _u(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def _away_from_zero(rng, *shape, margin=0.1):
    """Uniform draws kept off the ReLU kink so central differences are valid."""
    x = _u(rng, *shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def cases(seed=0):
    """(name, fn, arrays) triples; each ``fn`` maps f64 Tensors to a Tensor."""
    rng = np.random.default_rng(seed)
    model = PbanModel(channels=8, seed=seed, dtype="f64")
    c = model.channels

    def dropped(x):
        return F.dropout(x, 0.2, "train", np.random.default_rng(1))

    return [
        ("add", T.add, [_u(rng, 3, 4), _u(rng, 4)]),
        ("sub", T.sub, [_u(rng, 3, 4), _u(rng, 3, 1)]),
        ("mul", T.mul, [_u(rng, 3, 4), _u(rng, 1, 4)]),
        ("div", T.div, [_u(rng, 3, 4), rng.uniform(0.5, 2.0, (3, 4))]),
        ("neg", T.neg, [_u(rng, 3, 4)]),
        ("relu", T.relu, [_away_from_zero(rng, 3, 4)]),
        ("sigmoid", T.sigmoid, [_u(rng, 3, 4)]),
        ("sqrt", T.sqrt, [rng.uniform(0.5, 2.0, (3, 4))]),
        ("exp", T.exp, [_u(rng, 3, 4)]),
        ("sum", lambda x: T.tsum(x, axis=1), [_u(rng, 3, 4)]),
        ("mean", lambda x: T.mean(x, axis=0, keepdims=True), [_u(rng, 3, 4)]),
        ("reshape", lambda x: T.reshape(x, (6, 2)), [_u(rng, 3, 4)]),
        ("transpose", lambda x: T.transpose(x, (2, 0, 1)), [_u(rng, 2, 3, 4)]),
        ("concat", lambda a, b: T.concat([a, b], axis=1), [_u(rng, 2, 3), _u(rng, 2, 2)]),
        ("matmul", T.matmul, [_u(rng, 4, 5), _u(rng, 5, 3)]),
        ("matmul_batched", T.matmul, [_u(rng, 2, 4, 5), _u(rng, 2, 5, 3)]),
        ("softmax", lambda x: T.softmax(x, axis=-2), [_u(rng, 2, 4, 4)]),
        ("stddev_all", lambda x: T.stddev_all(x, batch_axes=(0,)), [_u(rng, 3, 4, 4)]),
        ("conv2d", lambda x, w, b: F.conv2d(x, w, b, stride=1, padding=1),
         [_u(rng, 1, 2, 4, 4), _u(rng, 3, 2, 3, 3), _u(rng, 3)]),
        ("conv2d_stride2", lambda x, w, b: F.conv2d(x, w, b, stride=2, padding=1),
         [_u(rng, 1, 2, 4, 4), _u(rng, 3, 2, 3, 3), _u(rng, 3)]),
        ("conv2d_1x1", lambda x, w, b: F.conv2d(x, w, b),
         [_u(rng, 1, 4, 3, 3), _u(rng, 2, 4, 1, 1), _u(rng, 2)]),
        ("linear", F.linear, [_u(rng, 3, 5), _u(rng, 2, 5), _u(rng, 2)]),
        ("mean_pool2d_global", F.mean_pool2d_global, [_u(rng, 2, 3, 4, 4)]),
        ("avg_pool2d", lambda x: F.avg_pool2d(x, 2), [_u(rng, 1, 2, 4, 4)]),
        ("flatten", F.flatten, [_u(rng, 2, 3, 2, 2)]),
        ("dropout_train", dropped, [_u(rng, 4, 6)]),
        ("dropout_eval", lambda x: F.dropout(x, 0.2, "eval"), [_u(rng, 4, 6)]),
        ("pixel_shuffle", lambda x: F.pixel_shuffle(x, 2), [_u(rng, 1, 8, 2, 3)]),
        ("pixel_unshuffle", lambda x: F.pixel_unshuffle(x, 2), [_u(rng, 1, 2, 4, 6)]),
        ("channel_shuffle", lambda x: F.channel_shuffle(x, 4), [_u(rng, 1, 8, 2, 2)]),
        ("ssim_map", ssim_map, [rng.uniform(0, 1, (1, 3, 16, 16)), rng.uniform(0, 1, (1, 3, 16, 16))]),
        ("ssim", ssim, [rng.uniform(0, 1, (1, 3, 16, 16)), rng.uniform(0, 1, (1, 3, 16, 16))]),
        ("attention_weights", lambda s: attention_weights(s, model.eps), [_u(rng, 2, 5, 5)]),
        ("axial_attention_h", lambda q, k, v: axial_cross_attention(q, k, v, "h", model.eps),
         [_u(rng, 1, 4, 4, 3), _u(rng, 1, 4, 4, 3), _u(rng, 1, 4, 4, 3)]),
        ("axial_attention_w", lambda q, k, v: axial_cross_attention(q, k, v, "w", model.eps),
         [_u(rng, 1, 4, 3, 4), _u(rng, 1, 4, 3, 4), _u(rng, 1, 4, 3, 4)]),
        ("qkv_project", lambda f: T.concat(list(qkv_project(f, model, "sr", "h")), 1),
         [_u(rng, 1, c, 4, 4)]),
        ("pba_plus", lambda a, b: T.concat(list(pba_plus_forward(a, b, model)), 1),
         [_u(rng, 1, c, 6, 6), _u(rng, 1, c, 6, 6)]),
        ("subec_fuse", lambda i1, i2, a, b: T.concat(list(subec_fuse((i1, i2), a, b, model)), 1),
         [_u(rng, 1, c, 4, 4), _u(rng, 1, c, 4, 4), _u(rng, 1, c, 4, 4), _u(rng, 1, c, 4, 4)]),
        ("quality_head", lambda a, b: quality_head_forward(a, b, model, "eval"),
         [_u(rng, 2, c, 4, 4), _u(rng, 2, c, 4, 4)]),
        ("network", lambda s, h: forward(model, s, h, "eval"),
         [rng.uniform(0, 1, (1, 3, 16, 16)), rng.uniform(0, 1, (1, 3, 16, 16))]),
    ]


def run_suite(seed=0):
    """Returns rows of (name, max relative error, seconds)."""
    rows = []
    for name, fn, arrays in cases(seed):
        t0 = time.perf_counter()
        err = max(check_gradients(fn, arrays, seed=seed))
        rows.append((name, float(err), time.perf_counter() - t0))
    return rows


def format_table(rows, tol=TOLERANCE):
    width = max(len(r[0]) for r in rows)
    lines = [f"{'op':<{width}}  max_rel_err  status"]
    for name, err, _ in rows:
        lines.append(f"{name:<{width}}  {err:.3e}    {'ok' if err < tol else 'FAIL'}")
    return "\n".join(lines)
