"""Central finite-difference checks of autodiff gradients."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(analytic, numeric):
    """max |a - n| scaled by the larger of the two gradients' max magnitudes."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    diff = np.abs(analytic - numeric).max(initial=0.0)
    if scale == 0.0:
        return diff
    return diff / scale


def check_gradients(fn, arrays, wrt=None, h=1e-5, seed=0):
    """Compare autodiff against central differences for ``fn(*tensors)``.

    The (possibly non-scalar) output is projected onto a fixed random direction
    so that one backward pass covers the whole Jacobian. Returns a list with the
    relative error for each input index in ``wrt`` (default: all inputs).
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    wrt = list(range(len(arrays))) if wrt is None else list(wrt)

    tensors = [Tensor(a, requires_grad=(i in wrt)) for i, a in enumerate(arrays)]
    out = fn(*tensors)
    proj = np.random.default_rng(seed).uniform(-1.0, 1.0, size=out.shape)
    (out * Tensor(proj)).sum().backward()

    def objective():
        with no_grad():
            y = fn(*[Tensor(a) for a in arrays])
        return float((y.data * proj).sum())

    errors = []
    for i in wrt:
        a = arrays[i]
        num = np.zeros_like(a)
        flat = a.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = objective()
            flat[j] = orig - h
            fm = objective()
            flat[j] = orig
            nflat[j] = (fp - fm) / (2 * h)
        analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(a)
        errors.append(relative_error(analytic, num))
    return errors
