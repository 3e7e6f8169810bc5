"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    Names whose gradient is ``None`` are skipped, so frozen parameters keep
    both their values and their moment estimates untouched.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        if g is None:
            continue
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
            state.t[name] = 0
        m, v = state.m[name], state.v[name]
        state.t[name] += 1
        t = state.t[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype, copy=False)


class Adam:
    def __init__(self, named_params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(named_params)
        self.lr = lr
        self.state = AdamState(beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self, lr=None):
        grads = {n: (p.grad if p.requires_grad else None) for n, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr if lr is None else lr)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
