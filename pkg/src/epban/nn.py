"""Minimal module system: named parameters, freezing, and a few layers."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor, relu, resolve_dtype


class Module:
    """Parameters are ``Tensor`` attributes; submodules are ``Module`` attributes.

    Attribute insertion order fixes parameter order, which keeps optimizer
    state and checkpoints stable.
    """

    def named_parameters(self, prefix=""):
        seen = set()
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if id(value) not in seen:
                    seen.add(id(value))
                    yield full, value
            elif isinstance(value, Module):
                for sub, p in value.named_parameters(prefix=full + "."):
                    if id(p) not in seen:
                        seen.add(id(p))
                        yield sub, p

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unknown = set(state) - set(params)
        if missing or unknown:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unknown={sorted(unknown)}")
        for name, arr in state.items():
            p = params[name]
            if p.shape != arr.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data[...] = arr

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None
        return self

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True
        return self

    @property
    def trainable(self):
        return any(p.requires_grad for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return sum(p.size for p in self.parameters())


def _he_normal(rng, shape, fan_in, dtype, gain=1.0):
    std = gain * np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, dtype=dtype)


class Conv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, padding=0, dtype=np.float32, gain=1.0):
        dtype = resolve_dtype(dtype)
        self.stride = stride
        self.padding = padding
        self.weight = _he_normal(rng, (cout, cin, k, k), cin * k * k, dtype, gain)
        self.bias = Tensor(np.zeros(cout), requires_grad=True, dtype=dtype)

    def __call__(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, fin, fout, rng, dtype=np.float32, gain=1.0):
        dtype = resolve_dtype(dtype)
        self.weight = _he_normal(rng, (fout, fin), fin, dtype, gain)
        self.bias = Tensor(np.zeros(fout), requires_grad=True, dtype=dtype)

    def __call__(self, x):
        return F.linear(x, self.weight, self.bias)


class ResBlock(Module):
    """Two 3x3 convolutions with an identity skip (ResNet basic block)."""

    def __init__(self, channels, rng, dtype=np.float32):
        self.conv1 = Conv2d(channels, channels, 3, rng, padding=1, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, rng, padding=1, dtype=dtype, gain=0.5)

    def __call__(self, x):
        return relu(self.conv2(relu(self.conv1(x))) + x)
