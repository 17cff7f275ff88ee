"""Minimal module tree over :mod:`hdmba.tensor`.

Parameters are discovered by attribute traversal in assignment order, which
gives stable dotted names such as ``rdm.0.dml.1.wssm.in_proj.weight``.
"""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, (Module, Parameter)):
            self._children[name] = value
        elif name in self.__dict__.get("_children", {}):
            del self._children[name]
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, child in self._children.items():
            full = f"{prefix}{name}"
            if isinstance(child, Parameter):
                yield full, child
            else:
                yield from child.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise T.ShapeError(f"load {name}", p.shape, arr.shape)
            p.data = np.array(arr, dtype=p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    """y = x @ W + b with W stored as (in, out)."""

    def __init__(self, n_in: int, n_out: int, bias: bool = True, *, rng: np.random.Generator, dtype=None):
        super().__init__()
        dtype = dtype or T.get_default_dtype()
        self.n_in, self.n_out = n_in, n_out
        self.weight = Parameter(uniform_fan_in(rng, (n_in, n_out), n_in, dtype))
        if bias:
            self.bias = Parameter(uniform_fan_in(rng, (n_out,), n_in, dtype))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise T.ShapeError("linear", x.shape, self.weight.shape)
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Conv2d(Module):
    """Same-padded stride-1 k×k convolution on (N, H, W, C) tensors."""

    def __init__(self, c_in: int, c_out: int, kernel: int = 3, *, rng: np.random.Generator,
                 dtype=None, zero_init: bool = False):
        super().__init__()
        dtype = dtype or T.get_default_dtype()
        shape = (kernel, kernel, c_in, c_out)
        if zero_init:
            self.weight = Parameter(np.zeros(shape, dtype=dtype))
            self.bias = Parameter(np.zeros((c_out,), dtype=dtype))
        else:
            fan_in = kernel * kernel * c_in
            self.weight = Parameter(uniform_fan_in(rng, shape, fan_in, dtype))
            self.bias = Parameter(uniform_fan_in(rng, (c_out,), fan_in, dtype))

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6, dtype=None):
        super().__init__()
        dtype = dtype or T.get_default_dtype()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, dtype=dtype))
        self.bias = Parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps)


class RMSNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6, dtype=None):
        super().__init__()
        dtype = dtype or T.get_default_dtype()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return T.rms_norm(x, self.weight, self.eps)
