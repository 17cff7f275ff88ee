"""Dense numpy-backed tensors with reverse-mode differentiation.

Every array-valued quantity in the network lives in a :class:`Tensor`. An op
returns a new tensor that remembers its operands and a closure mapping the
output gradient to operand gradients; :meth:`Tensor.backward` replays those
closures in reverse topological order.

Layout is row-major (C order) throughout and no op returns a view that aliases
an operand's storage.
"""
from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Tensor", "Parameter", "ShapeError", "no_grad", "is_grad_enabled",
    "set_default_dtype", "get_default_dtype", "deterministic_mode",
    "tensor", "zeros", "ones",
    "add", "sub", "mul", "div", "neg", "matmul", "exp", "log", "reciprocal",
    "sqrt", "square", "absolute", "sum", "mean", "reshape", "transpose",
    "broadcast_to", "pad", "take", "concat", "silu", "sigmoid", "gelu",
    "softplus", "layer_norm", "rms_norm", "conv2d", "depthwise_conv1d",
]

_DEFAULT_DTYPE = np.dtype(np.float32)
_GRAD_ENABLED = True

DETERMINISTIC_ENV = "HDMBA_DETERMINISTIC"


class ShapeError(ValueError):
    """Operand shapes are incompatible for an op."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        desc = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {desc}")


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def deterministic_mode() -> bool:
    """True unless ``HDMBA_DETERMINISTIC`` is set to 0/false/off.

    Every kernel here reduces in a fixed order, so the flag does not change any
    result today. Training records it in each checkpoint so a run saved with it
    switched off is flagged when resumed.
    """
    return os.environ.get(DETERMINISTIC_ENV, "1").lower() not in ("0", "false", "off", "no")


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            is_float_array = isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64)
            dtype = data.dtype if is_float_array else _DEFAULT_DTYPE
        arr = np.array(data, dtype=dtype, copy=True, order="C")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    # -- construction of op results -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable, op: str) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data)
        out.data = data if data.flags.c_contiguous else np.ascontiguousarray(data)
        out.grad = None
        out.op = op
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties ---------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- autodiff -----------------------------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf.

        ``self`` must be a scalar unless an explicit seed ``grad`` is given.
        Fan-out is handled by summing contributions.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward: loss must be a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.dtype).reshape(self.shape)
        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -----------------------------------------------------------------

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        if p == 0.5:
            return sqrt(self)
        raise NotImplementedError("only x**2 and x**0.5 are supported")

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)
    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)
    def exp(self): return exp(self)


class Parameter(Tensor):
    """A trainable leaf tensor. Names are assigned by the owning module tree."""

    __slots__ = ()

    def __init__(self, data, trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)

    @property
    def trainable(self) -> bool:
        return self.requires_grad


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


# ---------------------------------------------------------------------------------------
# helpers


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a)
    b = _as_tensor(b)
    return _as_tensor(a, b), b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=None, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE), requires_grad)


def ones(shape, dtype=None, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype or _DEFAULT_DTYPE), requires_grad)


# ---------------------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    return Tensor._make(a.data + b.data, (a, b),
                        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    return Tensor._make(a.data - b.data, (a, b),
                        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    return mul(a, reciprocal(_pair(a, b)[1]))


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), lambda g: (-g,), "neg")


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return Tensor._make(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def square(a: Tensor) -> Tensor:
    return Tensor._make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def absolute(a: Tensor) -> Tensor:
    # subgradient at 0 is 0 (np.sign(0) == 0)
    return Tensor._make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


# ---------------------------------------------------------------------------------------
# reductions and shape ops


def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._make(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    out = a.data.sum(axis=axes, keepdims=keepdims) / count

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return Tensor._make(np.asarray(out, dtype=a.dtype), (a,), backward, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return Tensor._make(out.copy(), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, axes)
    inv = tuple(np.argsort(axes))
    return Tensor._make(a.data.transpose(axes).copy(), (a,),
                        lambda g: (g.transpose(inv),), "transpose")


def broadcast_to(a: Tensor, shape) -> Tensor:
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast", a.shape, tuple(shape)) from None
    return Tensor._make(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast")


def _getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in parts)

    def backward(g):
        ga = np.zeros_like(a.data)
        if basic:
            ga[idx] = g
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return Tensor._make(np.array(out), (a,), backward, "slice")


def take(a: Tensor, indices, axis: int) -> Tensor:
    """Gather along one axis; repeated indices accumulate in backward."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    out = np.take(a.data, indices, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        moved = np.moveaxis(ga, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (ga,)

    return Tensor._make(out, (a,), backward, "take")


def _reflect_index(n: int, before: int, after: int) -> np.ndarray:
    idx = np.arange(-before, n + after)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def pad(a: Tensor, pad_width, mode: str = "constant") -> Tensor:
    """Pad with zeros (``constant``) or by reflection without edge repeat (``reflect``)."""
    pad_width = [tuple(int(v) for v in p) for p in pad_width]
    if len(pad_width) != a.ndim:
        raise ShapeError("pad", a.shape, [p for p in pad_width])
    if mode == "reflect":
        out = a
        for axis, (before, after) in enumerate(pad_width):
            if before or after:
                out = take(out, _reflect_index(a.shape[axis], before, after), axis)
        return out
    if mode != "constant":
        raise ValueError(f"pad: unknown mode {mode!r}")
    out = np.pad(a.data, pad_width)
    crop = tuple(slice(b, b + n) for (b, _), n in zip(pad_width, a.shape))
    return Tensor._make(out, (a,), lambda g: (g[crop].copy(),), "pad")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(p.copy() for p in np.split(g, sizes, axis=axis))

    return Tensor._make(out, tensors, backward, "concat")


# ---------------------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return Tensor._make(out, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------------------
# activations


def sigmoid(a: Tensor) -> Tensor:
    out = special.expit(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def silu(a: Tensor) -> Tensor:
    s = special.expit(a.data)
    out = a.data * s
    return Tensor._make(out, (a,), lambda g: (g * (s + out * (1.0 - s)),), "silu")


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + special.erf(x * _INV_SQRT2))
    out = (x * cdf).astype(x.dtype)

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return ((g * (cdf + x * pdf)).astype(x.dtype),)

    return Tensor._make(out, (a,), backward, "gelu")


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.data).astype(a.dtype)
    return Tensor._make(out, (a,), lambda g: (g * special.expit(a.data),), "softplus")


# ---------------------------------------------------------------------------------------
# normalization


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeError("layer_norm", x.shape, gain.shape, bias.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gain.data + bias.data

    def backward(g):
        gxhat = g * gain.data
        gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                     - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(x.ndim - 1))
        ggain = (g * xhat).sum(axis=red) if gain.requires_grad else None
        gbias = g.sum(axis=red) if bias.requires_grad else None
        return gx, ggain, gbias

    return Tensor._make(out, (x, gain, bias), backward, "layer_norm")


def rms_norm(x: Tensor, gain: Tensor, eps: float = 1e-6) -> Tensor:
    """x / sqrt(mean(x**2) + eps) * gain over the last axis.

    With ``eps == 0`` an all-zero vector maps to zero rather than NaN.
    """
    if gain.shape != x.shape[-1:]:
        raise ShapeError("rms_norm", x.shape, gain.shape)
    ms = (x.data * x.data).mean(axis=-1, keepdims=True) + eps
    with np.errstate(divide="ignore"):
        rinv = np.where(ms > 0, 1.0 / np.sqrt(np.where(ms > 0, ms, 1.0)), 0.0).astype(x.dtype)
    xhat = x.data * rinv
    out = xhat * gain.data

    def backward(g):
        gxhat = g * gain.data
        gx = rinv * (gxhat - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        ggain = (g * xhat).sum(axis=tuple(range(x.ndim - 1))) if gain.requires_grad else None
        return gx, ggain

    return Tensor._make(out, (x, gain), backward, "rms_norm")


# ---------------------------------------------------------------------------------------
# convolutions


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution with zero padding, channels-last.

    x: (N, H, W, Cin); weight: (k, k, Cin, Cout) with odd k; bias: (Cout,).
    Accumulates one matmul per kernel tap in fixed tap order.
    """
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2] != x.shape[3] \
            or weight.shape[0] != weight.shape[1] or weight.shape[0] % 2 == 0:
        raise ShapeError("conv2d", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[3],):
        raise ShapeError("conv2d", weight.shape, bias.shape)
    k = weight.shape[0]
    r = k // 2
    n, h, w, _ = x.shape
    xp = np.pad(x.data, ((0, 0), (r, r), (r, r), (0, 0)))
    wd = weight.data
    out = np.zeros((n, h, w, wd.shape[3]), dtype=np.result_type(x.dtype, wd.dtype))
    for dy in range(k):
        for dx in range(k):
            out += xp[:, dy:dy + h, dx:dx + w, :] @ wd[dy, dx]
    if bias is not None:
        out += bias.data

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for dy in range(k):
                for dx in range(k):
                    gxp[:, dy:dy + h, dx:dx + w, :] += g @ wd[dy, dx].T
            gx = gxp[:, r:r + h, r:r + w, :].copy()
        if weight.requires_grad:
            g2 = g.reshape(-1, g.shape[-1])
            gw = np.empty_like(wd)
            for dy in range(k):
                for dx in range(k):
                    gw[dy, dx] = xp[:, dy:dy + h, dx:dx + w, :].reshape(-1, xp.shape[-1]).T @ g2
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 1, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward, "conv2d")


def depthwise_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Causal depth-wise convolution along the sequence axis.

    x: (B, L, C); weight: (k, C); output[t] = sum_j weight[j] * x[t - (k-1) + j],
    with zeros before the sequence start.
    """
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[1] != x.shape[2]:
        raise ShapeError("depthwise_conv", x.shape, weight.shape)
    if bias is not None and bias.shape != (x.shape[2],):
        raise ShapeError("depthwise_conv", x.shape, bias.shape)
    k = weight.shape[0]
    length = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (k - 1, 0), (0, 0)))
    wd = weight.data
    out = np.zeros(x.shape, dtype=np.result_type(x.dtype, wd.dtype))
    for j in range(k):
        out += xp[:, j:j + length, :] * wd[j]
    if bias is not None:
        out += bias.data

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j:j + length, :] += g * wd[j]
            gx = gxp[:, k - 1:, :].copy()
        if weight.requires_grad:
            gw = np.stack([(g * xp[:, j:j + length, :]).sum(axis=(0, 1)) for j in range(k)])
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 1))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward, "depthwise_conv")


def parameters_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))
