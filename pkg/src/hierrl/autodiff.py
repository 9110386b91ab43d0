"""Reverse-mode automatic differentiation over dense numpy arrays.

Dynamic tape: every op links its output to its parents together with a
backward closure, and ``backward`` replays the closures in reverse
topological order. Working precision is float32 (float64 is supported for
verification); reductions accumulate in float64 regardless of the working
dtype. Broadcasting is restricted to scalars and a leading batch dimension
(bias-style adds); anything else raises ``ShapeError``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "tanh",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "clip",
    "softmax",
    "log_softmax",
    "reduce_sum",
    "reduce_mean",
    "concat",
    "reshape",
    "slice_cols",
    "take_rows",
    "pick_cols",
    "stop_gradient",
    "backward",
]

_FLOAT_TYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOAT_TYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> np.ndarray:
        return self.data

    def backward(self) -> None:
        backward(self)

    # operator sugar; scalars are promoted to constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _sum64(x: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    """Sum with float64 accumulation, result cast back to the input dtype."""
    return np.sum(x, axis=axis, keepdims=keepdims, dtype=np.float64).astype(x.dtype)


def _check_broadcast(a: Tensor, b: Tensor) -> str:
    """Classify an elementwise pairing: 'same', 'scalar_a', 'scalar_b' or 'batch_b'.

    'batch_b' is the bias-style case a:[B, ...s], b:[...s]; broadcast over the
    leading batch dimension only.
    """
    if a.data.shape == b.data.shape:
        return "same"
    if b.data.ndim == 0:
        return "scalar_b"
    if a.data.ndim == 0:
        return "scalar_a"
    if a.data.ndim == b.data.ndim + 1 and a.data.shape[1:] == b.data.shape:
        return "batch_b"
    raise ShapeError(f"incompatible shapes {a.data.shape} vs {b.data.shape}")


def add(a, b) -> Tensor:
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    mode = _check_broadcast(a, b)

    def bwd(g):
        _accum(a, g if mode != "scalar_a" else _sum64(g))
        if mode == "same":
            _accum(b, g)
        elif mode == "scalar_b":
            _accum(b, _sum64(g))
        elif mode == "batch_b":
            _accum(b, _sum64(g, axis=0))
        else:  # scalar_a
            _accum(b, g)

    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    mode = _check_broadcast(a, b)

    def bwd(g):
        _accum(a, g if mode != "scalar_a" else _sum64(g))
        if mode == "same":
            _accum(b, -g)
        elif mode == "scalar_b":
            _accum(b, -_sum64(g))
        elif mode == "batch_b":
            _accum(b, -_sum64(g, axis=0))
        else:
            _accum(b, -g)

    return _make(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    mode = _check_broadcast(a, b)

    def bwd(g):
        ga = g * b.data
        gb = g * a.data
        _accum(a, ga if mode != "scalar_a" else _sum64(ga))
        if mode == "same":
            _accum(b, gb)
        elif mode == "scalar_b":
            _accum(b, _sum64(gb))
        elif mode == "batch_b":
            _accum(b, _sum64(gb, axis=0))
        else:
            _accum(b, gb)

    return _make(a.data * b.data, (a, b), bwd)


def div(a, b) -> Tensor:
    a = _wrap(a, None)
    b = _wrap(b, a.dtype)
    mode = _check_broadcast(a, b)

    def bwd(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        _accum(a, ga if mode != "scalar_a" else _sum64(ga))
        if mode == "same":
            _accum(b, gb)
        elif mode == "scalar_b":
            _accum(b, _sum64(gb))
        elif mode == "batch_b":
            _accum(b, _sum64(gb, axis=0))
        else:
            _accum(b, gb)

    return _make(a.data / b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.shape} vs {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - y * y))

    return _make(y, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        _accum(a, g * mask)

    return _make(np.where(mask, a.data, 0.0).astype(a.dtype), (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accum(a, g * y * (1.0 - y))

    return _make(y.astype(a.dtype), (a,), bwd)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def bwd(g):
        _accum(a, g * y)

    return _make(y, (a,), bwd)


def log(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bwd)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Hard clamp; gradient passes only where the input lies within [lo, hi]."""
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        _accum(a, g * mask)

    return _make(np.clip(a.data, lo, hi), (a,), bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True, dtype=np.float64).astype(a.dtype)

    def bwd(g):
        dot = np.sum(g * y, axis=axis, keepdims=True, dtype=np.float64).astype(a.dtype)
        _accum(a, y * (g - dot))

    return _make(y.astype(a.dtype), (a,), bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True, dtype=np.float64)).astype(a.dtype)
    y = z - lse
    sm = np.exp(y)

    def bwd(g):
        gsum = np.sum(g, axis=axis, keepdims=True, dtype=np.float64).astype(a.dtype)
        _accum(a, g - sm * gsum)

    return _make(y.astype(a.dtype), (a,), bwd)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = _sum64(a.data, axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).astype(a.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).astype(a.dtype))

    return _make(y, (a,), bwd)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    y = (_sum64(a.data, axis=axis, keepdims=keepdims) / count).astype(a.dtype)

    def bwd(g):
        if axis is None:
            _accum(a, (np.broadcast_to(g, a.data.shape) / count).astype(a.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, (np.broadcast_to(gg, a.data.shape) / count).astype(a.dtype))

    return _make(y, (a,), bwd)


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat of zero tensors")
    ref = parts[0].data.shape
    for p in parts[1:]:
        s = p.data.shape
        if len(s) != len(ref) or any(
            i != axis and s[i] != ref[i] for i in range(len(ref))
        ):
            raise ShapeError(f"concat mismatch {ref} vs {s}")
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(p, g[tuple(sl)])

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, bwd)


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-D tensor, got {a.data.shape}")

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _accum(a, full)

    return _make(a.data[:, start:stop].copy(), (a,), bwd)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows along axis 0; backward scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.int64)

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)

    return _make(a.data[idx], (a,), bwd)


def pick_cols(a: Tensor, idx: np.ndarray) -> Tensor:
    """out[i] = a[i, idx[i]] for a 2-D tensor; used by cross-entropy losses."""
    if a.data.ndim != 2:
        raise ShapeError(f"pick_cols needs a 2-D tensor, got {a.data.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])

    def bwd(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        _accum(a, full)

    return _make(a.data[rows, idx].copy(), (a,), bwd)


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data.copy())


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
