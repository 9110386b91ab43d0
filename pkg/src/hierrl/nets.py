"""Parameter storage, MLP building blocks, Adam, checkpoints, gradient checks."""

from __future__ import annotations

import json
import os
from typing import Callable, Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "NonFiniteGradientError",
    "ParameterSet",
    "grad",
    "adam_step",
    "add_linear",
    "add_mlp",
    "mlp_forward",
    "mlp_forward_np",
    "save_checkpoint",
    "load_checkpoint",
    "finite_diff_check",
]


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN or inf; the whole optimizer step is rejected."""


class ParameterSet:
    """Named map of trainable tensors plus Adam moment state.

    Insertion order is the canonical parameter order for checkpoints and
    gradient checks.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params.keys())

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def astype(self, dtype) -> "ParameterSet":
        out = ParameterSet(dtype=dtype)
        for name, p in self.params.items():
            out.add(name, p.data.astype(dtype))
        return out

    def copy(self) -> "ParameterSet":
        out = ParameterSet(dtype=self.dtype)
        for name, p in self.params.items():
            out.add(name, p.data.copy())
        out.step_count = self.step_count
        for name in self.params:
            out.m[name] = self.m[name].copy()
            out.v[name] = self.v[name].copy()
        return out


def grad(loss: Tensor, params: ParameterSet) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss; parameters unreachable from it get zeros."""
    params.zero_grads()
    ad.backward(loss)
    out = {}
    for name, p in params.params.items():
        out[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return out


def adam_step(
    params: ParameterSet,
    grads: dict[str, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParameterSet:
    """Adam with bias correction; rejects the whole step on non-finite grads."""
    for name in params.params:
        g = grads.get(name)
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
    b1, b2 = betas
    params.step_count += 1
    t = params.step_count
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in params.params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = params.m[name]
        v = params.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / corr1) / (np.sqrt(v / corr2) + eps)
        p.data -= (lr * update).astype(p.data.dtype)
    return params


def add_linear(
    ps: ParameterSet,
    name: str,
    fan_in: int,
    fan_out: int,
    rng: np.random.Generator,
    scale: float | None = None,
) -> None:
    std = scale if scale is not None else 1.0 / np.sqrt(fan_in)
    ps.add(f"{name}.w", rng.normal(0.0, std, size=(fan_in, fan_out)))
    ps.add(f"{name}.b", np.zeros(fan_out))


def add_mlp(
    ps: ParameterSet,
    prefix: str,
    sizes: Iterable[int],
    rng: np.random.Generator,
    final_scale: float | None = None,
) -> None:
    """Layers sizes[0] -> sizes[1] -> ... -> sizes[-1]; tanh between layers."""
    sizes = list(sizes)
    n = len(sizes) - 1
    for i in range(n):
        scale = final_scale if (i == n - 1 and final_scale is not None) else None
        add_linear(ps, f"{prefix}.l{i}", sizes[i], sizes[i + 1], rng, scale=scale)


def _layer_count(ps: ParameterSet, prefix: str) -> int:
    i = 0
    while f"{prefix}.l{i}.w" in ps:
        i += 1
    return i


def mlp_forward(ps: ParameterSet, prefix: str, x: Tensor, final_tanh: bool = False) -> Tensor:
    n = _layer_count(ps, prefix)
    h = x
    for i in range(n):
        h = ad.add(ad.matmul(h, ps[f"{prefix}.l{i}.w"]), ps[f"{prefix}.l{i}.b"])
        if i < n - 1 or final_tanh:
            h = ad.tanh(h)
    return h


def mlp_forward_np(ps: ParameterSet, prefix: str, x: np.ndarray, final_tanh: bool = False) -> np.ndarray:
    """Tape-free twin of mlp_forward for hot acting paths."""
    n = _layer_count(ps, prefix)
    h = x
    for i in range(n):
        h = h @ ps[f"{prefix}.l{i}.w"].data + ps[f"{prefix}.l{i}.b"].data
        if i < n - 1 or final_tanh:
            h = np.tanh(h)
    return h


def save_checkpoint(ps: ParameterSet, prefix: str) -> tuple[str, str]:
    """Manifest (UTF-8 JSON: name, shape, byte offset) plus one little-endian
    float32 blob in manifest order."""
    manifest = []
    offset = 0
    chunks = []
    for name, p in ps.params.items():
        raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(p.data.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest_path = prefix + ".manifest.json"
    blob_path = prefix + ".bin"
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f)
    with open(blob_path, "wb") as f:
        f.write(b"".join(chunks))
    return manifest_path, blob_path


def load_checkpoint(prefix: str) -> dict[str, np.ndarray]:
    with open(prefix + ".manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    with open(prefix + ".bin", "rb") as f:
        blob = f.read()
    out = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).copy()
    return out


def restore_checkpoint(ps: ParameterSet, prefix: str) -> None:
    arrays = load_checkpoint(prefix)
    for name, p in ps.params.items():
        if name not in arrays:
            raise KeyError(f"checkpoint missing parameter {name!r}")
        if tuple(arrays[name].shape) != tuple(p.data.shape):
            raise ValueError(
                f"checkpoint shape mismatch for {name!r}: "
                f"{arrays[name].shape} vs {p.data.shape}"
            )
        p.data = arrays[name].astype(ps.dtype)


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: ParameterSet,
    h: float = 1e-4,
) -> float:
    """Max relative error between reverse-mode and central finite differences.

    Checks every entry of every parameter. Relative error for one entry is
    |ad - fd| / max(1, |ad|, |fd|). Callers should build float64 parameters;
    float32 forward passes drown the h**2 truncation term in rounding noise.
    """
    loss = loss_fn()
    grads = grad(loss, params)
    worst = 0.0
    for name, p in params.params.items():
        flat = p.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(float(gflat[i]) - fd) / max(1.0, abs(float(gflat[i])), abs(fd))
            if err > worst:
                worst = err
    return worst
