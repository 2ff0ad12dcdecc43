"""Fully connected ReLU networks stored as one flat fp64 vector.

Keeping every weight of a network in a single contiguous array makes
snapshots, gradient application, hashing and checkpointing one-liners;
the per-layer matrices are views into it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class ShapeError(ValueError):
    """Input or parameter shapes do not match the network layout."""


@lru_cache(maxsize=64)
def _layout(sizes: tuple) -> tuple:
    out, off = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        out.append((off, off + fan_in * fan_out, fan_in, fan_out))
        off += fan_in * fan_out + fan_out
    return tuple(out)


def layout(sizes) -> tuple:
    """(weight offset, bias offset, fan_in, fan_out) for each layer."""
    return _layout(tuple(sizes))


def n_params(sizes) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass
class MlpParams:
    sizes: tuple
    flat: np.ndarray
    version: int = 0
    _views: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ShapeError(f"bad layer sizes {self.sizes}")
        if self.flat.shape != (n_params(self.sizes),):
            raise ShapeError(f"flat vector has {self.flat.shape}, expected ({n_params(self.sizes)},)")
        self._views = views(self.flat, self.sizes)

    @property
    def weights(self) -> list[np.ndarray]:
        return [w for w, _ in self._views]

    @property
    def biases(self) -> list[np.ndarray]:
        return [b for _, b in self._views]


def views(flat: np.ndarray, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    """(W, b) views into ``flat``; W has shape (fan_in, fan_out)."""
    return [(flat[w:b].reshape(i, o), flat[b:b + o]) for w, b, i, o in layout(sizes)]


def init_mlp(sizes, rng: np.random.Generator, out_scale: float = 1.0) -> MlpParams:
    """He-uniform hidden layers; the output layer is further scaled by ``out_scale``."""
    flat = np.zeros(n_params(sizes))
    vs = views(flat, sizes)
    for k, (w, _) in enumerate(vs):
        bound = np.sqrt(6.0 / w.shape[0])
        if k == len(vs) - 1:
            bound *= out_scale / np.sqrt(2.0)
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    return MlpParams(tuple(sizes), flat)


def forward(flat: np.ndarray, sizes, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Output for a batch ``x`` of shape (n, d_in); also returns per-layer inputs for backprop."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != sizes[0]:
        raise ShapeError(f"input shape {x.shape} does not match d_in={sizes[0]}")
    acts = [x]
    vs = views(flat, sizes)
    h = x
    for k, (w, b) in enumerate(vs):
        h = h @ w + b
        if k < len(vs) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def backward(flat: np.ndarray, sizes, acts: list[np.ndarray], grad_out: np.ndarray) -> np.ndarray:
    """Flat gradient of ``sum(grad_out * output)`` with respect to the parameters."""
    grad = np.zeros_like(flat)
    gvs = views(grad, sizes)
    vs = views(flat, sizes)
    delta = np.asarray(grad_out, dtype=float)
    for k in range(len(vs) - 1, -1, -1):
        gw, gb = gvs[k]
        gw[:] = acts[k].T @ delta
        gb[:] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ vs[k][0].T) * (acts[k] > 0.0)
    return grad
