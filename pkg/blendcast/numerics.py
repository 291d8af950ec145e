"""Dense float64 helpers shared by the cells, the trainers and the meta-learner.

Matrices and vectors are plain numpy arrays. ``Rng`` pins the bit generator to
PCG64 so a seed reproduces the same stream on every platform.
"""
from typing import Sequence, Union

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray
Vector = np.ndarray
Shape = Union[int, Sequence[int]]

DTYPE = np.float64


class Rng:
    """Seeded PCG64 stream; ``stream`` selects an independent sub-stream of the same seed"""

    def __init__(self, seed: int, stream: int = 0) -> None:
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(np.random.PCG64([self.seed, self.stream]))

    def uniform(self, low: float, high: float, shape: Shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def random(self, shape: Shape) -> np.ndarray:
        return self._gen.random(size=shape)

    def normal(self, loc: float, scale: float, shape: Shape) -> np.ndarray:
        return self._gen.normal(loc, scale, size=shape)

    def child(self, stream: int) -> "Rng":
        return Rng(self.seed, stream)


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def tanh_act(x):
    out = np.tanh(np.asarray(x, dtype=DTYPE))
    return out if out.ndim else float(out)


def relu(x):
    out = np.maximum(np.asarray(x, dtype=DTYPE), 0.0)
    return out if out.ndim else float(out)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", f"(n, {a.shape[-1]}) x ({a.shape[-1]}, m)", f"{a.shape} x {b.shape}")
    return a @ b


def uniform_init(rng: Rng, rows: int, cols: int, scale: float) -> Matrix:
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return rng.uniform(-scale, scale, (rows, cols))


def fan_in_scale(fan_in: int) -> float:
    return 1.0 / np.sqrt(fan_in)


def as_rows(x: np.ndarray) -> np.ndarray:
    """View a vector as a one-row batch"""
    return x if x.ndim == 2 else x.reshape(1, -1)
