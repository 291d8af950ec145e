"""Single-step LSTM, GRU and dense layers with hand-derived gradients.

Every function accepts one vector ``(n,)`` or a batch ``(batch, n)``; parameter
gradients are summed over the batch. LSTM weights act on ``[h_{t-1}, x_t]``
(hidden first, then input). The GRU interpolates with its update gate,
``h_t = (1 - z) * h_{t-1} + z * h~``.
"""
from dataclasses import dataclass, replace
from typing import ClassVar, Dict, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .numerics import DTYPE, Matrix, Rng, Vector, as_rows, fan_in_scale, relu, sigmoid, tanh_act, uniform_init
from .schemas import Activation


class ParamSet:
    """Named float64 arrays with helpers used by the optimizers and the JSON codec"""

    array_names: ClassVar[Tuple[str, ...]] = ()

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.array_names}

    def with_arrays(self, arrays: Dict[str, np.ndarray]):
        return replace(self, **{name: np.asarray(arrays[name], dtype=DTYPE) for name in self.array_names})

    def zeros_like(self):
        return self.with_arrays({k: np.zeros_like(v) for k, v in self.arrays().items()})

    def copy(self):
        return self.with_arrays({k: v.copy() for k, v in self.arrays().items()})

    def scaled(self, factor: float):
        return self.with_arrays({k: v * factor for k, v in self.arrays().items()})


@dataclass(frozen=True)
class CellState:
    h: Vector
    c: Optional[Vector] = None

    @classmethod
    def zeros(cls, hidden: int, batch: Optional[int] = None, with_cell: bool = True) -> "CellState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(h=np.zeros(shape), c=np.zeros(shape) if with_cell else None)


@dataclass(frozen=True)
class LstmParams(ParamSet):
    W_f: Matrix
    W_i: Matrix
    W_C: Matrix
    W_o: Matrix
    b_f: Vector
    b_i: Vector
    b_C: Vector
    b_o: Vector

    array_names: ClassVar[Tuple[str, ...]] = ("W_f", "W_i", "W_C", "W_o", "b_f", "b_i", "b_C", "b_o")

    def __post_init__(self):
        shape = self.W_f.shape
        for name in ("W_i", "W_C", "W_o"):
            if getattr(self, name).shape != shape:
                raise ShapeError(f"LstmParams.{name}", shape, getattr(self, name).shape)
        for name in ("b_f", "b_i", "b_C", "b_o"):
            if getattr(self, name).shape != (shape[0],):
                raise ShapeError(f"LstmParams.{name}", (shape[0],), getattr(self, name).shape)

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    @classmethod
    def init(cls, rng: Rng, input_size: int, hidden: int) -> "LstmParams":
        scale = fan_in_scale(hidden + input_size)
        weights = {name: uniform_init(rng, hidden, hidden + input_size, scale) for name in cls.array_names[:4]}
        biases = {name: np.zeros(hidden) for name in cls.array_names[4:]}
        return cls(**weights, **biases)

    @classmethod
    def zeros(cls, input_size: int, hidden: int) -> "LstmParams":
        weights = {name: np.zeros((hidden, hidden + input_size)) for name in cls.array_names[:4]}
        return cls(**weights, **{name: np.zeros(hidden) for name in cls.array_names[4:]})


@dataclass(frozen=True)
class GruParams(ParamSet):
    W_z: Matrix
    W_r: Matrix
    W_h: Matrix
    U_z: Matrix
    U_r: Matrix
    U_h: Matrix
    b_z: Vector
    b_r: Vector
    b_h: Vector

    array_names: ClassVar[Tuple[str, ...]] = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")

    def __post_init__(self):
        hidden, input_size = self.W_z.shape
        for name in self.array_names:
            expected = {"W": (hidden, input_size), "U": (hidden, hidden), "b": (hidden,)}[name[0]]
            if getattr(self, name).shape != expected:
                raise ShapeError(f"GruParams.{name}", expected, getattr(self, name).shape)

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def init(cls, rng: Rng, input_size: int, hidden: int) -> "GruParams":
        w_scale, u_scale = fan_in_scale(input_size), fan_in_scale(hidden)
        arrays = {}
        for name in cls.array_names[:3]:
            arrays[name] = uniform_init(rng, hidden, input_size, w_scale)
        for name in cls.array_names[3:6]:
            arrays[name] = uniform_init(rng, hidden, hidden, u_scale)
        for name in cls.array_names[6:]:
            arrays[name] = np.zeros(hidden)
        return cls(**arrays)

    @classmethod
    def zeros(cls, input_size: int, hidden: int) -> "GruParams":
        arrays = {}
        for name in cls.array_names:
            shape = {"W": (hidden, input_size), "U": (hidden, hidden), "b": (hidden,)}[name[0]]
            arrays[name] = np.zeros(shape)
        return cls(**arrays)


@dataclass(frozen=True)
class DenseParams(ParamSet):
    W: Matrix
    b: Vector
    activation: Activation = Activation.identity

    array_names: ClassVar[Tuple[str, ...]] = ("W", "b")

    def __post_init__(self):
        if self.b.shape != (self.W.shape[0],):
            raise ShapeError("DenseParams.b", (self.W.shape[0],), self.b.shape)

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    @property
    def output_size(self) -> int:
        return self.W.shape[0]

    @classmethod
    def init(cls, rng: Rng, input_size: int, output_size: int, activation: Activation) -> "DenseParams":
        W = uniform_init(rng, output_size, input_size, fan_in_scale(input_size))
        return cls(W=W, b=np.zeros(output_size), activation=activation)


@dataclass(frozen=True)
class LstmCache:
    params: LstmParams
    hx: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tc: np.ndarray


@dataclass(frozen=True)
class GruCache:
    params: GruParams
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class DenseCache:
    params: DenseParams
    x: np.ndarray
    y: np.ndarray


def _check_step(what: str, x: np.ndarray, prev: CellState, input_size: int, hidden: int, with_cell: bool):
    if x.ndim not in (1, 2) or x.shape[-1] != input_size:
        raise ShapeError(f"{what} input", (input_size,), x.shape)
    state_shape = x.shape[:-1] + (hidden,)
    if prev.h.shape != state_shape:
        raise ShapeError(f"{what} prev.h", state_shape, prev.h.shape)
    if with_cell and (prev.c is None or prev.c.shape != state_shape):
        raise ShapeError(f"{what} prev.c", state_shape, None if prev.c is None else prev.c.shape)


def _outer_sum(d: np.ndarray, a: np.ndarray) -> np.ndarray:
    return as_rows(d).T @ as_rows(a)


def _bias_sum(d: np.ndarray) -> np.ndarray:
    return as_rows(d).sum(axis=0)


def lstm_forward(p: LstmParams, x: Vector, prev: CellState) -> Tuple[CellState, LstmCache]:
    x = np.asarray(x, dtype=DTYPE)
    _check_step("lstm_forward", x, prev, p.input_size, p.hidden, with_cell=True)
    hx = np.concatenate([prev.h, x], axis=-1)
    f = sigmoid(hx @ p.W_f.T + p.b_f)
    i = sigmoid(hx @ p.W_i.T + p.b_i)
    g = tanh_act(hx @ p.W_C.T + p.b_C)
    o = sigmoid(hx @ p.W_o.T + p.b_o)
    c = f * prev.c + i * g
    tc = tanh_act(c)
    h = o * tc
    return CellState(h=h, c=c), LstmCache(params=p, hx=hx, c_prev=prev.c, f=f, i=i, g=g, o=o, tc=tc)


def lstm_backward(cache: LstmCache, grad_next: CellState) -> Tuple[LstmParams, Vector, CellState]:
    p = cache.params
    if grad_next.h.shape != cache.o.shape:
        raise ShapeError("lstm_backward grad h", cache.o.shape, grad_next.h.shape)
    dc_next = np.zeros_like(cache.o) if grad_next.c is None else grad_next.c
    if dc_next.shape != cache.o.shape:
        raise ShapeError("lstm_backward grad c", cache.o.shape, dc_next.shape)

    dh = grad_next.h
    dc = dc_next + dh * cache.o * (1.0 - cache.tc ** 2)
    dz_f = dc * cache.c_prev * cache.f * (1.0 - cache.f)
    dz_i = dc * cache.g * cache.i * (1.0 - cache.i)
    dz_g = dc * cache.i * (1.0 - cache.g ** 2)
    dz_o = dh * cache.tc * cache.o * (1.0 - cache.o)

    grads = LstmParams(
        W_f=_outer_sum(dz_f, cache.hx), W_i=_outer_sum(dz_i, cache.hx),
        W_C=_outer_sum(dz_g, cache.hx), W_o=_outer_sum(dz_o, cache.hx),
        b_f=_bias_sum(dz_f), b_i=_bias_sum(dz_i), b_C=_bias_sum(dz_g), b_o=_bias_sum(dz_o),
    )
    dhx = dz_f @ p.W_f + dz_i @ p.W_i + dz_g @ p.W_C + dz_o @ p.W_o
    hidden = p.hidden
    grad_prev = CellState(h=dhx[..., :hidden], c=dc * cache.f)
    return grads, dhx[..., hidden:], grad_prev


def gru_forward(p: GruParams, x: Vector, prev: CellState) -> Tuple[CellState, GruCache]:
    x = np.asarray(x, dtype=DTYPE)
    _check_step("gru_forward", x, prev, p.input_size, p.hidden, with_cell=False)
    h_prev = prev.h
    z = sigmoid(x @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    r = sigmoid(x @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    g = tanh_act(x @ p.W_h.T + (r * h_prev) @ p.U_h.T + p.b_h)
    h = (1.0 - z) * h_prev + z * g
    return CellState(h=h), GruCache(params=p, x=x, h_prev=h_prev, z=z, r=r, g=g)


def gru_backward(cache: GruCache, grad_next: CellState) -> Tuple[GruParams, Vector, CellState]:
    p = cache.params
    if grad_next.h.shape != cache.z.shape:
        raise ShapeError("gru_backward grad h", cache.z.shape, grad_next.h.shape)

    dh = grad_next.h
    h_prev, z, r, g = cache.h_prev, cache.z, cache.r, cache.g
    rh = r * h_prev

    da_h = dh * z * (1.0 - g ** 2)
    d_rh = da_h @ p.U_h
    da_z = dh * (g - h_prev) * z * (1.0 - z)
    da_r = d_rh * h_prev * r * (1.0 - r)

    grads = GruParams(
        W_z=_outer_sum(da_z, cache.x), W_r=_outer_sum(da_r, cache.x), W_h=_outer_sum(da_h, cache.x),
        U_z=_outer_sum(da_z, h_prev), U_r=_outer_sum(da_r, h_prev), U_h=_outer_sum(da_h, rh),
        b_z=_bias_sum(da_z), b_r=_bias_sum(da_r), b_h=_bias_sum(da_h),
    )
    dx = da_z @ p.W_z + da_r @ p.W_r + da_h @ p.W_h
    dh_prev = dh * (1.0 - z) + d_rh * r + da_z @ p.U_z + da_r @ p.U_r
    return grads, dx, CellState(h=dh_prev)


_ACTIVATIONS = {
    Activation.identity: lambda a: a,
    Activation.relu: relu,
    Activation.sigmoid: sigmoid,
    Activation.tanh: tanh_act,
}


def _activation_grad(activation: Activation, y: np.ndarray) -> np.ndarray:
    # derivative expressed through the output y
    if activation == Activation.identity:
        return np.ones_like(y)
    if activation == Activation.relu:
        return (y > 0.0).astype(DTYPE)
    if activation == Activation.sigmoid:
        return y * (1.0 - y)
    return 1.0 - y ** 2


def dense_forward(p: DenseParams, x: Vector) -> Tuple[Vector, DenseCache]:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim not in (1, 2) or x.shape[-1] != p.input_size:
        raise ShapeError("dense_forward input", (p.input_size,), x.shape)
    y = np.asarray(_ACTIVATIONS[Activation(p.activation)](x @ p.W.T + p.b), dtype=DTYPE)
    return y, DenseCache(params=p, x=x, y=y)


def dense_backward(cache: DenseCache, grad_y: Vector) -> Tuple[DenseParams, Vector]:
    p = cache.params
    grad_y = np.asarray(grad_y, dtype=DTYPE)
    if grad_y.shape != cache.y.shape:
        raise ShapeError("dense_backward grad y", cache.y.shape, grad_y.shape)
    da = grad_y * _activation_grad(Activation(p.activation), cache.y)
    grads = DenseParams(W=_outer_sum(da, cache.x), b=_bias_sum(da), activation=p.activation)
    return grads, da @ p.W


def dropout_mask(rng: Rng, length, rate: float) -> np.ndarray:
    """Inverted dropout: 0 with probability ``rate``, else ``1 / (1 - rate)``.

    ``length`` may be an int or a shape tuple (one mask row per sequence in a batch).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(length) >= rate
    return keep / (1.0 - rate)
