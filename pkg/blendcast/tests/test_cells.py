import math

import numpy as np
import pytest

from blendcast.cells import (
    CellState,
    DenseParams,
    GruParams,
    LstmParams,
    dense_backward,
    dense_forward,
    dropout_mask,
    gru_backward,
    gru_forward,
    lstm_backward,
    lstm_forward,
)
from blendcast.errors import ShapeError
from blendcast.numerics import Rng
from blendcast.schemas import Activation
from blendcast.tests.gradcheck import assert_gradients_match, gradient_errors, numeric_grad

TOLERANCE = 1e-5


def _case(case: int):
    """Input size, hidden size and batch (None for a single vector) of one random configuration"""
    gen = np.random.default_rng(1000 + case)
    input_size, hidden = (int(v) for v in gen.integers(1, 9, size=2))
    batch = None if case % 2 == 0 else int(gen.integers(1, 4))
    return gen, input_size, hidden, batch


def _shape(batch, n):
    return (n,) if batch is None else (batch, n)


def _with_random_biases(params, gen, scale=0.5):
    arrays = params.arrays()
    for name in arrays:
        if name.startswith("b"):
            arrays[name] = gen.normal(0.0, scale, arrays[name].shape)
    return params.with_arrays(arrays)


def _scalar_lstm(p: LstmParams, x, h_prev, c_prev):
    hx = list(h_prev) + list(x)

    def pre(W, b, j):
        return sum(W[j][k] * hx[k] for k in range(len(hx))) + b[j]

    h, c = [], []
    for j in range(len(h_prev)):
        f = 1.0 / (1.0 + math.exp(-pre(p.W_f, p.b_f, j)))
        i = 1.0 / (1.0 + math.exp(-pre(p.W_i, p.b_i, j)))
        g = math.tanh(pre(p.W_C, p.b_C, j))
        o = 1.0 / (1.0 + math.exp(-pre(p.W_o, p.b_o, j)))
        c.append(f * c_prev[j] + i * g)
        h.append(o * math.tanh(c[-1]))
    return h, c


def _scalar_gru(p: GruParams, x, h_prev):
    hidden, inputs = len(h_prev), len(x)

    def dot(M, v, j):
        return sum(M[j][k] * v[k] for k in range(len(v)))

    z = [1.0 / (1.0 + math.exp(-(dot(p.W_z, x, j) + dot(p.U_z, h_prev, j) + p.b_z[j]))) for j in range(hidden)]
    r = [1.0 / (1.0 + math.exp(-(dot(p.W_r, x, j) + dot(p.U_r, h_prev, j) + p.b_r[j]))) for j in range(hidden)]
    rh = [r[j] * h_prev[j] for j in range(hidden)]
    g = [math.tanh(dot(p.W_h, x, j) + dot(p.U_h, rh, j) + p.b_h[j]) for j in range(hidden)]
    assert inputs == p.input_size
    return [(1.0 - z[j]) * h_prev[j] + z[j] * g[j] for j in range(hidden)]


# LSTM

def test_lstm_zero_params_closed_form():
    p = LstmParams.zeros(3, 4)
    state, _ = lstm_forward(p, np.zeros(3), CellState.zeros(4))
    assert np.array_equal(state.h, np.zeros(4))
    assert np.array_equal(state.c, np.zeros(4))


def test_lstm_closed_forget_gate_drops_cell_state():
    gen = np.random.default_rng(5)
    p = LstmParams.init(Rng(5), 3, 4)
    arrays = p.arrays()
    arrays["W_f"] = np.zeros_like(arrays["W_f"])
    arrays["b_f"] = np.full(4, -40.0)
    p = p.with_arrays(arrays)
    prev = CellState(h=gen.normal(0, 1, 4), c=gen.normal(0, 3, 4))
    state, cache = lstm_forward(p, gen.normal(0, 1, 3), prev)
    np.testing.assert_allclose(state.c, cache.i * cache.g, rtol=0, atol=1e-12)


def test_lstm_matches_scalar_equations():
    gen = np.random.default_rng(42)
    p = _with_random_biases(LstmParams.init(Rng(42), 5, 6), gen)
    x, h_prev, c_prev = gen.normal(0, 1, 5), gen.uniform(-1, 1, 6), gen.normal(0, 1, 6)
    state, _ = lstm_forward(p, x, CellState(h=h_prev, c=c_prev))
    h, c = _scalar_lstm(p, x, h_prev, c_prev)
    np.testing.assert_allclose(state.h, h, rtol=0, atol=1e-12)
    np.testing.assert_allclose(state.c, c, rtol=0, atol=1e-12)
    assert np.all(np.abs(state.h) < 1.0)


@pytest.mark.parametrize("case", range(100))
def test_lstm_gradients_match_finite_differences(case):
    gen, input_size, hidden, batch = _case(case)
    p = _with_random_biases(LstmParams.init(Rng(case), input_size, hidden), gen)
    x = gen.normal(0, 1, _shape(batch, input_size))
    prev = CellState(h=gen.uniform(-1, 1, _shape(batch, hidden)), c=gen.normal(0, 1, _shape(batch, hidden)))
    grad_h = gen.normal(0, 1, _shape(batch, hidden))
    grad_c = gen.normal(0, 1, _shape(batch, hidden))

    def loss():
        state, _ = lstm_forward(p, x, prev)
        return float(np.sum(grad_h * state.h) + np.sum(grad_c * state.c))

    _, cache = lstm_forward(p, x, prev)
    grads, grad_x, grad_prev = lstm_backward(cache, CellState(h=grad_h, c=grad_c))
    for name, array in p.arrays().items():
        assert_gradients_match(getattr(grads, name), numeric_grad(loss, array), TOLERANCE, name)
    assert_gradients_match(grad_x, numeric_grad(loss, x), TOLERANCE)
    assert_gradients_match(grad_prev.h, numeric_grad(loss, prev.h), TOLERANCE)
    assert_gradients_match(grad_prev.c, numeric_grad(loss, prev.c), TOLERANCE)


def test_lstm_backward_is_linear_in_upstream():
    gen = np.random.default_rng(8)
    p = _with_random_biases(LstmParams.init(Rng(8), 3, 5), gen)
    _, cache = lstm_forward(p, gen.normal(0, 1, 3), CellState(h=gen.normal(0, 1, 5), c=gen.normal(0, 1, 5)))
    upstream = CellState(h=gen.normal(0, 1, 5), c=gen.normal(0, 1, 5))
    grads, dx, dprev = lstm_backward(cache, upstream)
    grads2, dx2, dprev2 = lstm_backward(cache, CellState(h=2 * upstream.h, c=2 * upstream.c))
    for name, array in grads.arrays().items():
        assert np.array_equal(getattr(grads2, name), 2 * array)
    assert np.array_equal(dx2, 2 * dx)
    assert np.array_equal(dprev2.h, 2 * dprev.h)
    assert np.array_equal(dprev2.c, 2 * dprev.c)

    zero_grads, zero_dx, zero_prev = lstm_backward(cache, CellState(h=np.zeros(5), c=np.zeros(5)))
    assert not any(a.any() for a in zero_grads.arrays().values())
    assert not zero_dx.any() and not zero_prev.h.any() and not zero_prev.c.any()


def test_lstm_batch_equals_rowwise():
    gen = np.random.default_rng(9)
    p = _with_random_biases(LstmParams.init(Rng(9), 2, 3), gen)
    x = gen.normal(0, 1, (4, 2))
    prev = CellState(h=gen.normal(0, 1, (4, 3)), c=gen.normal(0, 1, (4, 3)))
    state, _ = lstm_forward(p, x, prev)
    for row in range(4):
        single, _ = lstm_forward(p, x[row], CellState(h=prev.h[row], c=prev.c[row]))
        np.testing.assert_allclose(state.h[row], single.h, rtol=0, atol=1e-13)


testset_lstm_shapes = [
    (np.zeros(4), CellState.zeros(3)),
    (np.zeros(2), CellState.zeros(4)),
    (np.zeros(2), CellState(h=np.zeros(3))),
]


@pytest.mark.parametrize("x, prev", testset_lstm_shapes)
def test_lstm_forward_rejects_bad_shapes(x, prev):
    with pytest.raises(ShapeError):
        lstm_forward(LstmParams.zeros(2, 3), x, prev)


def test_lstm_params_reject_inconsistent_shapes():
    p = LstmParams.zeros(2, 3)
    arrays = p.arrays()
    arrays["b_o"] = np.zeros(4)
    with pytest.raises(ShapeError):
        p.with_arrays(arrays)


# GRU

def test_gru_zero_params_halves_previous_state():
    v = np.array([0.3, -1.2, 2.0])
    state, _ = gru_forward(GruParams.zeros(2, 3), np.ones(2), CellState(h=v))
    assert np.array_equal(state.h, 0.5 * v)
    state, _ = gru_forward(GruParams.zeros(2, 3), np.ones(2), CellState.zeros(3, with_cell=False))
    assert np.array_equal(state.h, np.zeros(3))


def test_gru_matches_scalar_equations():
    gen = np.random.default_rng(42)
    p = _with_random_biases(GruParams.init(Rng(42), 4, 5), gen)
    x, h_prev = gen.normal(0, 1, 4), gen.uniform(-1, 1, 5)
    state, _ = gru_forward(p, x, CellState(h=h_prev))
    np.testing.assert_allclose(state.h, _scalar_gru(p, x, h_prev), rtol=0, atol=1e-12)


@pytest.mark.parametrize("case", range(100))
def test_gru_gradients_match_finite_differences(case):
    gen, input_size, hidden, batch = _case(case)
    p = _with_random_biases(GruParams.init(Rng(case), input_size, hidden), gen)
    x = gen.normal(0, 1, _shape(batch, input_size))
    prev = CellState(h=gen.uniform(-1, 1, _shape(batch, hidden)))
    grad_h = gen.normal(0, 1, _shape(batch, hidden))

    def loss():
        state, _ = gru_forward(p, x, prev)
        return float(np.sum(grad_h * state.h))

    _, cache = gru_forward(p, x, prev)
    grads, grad_x, grad_prev = gru_backward(cache, CellState(h=grad_h))
    for name, array in p.arrays().items():
        assert_gradients_match(getattr(grads, name), numeric_grad(loss, array), TOLERANCE, name)
    assert_gradients_match(grad_x, numeric_grad(loss, x), TOLERANCE)
    assert_gradients_match(grad_prev.h, numeric_grad(loss, prev.h), TOLERANCE)


def test_gru_recurrent_gradients_vanish_without_previous_state():
    gen = np.random.default_rng(3)
    p = _with_random_biases(GruParams.init(Rng(3), 3, 4), gen)
    _, cache = gru_forward(p, gen.normal(0, 1, 3), CellState.zeros(4, with_cell=False))
    grads, _, _ = gru_backward(cache, CellState(h=gen.normal(0, 1, 4)))
    assert not grads.U_z.any()
    assert not grads.U_r.any()
    assert not grads.U_h.any()


def test_gru_zero_upstream_gives_zero_gradients():
    gen = np.random.default_rng(4)
    p = GruParams.init(Rng(4), 2, 3)
    _, cache = gru_forward(p, gen.normal(0, 1, 2), CellState(h=gen.normal(0, 1, 3)))
    grads, dx, dprev = gru_backward(cache, CellState(h=np.zeros(3)))
    assert not any(a.any() for a in grads.arrays().values())
    assert not dx.any() and not dprev.h.any()


@pytest.mark.parametrize("seed", range(20))
def test_gru_output_is_convex_combination(seed):
    gen = np.random.default_rng(seed)
    p = _with_random_biases(GruParams.init(Rng(seed), 3, 6), gen, scale=2.0)
    prev = CellState(h=gen.uniform(-1, 1, 6))
    state, cache = gru_forward(p, gen.normal(0, 2, 3), prev)
    low = np.minimum(prev.h, cache.g) - 1e-15
    high = np.maximum(prev.h, cache.g) + 1e-15
    assert np.all((low <= state.h) & (state.h <= high))


def test_gru_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        gru_forward(GruParams.zeros(2, 3), np.zeros(3), CellState.zeros(3, with_cell=False))
    _, cache = gru_forward(GruParams.zeros(2, 3), np.zeros(2), CellState.zeros(3, with_cell=False))
    with pytest.raises(ShapeError):
        gru_backward(cache, CellState(h=np.zeros(4)))


# Dense

def test_dense_identity():
    x = np.array([0.5, -2.0, 3.0])
    y, _ = dense_forward(DenseParams(W=np.eye(3), b=np.zeros(3)), x)
    assert np.array_equal(y, x)


def test_dense_dead_relu_region():
    gen = np.random.default_rng(6)
    p = DenseParams(W=gen.uniform(-1, 1, (4, 3)), b=np.full(4, -100.0), activation=Activation.relu)
    y, cache = dense_forward(p, gen.uniform(-1, 1, 3))
    assert not y.any()
    grads, grad_x = dense_backward(cache, np.ones(4))
    assert not grad_x.any()
    assert not grads.W.any() and not grads.b.any()


@pytest.mark.parametrize("activation", list(Activation))
@pytest.mark.parametrize("case", range(25))
def test_dense_gradients_match_finite_differences(activation, case):
    gen, input_size, output_size, batch = _case(case)
    p = DenseParams.init(Rng(case), input_size, output_size, activation)
    p = _with_random_biases(p, gen)
    x = gen.normal(0, 1, _shape(batch, input_size))
    if activation == Activation.relu:
        # keep pre-activations away from the kink
        pre = x @ p.W.T + p.b
        p = p.with_arrays({"W": p.W, "b": p.b + np.where(np.abs(pre) < 1e-3, 1e-2, 0.0).max(axis=0)})
    upstream = gen.normal(0, 1, _shape(batch, output_size))

    def loss():
        y, _ = dense_forward(p, x)
        return float(np.sum(upstream * y))

    _, cache = dense_forward(p, x)
    grads, grad_x = dense_backward(cache, upstream)
    assert_gradients_match(grads.W, numeric_grad(loss, p.W), TOLERANCE)
    assert_gradients_match(grads.b, numeric_grad(loss, p.b), TOLERANCE)
    assert_gradients_match(grad_x, numeric_grad(loss, x), TOLERANCE)


def test_dense_rejects_bad_shapes():
    p = DenseParams(W=np.zeros((2, 3)), b=np.zeros(2))
    with pytest.raises(ShapeError):
        dense_forward(p, np.zeros(2))
    with pytest.raises(ShapeError):
        DenseParams(W=np.zeros((2, 3)), b=np.zeros(3))
    _, cache = dense_forward(p, np.zeros(3))
    with pytest.raises(ShapeError):
        dense_backward(cache, np.zeros(3))


# Dropout

def test_dropout_rate_zero_keeps_everything():
    assert np.array_equal(dropout_mask(Rng(0), 50, 0.0), np.ones(50))


def test_dropout_zero_fraction():
    mask = dropout_mask(Rng(1), 10**6, 0.2)
    assert abs(np.mean(mask == 0.0) - 0.2) < 0.002
    assert set(np.unique(mask)) == {0.0, 1.0 / (1.0 - 0.2)}


def test_dropout_is_deterministic_per_seed():
    assert np.array_equal(dropout_mask(Rng(2), (3, 7), 0.5), dropout_mask(Rng(2), (3, 7), 0.5))


@pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
def test_dropout_rejects_bad_rate(rate):
    with pytest.raises(ValueError):
        dropout_mask(Rng(0), 5, rate)


# Finite-difference helper

testset_gradient_errors = [
    ([1.0, 2.0], [1.0 + 1e-6, 2.0], (1e-6, 0.0)),
    ([1e-6, 0.5], [1e-6 + 1e-9, 0.5], (0.0, 1e-9)),
    ([0.0], [0.0], (0.0, 0.0)),
]


@pytest.mark.parametrize("analytic, numeric, expected", testset_gradient_errors)
def test_gradient_errors_split_large_and_small_entries(analytic, numeric, expected):
    relative, absolute = gradient_errors(np.array(analytic), np.array(numeric))
    assert relative == pytest.approx(expected[0], rel=1e-4, abs=1e-15)
    assert absolute == pytest.approx(expected[1], rel=1e-4, abs=1e-15)


def test_small_gradient_mismatch_is_reported():
    with pytest.raises(AssertionError, match="absolute error on small entries"):
        assert_gradients_match(np.array([1e-5]), np.array([2e-5]), TOLERANCE, "W")
