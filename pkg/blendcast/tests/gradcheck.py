"""Central finite differences for the gradient tests."""
from typing import Callable, Tuple

import numpy as np

STEP = 1e-6
# entries below this magnitude are compared absolutely; central differences at STEP carry ~1e-9 absolute noise
SMALL = 1e-3
ABS_TOLERANCE = 1e-8


def numeric_grad(loss: Callable[[], float], array: np.ndarray, step: float = STEP) -> np.ndarray:
    """d loss / d array, perturbing ``array`` in place one entry at a time"""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        old = array[index]
        array[index] = old + step
        up = loss()
        array[index] = old - step
        down = loss()
        array[index] = old
        grad[index] = (up - down) / (2.0 * step)
    return grad


def gradient_errors(analytic: np.ndarray, numeric: np.ndarray) -> Tuple[float, float]:
    """Largest relative error over entries of magnitude >= SMALL and largest absolute error over the rest"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    large = scale >= SMALL
    relative = float(np.max(diff[large] / scale[large])) if large.any() else 0.0
    absolute = float(np.max(diff[~large])) if (~large).any() else 0.0
    return relative, absolute


def assert_gradients_match(analytic, numeric, rtol: float, what: str = "", atol: float = ABS_TOLERANCE) -> None:
    relative, absolute = gradient_errors(analytic, numeric)
    assert relative < rtol and absolute < atol, (
        f"{what}: relative error {relative:.3g} (limit {rtol:g}), "
        f"absolute error on small entries {absolute:.3g} (limit {atol:g})"
    )
