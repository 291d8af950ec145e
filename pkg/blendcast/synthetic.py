"""Synthetic backtest fixture: a noisy trend plus cycle index with news compounds that track its moves."""
from typing import Union

import numpy as np
import pandas as pd

from .dataset import COMPOUND_COLUMNS, CSV_COLUMNS
from .numerics import Rng


def make_backtest_frame(
    days: int = 150,
    seed: int = 0,
    start: Union[str, pd.Timestamp] = "2017-12-07",
    level: float = 2650.0,
    drift: float = 0.8,
    cycle_amplitude: float = 45.0,
    cycle_days: float = 17.0,
    noise: float = 6.0,
    lead: int = 1,
) -> pd.DataFrame:
    """One row per business day in the dataset CSV schema.

    Each source's compound is a noisy squashed copy of one day's return. With
    ``lead=1`` the row of day t scores the move from t to t+1, so the last row
    of a window already carries the sign of the move to its target: the
    headlines are an oracle with noise and forecasts on this data look better
    than on market data. ``lead=0`` scores the move from t-1 to t, as headlines
    written about the day's session would.
    """
    if lead not in (0, 1):
        raise ValueError(f"lead must be 0 or 1, got {lead}")
    rng = Rng(seed, stream=7)
    t = np.arange(days + 1, dtype=np.float64)
    shocks = np.cumsum(rng.normal(0.0, noise, days + 1)) * 0.35 + rng.normal(0.0, noise, days + 1)
    close = level + drift * t + cycle_amplitude * np.sin(2.0 * np.pi * t / cycle_days) + shocks
    moves = np.diff(close) / noise
    if lead == 0:
        moves = np.concatenate([[0.0], moves[:-1]])

    dates = pd.bdate_range(start=start, periods=days)
    frame = pd.DataFrame({"date": [d.date().isoformat() for d in dates]})
    for offset, name in enumerate(COMPOUND_COLUMNS):
        signal = 0.5 * moves + rng.normal(0.0, 0.6 + 0.1 * offset, days)
        frame[name] = np.round(np.tanh(signal), 4)
    frame["adj_close"] = np.round(close[:days], 2)
    return frame[list(CSV_COLUMNS)]
