"""Six-column daily dataset: loading, price scaling, date splits and rolling windows."""
import logging
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.preprocessing import MinMaxScaler

from .errors import DataError
from .schemas import SplitSpec, WindowAssignment

logger = logging.getLogger(__name__)

COMPOUND_COLUMNS = ("wsj", "reuters", "cnbc", "fortune")
CSV_COLUMNS = ("date",) + COMPOUND_COLUMNS + ("adj_close",)
FEATURE_COLUMNS = COMPOUND_COLUMNS + ("adj_close",)
SPLIT_NAMES = ("train", "val", "test")

_DATE_FORMATS = (
    (re.compile(r"^\d{4}-\d{2}-\d{2}$"), "%Y-%m-%d"),
    (re.compile(r"^\d{1,2}/\d{1,2}/\d{4}$"), "%m/%d/%Y"),
)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class TimeAlignedRecord:
    date: date
    wsj: float
    reuters: float
    cnbc: float
    fortune: float
    adj_close: float

    def __post_init__(self):
        for name in COMPOUND_COLUMNS:
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise DataError(f"{name} compound {value} outside [-1, 1] on {self.date}")
        if not self.adj_close > 0:
            raise DataError(f"adj_close must be positive on {self.date}, got {self.adj_close}")

    def compounds(self) -> List[float]:
        return [self.wsj, self.reuters, self.cnbc, self.fortune]


@dataclass(frozen=True)
class LoadedSeries:
    records: List[TimeAlignedRecord]
    dropped: int


@dataclass(frozen=True)
class ScalerParams:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise DataError(f"scaler needs max > min, got min={self.min} max={self.max}")


@dataclass(frozen=True)
class WindowSample:
    inputs: np.ndarray
    target: float
    target_date: date
    prev_actual_close: float
    actual_close: float

    @property
    def window(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class WindowSplits:
    train: List[WindowSample]
    val: List[WindowSample]
    test: List[WindowSample]

    def __getitem__(self, name: str) -> List[WindowSample]:
        return getattr(self, name)

    def counts(self) -> Dict[str, int]:
        return {name: len(self[name]) for name in SPLIT_NAMES}


def detect_date_format(value: str, path: PathLike = None, line: int = None) -> str:
    for pattern, fmt in _DATE_FORMATS:
        if pattern.match(value):
            return fmt
    raise DataError(f"unrecognised date {value!r}, expected YYYY-MM-DD or MM/DD/YYYY", str(path), line)


def parse_dates(values: pd.Series, path: PathLike) -> pd.Series:
    """Parses one date column; the format is taken from the first row and must hold for every row"""
    fmt = detect_date_format(values.iloc[0], path, int(values.index[0]) + 2)
    parsed = pd.to_datetime(values, format=fmt, errors="coerce")
    bad = parsed.isna()
    if bad.any():
        index = bad.idxmax()
        raise DataError(f"date {values[index]!r} does not match format {fmt}", str(path), int(index) + 2)
    return parsed.dt.date


def read_csv_strict(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    """Reads a CSV as strings; empty fields become NaN, the header must equal ``columns``.

    Blank lines are dropped after parsing, so the label of every row is its line number minus 2.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], skip_blank_lines=False)
    except FileNotFoundError:
        raise DataError("file not found", str(path))
    except pd.errors.EmptyDataError:
        raise DataError("file is empty", str(path))
    except pd.errors.ParserError as exc:
        raise DataError(f"malformed CSV: {exc}", str(path))
    header = [c.strip() for c in frame.columns]
    if header != list(columns):
        raise DataError(f"header {header} does not match {list(columns)}", str(path), 1)
    frame.columns = header
    frame = frame.apply(lambda col: col.str.strip())
    return frame.replace("", np.nan).dropna(how="all")


def load_csv(path: PathLike) -> LoadedSeries:
    frame = read_csv_strict(path, CSV_COLUMNS)
    incomplete = frame.isna().any(axis=1)
    dropped = int(incomplete.sum())
    frame = frame[~incomplete]
    if dropped:
        logger.info("%s: dropped %d row(s) with missing fields", path, dropped)
    if frame.empty:
        raise DataError("no complete rows", str(path))

    dates = parse_dates(frame["date"], path)
    values = {}
    for name in FEATURE_COLUMNS:
        numbers = pd.to_numeric(frame[name], errors="coerce")
        bad = numbers.isna() | ~np.isfinite(numbers)
        if bad.any():
            index = bad.idxmax()
            raise DataError(f"{name} value {frame[name][index]!r} is not a number", str(path), int(index) + 2)
        if name in COMPOUND_COLUMNS:
            outside = numbers.abs() > 1.0
            if outside.any():
                index = outside.idxmax()
                raise DataError(f"{name} compound {numbers[index]} outside [-1, 1]", str(path), int(index) + 2)
        elif (numbers <= 0).any():
            index = (numbers <= 0).idxmax()
            raise DataError(f"adj_close {numbers[index]} must be positive", str(path), int(index) + 2)
        values[name] = numbers

    duplicated = dates.duplicated()
    if duplicated.any():
        index = duplicated.idxmax()
        raise DataError(f"duplicate date {dates[index]}", str(path), int(index) + 2)

    order = np.argsort(dates.to_numpy(), kind="stable")
    records = []
    for position in order:
        index = frame.index[position]
        records.append(TimeAlignedRecord(date=dates[index], **{n: float(values[n][index]) for n in FEATURE_COLUMNS}))
    logger.info("%s: loaded %d trading days (%s .. %s)", path, len(records), records[0].date, records[-1].date)
    return LoadedSeries(records=records, dropped=dropped)


def records_to_frame(records: Sequence[TimeAlignedRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        [[r.date.isoformat()] + r.compounds() + [r.adj_close] for r in records], columns=list(CSV_COLUMNS)
    )


def frame_to_records(frame: pd.DataFrame) -> List[TimeAlignedRecord]:
    "In-memory counterpart of load_csv for complete, date-sorted frames"
    dates = pd.to_datetime(frame["date"])
    return [
        TimeAlignedRecord(date=d.date(), **{n: float(frame[n].iloc[i]) for n in FEATURE_COLUMNS})
        for i, d in enumerate(dates)
    ]


def records_in(records: Sequence[TimeAlignedRecord], start: date, end: date) -> List[TimeAlignedRecord]:
    return [r for r in records if start <= r.date <= end]


def fit_scaler(records: Sequence[TimeAlignedRecord]) -> ScalerParams:
    prices = np.array([[r.adj_close] for r in records], dtype=np.float64)
    if len(np.unique(prices)) < 2:
        raise DataError(f"need at least 2 distinct prices to fit the scaler, got {len(np.unique(prices))}")
    scaler = MinMaxScaler(feature_range=(0, 1)).fit(prices)
    return ScalerParams(min=float(scaler.data_min_[0]), max=float(scaler.data_max_[0]))


def scale(p: ScalerParams, price):
    return (price - p.min) / (p.max - p.min)


def unscale(p: ScalerParams, scaled):
    return scaled * (p.max - p.min) + p.min


def feature_matrix(records: Sequence[TimeAlignedRecord], scaler: ScalerParams) -> np.ndarray:
    return np.array([r.compounds() + [scale(scaler, r.adj_close)] for r in records], dtype=np.float64)


def _windows(records: Sequence[TimeAlignedRecord], features: np.ndarray, window: int) -> List[WindowSample]:
    samples = []
    for t in range(window - 1, len(records) - 1):
        samples.append(WindowSample(
            inputs=features[t - window + 1:t + 1].copy(),
            target=float(features[t + 1, -1]),
            target_date=records[t + 1].date,
            prev_actual_close=records[t].adj_close,
            actual_close=records[t + 1].adj_close,
        ))
    return samples


def make_windows(
    records: Sequence[TimeAlignedRecord],
    scaler: ScalerParams,
    split: SplitSpec,
    window: int = 10,
    assignment: WindowAssignment = WindowAssignment.by_target_date,
) -> WindowSplits:
    """Pairs days t-window+1..t with the close of day t+1.

    ``by_target_date`` windows the whole series and files each sample under the split holding its
    target date, so early windows of a split may reach back into the previous one.
    ``within_split`` windows every split on its own days only.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    for before, after in zip(records, records[1:]):
        if not before.date < after.date:
            raise DataError(f"records must have strictly increasing dates ({before.date} then {after.date})")

    buckets: Dict[str, List[WindowSample]] = {name: [] for name in SPLIT_NAMES}
    if WindowAssignment(assignment) == WindowAssignment.by_target_date:
        unassigned = 0
        for sample in _windows(records, feature_matrix(records, scaler), window):
            name = split.locate(sample.target_date)
            if name is None:
                unassigned += 1
            else:
                buckets[name].append(sample)
        if unassigned:
            logger.info("%d window(s) target a date outside every split and were skipped", unassigned)
    else:
        for name, start, end in split.ranges():
            days = records_in(records, start, end)
            if len(days) < window + 1:
                raise DataError(f"split {name!r} has {len(days)} trading day(s), needs at least {window + 1}")
            buckets[name] = _windows(days, feature_matrix(days, scaler), window)

    splits = WindowSplits(**buckets)
    logger.info("windows (%s, size %d): %s", WindowAssignment(assignment).value, window, splits.counts())
    for name, count in splits.counts().items():
        if count == 0:
            logger.warning("split %r received no samples", name)
    return splits


def dump_windows(splits: WindowSplits, path: PathLike) -> None:
    "Debug dump, one row per (sample, day)"
    rows = []
    for name in SPLIT_NAMES:
        for index, sample in enumerate(splits[name]):
            for step, row in enumerate(sample.inputs):
                rows.append([name, index, sample.target_date.isoformat(), step, *row.tolist(), sample.target])
    columns = ["split", "sample", "target_date", "step", *COMPOUND_COLUMNS, "scaled_close", "target"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
