"""Price-error and movement-direction metrics for the comparison table.

The positive class is an up-move: a close strictly above the previous day's
actual close. Both the actual and the predicted direction series are measured
against that same previous actual close.
"""
import logging
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.metrics import accuracy_score, confusion_matrix, mean_absolute_percentage_error, mean_squared_error

from .errors import DataError, ShapeError

logger = logging.getLogger(__name__)

METRIC_ROWS = (
    ("mse", "MSE"),
    ("mpa", "MPA"),
    ("precision", "Precision"),
    ("recall", "Recall"),
    ("f1", "F1-Score"),
    ("mda", "MDA"),
)
BAR_METRICS = ("mse", "precision", "recall", "f1", "mda")


class ConfusionCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)
    tn: int = Field(ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    mse: float = Field(ge=0.0, description="index points squared")
    mpa: float
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    mda: float = Field(ge=0.0, le=1.0)
    confusion: ConfusionCounts
    n: int = Field(ge=1)
    degenerate: List[str] = Field(default_factory=list, description="metrics with a zero denominator, reported as 0")


def _pair(actual, predicted, what: str):
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.ndim != 1 or actual.shape != predicted.shape:
        raise ShapeError(what, actual.shape, predicted.shape)
    if actual.size == 0:
        raise DataError(f"{what} needs at least one point")
    return actual, predicted


def mse(actual: Sequence[float], predicted: Sequence[float]) -> float:
    actual, predicted = _pair(actual, predicted, "mse")
    return float(mean_squared_error(actual, predicted))


def mpa(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """1 - mean(|y - y_hat| / y) for a single stock"""
    actual, predicted = _pair(actual, predicted, "mpa")
    if (actual <= 0).any():
        raise DataError("mpa needs strictly positive actual prices")
    return 1.0 - float(mean_absolute_percentage_error(actual, predicted))


def directions(prev_actuals: Sequence[float], values: Sequence[float]) -> np.ndarray:
    prev_actuals, values = _pair(prev_actuals, values, "directions")
    return (values > prev_actuals).astype(np.int64)


def _binary(values, what: str) -> np.ndarray:
    values = np.asarray(values)
    if not np.isin(values, (0, 1)).all():
        raise DataError(f"{what} must contain only 0 and 1")
    return values.astype(np.int64)


def confusion(actual_dirs: Sequence[int], predicted_dirs: Sequence[int]) -> ConfusionCounts:
    actual = _binary(actual_dirs, "actual directions")
    predicted = _binary(predicted_dirs, "predicted directions")
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ShapeError("confusion", actual.shape, predicted.shape)
    tn, fp, fn, tp = confusion_matrix(actual, predicted, labels=[0, 1]).ravel()
    return ConfusionCounts(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))


def precision(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: ConfusionCounts) -> float:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r else 0.0


def degenerate_metrics(c: ConfusionCounts) -> List[str]:
    flags = []
    if c.tp + c.fp == 0:
        flags.append("precision")
    if c.tp + c.fn == 0:
        flags.append("recall")
    if "precision" in flags or "recall" in flags:
        if precision(c) + recall(c) == 0:
            flags.append("f1")
    return flags


def mda(actual_dirs: Sequence[int], predicted_dirs: Sequence[int]) -> float:
    actual = _binary(actual_dirs, "actual directions")
    predicted = _binary(predicted_dirs, "predicted directions")
    if actual.size == 0:
        raise DataError("mda needs at least one direction")
    if actual.shape != predicted.shape:
        raise ShapeError("mda", actual.shape, predicted.shape)
    return float(accuracy_score(actual, predicted))


def evaluate(
    actual_prices: Sequence[float], predicted_prices: Sequence[float], prev_actuals: Sequence[float]
) -> EvalReport:
    actual, predicted = _pair(actual_prices, predicted_prices, "evaluate")
    _pair(actual, prev_actuals, "evaluate prev_actuals")
    actual_dirs = directions(prev_actuals, actual)
    predicted_dirs = directions(prev_actuals, predicted)
    counts = confusion(actual_dirs, predicted_dirs)
    flags = degenerate_metrics(counts)
    if flags:
        logger.warning("zero denominators for %s, reported as 0", ", ".join(flags))
    return EvalReport(
        mse=mse(actual, predicted),
        mpa=mpa(actual, predicted),
        precision=precision(counts),
        recall=recall(counts),
        f1=f1(counts),
        mda=mda(actual_dirs, predicted_dirs),
        confusion=counts,
        n=len(actual),
        degenerate=flags,
    )


def _format(metric: str, value: Optional[float]) -> str:
    if value is None:
        return "-"
    if metric == "mse":
        return f"{value:.2f}"
    return f"{100.0 * value:.2f}%"


def render_table(
    reports: Mapping[str, EvalReport], extra_columns: Optional[Mapping[str, Mapping[str, float]]] = None
) -> str:
    """Metrics as rows, models as columns; ``extra_columns`` shows externally supplied results as they are"""
    columns: Dict[str, Dict[str, Optional[float]]] = {}
    for label, report in reports.items():
        columns[label] = {metric: getattr(report, metric) for metric, _ in METRIC_ROWS}
    for label, values in (extra_columns or {}).items():
        columns[label] = {metric: values.get(metric) for metric, _ in METRIC_ROWS}

    header = ["Evaluation Metrics"] + list(columns)
    body = [[title] + [_format(metric, columns[label][metric]) for label in columns] for metric, title in METRIC_ROWS]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

    def line(cells):
        return " | ".join(cell.ljust(widths[0]) if i == 0 else cell.rjust(widths[i]) for i, cell in enumerate(cells))

    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), rule] + [line(row) for row in body]) + "\n"


def relative_change(reference: EvalReport, baseline: EvalReport) -> Dict[str, float]:
    """How ``reference`` improves on ``baseline``.

    MSE as a relative reduction in percent, the ratio metrics as percentage-point gains.
    """
    change = {"mse": 100.0 * (baseline.mse - reference.mse) / baseline.mse if baseline.mse else 0.0}
    for metric in ("mpa", "precision", "recall", "f1", "mda"):
        change[metric] = 100.0 * (getattr(reference, metric) - getattr(baseline, metric))
    return change
