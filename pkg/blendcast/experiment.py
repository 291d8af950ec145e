"""The experiment pipeline behind ``blendcast run``.

load -> (sentiment) -> scale -> window -> train -> combine -> evaluate -> write.
Every stage failure is re-raised as a ``StageError`` carrying the stage name,
and nothing is left behind in the output directory when a run fails.
"""
import datetime as dt
import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, model_validator

from . import __version__
from .dataset import (
    FEATURE_COLUMNS,
    SPLIT_NAMES,
    LoadedSeries,
    ScalerParams,
    WindowSplits,
    dump_windows,
    fit_scaler,
    load_csv,
    make_windows,
    records_in,
    unscale,
)
from .ensemble import (
    Level0Predictions,
    MetaLearner,
    WeightVector,
    average_predict,
    blend_fit,
    blend_predict,
    save_meta_learner,
    save_weights,
    weighted_average_fit,
    weighted_average_predict,
)
from .errors import DataError, StageError
from .metrics import BAR_METRICS, EvalReport, evaluate, relative_change, render_table
from .schemas import COMBINERS, ExperimentConfig, ModelConfig, ModelName, ScalerFit
from .sentiment import merge_prices, parse_lexicon, score_headlines_csv, write_dataset_csv
from .serialization import PathLike, dumps, write_text_atomic
from .training import SequenceModel, TrainTrace, build_model, predict, save_model, train

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ("date", "actual", "prev_actual")


class PredictionRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    date: dt.date
    split: str
    actual: float
    prev_actual: float
    predicted: Dict[str, float]


class RunReport(BaseModel):
    "What one run produced; serialised as report.json"
    model_config = ConfigDict(frozen=True)

    version: str
    config: Dict[str, Any]
    scaler: Dict[str, float]
    samples: Dict[str, int]
    dropped_rows: int
    reports: Dict[str, EvalReport]
    predictions: List[PredictionRow]
    history: List[PredictionRow]

    @model_validator(mode="after")
    def _check_models(self):
        for row in self.predictions:
            if list(row.predicted) != list(self.reports):
                raise ValueError(f"prediction row {row.date} has models {list(row.predicted)}, "
                                 f"expected {list(self.reports)}")
        return self

    def labels(self) -> Dict[str, str]:
        return {name: ModelName(name).label for name in self.reports}


@dataclass
class _Level0:
    name: ModelName
    model: SequenceModel
    trace: TrainTrace
    scaled: Dict[str, np.ndarray] = field(default_factory=dict)


@contextmanager
def stage(name: str) -> Iterator[None]:
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _load(cfg: ExperimentConfig, staging: Path) -> LoadedSeries:
    data = cfg.data
    if data.dataset_csv is not None:
        with stage("load"):
            return load_csv(data.dataset_csv)
    with stage("sentiment"):
        lexicon = parse_lexicon(data.lexicon)
        compounds = score_headlines_csv(data.headlines_csv, lexicon)
        scored = staging / "dataset.csv"
        write_dataset_csv(merge_prices(compounds, data.prices_csv), scored)
    with stage("load"):
        return load_csv(scored)


def _fit_scaler(cfg: ExperimentConfig, series: LoadedSeries) -> ScalerParams:
    if ScalerFit(cfg.scaler_fit) == ScalerFit.full:
        return fit_scaler(series.records)
    split = cfg.split
    train_days = records_in(series.records, split.train_start, split.train_end)
    if not train_days:
        raise DataError(f"no trading days in the training range {split.train_start} .. {split.train_end}")
    return fit_scaler(train_days)


def _check_splits(cfg: ExperimentConfig, splits: WindowSplits) -> None:
    counts = splits.counts()
    if counts["train"] == 0:
        raise DataError("the training split has no samples")
    if counts["test"] == 0:
        raise DataError("the test split has no samples")
    if any(m in COMBINERS for m in cfg.models) and counts["val"] < 2:
        raise DataError(f"the combiners need at least 2 validation samples, got {counts['val']}")


def _model_config(cfg: ExperimentConfig, name: ModelName) -> ModelConfig:
    return cfg.lstm if name == ModelName.lstm else cfg.gru


def _train_level0(cfg: ExperimentConfig, splits: WindowSplits) -> Dict[ModelName, _Level0]:
    needed = cfg.level0_needed()

    def job(name: ModelName) -> _Level0:
        model = build_model(_model_config(cfg, name), len(FEATURE_COLUMNS))
        trained, trace = train(model, splits.train)
        scaled = {split: predict(trained, splits[split]) for split in SPLIT_NAMES if splits[split]}
        return _Level0(name=name, model=trained, trace=trace, scaled=scaled)

    n_jobs = len(needed) if cfg.parallel else 1
    with Parallel(n_jobs=n_jobs, prefer="threads") as parallel:
        results = parallel(delayed(job)(name) for name in needed)
    return {result.name: result for result in results}


def _level0_matrix(level0: Dict[ModelName, _Level0], split: str, splits: WindowSplits) -> Level0Predictions:
    return Level0Predictions.from_columns(
        {name.value: result.scaled[split] for name, result in level0.items()},
        dates=[s.target_date for s in splits[split]],
    )


def _combine(
    cfg: ExperimentConfig, splits: WindowSplits, level0: Dict[ModelName, _Level0]
) -> Tuple[Dict[ModelName, Dict[str, np.ndarray]], Optional[MetaLearner], Optional[WeightVector]]:
    """Scaled predictions per selected model and split; combiners are fit on the validation split"""
    scaled: Dict[ModelName, Dict[str, np.ndarray]] = {}
    for name in cfg.models:
        if name in level0:
            scaled[name] = level0[name].scaled
    wanted = [m for m in cfg.models if m in COMBINERS]
    if not wanted:
        return scaled, None, None

    present = [split for split in SPLIT_NAMES if splits[split]]
    matrices = {split: _level0_matrix(level0, split, splits) for split in present}
    val_targets = [s.target for s in splits.val]
    meta = weights = None
    for name in wanted:
        if name == ModelName.averaging:
            scaled[name] = {split: average_predict(matrices[split]) for split in present}
        elif name == ModelName.weighted_average:
            weights = weighted_average_fit(matrices["val"], val_targets)
            scaled[name] = {split: weighted_average_predict(weights, matrices[split]) for split in present}
        else:
            meta = blend_fit(matrices["val"], val_targets, config=cfg.meta)
            scaled[name] = {split: blend_predict(meta, matrices[split]) for split in present}
    return scaled, meta, weights


def _rows(
    splits: WindowSplits, scaler: ScalerParams, scaled: Dict[ModelName, Dict[str, np.ndarray]], names: List[str]
) -> List[PredictionRow]:
    rows = []
    for name in names:
        samples = splits[name]
        prices = {model.value: unscale(scaler, scaled[model][name]) for model in scaled}
        for index, sample in enumerate(samples):
            rows.append(PredictionRow(
                date=sample.target_date,
                split=name,
                actual=sample.actual_close,
                prev_actual=sample.prev_actual_close,
                predicted={model: float(values[index]) for model, values in prices.items()},
            ))
    return rows


def _evaluate(cfg: ExperimentConfig, rows: List[PredictionRow]) -> Dict[str, EvalReport]:
    actual = [row.actual for row in rows]
    prev = [row.prev_actual for row in rows]
    reports = {}
    for name in cfg.models:
        report = evaluate(actual, [row.predicted[name.value] for row in rows], prev)
        logger.info(
            "%s: MSE %.2f, MPA %.2f%%, F1 %.2f%%, MDA %.2f%%",
            name.label, report.mse, 100 * report.mpa, 100 * report.f1, 100 * report.mda,
        )
        reports[name.value] = report
    return reports


def predictions_frame(rows: List[PredictionRow]) -> pd.DataFrame:
    if not rows:
        raise DataError("no prediction rows")
    models = list(rows[0].predicted)
    return pd.DataFrame(
        [[row.date.isoformat(), row.actual, row.prev_actual] + [row.predicted[m] for m in models] for row in rows],
        columns=list(PREDICTION_COLUMNS) + models,
    )


def comparison_table(report: RunReport, external: Optional[Dict[str, Dict[str, float]]] = None) -> str:
    labels = report.labels()
    table = render_table({labels[name]: r for name, r in report.reports.items()}, extra_columns=external)
    lstm, blending = ModelName.lstm.value, ModelName.blending.value
    if lstm in report.reports and blending in report.reports:
        change = relative_change(report.reports[blending], report.reports[lstm])
        table += (
            f"\n{ModelName.blending.label} vs {ModelName.lstm.label}: "
            f"MSE reduced by {change['mse']:.2f}%, MDA {change['mda']:+.2f} points\n"
        )
    return table


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    try:
        return write_text_atomic(path, frame.to_csv(index=False, lineterminator="\n"))
    except OSError as exc:
        raise DataError(f"cannot write: {exc.strerror or exc}", str(path))


def emit_plot_data(report: RunReport, out_dir: PathLike) -> List[Path]:
    """Plot-ready long-format CSVs; figures are drawn outside blendcast.

    plot_lines.csv    date,series,value over the test split (actual + each model)
    plot_history.csv  date,split,series,value over every split
    plot_metrics.csv  model,metric,value for the bar-chart metrics
    """
    if not report.predictions:
        raise DataError("the report holds no prediction series")
    out_dir = Path(out_dir)
    models = list(report.reports)

    def long_rows(rows: List[PredictionRow], with_split: bool):
        for row in rows:
            prefix = [row.date.isoformat()] + ([row.split] if with_split else [])
            yield prefix + ["actual", row.actual]
            for model in models:
                yield prefix + [model, row.predicted[model]]

    lines = pd.DataFrame(list(long_rows(report.predictions, False)), columns=["date", "series", "value"])
    history = pd.DataFrame(list(long_rows(report.history, True)), columns=["date", "split", "series", "value"])
    bars = pd.DataFrame(
        [[model, metric, getattr(report.reports[model], metric)] for model in models for metric in BAR_METRICS],
        columns=["model", "metric", "value"],
    )
    return [
        _write_csv(lines, out_dir / "plot_lines.csv"),
        _write_csv(history, out_dir / "plot_history.csv"),
        _write_csv(bars, out_dir / "plot_metrics.csv"),
    ]


def read_predictions_csv(path: PathLike) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"date": str}, float_precision="round_trip")
    except FileNotFoundError:
        raise DataError("file not found", str(path))
    except pd.errors.EmptyDataError:
        raise DataError("file is empty", str(path))
    header = list(frame.columns)
    if header[:3] != list(PREDICTION_COLUMNS) or len(header) < 4:
        raise DataError(f"expected columns {list(PREDICTION_COLUMNS)} followed by model columns, got {header}",
                        str(path), 1)
    if frame.empty:
        raise DataError("no prediction rows", str(path))
    return frame


def evaluate_predictions(frame: pd.DataFrame) -> Dict[str, EvalReport]:
    "Recomputes every model's EvalReport from a predictions table"
    actual = frame["actual"].to_numpy(dtype=np.float64)
    prev = frame["prev_actual"].to_numpy(dtype=np.float64)
    return {
        model: evaluate(actual, frame[model].to_numpy(dtype=np.float64), prev)
        for model in frame.columns[len(PREDICTION_COLUMNS):]
    }


def _save_models(staging: Path, level0: Dict[ModelName, _Level0], meta, weights) -> None:
    for name, result in level0.items():
        save_model(result.model, staging / "models" / f"{name.value}.json")
    if meta is not None:
        save_meta_learner(meta, staging / "models" / "meta.json")
    if weights is not None:
        save_weights(weights, staging / "models" / "weights.json")


# every file a run may leave in its output directory, besides models/*.json
ARTEFACTS = (
    "report.json", "predictions.csv", "table.txt", "plot_lines.csv", "plot_history.csv", "plot_metrics.csv",
    "windows.csv", "dataset.csv",
)


def _publish(staging: Path, out: Path) -> None:
    "Moves the staged artefacts into ``out`` and removes the ones an earlier run left that this run did not write"
    fresh = {p.relative_to(staging) for p in staging.rglob("*") if p.is_file()}
    for relative in sorted(fresh):
        target = out / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        os.replace(staging / relative, target)
    managed = [out / name for name in ARTEFACTS] + sorted((out / "models").glob("*.json"))
    for stale in managed:
        if stale.is_file() and stale.relative_to(out) not in fresh:
            logger.debug("removing %s left by an earlier run", stale)
            stale.unlink()


def run_experiment(cfg: ExperimentConfig, dump_window_samples: bool = False) -> RunReport:
    out = Path(cfg.output_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        series = _load(cfg, staging)

        with stage("scale"):
            scaler = _fit_scaler(cfg, series)
            logger.info("price scaler min %.2f max %.2f (%s)", scaler.min, scaler.max, ScalerFit(cfg.scaler_fit).value)

        with stage("window"):
            splits = make_windows(series.records, scaler, cfg.split, cfg.window, cfg.assignment)
            _check_splits(cfg, splits)
            if dump_window_samples:
                dump_windows(splits, staging / "windows.csv")

        with stage("train"):
            level0 = _train_level0(cfg, splits)

        with stage("combine"):
            scaled, meta, weights = _combine(cfg, splits, level0)
            # level-0 columns that only fed the combiners stay out of the report
            scaled = {name: scaled[name] for name in cfg.models}

        with stage("evaluate"):
            test_rows = _rows(splits, scaler, scaled, ["test"])
            report = RunReport(
                version=__version__,
                config=cfg.model_dump(mode="json"),
                scaler={"min": scaler.min, "max": scaler.max},
                samples=splits.counts(),
                dropped_rows=series.dropped,
                reports=_evaluate(cfg, test_rows),
                predictions=test_rows,
                history=_rows(splits, scaler, scaled, [s for s in SPLIT_NAMES if splits[s]]),
            )

        with stage("write"):
            write_text_atomic(staging / "report.json", dumps(report.model_dump(mode="json")))
            _write_csv(predictions_frame(report.predictions), staging / "predictions.csv")
            write_text_atomic(staging / "table.txt", comparison_table(report, cfg.external_results or None))
            emit_plot_data(report, staging)
            _save_models(staging, level0, meta, weights)
            _publish(staging, out)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info("run complete, artefacts in %s", out)
    return report


def seed_sweep(cfg: ExperimentConfig, seeds: List[int]) -> Dict[int, RunReport]:
    "Reruns ``cfg`` once per seed, each into its own ``seed-<n>`` subdirectory"
    reports = {}
    for seed in seeds:
        seeded = cfg.with_seed(seed).model_copy(update={"output_dir": Path(cfg.output_dir) / f"seed-{seed}"})
        reports[seed] = run_experiment(seeded)
    return reports
