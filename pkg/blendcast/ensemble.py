"""Level-1 combiners over a p x m matrix of level-0 predictions.

Blending trains a small three-layer ReLU network on the validation-split
predictions; averaging and weighted averaging are the baselines it is
compared against. Every combiner works in the scaled price space.
"""
import itertools
import logging
from dataclasses import dataclass, field, replace
from datetime import date
from typing import ClassVar, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field

from .cells import DenseParams, dense_backward, dense_forward
from .errors import DataError, ShapeError
from .numerics import Rng
from .optim import Adam
from .schemas import Activation, MetaConfig
from .serialization import ArrayEntry, Document, PathLike, decode_arrays, encode_arrays, read_document, write_json

logger = logging.getLogger(__name__)

META_FORMAT = "blendcast/meta-learner"
WEIGHTS_FORMAT = "blendcast/weights"
BASELINE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Level0Predictions:
    matrix: np.ndarray
    labels: Tuple[str, ...]
    dates: Tuple[date, ...] = ()

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 2:
            raise ShapeError("level-0 predictions", "(p >= 1, m >= 2)", matrix.shape)
        if np.isnan(matrix).any():
            raise DataError("level-0 predictions contain NaN")
        if len(self.labels) != matrix.shape[1]:
            raise ShapeError("level-0 labels", (matrix.shape[1],), (len(self.labels),))
        if self.dates and len(self.dates) != matrix.shape[0]:
            raise ShapeError("level-0 dates", (matrix.shape[0],), (len(self.dates),))
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "dates", tuple(self.dates))

    @classmethod
    def from_columns(cls, columns: Dict[str, Sequence[float]], dates: Sequence[date] = ()) -> "Level0Predictions":
        labels = tuple(columns)
        return cls(matrix=np.column_stack([np.asarray(columns[k], dtype=np.float64) for k in labels]),
                   labels=labels, dates=tuple(dates))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class MetaLearner:
    layers: Tuple[DenseParams, DenseParams, DenseParams]
    seed: int
    config: MetaConfig = field(default_factory=MetaConfig)

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    def parameters(self) -> Dict[str, np.ndarray]:
        return {f"layer{i}.{name}": a for i, layer in enumerate(self.layers) for name, a in layer.arrays().items()}

    def with_parameters(self, arrays: Dict[str, np.ndarray]) -> "MetaLearner":
        layers = []
        for i, layer in enumerate(self.layers):
            for name, array in layer.arrays().items():
                got = np.shape(arrays.get(f"layer{i}.{name}"))
                if got != array.shape:
                    raise ShapeError(f"meta parameter layer{i}.{name}", array.shape, got)
            layers.append(layer.with_arrays({n: arrays[f"layer{i}.{n}"] for n in layer.array_names}))
        return replace(self, layers=tuple(layers))


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must be non-negative and sum to 1, got {weights.tolist()}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "labels", tuple(self.labels))


def _init_meta(rng: Rng, width: int, cfg: MetaConfig) -> Tuple[DenseParams, DenseParams, DenseParams]:
    return (
        DenseParams.init(rng, width, cfg.hidden1, Activation.relu),
        DenseParams.init(rng, cfg.hidden1, cfg.hidden2, Activation.relu),
        DenseParams.init(rng, cfg.hidden2, 1, Activation.identity),
    )


def _meta_forward(layers, X: np.ndarray):
    caches = []
    out = X
    for layer in layers:
        out, cache = dense_forward(layer, out)
        caches.append(cache)
    return out[:, 0], caches


def _dead_layer(layers, X: np.ndarray) -> Optional[int]:
    _, caches = _meta_forward(layers, X)
    for index, cache in enumerate(caches[:-1]):
        if not cache.y.any():
            return index
    return None


def _averaging_layers(width: int, cfg: MetaConfig) -> Optional[Tuple[DenseParams, DenseParams, DenseParams]]:
    """Weights under which the network outputs the row mean exactly, or None when it is too narrow.

    The first layer carries relu(x) and relu(-x) for every column, the second relu(mean) and
    relu(-mean), and the head subtracts them.
    """
    if cfg.hidden1 < 2 * width or cfg.hidden2 < 2:
        return None
    W1 = np.zeros((cfg.hidden1, width))
    W2 = np.zeros((cfg.hidden2, cfg.hidden1))
    W3 = np.zeros((1, cfg.hidden2))
    for k in range(width):
        W1[2 * k, k], W1[2 * k + 1, k] = 1.0, -1.0
        W2[0, 2 * k], W2[0, 2 * k + 1] = 1.0 / width, -1.0 / width
    W2[1] = -W2[0]
    W3[0, :2] = 1.0, -1.0
    return (
        DenseParams(W=W1, b=np.zeros(cfg.hidden1), activation=Activation.relu),
        DenseParams(W=W2, b=np.zeros(cfg.hidden2), activation=Activation.relu),
        DenseParams(W=W3, b=np.zeros(1), activation=Activation.identity),
    )


def _train_meta(meta: MetaLearner, X: np.ndarray, y: np.ndarray) -> Tuple[MetaLearner, float]:
    """Full-batch Adam on the validation rows; returns the parameters of the best epoch and their MSE"""
    cfg = meta.config
    params = meta.parameters()
    optimizer = Adam(lr=cfg.learning_rate)
    best_loss, best = np.inf, None
    for epoch in range(cfg.epochs + 1):
        pred, caches = _meta_forward(meta.layers, X)
        residual = pred - y
        loss = float(np.mean(residual ** 2))
        if best is None or loss < best_loss:
            best_loss, best = loss, {k: v.copy() for k, v in params.items()}
        if epoch == cfg.epochs:
            break
        grad = (2.0 * residual / len(y))[:, None]
        grads = {}
        for index in reversed(range(len(caches))):
            layer_grads, grad = dense_backward(caches[index], grad)
            grads[f"layer{index}.W"] = layer_grads.W
            grads[f"layer{index}.b"] = layer_grads.b
        optimizer.step(params, grads)
        if epoch == 0 or epoch == cfg.epochs - 1:
            logger.debug("meta-learner epoch %d loss %.6g", epoch + 1, loss)
    return meta.with_parameters(best), best_loss


def blend_fit(
    level0_val: Level0Predictions,
    val_targets: Sequence[float],
    seed: Optional[int] = None,
    config: Optional[MetaConfig] = None,
) -> MetaLearner:
    """Trains the meta-learner on the validation rows.

    A draw is rejected when a hidden layer is dead at initialization or after training, or when its
    validation MSE ends above the plain average's; rejected draws are redrawn from the same stream.
    When every draw is rejected, training restarts from the weights that reproduce the average.
    """
    cfg = config or MetaConfig()
    seed = cfg.seed if seed is None else seed
    y = np.asarray(val_targets, dtype=np.float64)
    if y.shape != (level0_val.rows,):
        raise ShapeError("validation targets", (level0_val.rows,), y.shape)
    if level0_val.rows < 2:
        raise DataError(f"the meta-learner needs at least 2 validation rows, got {level0_val.rows}")

    X = level0_val.matrix
    baseline = float(np.mean((average_predict(level0_val) - y) ** 2))
    rng = Rng(seed, stream=0)
    fallback: Optional[Tuple[MetaLearner, float]] = None
    for attempt in range(1, cfg.max_redraws + 1):
        layers = _init_meta(rng, level0_val.width, cfg)
        dead = _dead_layer(layers, X)
        if dead is not None:
            logger.warning("meta-learner layer %d is dead at initialization (draw %d), redrawing", dead, attempt)
            continue
        meta, fitted = _train_meta(MetaLearner(layers=layers, seed=seed, config=cfg), X, y)
        dead = _dead_layer(meta.layers, X)
        if dead is None and fitted <= baseline + BASELINE_TOLERANCE:
            break
        if fallback is None or fitted < fallback[1]:
            fallback = meta, fitted
        if dead is not None:
            logger.warning("meta-learner layer %d died in training (draw %d), redrawing", dead, attempt)
        else:
            logger.info("meta-learner draw %d ends at validation MSE %.6g above averaging %.6g, redrawing",
                        attempt, fitted, baseline)
    else:
        averaging = _averaging_layers(level0_val.width, cfg)
        if averaging is not None:
            logger.warning("no meta-learner draw beat averaging in %d attempts, training from the average",
                           cfg.max_redraws)
            meta, fitted = _train_meta(MetaLearner(layers=averaging, seed=seed, config=cfg), X, y)
        elif fallback is not None:
            meta, fitted = fallback
        else:
            raise DataError(f"every meta-learner draw was dead in {cfg.max_redraws} attempts")
    logger.info("meta-learner fitted on %d x %d, validation MSE %.6g", level0_val.rows, level0_val.width, fitted)
    return meta


def blend_predict(meta: MetaLearner, level0_test: Level0Predictions) -> np.ndarray:
    if level0_test.width != meta.input_size:
        raise ShapeError("meta-learner input", (meta.input_size,), (level0_test.width,))
    pred, _ = _meta_forward(meta.layers, level0_test.matrix)
    return pred


def average_predict(level0: Level0Predictions) -> np.ndarray:
    return level0.matrix.mean(axis=1)


def simplex_grid(width: int, step: float = 0.01) -> np.ndarray:
    """Every weight vector on the simplex whose entries are multiples of ``step``"""
    parts = int(round(1.0 / step))
    rows = []
    # stars and bars: bar positions split `parts` units among `width` weights
    for bars in itertools.combinations(range(parts + width - 1), width - 1):
        edges = (-1,) + bars + (parts + width - 1,)
        rows.append([edges[k + 1] - edges[k] - 1 for k in range(width)])
    return np.array(rows, dtype=np.float64) / parts


def weighted_average_fit(
    level0_val: Level0Predictions, val_targets: Sequence[float], step: float = 0.01
) -> WeightVector:
    """Grid search on the simplex for the validation-MSE minimiser; ties go to the most even weights"""
    y = np.asarray(val_targets, dtype=np.float64)
    if y.shape != (level0_val.rows,):
        raise ShapeError("validation targets", (level0_val.rows,), y.shape)
    grid = simplex_grid(level0_val.width, step)
    errors = np.mean((level0_val.matrix @ grid.T - y[:, None]) ** 2, axis=0)
    best = errors.min()
    tied = np.flatnonzero(errors <= best + 1e-12)
    spread = np.abs(grid[tied] - 1.0 / level0_val.width).sum(axis=1)
    choice = grid[tied[np.argmin(spread)]]
    logger.info("weighted average: weights %s, validation MSE %.6g", choice.round(2).tolist(), best)
    return WeightVector(weights=choice, labels=level0_val.labels)


def weighted_average_predict(w: WeightVector, level0: Level0Predictions) -> np.ndarray:
    if w.weights.shape != (level0.width,):
        raise ShapeError("weight vector", (level0.width,), w.weights.shape)
    return level0.matrix @ w.weights


class MetaDocument(Document):
    FORMAT: ClassVar[str] = META_FORMAT

    format: str = META_FORMAT
    seed: int = Field(ge=0, lt=2**64)
    input_size: int = Field(ge=2)
    config: MetaConfig
    parameters: List[ArrayEntry]


class WeightsDocument(Document):
    FORMAT: ClassVar[str] = WEIGHTS_FORMAT

    format: str = WEIGHTS_FORMAT
    labels: List[str]
    weights: List[float] = Field(min_length=2)


def save_meta_learner(meta: MetaLearner, path: PathLike) -> None:
    write_json(path, MetaDocument(
        seed=meta.seed,
        input_size=meta.input_size,
        config=meta.config,
        parameters=encode_arrays(meta.parameters()),
    ))


def load_meta_learner(path: PathLike) -> MetaLearner:
    document = read_document(path, MetaDocument)
    skeleton = MetaLearner(layers=_init_meta(Rng(0), document.input_size, document.config),
                           seed=document.seed, config=document.config)
    try:
        return skeleton.with_parameters(decode_arrays(document.parameters))
    except ShapeError as exc:
        raise DataError(str(exc), str(path))


def save_weights(w: WeightVector, path: PathLike) -> None:
    write_json(path, WeightsDocument(labels=list(w.labels), weights=[float(v) for v in w.weights]))


def load_weights(path: PathLike) -> WeightVector:
    document = read_document(path, WeightsDocument)
    try:
        return WeightVector(weights=np.array(document.weights), labels=tuple(document.labels))
    except ValueError as exc:
        raise DataError(str(exc), str(path))
