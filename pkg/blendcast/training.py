"""Stacked LSTM/GRU sequence-to-one regressors trained with full-batch BPTT."""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import ClassVar, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import Field

from .cells import (
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
from .dataset import WindowSample
from .errors import ConfigError, DataError, ShapeError, TrainingDivergedError
from .numerics import Rng
from .optim import clip_global_norm, make_optimizer
from .schemas import Activation, CellKind, ModelConfig
from .serialization import ArrayEntry, Document, PathLike, decode_arrays, encode_arrays, read_document, write_json

logger = logging.getLogger(__name__)

MODEL_FORMAT = "blendcast/sequence-model"

LayerParams = Union[LstmParams, GruParams]

_STEP = {
    CellKind.lstm: (LstmParams, lstm_forward, lstm_backward),
    CellKind.gru: (GruParams, gru_forward, gru_backward),
}


@dataclass(frozen=True)
class SequenceModel:
    config: ModelConfig
    feature_count: int
    layer_params: Tuple[LayerParams, ...]
    head: DenseParams

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live references to every parameter array, in a fixed order"""
        named = {}
        for index, params in enumerate(self.layer_params):
            for name, array in params.arrays().items():
                named[f"layer{index}.{name}"] = array
        for name, array in self.head.arrays().items():
            named[f"head.{name}"] = array
        return named

    def with_parameters(self, arrays: Dict[str, np.ndarray]) -> "SequenceModel":
        expected = self.parameters()
        for name, array in expected.items():
            if name not in arrays:
                raise ShapeError(f"parameter {name}", array.shape, None)
            if np.shape(arrays[name]) != array.shape:
                raise ShapeError(f"parameter {name}", array.shape, np.shape(arrays[name]))
        layers = tuple(
            params.with_arrays({n: arrays[f"layer{i}.{n}"] for n in params.array_names})
            for i, params in enumerate(self.layer_params)
        )
        head = self.head.with_arrays({n: arrays[f"head.{n}"] for n in self.head.array_names})
        return replace(self, layer_params=layers, head=head)

    def copy(self) -> "SequenceModel":
        return self.with_parameters({k: v.copy() for k, v in self.parameters().items()})


@dataclass(frozen=True)
class TrainTrace:
    losses: List[float]
    grad_norms: List[float] = field(default_factory=list)
    seconds: float = 0.0


def build_model(cfg: ModelConfig, feature_count: int) -> SequenceModel:
    if feature_count < 1:
        raise ConfigError("feature_count", f"must be >= 1, got {feature_count}")
    kind = CellKind(cfg.cell_kind)
    params_cls = _STEP[kind][0]
    rng = Rng(cfg.seed, stream=0)
    layers = []
    for index in range(cfg.recurrent_layers):
        input_size = feature_count if index == 0 else cfg.hidden
        layers.append(params_cls.init(rng, input_size, cfg.hidden))
    head = DenseParams.init(rng, cfg.hidden, 1, Activation.identity)
    return SequenceModel(config=cfg, feature_count=feature_count, layer_params=tuple(layers), head=head)


def stack_samples(model: SequenceModel, samples: Sequence[WindowSample]) -> Tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, 0, model.feature_count)), np.zeros(0)
    steps = samples[0].inputs.shape[0]
    for sample in samples:
        if sample.inputs.shape != (steps, model.feature_count):
            raise ShapeError("window sample", (steps, model.feature_count), sample.inputs.shape)
    X = np.stack([s.inputs for s in samples]).astype(np.float64)
    y = np.array([s.target for s in samples], dtype=np.float64)
    return X, y


def _draw_masks(model: SequenceModel, rng: Rng, batch: int) -> Optional[List[np.ndarray]]:
    rate = model.config.dropout
    if rate == 0.0:
        return None
    # one mask per layer and sequence, reused across time steps
    return [dropout_mask(rng, (batch, p.hidden), rate) for p in model.layer_params]


def _forward(model: SequenceModel, X: np.ndarray, masks: Optional[List[np.ndarray]]):
    _, step_forward, _ = _STEP[CellKind(model.config.cell_kind)]
    with_cell = CellKind(model.config.cell_kind) == CellKind.lstm
    batch, steps, _ = X.shape
    sequence = [X[:, t, :] for t in range(steps)]
    caches = []
    for index, params in enumerate(model.layer_params):
        state = CellState.zeros(params.hidden, batch, with_cell=with_cell)
        layer_caches, outputs = [], []
        for x_t in sequence:
            state, cache = step_forward(params, x_t, state)
            layer_caches.append(cache)
            outputs.append(state.h)
        if masks is not None:
            outputs = [h * masks[index] for h in outputs]
        caches.append(layer_caches)
        sequence = outputs
    y, head_cache = dense_forward(model.head, sequence[-1])
    return y[:, 0], caches, head_cache


def _backward(model, caches, head_cache, grad_pred: np.ndarray, masks) -> Dict[str, np.ndarray]:
    _, _, step_backward = _STEP[CellKind(model.config.cell_kind)]
    with_cell = CellKind(model.config.cell_kind) == CellKind.lstm
    head_grads, grad_top = dense_backward(head_cache, grad_pred[:, None])

    steps = len(caches[0])
    batch = grad_pred.shape[0]
    grad_sequence = [np.zeros((batch, model.layer_params[-1].hidden)) for _ in range(steps)]
    grad_sequence[-1] = grad_top

    grads: Dict[str, np.ndarray] = {}
    for index in reversed(range(len(model.layer_params))):
        params = model.layer_params[index]
        if masks is not None:
            grad_sequence = [g * masks[index] for g in grad_sequence]
        totals = {name: np.zeros_like(array) for name, array in params.arrays().items()}
        carried = CellState.zeros(params.hidden, batch, with_cell=with_cell)
        grad_inputs = [None] * steps
        for t in reversed(range(steps)):
            carried = CellState(h=carried.h + grad_sequence[t], c=carried.c)
            step_grads, grad_x, carried = step_backward(caches[index][t], carried)
            for name, array in step_grads.arrays().items():
                totals[name] += array
            grad_inputs[t] = grad_x
        for name, array in totals.items():
            grads[f"layer{index}.{name}"] = array
        grad_sequence = grad_inputs

    ordered = {name: grads[name] for name in model.parameters() if name.startswith("layer")}
    ordered["head.W"] = head_grads.W
    ordered["head.b"] = head_grads.b
    return ordered


def loss_and_gradients(
    model: SequenceModel,
    samples: Sequence[WindowSample],
    training: bool = False,
    rng: Optional[Rng] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean squared error over ``samples`` and its gradient for every parameter"""
    X, y = stack_samples(model, samples)
    if len(y) == 0:
        raise DataError("no samples to evaluate the loss on")
    masks = _draw_masks(model, rng or Rng(model.config.seed, stream=1), len(y)) if training else None
    pred, caches, head_cache = _forward(model, X, masks)
    residual = pred - y
    loss = float(np.mean(residual ** 2))
    grads = _backward(model, caches, head_cache, 2.0 * residual / len(y), masks)
    return loss, grads


def train(model: SequenceModel, samples: Sequence[WindowSample]) -> Tuple[SequenceModel, TrainTrace]:
    cfg = model.config
    if not samples:
        raise DataError("cannot train on an empty sample list")
    X, y = stack_samples(model, samples)

    trained = model.copy()
    params = trained.parameters()
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    dropout_rng = Rng(cfg.seed, stream=1)
    losses, norms = [], []
    started = time.perf_counter()

    for epoch in range(cfg.epochs):
        masks = _draw_masks(trained, dropout_rng, len(y))
        pred, caches, head_cache = _forward(trained, X, masks)
        residual = pred - y
        loss = float(np.mean(residual ** 2))
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        grads = _backward(trained, caches, head_cache, 2.0 * residual / len(y), masks)
        norms.append(clip_global_norm(grads, cfg.clip_norm))
        optimizer.step(params, grads)
        losses.append(loss)
        logger.debug("%s epoch %d/%d loss %.6g", cfg.cell_kind.value, epoch + 1, cfg.epochs, loss)

    seconds = time.perf_counter() - started
    logger.info(
        "%s trained on %d samples: loss %.6g -> %.6g in %.2fs",
        cfg.cell_kind.value, len(y), losses[0], losses[-1], seconds,
    )
    return trained, TrainTrace(losses=losses, grad_norms=norms, seconds=seconds)


def predict(model: SequenceModel, samples: Sequence[WindowSample]) -> np.ndarray:
    X, _ = stack_samples(model, samples)
    if X.shape[0] == 0:
        return np.zeros(0)
    pred, _, _ = _forward(model, X, masks=None)
    return pred


class ModelDocument(Document):
    FORMAT: ClassVar[str] = MODEL_FORMAT

    format: str = MODEL_FORMAT
    feature_count: int = Field(ge=1)
    config: ModelConfig
    parameters: List[ArrayEntry]


def model_document(model: SequenceModel) -> ModelDocument:
    return ModelDocument(
        feature_count=model.feature_count,
        config=model.config,
        parameters=encode_arrays(model.parameters()),
    )


def model_from_document(document: ModelDocument) -> SequenceModel:
    skeleton = build_model(document.config, document.feature_count)
    return skeleton.with_parameters(decode_arrays(document.parameters))


def save_model(model: SequenceModel, path: PathLike) -> None:
    write_json(path, model_document(model))


def load_model(path: PathLike) -> SequenceModel:
    document = read_document(path, ModelDocument)
    try:
        return model_from_document(document)
    except ShapeError as exc:
        raise DataError(str(exc), str(path))
