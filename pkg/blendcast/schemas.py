from datetime import date
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, conlist, model_validator


class CellKind(str, Enum):
    lstm = "lstm"
    gru = "gru"


class OptimizerKind(str, Enum):
    sgd = "sgd"
    adam = "adam"


class Activation(str, Enum):
    relu = "relu"
    identity = "identity"
    sigmoid = "sigmoid"
    tanh = "tanh"


class WindowAssignment(str, Enum):
    by_target_date = "by_target_date"
    within_split = "within_split"


class ScalerFit(str, Enum):
    train = "train"
    full = "full"


class ModelName(str, Enum):
    lstm = "lstm"
    gru = "gru"
    averaging = "averaging"
    weighted_average = "weighted_average"
    blending = "blending"

    @property
    def label(self) -> str:
        return MODEL_LABELS[self]


MODEL_LABELS = {
    ModelName.lstm: "LSTM",
    ModelName.gru: "GRU",
    ModelName.averaging: "Averaging Ensemble",
    ModelName.weighted_average: "Weighted Average Ensemble",
    ModelName.blending: "Blending Ensemble",
}

LEVEL0_MODELS = (ModelName.lstm, ModelName.gru)
COMBINERS = (ModelName.averaging, ModelName.weighted_average, ModelName.blending)


class ModelConfig(BaseModel):
    "Hyperparameters of one level-0 sequence model"
    model_config = ConfigDict(frozen=True, extra="forbid")

    cell_kind: CellKind = CellKind.lstm
    layers: int = Field(default=4, ge=1, description="Recurrent layers (see head_counts_as_layer)")
    hidden: int = Field(default=50, ge=1, description="Units per recurrent layer")
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0, description="Inverted dropout rate after each layer")
    epochs: int = Field(default=100, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    optimizer: OptimizerKind = OptimizerKind.adam
    seed: int = Field(default=0, ge=0, lt=2**64)
    clip_norm: Optional[float] = Field(default=5.0, gt=0.0, description="Global gradient norm cap, None disables")
    head_counts_as_layer: bool = Field(
        default=False, description="Count the dense head as one of `layers` (layers - 1 recurrent layers)"
    )

    @model_validator(mode="after")
    def _check_layers(self):
        if self.head_counts_as_layer and self.layers < 2:
            raise ValueError("layers must be >= 2 when head_counts_as_layer is set")
        return self

    @property
    def recurrent_layers(self) -> int:
        return self.layers - 1 if self.head_counts_as_layer else self.layers


class MetaConfig(BaseModel):
    "Three-layer ReLU meta-learner trained on level-0 validation predictions"
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden1: int = Field(default=8, ge=1)
    hidden2: int = Field(default=4, ge=1)
    learning_rate: float = Field(default=1e-2, gt=0.0)
    epochs: int = Field(default=500, ge=1)
    seed: int = Field(default=2, ge=0, lt=2**64)
    max_redraws: int = Field(default=32, ge=1, description="Attempts at a live initialization")


class SplitSpec(BaseModel):
    "Inclusive date ranges of the three splits; the defaults cover the S&P 500 backtest of Dec 2017 to Jun 2018"
    model_config = ConfigDict(frozen=True, extra="forbid")

    train_start: date = date(2017, 12, 7)
    train_end: date = date(2018, 4, 9)
    val_start: date = date(2018, 4, 10)
    val_end: date = date(2018, 5, 4)
    test_start: date = date(2018, 5, 7)
    test_end: date = date(2018, 6, 1)

    @model_validator(mode="after")
    def _check_order(self):
        bounds = [
            ("train_start", self.train_start), ("train_end", self.train_end),
            ("val_start", self.val_start), ("val_end", self.val_end),
            ("test_start", self.test_start), ("test_end", self.test_end),
        ]
        for (name_a, a), (name_b, b) in zip(bounds, bounds[1:]):
            strict = name_a.endswith("_end")
            if (strict and not a < b) or (not strict and not a <= b):
                raise ValueError(f"{name_b} ({b}) must not precede {name_a} ({a})")
        return self

    def ranges(self) -> List[Tuple[str, date, date]]:
        return [
            ("train", self.train_start, self.train_end),
            ("val", self.val_start, self.val_end),
            ("test", self.test_start, self.test_end),
        ]

    def locate(self, day: date) -> Optional[str]:
        for name, start, end in self.ranges():
            if start <= day <= end:
                return name
        return None


class DataSources(BaseModel):
    "Either a ready six-column dataset, or headlines + lexicon + prices to score first"
    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset_csv: Optional[Path] = Field(default=None, description="date,wsj,reuters,cnbc,fortune,adj_close")
    headlines_csv: Optional[Path] = Field(default=None, description="date,source,title")
    lexicon: Optional[Path] = Field(default=None, description="token<TAB>valence[<TAB>...]")
    prices_csv: Optional[Path] = Field(default=None, description="date,adj_close")

    @model_validator(mode="after")
    def _check_route(self):
        scored = (self.headlines_csv, self.lexicon, self.prices_csv)
        if self.dataset_csv is None and any(p is None for p in scored):
            raise ValueError("give dataset_csv, or all of headlines_csv, lexicon and prices_csv")
        return self

    def paths(self) -> List[Path]:
        return [p for p in (self.dataset_csv, self.headlines_csv, self.lexicon, self.prices_csv) if p is not None]


def _default_models() -> List[ModelName]:
    return list(ModelName)


class ExperimentConfig(BaseModel):
    "Everything `blendcast run` needs, loaded from one JSON document"
    model_config = ConfigDict(frozen=True, extra="forbid")

    data: DataSources
    split: SplitSpec = Field(default_factory=SplitSpec)
    window: int = Field(default=10, ge=1)
    assignment: WindowAssignment = WindowAssignment.by_target_date
    scaler_fit: ScalerFit = ScalerFit.train
    lstm: ModelConfig = Field(default_factory=lambda: ModelConfig(cell_kind=CellKind.lstm, seed=0))
    gru: ModelConfig = Field(default_factory=lambda: ModelConfig(cell_kind=CellKind.gru, seed=1))
    meta: MetaConfig = Field(default_factory=MetaConfig)
    models: conlist(ModelName, min_length=1) = Field(default_factory=_default_models)
    output_dir: Path = Path("runs/latest")
    parallel: bool = Field(default=True, description="Train the two level-0 models concurrently")
    external_results: Dict[str, Dict[str, float]] = Field(
        default_factory=dict, description="Display-only columns, e.g. {'DP-LSTM': {'mse': 330.97}}"
    )

    @model_validator(mode="after")
    def _check(self):
        if len(set(self.models)) != len(self.models):
            raise ValueError("models must not repeat")
        if self.lstm.cell_kind != CellKind.lstm or self.gru.cell_kind != CellKind.gru:
            raise ValueError("lstm/gru configs must carry their own cell_kind")
        out = self.output_dir.resolve()
        for path in self.data.paths():
            if path.resolve() == out:
                raise ValueError(f"output_dir collides with input {path}")
        return self

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={
            "lstm": self.lstm.model_copy(update={"seed": seed}),
            "gru": self.gru.model_copy(update={"seed": seed + 1}),
            "meta": self.meta.model_copy(update={"seed": seed + 2}),
        })

    def level0_needed(self) -> List[ModelName]:
        if any(m in COMBINERS for m in self.models):
            return list(LEVEL0_MODELS)
        return [m for m in LEVEL0_MODELS if m in self.models]
