# flake8: noqa
__version__ = "0.1.0"

from blendcast.errors import BlendcastError, ConfigError, DataError, ShapeError, StageError, TrainingDivergedError
from blendcast.schemas import CellKind, DataSources, ExperimentConfig, MetaConfig, ModelConfig, ModelName, SplitSpec
from blendcast.dataset import load_csv, make_windows, fit_scaler, scale, unscale
from blendcast.sentiment import compound_score, parse_lexicon, score_headlines_csv
from blendcast.training import build_model, train, predict, load_model, save_model
from blendcast.ensemble import Level0Predictions, blend_fit, blend_predict, average_predict, weighted_average_fit
from blendcast.metrics import evaluate, render_table
from blendcast.experiment import RunReport, emit_plot_data, run_experiment
