"""``blendcast run | score | eval``

Exit codes: 0 on success, 1 when a pipeline stage or an input file fails,
2 for usage and configuration errors.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from . import __version__
from .errors import BlendcastError, ConfigError, StageError
from .experiment import (
    comparison_table,
    evaluate_predictions,
    read_predictions_csv,
    run_experiment,
)
from .metrics import render_table
from .schemas import ExperimentConfig, ModelName, WindowAssignment
from .sentiment import merge_prices, parse_lexicon, score_headlines_csv, to_dataset_frame, write_dataset_csv

logger = logging.getLogger("blendcast")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _model_list(value: str) -> List[ModelName]:
    try:
        return [ModelName(part.strip()) for part in value.split(",") if part.strip()]
    except ValueError:
        allowed = ", ".join(m.value for m in ModelName)
        raise argparse.ArgumentTypeError(f"expected a comma separated subset of {{{allowed}}}, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blendcast",
        description="Sentiment-aware LSTM/GRU forecasters and their blending ensemble",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="train every selected model and write the comparison")
    run.add_argument("--config", type=Path, required=True, help="experiment JSON document")
    run.add_argument("--seed", type=int, help="reseed: lstm=seed, gru=seed+1, meta-learner=seed+2")
    run.add_argument("--models", type=_model_list, help="comma separated subset of the five models")
    run.add_argument("--out", type=Path, help="output directory")
    run.add_argument("--window", type=int, help="days per input window")
    run.add_argument("--split-mode", choices=[m.value for m in WindowAssignment], help="window assignment")
    run.add_argument("--sequential", action="store_true", help="train the level-0 models one after the other")

    score = commands.add_parser("score", help="score headlines into the six-column dataset CSV")
    score.add_argument("headlines", type=Path, help="date,source,title CSV")
    score.add_argument("lexicon", type=Path, help="token<TAB>valence lexicon")
    score.add_argument("out", type=Path, help="dataset CSV to write")
    score.add_argument("--prices", type=Path, help="date,adj_close CSV; rows follow its trading days")

    evaluate = commands.add_parser("eval", help="recompute metrics from a predictions CSV")
    evaluate.add_argument("predictions", type=Path)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """The JSON document with command-line overrides applied on top"""
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror or exc}")
    try:
        cfg = ExperimentConfig.model_validate_json(text)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        overrides = {
            "models": args.models,
            "output_dir": args.out,
            "window": args.window,
            "assignment": args.split_mode,
            "parallel": False if args.sequential else None,
        }
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return ExperimentConfig.model_validate({**cfg.model_dump(), **overrides})
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(p) for p in error["loc"]) or "config"
        raise ConfigError(field, error["msg"])


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    report = run_experiment(cfg)
    print(comparison_table(report, cfg.external_results or None), end="")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    lexicon = parse_lexicon(args.lexicon)
    compounds = score_headlines_csv(args.headlines, lexicon)
    frame = merge_prices(compounds, args.prices) if args.prices else to_dataset_frame(compounds)
    write_dataset_csv(frame, args.out)
    logger.info("wrote %d rows to %s", len(frame), args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    reports = evaluate_predictions(read_predictions_csv(args.predictions))
    labels = {name: ModelName(name).label if name in ModelName.__members__ else name for name in reports}
    print(render_table({labels[name]: report for name, report in reports.items()}), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "score": cmd_score, "eval": cmd_eval}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_USAGE
    except StageError as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    except BlendcastError as exc:
        logger.error("[%s] %s", args.command, exc)
        return EXIT_FAILED
