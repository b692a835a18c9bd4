"""
Command-line entry point.

    python cli.py [--seed N] [--config FILE] [--out-dir DIR] <command> ...

Commands: synth, tune, train, eval, sweep, report. Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical or convergence failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from presets.grids import build_grid
from presets.reference_mixture import DEFAULT_N_LEVELS, DEFAULT_N_TIMES, SWEEP_FEATURES, build_time_grid
from services import artifacts
from services.dataset import DEFAULT_SEED, Dataset, load_dataset, load_schema, train_test_split
from services.errors import ArgumentError, ClingressError
from services.experiment import ExperimentConfig, load_experiment_config, run_experiment, summary_table
from services.metrics import compute_metrics
from services.model import FAMILIES, RECURRENT_FAMILIES, fit_model, load_model, save_model
from services.sensitivity import baseline_scenario, full_horizon, sweep, write_sweeps
from services.synth import FickOracle, SynthConfig, synthesize, write_synthetic
from services.tuning import SearchSpec, grid_search_cv

logger = logging.getLogger(__name__)

SEED_ENV = "CLINGRESS_SEED"


@dataclass
class CommandOutcome:
    exit_code: int = 0
    artifacts: List[Path] = field(default_factory=list)
    summary: List[str] = field(default_factory=list)


class ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so run() can map the failure to exit code 1"""

    def error(self, message):
        raise ArgumentError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="clingress", description="Chloride ingress regression toolkit")
    parser.add_argument("--seed", type=int, help=f"random seed (default: config, then ${SEED_ENV}, then 42)")
    parser.add_argument("--config", type=Path, help="JSON configuration document")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="directory for artifacts")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    synth = commands.add_parser("synth", help="generate a synthetic Fickian dataset")
    synth.add_argument("--n-mixtures", type=int)
    synth.add_argument("--noise-std", type=float)

    def data_args(p, required=True):
        p.add_argument("--data", type=Path, required=required, help="dataset CSV")
        p.add_argument("--schema", type=Path, help="JSON column_map for non-canonical headers")

    tune = commands.add_parser("tune", help="cross-validated grid search per family")
    data_args(tune)
    tune.add_argument("--family", action="append", choices=FAMILIES)
    tune.add_argument("--folds", type=int)
    tune.add_argument("--n-jobs", type=int)

    train = commands.add_parser("train", help="fit one family and save the model")
    data_args(train)
    train.add_argument("--family", required=True, choices=FAMILIES)
    train.add_argument("--tuning", type=Path, help="tuning.json from the tune command")
    train.add_argument("--all-rows", action="store_true", help="fit on every row instead of the train split")
    train.add_argument("--model-out", type=Path)

    evaluate = commands.add_parser("eval", help="metrics of a saved model on a dataset")
    evaluate.add_argument("--model", type=Path, required=True)
    data_args(evaluate)

    sweep_cmd = commands.add_parser("sweep", help="one-at-a-time sensitivity sweeps")
    sweep_cmd.add_argument("--model", type=Path, nargs="*", default=[])
    sweep_cmd.add_argument("--oracle", action="store_true", help="also sweep the synthetic Fick oracle")
    data_args(sweep_cmd)
    sweep_cmd.add_argument("--feature", action="append")
    sweep_cmd.add_argument("--n-levels", type=int, default=DEFAULT_N_LEVELS)
    sweep_cmd.add_argument("--n-times", type=int, default=DEFAULT_N_TIMES)
    sweep_cmd.add_argument("--couple-wb", action="store_true")
    sweep_cmd.add_argument("--full-horizon", action="store_true")
    sweep_cmd.add_argument("--include-gru", action="store_true")

    report = commands.add_parser("report", help="full experiment with the comparison table")
    data_args(report, required=False)
    return parser


def resolve_seed(flag: Optional[int], config_seed: Optional[int] = None) -> int:
    """--seed, then the config document, then $CLINGRESS_SEED, then 42"""
    if flag is not None:
        return flag
    if config_seed is not None:
        return config_seed
    env = os.getenv(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ArgumentError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _experiment_config(args) -> ExperimentConfig:
    return load_experiment_config(args.config) if args.config else ExperimentConfig()


def _load_data(args, fallback: Optional[str] = None) -> Dataset:
    path = args.data or fallback
    if path is None:
        raise ArgumentError("no dataset given (--data or dataset_path in the config)")
    schema = load_schema(args.schema) if getattr(args, "schema", None) else None
    return load_dataset(path, schema)


def cmd_synth(args, outcome: CommandOutcome) -> None:
    doc = artifacts.read_json(args.config) if args.config else {}
    overrides = {k: v for k, v in (("n_mixtures", args.n_mixtures), ("noise_std", args.noise_std)) if v is not None}
    config = SynthConfig.model_validate({**doc, **overrides})
    result = synthesize(config, resolve_seed(args.seed, config.seed))
    outcome.artifacts += write_synthetic(config, result, args.out_dir)
    outcome.summary.append(f"{len(result.dataset)} rows, noise std {result.noise_std:.4g}, seed {result.seed}")


def cmd_tune(args, outcome: CommandOutcome) -> None:
    config = _experiment_config(args)
    seed = resolve_seed(args.seed, config.seed)
    d = _load_data(args, config.dataset_path)
    train, _ = train_test_split(d, config.test_fraction, seed)
    k = args.folds or config.k_folds
    n_jobs = args.n_jobs or config.n_jobs

    tuning, frames = {}, []
    for family in args.family or config.families:
        best, table = grid_search_cv(SearchSpec(family, build_grid(family, config.grids), k, seed), train, n_jobs)
        score = float(table.scores[table.best_index])
        tuning[family] = {
            "best": {name: list(v) if isinstance(v, tuple) else v for name, v in best.items()},
            "cv_r2": score if score != float("-inf") else None,
            "failed_points": sum(f is not None for f in table.failures),
        }
        frames.append(table.to_frame())
        outcome.summary.append(f"{family}: {best or 'defaults'} (mean CV R2 {score:.4f})")

    outcome.artifacts.append(artifacts.write_frame(args.out_dir / "cv_table.csv", pd.concat(frames, ignore_index=True)))
    outcome.artifacts.append(artifacts.write_json(args.out_dir / "tuning.json", {"seed": seed, "k_folds": k, "families": tuning}))


def cmd_train(args, outcome: CommandOutcome) -> None:
    config = _experiment_config(args)
    seed = resolve_seed(args.seed, config.seed)
    d = _load_data(args, config.dataset_path)
    train = d if args.all_rows else train_test_split(d, config.test_fraction, seed)[0]
    hyperparameters = {}
    if args.tuning:
        doc = artifacts.read_json(args.tuning)
        entry = doc.get("families", {}).get(args.family)
        if entry is None:
            raise ArgumentError(f"{args.tuning} has no entry for {args.family}")
        hyperparameters = entry["best"]
    model = fit_model(args.family, train, hyperparameters, seed)
    path = args.model_out or args.out_dir / f"{args.family}.json"
    save_model(model, path)
    outcome.artifacts.append(path)
    outcome.summary.append(f"{args.family} fitted on {len(train)} rows -> {path}")


def cmd_eval(args, outcome: CommandOutcome) -> None:
    model = load_model(args.model)
    d = _load_data(args)
    metrics = compute_metrics(d.targets, model.predict(d))
    doc = {"family": model.family, "model": str(args.model), "data": str(args.data), "metrics": metrics.to_dict()}
    outcome.artifacts.append(artifacts.write_json(args.out_dir / "metrics.json", doc))
    outcome.summary.append(
        f"{model.family}: R2 {metrics.r2:.4f}  MAE {metrics.mae:.4g}  RMSE {metrics.rmse:.4g}  MAPE {metrics.mape:.2f}%"
    )


def cmd_sweep(args, outcome: CommandOutcome) -> None:
    d = _load_data(args)
    predictors = [load_model(path) for path in args.model]
    if args.oracle:
        predictors.append(FickOracle())
    if not predictors:
        raise ArgumentError("sweep needs --model and/or --oracle")
    baseline = baseline_scenario(build_time_grid(n_times=args.n_times))
    if args.full_horizon:
        baseline = full_horizon(baseline, d)

    for predictor in predictors:
        if predictor.family in RECURRENT_FAMILIES and not args.include_gru:
            logger.warning(f"Skipping {predictor.family} model (use --include-gru to sweep it)")
            continue
        surfaces = [sweep(predictor, baseline, feature, args.n_levels, d, args.couple_wb)
                    for feature in args.feature or SWEEP_FEATURES]
        outcome.artifacts += write_sweeps(surfaces, args.out_dir / predictor.family, predictor.hyperparameters)
        outcome.summary.append(f"{predictor.family}: swept {len(surfaces)} features")


def cmd_report(args, outcome: CommandOutcome) -> None:
    config = _experiment_config(args)
    d = _load_data(args, config.dataset_path)
    report = run_experiment(config, d, resolve_seed(args.seed, config.seed), args.out_dir)
    outcome.artifacts.append(args.out_dir / "report.json")
    outcome.summary.append(summary_table(report))


COMMANDS = {
    "synth": cmd_synth,
    "tune": cmd_tune,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _configure_logging(args) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def run(argv: Sequence[str]) -> CommandOutcome:
    """Parse argv, dispatch one command and map failures onto exit codes"""
    load_dotenv()
    try:
        args = build_parser().parse_args(list(argv))
    except ArgumentError as e:
        print(e, file=sys.stderr)
        return CommandOutcome(exit_code=1)
    except SystemExit as e:  # --help
        return CommandOutcome(exit_code=int(e.code or 0))

    _configure_logging(args)
    outcome = CommandOutcome()
    try:
        COMMANDS[args.command](args, outcome)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        outcome.exit_code = 1
    except ClingressError as e:
        logger.error(f"{type(e).__name__}: {e}")
        outcome.exit_code = e.exit_code
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read input: {e}")
        outcome.exit_code = 2
    for line in outcome.summary:
        print(line)
    return outcome


def main() -> None:
    sys.exit(run(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
