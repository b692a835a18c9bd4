"""
End-to-end experiment: holdout split, per-family CV tuning on the training
rows, refit on the full training partition, train/test metrics and report
artifacts.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from presets.grids import DEFAULT_K_FOLDS, build_grid
from services import artifacts
from services.dataset import DEFAULT_SEED, DEFAULT_TEST_FRACTION, Dataset, train_test_split
from services.errors import ClingressError
from services.metrics import MetricsReport, compute_metrics, format_comparison_table
from services.model import FAMILIES, Model, fit_model, save_model
from services.tuning import CvTable, SearchSpec, grid_search_cv

logger = logging.getLogger(__name__)


class ExperimentConfig(BaseModel):
    """JSON experiment document"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: Optional[int] = None
    test_fraction: float = DEFAULT_TEST_FRACTION
    families: List[str] = list(FAMILIES)
    grids: Dict[str, Dict[str, List[Any]]] = {}
    dataset_path: Optional[str] = None
    k_folds: int = DEFAULT_K_FOLDS
    n_jobs: int = 1

    @field_validator("families")
    @classmethod
    def _known_families(cls, families: List[str]) -> List[str]:
        if not families:
            raise ValueError("families must name at least one estimator family")
        unknown = [f for f in families if f not in FAMILIES]
        if unknown:
            raise ValueError(f"Unknown estimator family: {', '.join(unknown)}")
        return families

    @field_validator("test_fraction")
    @classmethod
    def _fraction(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        return value

    @field_validator("k_folds", "n_jobs")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be positive")
        return value


def load_experiment_config(path) -> ExperimentConfig:
    return ExperimentConfig.model_validate(artifacts.read_json(path))


@dataclass
class FamilyResult:
    family: str
    status: str  # "ok" or "failed"
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    cv_r2: Optional[float] = None
    train: Optional[MetricsReport] = None
    test: Optional[MetricsReport] = None
    error: Optional[str] = None

    @property
    def r2_gap(self) -> Optional[float]:
        if self.train is None or self.test is None:
            return None
        return self.train.r2 - self.test.r2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "status": self.status,
            "hyperparameters": {k: list(v) if isinstance(v, tuple) else v for k, v in self.hyperparameters.items()},
            "cv_r2": self.cv_r2,
            "train": self.train.to_dict() if self.train else None,
            "test": self.test.to_dict() if self.test else None,
            "r2_gap": self.r2_gap,
            "error": self.error,
        }


@dataclass
class ExperimentReport:
    seed: int
    test_fraction: float
    k_folds: int
    fingerprint: Dict[str, Any]
    n_train: int
    n_test: int
    families: Dict[str, FamilyResult] = field(default_factory=dict)
    cv_tables: Dict[str, CvTable] = field(default_factory=dict, repr=False)
    models: Dict[str, Model] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "k_folds": self.k_folds,
            "dataset": self.fingerprint,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "families": {tag: result.to_dict() for tag, result in self.families.items()},
        }


def _run_family(family: str, config: ExperimentConfig, train: Dataset, test: Dataset, seed: int, report: ExperimentReport):
    spec = SearchSpec(family, build_grid(family, config.grids), config.k_folds, seed)
    best, table = grid_search_cv(spec, train, config.n_jobs)
    report.cv_tables[family] = table
    cv_r2 = float(table.scores[table.best_index])
    if cv_r2 == float("-inf"):
        raise ClingressError(f"every grid point failed; first: {table.failures[0]}")

    model = fit_model(family, train, best, seed)
    report.models[family] = model
    return FamilyResult(
        family=family,
        status="ok",
        hyperparameters=dict(model.hyperparameters),
        cv_r2=cv_r2,
        train=compute_metrics(train.targets, model.predict(train)),
        test=compute_metrics(test.targets, model.predict(test)),
    )


def run_experiment(config: ExperimentConfig, d: Dataset, seed: Optional[int] = None,
                   out_dir=None) -> ExperimentReport:
    """
    Tune, refit and evaluate every configured family.

    Test rows are split off first and never reach tuning. A family whose
    tuning or refit fails is recorded as failed and the run continues.

    Args:
        config: Experiment configuration
        d: Full raw dataset
        seed: Overrides config.seed when given
        out_dir: When given, report artifacts are written there

    Returns:
        ExperimentReport with one entry per family in reporting order
    """
    seed = seed if seed is not None else (config.seed if config.seed is not None else DEFAULT_SEED)
    train, test = train_test_split(d, config.test_fraction, seed)
    logger.info(f"Split {len(d)} rows into {len(train)} train / {len(test)} test (seed {seed})")

    report = ExperimentReport(seed, config.test_fraction, config.k_folds, d.fingerprint(), len(train), len(test))
    for family in [f for f in FAMILIES if f in config.families]:
        logger.info(f"Running {family}")
        try:
            report.families[family] = _run_family(family, config, train, test, seed, report)
        except ClingressError as e:
            logger.warning(f"{family} failed: {e}")
            report.families[family] = FamilyResult(family, "failed", error=f"{type(e).__name__}: {e}")

    if out_dir is not None:
        write_report(report, train, test, out_dir)
    return report


def predictions_frame(report: ExperimentReport, train: Dataset, test: Dataset) -> pd.DataFrame:
    """row_id, split, y_true and one prediction column per fitted family"""
    parts = []
    for split, part in (("train", train), ("test", test)):
        frame = pd.DataFrame({"row_id": part.row_ids, "split": split, "y_true": part.targets})
        for family, model in report.models.items():
            frame[f"y_pred_{family}"] = model.predict(part)
        parts.append(frame)
    return pd.concat(parts, ignore_index=True)


def write_report(report: ExperimentReport, train: Dataset, test: Dataset, out_dir) -> List[Path]:
    out = Path(out_dir)
    cv = [table.to_frame() for table in report.cv_tables.values()]
    cv_frame = pd.concat(cv, ignore_index=True) if cv else pd.DataFrame(columns=["family", "grid_point", "fold", "r2"])
    paths = [
        artifacts.write_frame(out / "cv_table.csv", cv_frame),
        artifacts.write_frame(out / "predictions.csv", predictions_frame(report, train, test)),
    ]
    for family, model in report.models.items():
        path = out / "models" / f"{family}.json"
        save_model(model, path)
        paths.append(path)
    # report.json last: its presence marks a complete run
    paths.append(artifacts.write_json(out / "report.json", report.to_dict()))
    return paths


def summary_table(report: ExperimentReport) -> str:
    return format_comparison_table(report, FAMILIES)
