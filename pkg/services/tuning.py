"""
Cross-validated grid search.

Every grid point is scored by its mean validation R2 over k folds. The
standardizer is refit inside each fold on that fold's training rows only.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from presets.grids import DEFAULT_K_FOLDS
from services.dataset import DEFAULT_SEED, Dataset, FoldPlan, kfold
from services.errors import ArgumentError, ClingressError
from services.metrics import r2_score
from services.model import EstimatorFactory, Model, fit_model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpec:
    family: str
    grid: Mapping[str, Sequence[Any]] = field(default_factory=dict)
    k: int = DEFAULT_K_FOLDS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        allowed = EstimatorFactory.estimator_class(self.family).hyperparameter_names()
        grid = {}
        for name, values in self.grid.items():
            if name not in allowed:
                raise ArgumentError(f"'{name}' is not a hyperparameter of {self.family}")
            values = [tuple(v) if isinstance(v, list) else v for v in values]
            if not values:
                raise ArgumentError(f"Grid for '{name}' has no values")
            grid[name] = tuple(values)
        object.__setattr__(self, "grid", grid)
        if self.k < 2:
            raise ArgumentError(f"k must be at least 2, got {self.k}")

    def points(self) -> List[Dict[str, Any]]:
        """Grid points in enumeration order (last name varies fastest)"""
        names = list(self.grid)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.grid[n] for n in names))]


@dataclass(frozen=True)
class CvTable:
    """Per-fold validation R2 of every grid point"""

    family: str
    points: Tuple[Dict[str, Any], ...]
    fold_scores: np.ndarray  # (n_points, k); NaN where the fold failed
    failures: Tuple[Optional[str], ...]

    @property
    def scores(self) -> np.ndarray:
        """Mean validation R2 per point; -inf for points with a failed fold"""
        out = np.full(len(self.points), -np.inf)
        for i, failure in enumerate(self.failures):
            if failure is None:
                out[i] = float(np.mean(self.fold_scores[i]))
        return out

    @property
    def best_index(self) -> int:
        # argmax returns the first maximum: ties go to the earliest point
        return int(np.argmax(self.scores))

    def to_frame(self) -> pd.DataFrame:
        records = []
        for i, point in enumerate(self.points):
            label = ";".join(f"{k}={v}" for k, v in point.items()) or "default"
            for fold, r2 in enumerate(self.fold_scores[i]):
                records.append({"family": self.family, "grid_point": label, "fold": fold, "r2": r2})
        return pd.DataFrame.from_records(records, columns=["family", "grid_point", "fold", "r2"])


def fit_fold(family: str, point: Mapping[str, Any], train: Dataset, plan: FoldPlan, fold: int,
             seed: int = DEFAULT_SEED) -> Tuple[Model, np.ndarray]:
    """Fit on the fold's training rows only; return the model and validation indices"""
    train_idx, val_idx = plan.split(fold)
    return fit_model(family, train.subset(train_idx), point, seed), val_idx


def score_fold(family: str, point: Mapping[str, Any], train: Dataset, plan: FoldPlan, fold: int,
               seed: int = DEFAULT_SEED) -> float:
    model, val_idx = fit_fold(family, point, train, plan, fold, seed)
    validation = train.subset(val_idx)
    return r2_score(validation.targets, model.predict(validation))


def grid_search_cv(spec: SearchSpec, train: Dataset, n_jobs: int = 1) -> Tuple[Dict[str, Any], CvTable]:
    """
    Exhaustive k-fold search over spec.grid.

    A point with any failing fold scores -inf and is logged; the search itself
    only fails on invalid input. Fold fits may run on ``n_jobs`` threads;
    results are assembled in (point, fold) order regardless.

    Returns:
        (best hyperparameters, full CV table)
    """
    if len(train) < spec.k:
        raise ArgumentError(f"Need at least k={spec.k} training rows, got {len(train)}")
    plan = kfold(len(train), spec.k, spec.seed)
    points = spec.points()
    tasks = [(i, fold) for i in range(len(points)) for fold in range(spec.k)]

    def run(task):
        i, fold = task
        try:
            return score_fold(spec.family, points[i], train, plan, fold, spec.seed), None
        except ClingressError as e:
            return np.nan, f"fold {fold}: {type(e).__name__}: {e}"

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    fold_scores = np.full((len(points), spec.k), np.nan)
    failures: List[Optional[str]] = [None] * len(points)
    for (i, fold), (score, error) in zip(tasks, results):
        fold_scores[i, fold] = score
        if error and failures[i] is None:
            failures[i] = error
            logger.warning(f"{spec.family} grid point {points[i]} failed ({error}); scored -inf")

    table = CvTable(spec.family, tuple(points), fold_scores, tuple(failures))
    best = points[table.best_index]
    logger.info(f"{spec.family}: best {best or 'defaults'} with mean CV R2 {table.scores[table.best_index]:.4f}")
    return best, table
