"""
One-at-a-time sensitivity sweeps around a reference mixture.

A sweep holds the baseline fixed, moves a single feature over its observed
range and records the predicted chloride-vs-time curve at the evaluation
depth for every level. Anything with a ``family`` tag and a
``predict(rows)`` method can be swept: fitted models and the Fick oracle alike.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from presets.reference_mixture import REFERENCE_DEPTH_MM, build_reference_features, build_time_grid
from services import artifacts
from services.dataset import (
    BINDER_FIELDS,
    TARGET_COLUMN,
    Dataset,
    FeatureVector,
    feature_index,
)
from services.errors import ArgumentError

logger = logging.getLogger(__name__)

# Features that may not be swept: the time axis belongs to the curve itself
UNSWEEPABLE = ("exposure_time",)
WB_INPUTS = ("water",) + BINDER_FIELDS


@dataclass(frozen=True)
class BaselineScenario:
    features: FeatureVector
    depth: float = REFERENCE_DEPTH_MM
    times: Tuple[float, ...] = field(default_factory=build_time_grid)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if not self.depth >= 0:
            raise ArgumentError(f"depth must be non-negative, got {self.depth!r}")
        if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ArgumentError("time grid must be positive and strictly increasing")


def baseline_scenario(times: Optional[Sequence[float]] = None) -> BaselineScenario:
    """The reference mixture at 10 mm over the default 1.3-year grid"""
    features = FeatureVector(**build_reference_features())
    return BaselineScenario(features, REFERENCE_DEPTH_MM, tuple(times) if times is not None else build_time_grid())


def full_horizon(b: BaselineScenario, d: Dataset) -> BaselineScenario:
    """Same baseline with the time grid stretched to the longest exposure in d"""
    horizon = float(np.max(d.column("exposure_time")))
    return BaselineScenario(b.features, b.depth, build_time_grid(horizon, len(b.times)))


def feature_range(d: Dataset, feature: str) -> Tuple[float, float]:
    column = d.features[:, feature_index(feature)]
    return float(column.min()), float(column.max())


@dataclass(frozen=True)
class SweepSurface:
    feature: str
    levels: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (n_levels, n_times)
    family: str
    depth: float
    feature_range: Tuple[float, float]
    degenerate: bool = False
    couple_wb: bool = False

    def __post_init__(self):
        if self.values.shape != (self.levels.shape[0], self.times.shape[0]):
            raise ArgumentError(f"values shape {self.values.shape} does not match levels x times")

    def to_frame(self) -> pd.DataFrame:
        """Level-major rows: feature, level, time_yr, depth_mm, prediction"""
        n_levels, n_times = self.values.shape
        depth = self.levels if self.feature == "depth" else np.full(n_levels, self.depth)
        return pd.DataFrame({
            "feature": self.feature,
            "level": np.repeat(self.levels, n_times),
            "time_yr": np.tile(self.times, n_levels),
            "depth_mm": np.repeat(depth, n_times),
            "prediction": self.values.reshape(-1),
        })


def _scenario_rows(base: np.ndarray, times: Sequence[float]) -> np.ndarray:
    rows = np.repeat(base.reshape(1, -1), len(times), axis=0)
    rows[:, feature_index("exposure_time")] = times
    return rows


def temporal_curve(m, f: FeatureVector, depth: float, times: Sequence[float]) -> np.ndarray:
    """Predictions along the time grid with depth and every other input fixed"""
    base = f.to_array()
    base[feature_index("depth")] = depth
    return np.asarray(m.predict(_scenario_rows(base, times)), dtype=np.float64)


def _couple(base: np.ndarray) -> None:
    binder = sum(base[feature_index(n)] for n in BINDER_FIELDS)
    if binder <= 0:
        raise ArgumentError("Cannot recompute w/b: binder is zero")
    base[feature_index("wb_ratio")] = base[feature_index("water")] / binder


def sweep(m, b: BaselineScenario, feature: str, n_levels: int, d: Dataset,
          couple_wb: bool = False) -> SweepSurface:
    """
    Vary one feature over its observed range in d.

    Every cell copies the baseline, sets the swept feature to the level and
    exposure_time to the grid time; nothing else changes unless
    ``couple_wb`` asks for w/b to follow water and binder sweeps.

    Raises:
        ArgumentError: the target, exposure_time or an unknown name is swept
    """
    if feature == TARGET_COLUMN or feature in UNSWEEPABLE:
        raise ArgumentError(f"'{feature}' cannot be swept")
    col = feature_index(feature)
    lo, hi = feature_range(d, feature)
    degenerate = lo == hi
    if not degenerate and n_levels < 2:
        raise ArgumentError(f"n_levels must be at least 2, got {n_levels}")
    levels = np.full(max(n_levels, 1), lo) if degenerate else np.linspace(lo, hi, n_levels)
    if degenerate:
        logger.warning(f"'{feature}' is constant ({lo}) in the dataset; sweep levels are identical")

    start = b.features.to_array()
    start[feature_index("depth")] = b.depth
    values = np.empty((levels.shape[0], len(b.times)))
    for i, level in enumerate(levels):
        base = start.copy()
        base[col] = level
        if couple_wb and feature in WB_INPUTS:
            _couple(base)
        values[i] = np.asarray(m.predict(_scenario_rows(base, b.times)), dtype=np.float64)

    return SweepSurface(feature, levels, np.asarray(b.times), values, m.family, b.depth, (lo, hi), degenerate, couple_wb)


def classify_trend(surface: SweepSurface) -> Dict[str, Any]:
    """
    Direction of the level -> prediction relation.

    Per time point: "direct" when predictions strictly increase with level,
    "inverse" when they strictly decrease, else "mixed". Overall: the shared
    label when all times agree, "alternating" when both directions occur,
    "mixed" otherwise and "flat" for a degenerate range.
    """
    if surface.degenerate:
        return {"per_time": ["flat"] * surface.times.shape[0], "overall": "flat"}
    steps = np.diff(surface.values, axis=0)
    per_time = []
    for j in range(steps.shape[1]):
        if np.all(steps[:, j] > 0):
            per_time.append("direct")
        elif np.all(steps[:, j] < 0):
            per_time.append("inverse")
        else:
            per_time.append("mixed")
    labels = set(per_time)
    if len(labels) == 1:
        overall = per_time[0]
    elif {"direct", "inverse"} <= labels:
        overall = "alternating"
    else:
        overall = "mixed"
    return {"per_time": per_time, "overall": overall}


def sweep_meta(surface: SweepSurface, hyperparameters: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    return {
        "family": surface.family,
        "feature": surface.feature,
        "hyperparameters": {k: list(v) if isinstance(v, tuple) else v for k, v in (hyperparameters or {}).items()},
        "feature_range": list(surface.feature_range),
        "n_levels": int(surface.levels.shape[0]),
        "n_times": int(surface.times.shape[0]),
        "depth_mm": surface.depth,
        "flags": {"couple_wb": surface.couple_wb, "degenerate_range": surface.degenerate},
        "trend": classify_trend(surface),
    }


def write_sweeps(surfaces: Sequence[SweepSurface], out_dir, hyperparameters=None) -> List[Path]:
    """sweep.csv (all features, level-major) and sweep_meta.json keyed by feature"""
    out = Path(out_dir)
    frame = pd.concat([s.to_frame() for s in surfaces], ignore_index=True)
    meta = {s.feature: sweep_meta(s, hyperparameters) for s in surfaces}
    return [
        artifacts.write_frame(out / "sweep.csv", frame),
        artifacts.write_json(out / "sweep_meta.json", meta),
    ]
