"""
Fickian chloride oracle and synthetic dataset generator.

Concentrations follow the constant-surface closed form
C(x, t) = Cs * erfc(x / (2 sqrt(D t))). The mixture -> diffusivity map is
synthetic: its constants encode the qualitative trends (supplementary
binders lower ingress, coarse aggregate raises it) and nothing more.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from presets.synthetic import (
    DEFAULT_DEPTHS_MM,
    DEFAULT_N_MIXTURES,
    DEFAULT_NOISE_FRACTION,
    DEFAULT_TIMES_YR,
    DIFFUSIVITY_CONSTANTS,
    KELVIN_OFFSET,
    MIXTURE_RANGES,
    MM_TO_M,
    YEAR_SECONDS,
)
from services import artifacts
from services.dataset import (
    BINDER_FIELDS,
    DEFAULT_SEED,
    FEATURE_NAMES,
    Dataset,
    FeatureVector,
    feature_index,
    feature_matrix,
    write_dataset,
)
from services.errors import ArgumentError
from services.numerics import erfc

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FickParams:
    """SI units: concentration g/l, D m2/s, depth m, time s"""

    surface_concentration: float
    diffusivity: float
    depth: float
    time: float

    def __post_init__(self):
        if not self.time > 0:
            raise ArgumentError(f"time must be positive, got {self.time!r}")
        if not self.diffusivity > 0:
            raise ArgumentError(f"diffusivity must be positive, got {self.diffusivity!r}")
        if not self.surface_concentration >= 0:
            raise ArgumentError(f"surface concentration must be non-negative, got {self.surface_concentration!r}")
        if not self.depth >= 0:
            raise ArgumentError(f"depth must be non-negative, got {self.depth!r}")


def fick_concentration(p: FickParams) -> float:
    return p.surface_concentration * erfc(p.depth / (2.0 * math.sqrt(p.diffusivity * p.time)))


class DiffusivityConstants(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    d0: float = DIFFUSIVITY_CONSTANTS["d0"]
    k_w: float = DIFFUSIVITY_CONSTANTS["k_w"]
    k_s: float = DIFFUSIVITY_CONSTANTS["k_s"]
    k_c: float = DIFFUSIVITY_CONSTANTS["k_c"]
    activation: float = DIFFUSIVITY_CONSTANTS["activation"]
    reference_wb: float = DIFFUSIVITY_CONSTANTS["reference_wb"]
    reference_temperature: float = DIFFUSIVITY_CONSTANTS["reference_temperature"]
    reference_coarse: float = DIFFUSIVITY_CONSTANTS["reference_coarse"]
    silica_fume_weight: float = DIFFUSIVITY_CONSTANTS["silica_fume_weight"]
    ggbs_weight: float = DIFFUSIVITY_CONSTANTS["ggbs_weight"]
    d_min: float = DIFFUSIVITY_CONSTANTS["d_min"]
    d_max: float = DIFFUSIVITY_CONSTANTS["d_max"]


def _diffusivity(values: np.ndarray, c: DiffusivityConstants) -> float:
    get = lambda name: float(values[feature_index(name)])
    binder = sum(get(name) for name in BINDER_FIELDS)
    if binder <= 0:
        raise ArgumentError("Effective diffusivity needs a positive binder content")
    scm = (get("fly_ash") + c.silica_fume_weight * get("silica_fume") + c.ggbs_weight * get("ggbs")) / binder
    temperature = get("temperature") + KELVIN_OFFSET
    reference = c.reference_temperature + KELVIN_OFFSET
    d = (c.d0
         * math.exp(c.k_w * (get("wb_ratio") - c.reference_wb))
         * math.exp(-c.k_s * scm)
         * math.exp(-c.activation * (1.0 / temperature - 1.0 / reference))
         * (1.0 + c.k_c * (get("coarse_agg") - c.reference_coarse) / c.reference_coarse))
    return min(max(d, c.d_min), c.d_max)


def effective_diffusivity(f: FeatureVector, constants: Optional[DiffusivityConstants] = None) -> float:
    """
    Synthetic diffusivity (m2/s) of a mixture under its exposure temperature.

    Raises:
        ArgumentError: binder (opc + srpc + fly_ash + silica_fume + ggbs) is zero
    """
    return _diffusivity(f.to_array(), constants or DiffusivityConstants())


def _concentration(values: np.ndarray, c: DiffusivityConstants) -> float:
    return fick_concentration(FickParams(
        surface_concentration=float(values[feature_index("surface_chloride")]),
        diffusivity=_diffusivity(values, c),
        depth=float(values[feature_index("depth")]) * MM_TO_M,
        time=float(values[feature_index("exposure_time")]) * YEAR_SECONDS,
    ))


class FickOracle:
    """Ground-truth predictor with the same predict(rows) contract as a Model"""

    family = "FICK"
    hyperparameters: Dict[str, Any] = {}

    def __init__(self, constants: Optional[DiffusivityConstants] = None):
        self.constants = constants or DiffusivityConstants()

    def predict(self, rows) -> np.ndarray:
        return np.array([_concentration(row, self.constants) for row in feature_matrix(rows)])


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_mixtures: int = DEFAULT_N_MIXTURES
    depths_mm: Tuple[float, ...] = DEFAULT_DEPTHS_MM
    times_yr: Tuple[float, ...] = DEFAULT_TIMES_YR
    noise_std: Optional[float] = None  # target units; None = 5% of the mean target
    seed: Optional[int] = None
    ranges: Dict[str, Tuple[float, float]] = dict(MIXTURE_RANGES)
    constants: DiffusivityConstants = DiffusivityConstants()

    @field_validator("n_mixtures")
    @classmethod
    def _positive_count(cls, value: int) -> int:
        if value < 1:
            raise ValueError("n_mixtures must be positive")
        return value

    @field_validator("depths_mm", "times_yr")
    @classmethod
    def _grid(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if not values:
            raise ValueError("grid must not be empty")
        return values

    @field_validator("times_yr")
    @classmethod
    def _positive_times(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(t <= 0 for t in values):
            raise ValueError("exposure times must be positive")
        return values

    @field_validator("depths_mm")
    @classmethod
    def _nonnegative_depths(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(x < 0 for x in values):
            raise ValueError("depths must be non-negative")
        return values

    @field_validator("noise_std")
    @classmethod
    def _noise(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < 0:
            raise ValueError("noise_std must be non-negative")
        return value

    @field_validator("ranges")
    @classmethod
    def _ranges(cls, ranges: Dict[str, Tuple[float, float]]) -> Dict[str, Tuple[float, float]]:
        missing = sorted(set(MIXTURE_RANGES) - set(ranges))
        if missing:
            raise ValueError(f"ranges missing: {', '.join(missing)}")
        for name, (lo, hi) in ranges.items():
            if lo > hi or lo < 0:
                raise ValueError(f"invalid range for {name}: ({lo}, {hi})")
        return ranges


# Sampling order of the per-mixture draws
SAMPLED_FIELDS = tuple(MIXTURE_RANGES)


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    noise_std: float
    seed: int


def synthesize(c: SynthConfig, seed: Optional[int] = None) -> SynthResult:
    """
    Sample mixtures uniformly, evaluate the oracle on the depth x time grid
    and add Gaussian noise.

    Rows are ordered by (mixture, depth, time). w/b is water over binder.
    """
    seed = seed if seed is not None else (c.seed if c.seed is not None else DEFAULT_SEED)
    rng = np.random.default_rng(seed)
    lows = np.array([c.ranges[name][0] for name in SAMPLED_FIELDS])
    highs = np.array([c.ranges[name][1] for name in SAMPLED_FIELDS])
    draws = rng.uniform(lows, highs, size=(c.n_mixtures, len(SAMPLED_FIELDS)))

    rows: List[np.ndarray] = []
    for draw in draws:
        sample = dict(zip(SAMPLED_FIELDS, draw.tolist()))
        binder = sum(sample[name] for name in BINDER_FIELDS)
        sample["wb_ratio"] = sample["water"] / binder
        for depth in c.depths_mm:
            for t in c.times_yr:
                sample["depth"] = float(depth)
                sample["exposure_time"] = float(t)
                rows.append(np.array([sample[name] for name in FEATURE_NAMES]))

    x = np.vstack(rows)
    clean = np.array([_concentration(row, c.constants) for row in x])
    noise_std = DEFAULT_NOISE_FRACTION * float(np.mean(clean)) if c.noise_std is None else float(c.noise_std)
    y = clean + rng.normal(0.0, noise_std, size=clean.shape[0]) if noise_std > 0 else clean
    d = Dataset(x, y)
    d.validate()
    logger.info(f"Generated {len(d)} synthetic rows from {c.n_mixtures} mixtures (seed {seed}, noise {noise_std:.4g})")
    return SynthResult(d, noise_std, seed)


def generate_dataset(c: SynthConfig, seed: Optional[int] = None) -> Dataset:
    return synthesize(c, seed).dataset


def synth_meta(c: SynthConfig, result: SynthResult) -> Dict[str, Any]:
    doc = c.model_dump(mode="json")
    doc["seed"] = result.seed
    doc["noise_std"] = result.noise_std
    doc["rows"] = len(result.dataset)
    doc["units"] = {"year_seconds": YEAR_SECONDS, "mm_to_m": MM_TO_M}
    return doc


def write_synthetic(c: SynthConfig, result: SynthResult, out_dir) -> List[Path]:
    out = Path(out_dir)
    csv_path = out / "synthetic.csv"
    write_dataset(result.dataset, csv_path)
    return [csv_path, artifacts.write_json(out / "synth_meta.json", synth_meta(c, result))]
