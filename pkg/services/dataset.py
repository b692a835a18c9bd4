"""
Dataset schema, ingestion, splitting, standardization, folds and
sequence grouping.

Features are held as an ``n x 14`` float64 matrix whose column order is the
field order of :class:`FeatureVector`. Units are taken as-is from the source:
no conversion or imputation happens here. Standard deviations use the
population convention (divide by n).
"""

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from services import artifacts
from services.errors import (
    ArgumentError,
    DataParseError,
    DegenerateColumnError,
    EmptyDatasetError,
    InvalidFeatureError,
    SchemaError,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
DEFAULT_TEST_FRACTION = 0.25
MAX_WB_RATIO = 2.0

# Canonical CSV header for every FeatureVector field, in field order.
CSV_COLUMNS = {
    "surface_chloride": "surface_chloride_g_l",
    "exposure_time": "exposure_time_yr",
    "temperature": "temperature_c",
    "depth": "depth_mm",
    "water": "water_kg_m3",
    "srpc": "srpc_kg_m3",
    "opc": "opc_kg_m3",
    "wb_ratio": "wb_ratio",
    "fly_ash": "fly_ash_kg_m3",
    "silica_fume": "silica_fume_kg_m3",
    "ggbs": "ggbs_kg_m3",
    "superplasticizer": "superplasticizer_kg_m3",
    "fine_agg": "fine_agg_kg_m3",
    "coarse_agg": "coarse_agg_kg_m3",
}
TARGET_COLUMN = "chloride_content"

MIXTURE_FIELDS = (
    "water", "srpc", "opc", "wb_ratio", "fly_ash", "silica_fume",
    "ggbs", "superplasticizer", "fine_agg", "coarse_agg",
)
BINDER_FIELDS = ("opc", "srpc", "fly_ash", "silica_fume", "ggbs")
# Rows sharing these values belong to one exposure history.
SEQUENCE_KEY = MIXTURE_FIELDS + ("surface_chloride", "temperature")


@dataclass(frozen=True)
class FeatureVector:
    """One specimen/exposure record: 4 environmental/spatial + 10 mixture inputs"""

    surface_chloride: float  # g/l
    exposure_time: float     # years
    temperature: float       # degrees Celsius
    depth: float             # mm
    water: float             # kg/m3
    srpc: float
    opc: float
    wb_ratio: float          # dimensionless
    fly_ash: float
    silica_fume: float
    ggbs: float
    superplasticizer: float
    fine_agg: float
    coarse_agg: float

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        validate_feature_values(self.to_array())

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in FEATURE_NAMES}

    def with_values(self, **changes: float) -> "FeatureVector":
        return replace(self, **changes)

    @property
    def binder(self) -> float:
        return sum(getattr(self, name) for name in BINDER_FIELDS)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != len(FEATURE_NAMES):
            raise ArgumentError(f"Expected {len(FEATURE_NAMES)} features, got {len(values)}")
        return cls(**dict(zip(FEATURE_NAMES, (float(v) for v in values))))


FEATURE_NAMES: Tuple[str, ...] = tuple(f.name for f in fields(FeatureVector))
N_FEATURES = len(FEATURE_NAMES)


def feature_index(name: str) -> int:
    """Column index of a feature id; raises ArgumentError for anything else"""
    try:
        return FEATURE_NAMES.index(name)
    except ValueError:
        raise ArgumentError(f"Unknown feature '{name}'") from None


def validate_feature_values(values: np.ndarray, row: Optional[int] = None) -> None:
    """Check the physical-range invariants of one feature row"""
    for name, value in zip(FEATURE_NAMES, values):
        if not math.isfinite(value):
            raise InvalidFeatureError(name, value, "must be finite", row)
        if value < 0:
            raise InvalidFeatureError(name, value, "must be non-negative", row)
    wb = values[FEATURE_NAMES.index("wb_ratio")]
    if not 0 < wb <= MAX_WB_RATIO:
        raise InvalidFeatureError("wb_ratio", wb, f"must lie in (0, {MAX_WB_RATIO}]", row)
    t = values[FEATURE_NAMES.index("exposure_time")]
    if t <= 0:
        raise InvalidFeatureError("exposure_time", t, "must be positive", row)


def feature_matrix(rows) -> np.ndarray:
    """
    Coerce FeatureVectors, a Dataset or an n x 14 array into a float matrix.

    Raises:
        ArgumentError: wrong width or a non-finite entry
    """
    if isinstance(rows, Dataset):
        return rows.features
    if isinstance(rows, FeatureVector):
        rows = [rows]
    if isinstance(rows, (list, tuple)) and rows and isinstance(rows[0], FeatureVector):
        x = np.array([r.to_array() for r in rows])
    else:
        x = np.asarray(rows, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != N_FEATURES:
        raise ArgumentError(f"Expected rows of {N_FEATURES} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("Feature rows contain non-finite values")
    return x


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Rows of (features, target) with fixed column metadata; immutable"""

    features: np.ndarray
    targets: np.ndarray
    feature_names: Tuple[str, ...] = FEATURE_NAMES
    target_name: str = TARGET_COLUMN
    row_ids: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        x = _frozen(self.features)
        y = _frozen(self.targets).reshape(-1)
        if x.ndim != 2 or x.shape[0] == 0:
            raise EmptyDatasetError("Dataset has no rows")
        if tuple(self.feature_names) != FEATURE_NAMES or x.shape[1] != N_FEATURES:
            raise ArgumentError(f"Dataset must carry exactly the {N_FEATURES} canonical features")
        if y.shape[0] != x.shape[0]:
            raise ArgumentError(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ArgumentError("Dataset contains non-finite values")
        ids = np.arange(x.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        ids = ids.copy()
        ids.flags.writeable = False
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "row_ids", ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    def rows(self) -> Iterator[Tuple[FeatureVector, float]]:
        for x, y in zip(self.features, self.targets):
            yield FeatureVector.from_array(x), float(y)

    def column(self, name: str) -> np.ndarray:
        if name == self.target_name:
            return self.targets
        return self.features[:, feature_index(name)]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.targets[idx], self.feature_names, self.target_name, self.row_ids[idx])

    def validate(self) -> None:
        """Check every row against the FeatureVector invariants"""
        for i, values in enumerate(self.features):
            validate_feature_values(values, row=int(self.row_ids[i]))

    def fingerprint(self) -> dict:
        return {
            "rows": len(self),
            "column_means": {name: float(v) for name, v in zip(self.feature_names, self.features.mean(axis=0))},
            "target_mean": float(self.targets.mean()),
        }

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=[CSV_COLUMNS[n] for n in self.feature_names])
        frame[TARGET_COLUMN] = self.targets
        return frame

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], targets: Sequence[float]) -> "Dataset":
        return cls(np.array([v.to_array() for v in vectors]), np.asarray(targets, dtype=np.float64))


class SchemaConfig(BaseModel):
    """Renames external CSV headers onto the canonical set"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    column_map: Dict[str, str] = {}


SchemaLike = Union[SchemaConfig, Mapping[str, str], None]


def load_schema(path) -> SchemaConfig:
    return SchemaConfig.model_validate(artifacts.read_json(path))


def load_dataset(path, schema: SchemaLike = None) -> Dataset:
    """
    Read a canonical-schema CSV into a Dataset.

    Args:
        path: CSV file (UTF-8, comma separated, '.' decimal point)
        schema: Optional mapping from external header to canonical header

    Returns:
        Dataset with rows in file order

    Raises:
        SchemaError: a required column is missing (names the feature)
        DataParseError: a cell is not a finite number (1-based file line)
        EmptyDatasetError: the file has no data rows
    """
    column_map = dict(schema.column_map if isinstance(schema, SchemaConfig) else (schema or {}))
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError(f"{path} is empty") from None
    raw = raw.rename(columns=lambda c: column_map.get(c.strip(), c.strip()))
    if raw.empty:
        raise EmptyDatasetError(f"{path} has a header but no rows")

    required = list(CSV_COLUMNS.items()) + [(TARGET_COLUMN, TARGET_COLUMN)]
    for name, column in required:
        if column not in raw.columns:
            raise SchemaError(name, column)

    columns = [column for _, column in required]
    parsed = raw[columns].apply(lambda s: pd.to_numeric(s.str.strip(), errors="coerce"))
    values = parsed.to_numpy(dtype=np.float64)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = bad[0]
        name, column = required[c]
        # +2: header line, 1-based numbering
        raise DataParseError(row=int(r) + 2, column=column, field=name, value=raw[column].iloc[r])

    d = Dataset(values[:, :N_FEATURES], values[:, N_FEATURES])
    d.validate()
    logger.info(f"Loaded {len(d)} rows from {path}")
    return d


def write_dataset(d: Dataset, path) -> None:
    artifacts.write_frame(path, d.to_frame())


def train_test_split(d: Dataset, test_fraction: float = DEFAULT_TEST_FRACTION,
                     seed: int = DEFAULT_SEED) -> Tuple[Dataset, Dataset]:
    """
    Random holdout split with |test| = round(|d| * test_fraction).

    Rounding is half-up. Both partitions keep file order. A Dataset never
    has zero rows, so a size that would leave either side empty (for
    example one row at fraction 0.25) is rejected.
    """
    if not 0 < test_fraction < 1:
        raise ArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction!r}")
    n = len(d)
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n_test == 0 or n_test == n:
        raise ArgumentError(
            f"Cannot split {n} rows with test_fraction={test_fraction}: round({n} * {test_fraction}) = {n_test} "
            f"leaves an empty {'test' if n_test == 0 else 'train'} set; datasets cannot be empty, "
            f"so the split needs 1 <= round(n * test_fraction) <= n - 1"
        )
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return d.subset(train_idx), d.subset(test_idx)


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map to zero mean and unit (population) std"""

    means: np.ndarray
    stds: np.ndarray
    target_mean: float
    target_std: float

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means))
        object.__setattr__(self, "stds", _frozen(self.stds))
        object.__setattr__(self, "target_mean", float(self.target_mean))
        object.__setattr__(self, "target_std", float(self.target_std))
        if np.any(self.stds <= 0) or self.target_std <= 0:
            raise ArgumentError("Standardizer scales must be positive")

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.stds + self.means

    def transform_target(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def inverse_target(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Standardizer":
        return cls(np.asarray(doc["means"]), np.asarray(doc["stds"]), doc["target_mean"], doc["target_std"])


def _checked_std(values: np.ndarray, name: str) -> Tuple[float, float]:
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std <= 1e-12 * max(1.0, abs(mean)):
        raise DegenerateColumnError(name)
    return mean, std


def fit_standardizer(train: Dataset) -> Standardizer:
    """Fit column statistics on the training rows only"""
    if len(train) < 2:
        raise ArgumentError("Standardizer needs at least 2 rows")
    means, stds = [], []
    for j, name in enumerate(train.feature_names):
        m, s = _checked_std(train.features[:, j], name)
        means.append(m)
        stds.append(s)
    target_mean, target_std = _checked_std(train.targets, train.target_name)
    return Standardizer(np.array(means), np.array(stds), target_mean, target_std)


def apply(s: Standardizer, d: Dataset) -> Dataset:
    """Standardized copy of d (features and target)"""
    return Dataset(s.transform(d.features), s.transform_target(d.targets), d.feature_names, d.target_name, d.row_ids)


def invert(s: Standardizer, values) -> np.ndarray:
    """Map standardized target values back to raw units"""
    return s.inverse_target(values)


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of each row index to one of k folds"""

    k: int
    assignments: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64).copy()
        a.flags.writeable = False
        object.__setattr__(self, "assignments", a)

    def sizes(self) -> List[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()

    def split(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) for one fold"""
        mask = self.assignments == fold
        return np.flatnonzero(~mask), np.flatnonzero(mask)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            yield self.split(fold)


def kfold(n: int, k: int, seed: int = DEFAULT_SEED) -> FoldPlan:
    """Shuffled k-fold partition; the first n % k folds hold one extra row"""
    if not 2 <= k <= n:
        raise ArgumentError(f"kfold needs 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for fold, members in enumerate(np.array_split(perm, k)):
        assignments[members] = fold
    return FoldPlan(k, assignments)


@dataclass(frozen=True)
class SequenceSet:
    """Row indices grouped into time-ordered exposure histories"""

    sequences: Tuple[Tuple[int, ...], ...]
    group_key: Tuple[str, ...] = SEQUENCE_KEY

    def __len__(self) -> int:
        return len(self.sequences)

    def lengths(self) -> List[int]:
        return [len(s) for s in self.sequences]


def sequence_order(features: np.ndarray) -> List[List[int]]:
    """
    Group the rows of a feature matrix into sequences.

    Works on raw or standardized matrices alike: standardization is a
    per-column increasing affine map, so equality and ordering are preserved.
    Groups appear in order of first occurrence; within a group rows are
    sorted by (exposure_time, depth, row index).
    """
    key_cols = [FEATURE_NAMES.index(n) for n in SEQUENCE_KEY]
    t_col, d_col = FEATURE_NAMES.index("exposure_time"), FEATURE_NAMES.index("depth")
    groups: Dict[tuple, List[int]] = {}
    for i, row in enumerate(np.asarray(features)):
        groups.setdefault(tuple(row[key_cols].tolist()), []).append(i)
    return [sorted(members, key=lambda i: (features[i, t_col], features[i, d_col], i)) for members in groups.values()]


def group_sequences(d: Dataset) -> SequenceSet:
    return SequenceSet(tuple(tuple(s) for s in sequence_order(d.features)))
