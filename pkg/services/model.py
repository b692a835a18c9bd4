"""
Model façade: one fitted estimator plus the standardizer it was trained
behind, with raw-unit prediction and JSON persistence.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from services import artifacts
from services.dataset import (
    DEFAULT_SEED,
    Dataset,
    Standardizer,
    apply,
    feature_matrix,
    fit_standardizer,
)
from services.errors import ArgumentError, ModelFormatError
from services.estimators import (
    Estimator,
    FittedParams,
    GaussianProcessRegressor,
    GprParams,
    KernelRidgeRegressor,
    KnnRegressor,
    LinearRegressor,
    SupportVectorRegressor,
)
from services.networks import GruRegressor, MlpRegressor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
# Reporting order of the families
FAMILIES = ("LR", "KNN", "KRR", "SVR", "GPR", "MLP", "GRU")
RECURRENT_FAMILIES = ("GRU",)


class EstimatorFactory:
    """Creates estimators by family tag"""

    _estimators = {
        cls.family: cls
        for cls in (
            LinearRegressor,
            KnnRegressor,
            KernelRidgeRegressor,
            SupportVectorRegressor,
            GaussianProcessRegressor,
            MlpRegressor,
            GruRegressor,
        )
    }

    @staticmethod
    def estimator_class(family: str) -> type:
        try:
            return EstimatorFactory._estimators[family]
        except KeyError:
            raise ArgumentError(f"Unknown estimator family: {family}") from None

    @staticmethod
    def create_estimator(family: str, **hyperparameters) -> Estimator:
        return EstimatorFactory.estimator_class(family)(**hyperparameters)


def _plain(value: Any) -> Any:
    """JSON-shaped copy of a hyperparameter value (tuples become lists)"""
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass(frozen=True)
class Model:
    """A fitted estimator of one family; immutable and safe to share"""

    family: str
    hyperparameters: Mapping[str, Any]
    standardizer: Standardizer
    params: FittedParams
    metadata: Mapping[str, Any] = field(default_factory=dict)

    @property
    def recurrent(self) -> bool:
        return self.family in RECURRENT_FAMILIES

    def predict(self, rows) -> np.ndarray:
        """
        Predicted chloride content in raw target units.

        Non-recurrent families evaluate rows one at a time, so a row's
        prediction never depends on which other rows share the call. GRU rows
        are grouped into exposure histories and run statefully.
        """
        z = self.standardizer.transform(feature_matrix(rows))
        if self.recurrent:
            out = self.params.predict(z)
        else:
            out = np.array([self.params.predict(z[i:i + 1])[0] for i in range(z.shape[0])])
        return self.standardizer.inverse_target(out)

    def predict_standardized(self, x_std: np.ndarray) -> np.ndarray:
        """Batch prediction on already standardized rows, standardized output"""
        return self.params.predict(x_std)

    def predict_with_variance(self, rows) -> Tuple[np.ndarray, np.ndarray]:
        """GPR only: raw-unit posterior mean and latent variance"""
        if not isinstance(self.params, GprParams):
            raise ArgumentError(f"{self.family} models have no predictive variance")
        mean, var = self.params.posterior(self.standardizer.transform(feature_matrix(rows)))
        scale = self.standardizer.target_std
        return self.standardizer.inverse_target(mean), var * scale * scale

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "family": self.family,
            "hyperparameters": {k: _plain(v) for k, v in self.hyperparameters.items()},
            "standardizer": self.standardizer.to_dict(),
            "parameters": self.params.to_dict(),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Model":
        if not isinstance(doc, Mapping):
            raise ModelFormatError("Model document must be a JSON object")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"Unsupported model format_version {version!r}")
        try:
            estimator = EstimatorFactory.estimator_class(doc["family"])
            return cls(
                family=doc["family"],
                hyperparameters=dict(doc["hyperparameters"]),
                standardizer=Standardizer.from_dict(doc["standardizer"]),
                params=estimator.params_from_dict(doc["parameters"]),
                metadata=dict(doc.get("metadata", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"Malformed model document: {e}") from e


def fit_model(family: str, train: Dataset, hyperparameters: Optional[Mapping[str, Any]] = None,
              seed: int = DEFAULT_SEED) -> Model:
    """
    Standardize on the training rows, then fit one family.

    Args:
        family: One of FAMILIES
        train: Raw training rows
        hyperparameters: Overrides of the family defaults
        seed: Seeds every random choice of the fit

    Returns:
        Fitted Model carrying its standardizer
    """
    estimator = EstimatorFactory.create_estimator(family, **dict(hyperparameters or {}))
    standardizer = fit_standardizer(train)
    scaled = apply(standardizer, train)
    params = estimator.fit(scaled.features, scaled.targets, seed=seed)
    logger.debug(f"Fitted {family} on {len(train)} rows with {estimator.hyperparameters}")
    return Model(
        family=family,
        hyperparameters=estimator.hyperparameters,
        standardizer=standardizer,
        params=params,
        metadata={"seed": int(seed), "n_train": len(train)},
    )


def predict(m: Model, rows) -> np.ndarray:
    return m.predict(rows)


def save_model(m: Model, path) -> None:
    artifacts.write_json(path, m.to_dict())


def load_model(path) -> Model:
    try:
        doc = artifacts.read_json(path)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"Cannot read model {path}: {e}") from e
    return Model.from_dict(doc)
