"""
Regression metrics and the per-family comparison table.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np
import pandas as pd

from services.errors import ArgumentError, UndefinedMetricError

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("train_r2", "test_r2", "mae", "mse", "rmse", "mape")


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    mae: float
    mse: float
    rmse: float
    mape: float  # percent; NaN when every target is zero
    n: int
    mape_excluded: int

    def to_dict(self) -> Dict[str, Any]:
        doc = asdict(self)
        if math.isnan(self.mape):
            doc["mape"] = None
        return doc


def _pair(y_true, y_pred):
    y = np.asarray(y_true, dtype=np.float64).reshape(-1)
    yhat = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ArgumentError(f"Length mismatch: {y.shape[0]} targets vs {yhat.shape[0]} predictions")
    if y.size == 0:
        raise ArgumentError("Metrics need at least one sample")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise ArgumentError("Metrics need finite values")
    return y, yhat


def r2_score(y_true, y_pred) -> float:
    """
    Coefficient of determination 1 - SS_res / SS_tot.

    Raises:
        UndefinedMetricError: y_true is constant
    """
    y, yhat = _pair(y_true, y_pred)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("R2 is undefined for constant targets")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def compute_metrics(y_true, y_pred) -> MetricsReport:
    """R2, MAE, MSE, RMSE and MAPE (zero targets excluded from MAPE)"""
    y, yhat = _pair(y_true, y_pred)
    err = y - yhat
    mse = float(np.mean(err * err))
    nonzero = y != 0
    if np.any(nonzero):
        mape = float(np.mean(np.abs(err[nonzero]) / np.abs(y[nonzero]))) * 100.0
    else:
        mape = math.nan
    excluded = int(np.count_nonzero(~nonzero))
    if excluded:
        logger.debug(f"MAPE excludes {excluded} zero-target samples")
    return MetricsReport(
        r2=r2_score(y, yhat),
        mae=float(np.mean(np.abs(err))),
        mse=mse,
        rmse=math.sqrt(mse),
        mape=mape,
        n=int(y.size),
        mape_excluded=excluded,
    )


def comparison_frame(families: Mapping[str, Any], order=None) -> pd.DataFrame:
    """
    One row per family: train/test R2 and the test-set error metrics.

    ``families`` maps a family tag to an object with ``status``, ``train``
    and ``test`` attributes (failed families show only their status).
    """
    tags = [f for f in (order or families) if f in families]
    records = []
    for tag in tags:
        result = families[tag]
        row: Dict[str, Optional[float]] = {"family": tag, "status": result.status}
        test = result.test
        row["train_r2"] = result.train.r2 if result.train else None
        row["test_r2"] = test.r2 if test else None
        for name in ("mae", "mse", "rmse", "mape"):
            row[name] = getattr(test, name) if test else None
        records.append(row)
    return pd.DataFrame.from_records(records, columns=["family", "status", *TABLE_COLUMNS])


def format_comparison_table(report, order=None) -> str:
    """Aligned text table of the per-family results of an experiment report"""
    frame = comparison_frame(report.families, order)
    return frame.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.4f}")
