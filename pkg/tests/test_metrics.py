import math

import numpy as np
import pytest

from services.errors import ArgumentError, UndefinedMetricError
from services.experiment import ExperimentReport, FamilyResult
from services.metrics import compute_metrics, format_comparison_table, r2_score


def test_hand_computed_example():
    m = compute_metrics([1, 2, 3, 4], [1.5, 2, 2.5, 4])
    assert m.mse == pytest.approx(0.125)
    assert m.mae == pytest.approx(0.25)
    assert m.rmse == pytest.approx(math.sqrt(0.125))
    assert m.r2 == pytest.approx(0.9)
    assert m.mape == pytest.approx(100 * (0.5 + 0.5 / 3) / 4)
    assert m.n == 4 and m.mape_excluded == 0


def test_perfect_and_mean_predictions(rng):
    y = rng.normal(size=50)
    perfect = compute_metrics(y, y)
    assert perfect.r2 == 1.0
    assert perfect.mae == perfect.mse == perfect.rmse == 0.0
    assert r2_score(y, np.full(50, y.mean())) == pytest.approx(0.0, abs=1e-12)


def test_metric_identities(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        y = rng.normal(size=n)
        yhat = y + rng.normal(scale=rng.uniform(0.01, 3), size=n)
        m = compute_metrics(y, yhat)
        assert m.rmse == pytest.approx(math.sqrt(m.mse), rel=1e-12)
        assert m.mae <= m.rmse + 1e-12
        assert m.r2 <= 1.0
        assert m.r2 == pytest.approx(1 - m.mse / np.var(y), rel=1e-9, abs=1e-12)


def test_r2_is_invariant_to_affine_rescaling(rng):
    y = rng.normal(size=40)
    yhat = y + rng.normal(scale=0.3, size=40)
    base = r2_score(y, yhat)
    for a, b in [(2.0, 0.0), (-3.5, 10.0), (1e-3, -7.0)]:
        assert r2_score(a * y + b, a * yhat + b) == pytest.approx(base, rel=1e-9)


def test_constant_target_is_undefined():
    with pytest.raises(UndefinedMetricError):
        r2_score([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


def test_length_mismatch_and_empty_inputs():
    with pytest.raises(ArgumentError):
        compute_metrics([1, 2, 3], [1, 2])
    with pytest.raises(ArgumentError):
        compute_metrics([], [])


def test_mape_skips_zero_targets():
    m = compute_metrics([0.0, 2.0, 4.0], [1.0, 1.0, 4.0])
    assert m.mape_excluded == 1
    assert m.mape == pytest.approx(25.0)
    assert compute_metrics([0.0, 0.0, 1.0], [0.0, 0.0, 1.0]).mape == 0.0


def test_comparison_table_lists_families_in_order():
    ok = compute_metrics([1, 2, 3, 4], [1.5, 2, 2.5, 4])
    report = ExperimentReport(42, 0.25, 10, {}, 4, 4)
    report.families["KNN"] = FamilyResult("KNN", "ok", train=ok, test=ok)
    report.families["LR"] = FamilyResult("LR", "ok", train=ok, test=ok)
    report.families["SVR"] = FamilyResult("SVR", "failed", error="ConvergenceError: stuck")
    table = format_comparison_table(report, ("LR", "KNN", "SVR"))
    lines = table.splitlines()
    assert lines[0].split()[:3] == ["family", "status", "train_r2"]
    assert [line.split()[0] for line in lines[1:]] == ["LR", "KNN", "SVR"]
    assert "0.9000" in lines[1]
    assert lines[3].split()[1] == "failed"
