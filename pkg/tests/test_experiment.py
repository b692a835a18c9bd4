import json

import numpy as np
import pytest
from pydantic import ValidationError

from services import experiment
from services.dataset import train_test_split
from services.experiment import ExperimentConfig, load_experiment_config, run_experiment, summary_table
from services.synth import SynthConfig, generate_dataset


def test_linear_data_is_fit_exactly(linear_dataset):
    report = run_experiment(ExperimentConfig(families=["LR"], k_folds=5), linear_dataset, seed=3)
    result = report.families["LR"]
    assert result.status == "ok"
    assert result.test.r2 >= 0.999
    assert result.r2_gap == pytest.approx(0.0, abs=1e-6)
    assert report.n_train + report.n_test == 80
    assert report.n_test == 20


def test_report_bytes_are_deterministic(tmp_path, linear_dataset):
    config = ExperimentConfig(families=["LR", "KNN"], grids={"KNN": {"n_neighbors": [1, 3]}}, k_folds=4)
    run_experiment(config, linear_dataset, seed=5, out_dir=tmp_path / "a")
    run_experiment(config, linear_dataset, seed=5, out_dir=tmp_path / "b")
    for name in ("report.json", "cv_table.csv", "predictions.csv", "models/KNN.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert not list(tmp_path.rglob("*.partial"))


def test_failed_family_does_not_stop_the_run(tmp_path, linear_dataset):
    config = ExperimentConfig(families=["LR", "KNN"], grids={"KNN": {"n_neighbors": [10000]}}, k_folds=4)
    report = run_experiment(config, linear_dataset, seed=1, out_dir=tmp_path)
    assert report.families["LR"].status == "ok"
    knn = report.families["KNN"]
    assert knn.status == "failed"
    assert knn.test is None and knn.error
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["families"]["KNN"]["status"] == "failed"
    assert not (tmp_path / "models" / "KNN.json").exists()
    assert "failed" in summary_table(report)


def test_test_rows_never_reach_tuning(monkeypatch, linear_dataset):
    seen = []
    real = experiment.grid_search_cv

    def spy(spec, train, n_jobs=1):
        seen.append(train.row_ids.tolist())
        return real(spec, train, n_jobs)

    monkeypatch.setattr(experiment, "grid_search_cv", spy)
    report = run_experiment(ExperimentConfig(families=["LR", "KNN"], grids={"KNN": {"n_neighbors": [2]}},
                                             k_folds=3), linear_dataset, seed=9)
    _, test = train_test_split(linear_dataset, 0.25, 9)
    assert len(seen) == 2
    for ids in seen:
        assert set(ids).isdisjoint(test.row_ids.tolist())
    for model in report.models.values():
        assert model.metadata["n_train"] == report.n_train


def test_families_are_reported_in_canonical_order(linear_dataset):
    config = ExperimentConfig(families=["KNN", "LR"], grids={"KNN": {"n_neighbors": [2]}}, k_folds=3)
    report = run_experiment(config, linear_dataset, seed=2)
    assert list(report.families) == ["LR", "KNN"]


def test_predictions_artifact_columns(tmp_path, linear_dataset):
    run_experiment(ExperimentConfig(families=["LR"], k_folds=3), linear_dataset, seed=4, out_dir=tmp_path)
    header = (tmp_path / "predictions.csv").read_text().splitlines()[0]
    assert header == "row_id,split,y_true,y_pred_LR"


def test_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        ExperimentConfig(families=["RF"])
    with pytest.raises(ValidationError):
        ExperimentConfig(test_fraction=1.0)
    with pytest.raises(ValidationError):
        ExperimentConfig(learning_rate=0.1)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"seed": 7, "families": ["LR"], "k_folds": 3}))
    config = load_experiment_config(path)
    assert config.seed == 7 and config.families == ["LR"]


@pytest.mark.slow
def test_nonlinear_families_beat_linear_on_noisy_fick_data():
    d = generate_dataset(SynthConfig(), seed=42)
    assert len(d) == 2000
    config = ExperimentConfig(
        families=["LR", "KRR", "GPR", "MLP"],
        grids={
            "KRR": {"alpha": [1e-3, 1e-2], "lengthscale": [2.0, 4.0]},
            "GPR": {"lengthscale": [2.0, 4.0], "noise_variance": [1e-2]},
            "MLP": {"hidden_layers": [[64, 64]], "learning_rate": [1e-2]},
        },
        k_folds=3,
    )
    report = run_experiment(config, d, seed=42)
    assert all(r.status == "ok" for r in report.families.values())
    linear = report.families["LR"].test.r2
    for family in ("KRR", "GPR", "MLP"):
        r2 = report.families[family].test.r2
        assert r2 >= 0.90, (family, r2)
        assert r2 > linear, (family, r2, linear)


@pytest.mark.slow
def test_family_comparison_on_synthetic_data(tmp_path, small_synthetic):
    config = ExperimentConfig(
        families=["LR", "KNN", "KRR", "SVR", "GPR"],
        grids={
            "KNN": {"n_neighbors": [3, 5]},
            "KRR": {"alpha": [1e-3, 1e-1], "lengthscale": [2.0, 4.0]},
            "SVR": {"C": [10.0], "epsilon": [0.05], "lengthscale": [2.0]},
            "GPR": {"lengthscale": [2.0, 4.0], "noise_variance": [1e-4]},
        },
        k_folds=3,
    )
    report = run_experiment(config, small_synthetic, seed=42, out_dir=tmp_path)
    assert all(r.status == "ok" for r in report.families.values())
    assert np.isfinite(report.families["GPR"].cv_r2)
    assert report.families["GPR"].train.r2 >= 0.99
    doc = json.loads((tmp_path / "report.json").read_text())
    assert list(doc["families"]) == ["GPR", "KNN", "KRR", "LR", "SVR"]  # canonical JSON sorts keys
    assert "GPR" in summary_table(report)
