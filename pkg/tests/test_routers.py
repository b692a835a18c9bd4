import time
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from main import create_app
from routers import models
from services.dataset import FeatureVector
from services.model import fit_model, save_model
from services.sensitivity import baseline_scenario


@pytest.fixture
def served(tmp_path, monkeypatch, linear_dataset):
    m = fit_model("LR", linear_dataset)
    save_model(m, tmp_path / "lr.json")
    monkeypatch.setenv(models.MODEL_DIR_ENV, str(tmp_path))
    monkeypatch.setattr(models, "_store", {})
    return TestClient(create_app()), m


def test_health_and_listing(served):
    client, _ = served
    health = client.get("/healthz").json()
    assert health["status"] == "healthy"
    assert health["models"] == 1
    assert client.get("/models").json() == {"models": ["lr"]}


def test_predict(served, linear_dataset):
    client, m = served
    rows = [FeatureVector.from_array(x).to_dict() for x in linear_dataset.features[:3]]
    response = client.post("/models/lr/predict", json={"rows": rows})
    assert response.status_code == 200
    body = response.json()
    assert body["family"] == "LR"
    assert body["predictions"] == pytest.approx(m.predict(linear_dataset.features[:3]).tolist())


def test_unknown_model_is_404(served):
    client, _ = served
    row = baseline_scenario().features.to_dict()
    assert client.post("/models/svr/predict", json={"rows": [row]}).status_code == 404


def test_invalid_rows_are_422(served):
    client, _ = served
    row = {**baseline_scenario().features.to_dict(), "depth": -1.0}
    assert client.post("/models/lr/predict", json={"rows": [row]}).status_code == 422
    assert client.post("/models/lr/predict", json={"rows": []}).status_code == 422
    missing = baseline_scenario().features.to_dict()
    del missing["water"]
    assert client.post("/models/lr/predict", json={"rows": [missing]}).status_code == 422


def test_curve(served):
    client, m = served
    b = baseline_scenario()
    response = client.post("/models/lr/curve", json={
        "features": b.features.to_dict(), "depth_mm": 10.0, "times": [0.5, 1.0, 1.3],
    })
    assert response.status_code == 200
    body = response.json()
    assert len(body["predictions"]) == 3
    rows = [b.features.with_values(depth=10.0, exposure_time=t) for t in (0.5, 1.0, 1.3)]
    assert body["predictions"] == pytest.approx(m.predict(rows).tolist())
    bad = client.post("/models/lr/curve", json={"features": b.features.to_dict(), "depth_mm": 10.0, "times": [0.0]})
    assert bad.status_code == 422


def test_concurrent_requests_load_model_once(served, monkeypatch):
    calls = []
    real_load = models.load_model

    def counting_load(path):
        calls.append(path)
        time.sleep(0.01)
        return real_load(path)

    monkeypatch.setattr(models, "load_model", counting_load)
    store = models.get_model_store()
    with ThreadPoolExecutor(max_workers=8) as pool:
        loaded = list(pool.map(lambda _: store.get("lr"), range(16)))
        stores = list(pool.map(lambda _: models.get_model_store(), range(16)))
    assert len(calls) == 1
    assert all(m is loaded[0] for m in loaded)
    assert all(s is store for s in stores)
