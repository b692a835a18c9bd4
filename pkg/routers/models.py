import logging
import os
import threading
from pathlib import Path
from typing import Dict, List

from dotenv import load_dotenv
from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, Field

from services.dataset import FeatureVector
from services.errors import ClingressError, InvalidFeatureError
from services.model import Model, load_model
from services.sensitivity import temporal_curve

load_dotenv()
logger = logging.getLogger(__name__)

router = APIRouter(prefix="/models", tags=["models"])

MODEL_DIR_ENV = "CLINGRESS_MODEL_DIR"


class FeatureRow(BaseModel):
    surface_chloride: float
    exposure_time: float
    temperature: float
    depth: float
    water: float
    srpc: float
    opc: float
    wb_ratio: float
    fly_ash: float
    silica_fume: float
    ggbs: float
    superplasticizer: float
    fine_agg: float
    coarse_agg: float


class PredictRequest(BaseModel):
    rows: List[FeatureRow] = Field(min_length=1)


class CurveRequest(BaseModel):
    features: FeatureRow
    depth_mm: float
    times: List[float] = Field(min_length=1)


class ModelStore:
    """Loads model JSON files from a directory, caching them by name"""

    def __init__(self, directory: str):
        self.directory = Path(directory)
        self._cache: Dict[str, Model] = {}
        self._lock = threading.Lock()

    def names(self) -> List[str]:
        if not self.directory.is_dir():
            return []
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def get(self, name: str) -> Model:
        # sync endpoints run on a thread pool; load each file once
        with self._lock:
            if name not in self._cache:
                path = self.directory / f"{name}.json"
                if name not in self.names():
                    raise KeyError(name)
                self._cache[name] = load_model(path)
                logger.info(f"Loaded model '{name}' ({self._cache[name].family}) from {path}")
            return self._cache[name]


_store: Dict[str, ModelStore] = {}
_store_lock = threading.Lock()


def get_model_store() -> ModelStore:
    directory = os.getenv(MODEL_DIR_ENV, "models")
    with _store_lock:
        if directory not in _store:
            _store[directory] = ModelStore(directory)
        return _store[directory]


def _model_or_404(store: ModelStore, name: str) -> Model:
    try:
        return store.get(name)
    except KeyError:
        raise HTTPException(status_code=404, detail=f"Unknown model '{name}'")
    except ClingressError as e:
        raise HTTPException(status_code=500, detail=f"Model '{name}' cannot be loaded: {e}")


def _vectors(rows: List[FeatureRow]) -> List[FeatureVector]:
    try:
        return [FeatureVector(**row.model_dump()) for row in rows]
    except InvalidFeatureError as e:
        raise HTTPException(status_code=422, detail=str(e))


@router.get("")
def list_models(store: ModelStore = Depends(get_model_store)):
    return {"models": store.names()}


@router.post("/{name}/predict")
def predict(name: str, request: PredictRequest, store: ModelStore = Depends(get_model_store)):
    model = _model_or_404(store, name)
    rows = _vectors(request.rows)
    try:
        predictions = model.predict(rows)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {"family": model.family, "predictions": predictions.tolist()}


@router.post("/{name}/curve")
def curve(name: str, request: CurveRequest, store: ModelStore = Depends(get_model_store)):
    model = _model_or_404(store, name)
    features = _vectors([request.features])[0]
    if request.depth_mm < 0 or any(t <= 0 for t in request.times):
        raise HTTPException(status_code=422, detail="depth must be non-negative and times positive")
    values = temporal_curve(model, features, request.depth_mm, request.times)
    return {"family": model.family, "depth_mm": request.depth_mm, "times": request.times, "predictions": values.tolist()}
