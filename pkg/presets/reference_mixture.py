from typing import Dict, Optional, Tuple

import numpy as np

# Reference mixture held fixed during one-at-a-time sweeps (kg/m3 unless noted)
REFERENCE_MIXTURE: Dict[str, float] = {
    "water": 184.0,
    "opc": 460.0,
    "srpc": 0.0,
    "fly_ash": 100.0,
    "silica_fume": 0.0,
    "ggbs": 0.0,
    "superplasticizer": 1.8,
    "fine_agg": 700.0,
    "coarse_agg": 1050.0,
}
REFERENCE_SURFACE_CHLORIDE = 19.6  # g/l
REFERENCE_TEMPERATURE = 9.0        # degrees Celsius
REFERENCE_DEPTH_MM = 10.0
REFERENCE_EXPOSURE_YR = 1.3

DEFAULT_N_LEVELS = 5
DEFAULT_N_TIMES = 50

# Features swept by default: the ten mixture inputs
SWEEP_FEATURES: Tuple[str, ...] = (
    "water", "srpc", "opc", "wb_ratio", "fly_ash", "silica_fume",
    "ggbs", "superplasticizer", "fine_agg", "coarse_agg",
)


def build_reference_features() -> Dict[str, float]:
    """All fourteen reference inputs; w/b is water over opc + fly ash"""
    binder = sum(REFERENCE_MIXTURE[name] for name in ("opc", "srpc", "fly_ash", "silica_fume", "ggbs"))
    return {
        "surface_chloride": REFERENCE_SURFACE_CHLORIDE,
        "exposure_time": REFERENCE_EXPOSURE_YR,
        "temperature": REFERENCE_TEMPERATURE,
        "depth": REFERENCE_DEPTH_MM,
        **REFERENCE_MIXTURE,
        "wb_ratio": REFERENCE_MIXTURE["water"] / binder,
    }


def build_time_grid(horizon: Optional[float] = None, n_times: int = DEFAULT_N_TIMES) -> Tuple[float, ...]:
    """n_times evenly spaced points on (0, horizon]; the last point is the horizon itself"""
    end = REFERENCE_EXPOSURE_YR if horizon is None else float(horizon)
    return tuple(float(t) for t in np.linspace(end / n_times, end, n_times))
