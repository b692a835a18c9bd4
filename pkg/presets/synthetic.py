from typing import Dict, Tuple

# Uniform sampling ranges for synthetic mixtures and exposures
MIXTURE_RANGES: Dict[str, Tuple[float, float]] = {
    "water": (140.0, 220.0),
    "opc": (200.0, 500.0),
    "srpc": (0.0, 150.0),
    "fly_ash": (0.0, 150.0),
    "silica_fume": (0.0, 50.0),
    "ggbs": (0.0, 300.0),
    "superplasticizer": (0.0, 10.0),
    "fine_agg": (600.0, 900.0),
    "coarse_agg": (900.0, 1200.0),
    "surface_chloride": (5.0, 30.0),  # g/l
    "temperature": (5.0, 30.0),       # degrees Celsius
}

DEFAULT_N_MIXTURES = 100
DEFAULT_DEPTHS_MM: Tuple[float, ...] = (2.0, 6.0, 10.0, 15.0, 20.0)
DEFAULT_TIMES_YR: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
# Noise std as a share of the mean noiseless target
DEFAULT_NOISE_FRACTION = 0.05

# Synthetic mixture -> diffusivity map; not fitted to any measurement
DIFFUSIVITY_CONSTANTS: Dict[str, float] = {
    "d0": 1e-11,                 # m2/s at the reference state
    "k_w": 5.0,                  # w/b sensitivity
    "k_s": 2.0,                  # SCM sensitivity
    "k_c": 0.3,                  # coarse aggregate sensitivity
    "activation": 4000.0,        # Arrhenius E/R in kelvin
    "reference_wb": 0.40,
    "reference_temperature": 23.0,
    "reference_coarse": 1000.0,
    "silica_fume_weight": 3.0,
    "ggbs_weight": 0.7,
    "d_min": 1e-14,
    "d_max": 1e-9,
}

YEAR_SECONDS = 3.15576e7
MM_TO_M = 1e-3
KELVIN_OFFSET = 273.15
