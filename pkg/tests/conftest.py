import numpy as np
import pytest

from services.dataset import FEATURE_NAMES, Dataset, feature_index
from services.synth import SynthConfig, generate_dataset


def random_features(n: int, seed: int = 0) -> np.ndarray:
    """Physically valid random feature rows (positive time, w/b in range)"""
    rng = np.random.default_rng(seed)
    x = rng.uniform(1.0, 10.0, size=(n, len(FEATURE_NAMES)))
    x[:, feature_index("wb_ratio")] = rng.uniform(0.3, 0.6, size=n)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def linear_dataset():
    """y = 3 * depth - 2 * water + 5 with valid features"""
    x = random_features(80, seed=3)
    y = 3.0 * x[:, feature_index("depth")] - 2.0 * x[:, feature_index("water")] + 5.0
    return Dataset(x, y)


@pytest.fixture(scope="session")
def small_synthetic():
    """Noiseless Fick data: 12 mixtures x 5 depths x 4 times"""
    return generate_dataset(SynthConfig(n_mixtures=12, noise_std=0.0), seed=11)


@pytest.fixture
def csv_text():
    header = ",".join([
        "surface_chloride_g_l", "exposure_time_yr", "temperature_c", "depth_mm", "water_kg_m3", "srpc_kg_m3",
        "opc_kg_m3", "wb_ratio", "fly_ash_kg_m3", "silica_fume_kg_m3", "ggbs_kg_m3", "superplasticizer_kg_m3",
        "fine_agg_kg_m3", "coarse_agg_kg_m3", "chloride_content",
    ])
    rows = [
        "19.6,1.3,9,10,184,0,460,0.3286,100,0,0,1.8,700,1050,2.5",
        "19.6,0.5,9,20,184,0,460,0.3286,100,0,0,1.8,700,1050,0.7",
        "10.0,2.0,20,5,170,50,300,0.4857,0,0,0,2.0,750,1000,4.1",
    ]
    return header + "\n" + "\n".join(rows) + "\n"
