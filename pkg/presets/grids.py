from typing import Any, Dict, List, Mapping, Optional

# Default hyperparameter grids per family; overridable from the experiment config
DEFAULT_GRIDS: Dict[str, Dict[str, List[Any]]] = {
    "LR": {},
    "KNN": {"n_neighbors": list(range(1, 16))},
    "KRR": {
        "alpha": [1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1],
        "lengthscale": [0.5, 1.0, 2.0, 4.0],
    },
    "SVR": {
        "C": [0.1, 1.0, 10.0, 100.0],
        "epsilon": [0.01, 0.05, 0.1],
        "lengthscale": [0.5, 1.0, 2.0, 4.0],
    },
    "GPR": {
        "lengthscale": [0.5, 1.0, 2.0, 4.0],
        "signal_variance": [0.5, 1.0, 2.0],
        "noise_variance": [1e-4, 1e-2, 1e-1],
    },
    "MLP": {
        "hidden_layers": [(64, 64), (128,)],
        "learning_rate": [1e-3, 1e-2],
    },
    "GRU": {
        "hidden_size": [16, 32, 64],
        "learning_rate": [1e-3, 1e-2],
    },
}

DEFAULT_K_FOLDS = 10


def build_grid(family: str, overrides: Optional[Mapping[str, Mapping[str, List[Any]]]] = None) -> Dict[str, List[Any]]:
    """Grid for one family: the override when given, else the default"""
    if overrides and family in overrides:
        return {name: list(values) for name, values in overrides[family].items()}
    return {name: list(values) for name, values in DEFAULT_GRIDS.get(family, {}).items()}
