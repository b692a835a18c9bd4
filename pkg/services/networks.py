"""
Neural regressors trained by gradient descent: a tanh multilayer perceptron
and a single-layer GRU with a linear readout.

Both use mean squared error and an Adam optimizer. Gradients are computed
analytically (backpropagation / backpropagation through time) so they can be
checked against finite differences.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.special import expit

from services.dataset import SequenceSet, sequence_order
from services.errors import ArgumentError, TrainingDivergedError
from services.estimators import Estimator, FittedParams, _readonly, _vector
from services.numerics import as_matrix

logger = logging.getLogger(__name__)

# A loss this many times the pre-training loss is treated as divergence.
DIVERGENCE_FACTOR = 1e4


class Adam:
    """Adam updates applied in place to a list of parameter arrays"""

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not learning_rate > 0:
            raise ArgumentError(f"learning_rate must be positive, got {learning_rate!r}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_divergence(epoch: int, loss: float, reference: float) -> None:
    if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(reference, 1e-12):
        raise TrainingDivergedError(epoch, float(loss))


# Multilayer perceptron

@dataclass(frozen=True)
class MlpParams(FittedParams):
    """Weights map layer l-1 to layer l as a (fan_in, fan_out) matrix"""

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: str = "tanh"
    n_epochs: int = 0
    history: Tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ArgumentError("MLP needs one bias vector per weight matrix")
        if self.activation != "tanh":
            raise ArgumentError(f"Unsupported activation '{self.activation}'")
        object.__setattr__(self, "weights", tuple(_readonly(w) for w in self.weights))
        object.__setattr__(self, "biases", tuple(_readonly(b).reshape(-1) for b in self.biases))

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def predict(self, x) -> np.ndarray:
        return mlp_forward(self, x)[-1][:, 0]

    def to_dict(self) -> Dict[str, Any]:
        return {"weights": [w.tolist() for w in self.weights], "biases": [b.tolist() for b in self.biases],
                "activation": self.activation, "n_epochs": self.n_epochs}


def mlp_forward(p: MlpParams, x) -> List[np.ndarray]:
    """Activations of every layer, input first; hidden layers tanh, output linear"""
    a = as_matrix(x, "x")
    out = [a]
    last = len(p.weights) - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        a = a @ w + b
        if l < last:
            a = np.tanh(a)
        out.append(a)
    return out


def mlp_loss(p: MlpParams, x, y) -> float:
    residual = p.predict(x) - np.asarray(y, dtype=np.float64).reshape(-1)
    return float(np.mean(residual * residual))


def mlp_backprop_grad(p: MlpParams, x, y) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Gradient of the batch mean squared error.

    Returns:
        (weight gradients, bias gradients) with the shapes of p.weights / p.biases
    """
    acts = mlp_forward(p, x)
    yv = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    n = yv.shape[0]
    delta = 2.0 * (acts[-1] - yv) / n
    grad_w: List[np.ndarray] = [None] * len(p.weights)
    grad_b: List[np.ndarray] = [None] * len(p.weights)
    for l in range(len(p.weights) - 1, -1, -1):
        grad_w[l] = acts[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ p.weights[l].T) * (1.0 - acts[l] ** 2)
    return grad_w, grad_b


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases"""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(weights), tuple(biases))


def fit_mlp(x, y, hidden_layers: Sequence[int] = (64, 64), learning_rate: float = 1e-3,
            epochs: int = 2000, batch_size: int = 32, seed: int = 42, patience: int = 50,
            validation_fraction: float = 0.1) -> MlpParams:
    """
    Train an MLP with minibatch Adam and early stopping.

    A ``validation_fraction`` share of rows (drawn with the seed) is held out;
    training stops once its loss has not improved for ``patience`` epochs and
    the best weights seen are returned. With too few rows for a holdout, the
    training loss drives the same rule.

    Raises:
        TrainingDivergedError: loss became non-finite or exploded
    """
    xm = as_matrix(x, "x")
    n = xm.shape[0]
    yv = _vector(y, n)
    if batch_size < 1 or epochs < 1 or patience < 1:
        raise ArgumentError("batch_size, epochs and patience must be positive")
    if n < batch_size:
        raise ArgumentError(f"MLP needs at least batch_size={batch_size} rows, got {n}")
    if not 0 <= validation_fraction < 1:
        raise ArgumentError(f"validation_fraction must lie in [0, 1), got {validation_fraction!r}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = int(n * validation_fraction)
    if n - n_val < batch_size:
        n_val = 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_tr, y_tr = xm[train_idx], yv[train_idx]
    x_val, y_val = (xm[val_idx], yv[val_idx]) if n_val else (x_tr, y_tr)

    current = init_mlp((xm.shape[1],) + tuple(int(h) for h in hidden_layers) + (1,), rng)
    weights = [w.copy() for w in current.weights]
    biases = [b.copy() for b in current.biases]
    params = [a for pair in zip(weights, biases) for a in pair]
    optimizer = Adam(params, learning_rate)

    def snapshot():
        return MlpParams(tuple(weights), tuple(biases))

    history: List[float] = []
    best, best_loss, best_epoch, wait = None, np.inf, 0, 0
    reference = mlp_loss(current, x_tr, y_tr)
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(x_tr.shape[0])
        for start in range(0, perm.shape[0], batch_size):
            batch = perm[start:start + batch_size]
            gw, gb = mlp_backprop_grad(snapshot(), x_tr[batch], y_tr[batch])
            optimizer.step(params, [g for pair in zip(gw, gb) for g in pair])

        current = snapshot()
        train_loss = mlp_loss(current, x_tr, y_tr)
        _check_divergence(epoch, train_loss, reference)
        history.append(train_loss)
        monitor = mlp_loss(current, x_val, y_val) if n_val else train_loss
        if monitor < best_loss:
            best, best_loss, best_epoch, wait = current, monitor, epoch, 0
        else:
            wait += 1
            if wait >= patience:
                logger.debug(f"MLP early stop at epoch {epoch} (best epoch {best_epoch})")
                break

    return MlpParams(best.weights, best.biases, n_epochs=best_epoch, history=tuple(history))


class MlpRegressor(Estimator):
    family = "MLP"
    defaults: Dict[str, Any] = {
        "hidden_layers": (64, 64),
        "learning_rate": 1e-3,
        "epochs": 2000,
        "batch_size": 32,
        "patience": 50,
        "validation_fraction": 0.1,
    }

    def fit(self, x, y, seed: int = 42) -> MlpParams:
        hp = self.hyperparameters
        return fit_mlp(x, y, tuple(int(h) for h in hp["hidden_layers"]), float(hp["learning_rate"]),
                       int(hp["epochs"]), int(hp["batch_size"]), seed, int(hp["patience"]),
                       float(hp["validation_fraction"]))

    @staticmethod
    def params_from_dict(doc):
        return MlpParams(tuple(np.asarray(w) for w in doc["weights"]), tuple(np.asarray(b) for b in doc["biases"]),
                         doc.get("activation", "tanh"), doc.get("n_epochs", 0))


# Gated recurrent unit

GRU_PARAM_NAMES = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h", "w_out", "b_out")


@dataclass(frozen=True)
class GruParams(FittedParams):
    """W_* are (H, D) input maps, U_* are (H, H) recurrent maps"""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray
    w_out: np.ndarray
    b_out: float
    n_epochs: int = 0
    history: Tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        for name in GRU_PARAM_NAMES[:-1]:
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "b_out", float(np.asarray(self.b_out).reshape(-1)[0]))
        h, d = self.W_z.shape
        for name in ("W_r", "W_h"):
            if getattr(self, name).shape != (h, d):
                raise ArgumentError(f"{name} must have shape {(h, d)}")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (h, h):
                raise ArgumentError(f"{name} must have shape {(h, h)}")
        for name in ("b_z", "b_r", "b_h", "w_out"):
            if getattr(self, name).shape != (h,):
                raise ArgumentError(f"{name} must have shape {(h,)}")

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    def arrays(self) -> Dict[str, np.ndarray]:
        out = {name: getattr(self, name) for name in GRU_PARAM_NAMES[:-1]}
        out["b_out"] = np.array([self.b_out])
        return out

    def predict(self, x) -> np.ndarray:
        """Run every exposure history in x and return one prediction per row"""
        xm = as_matrix(x, "x")
        sequences = sequence_order(xm)
        inputs, _, mask = pad_sequences(xm, np.zeros(xm.shape[0]), sequences)
        yhat, _ = gru_forward(self, inputs, mask)
        out = np.empty(xm.shape[0])
        for s, members in enumerate(sequences):
            out[members] = yhat[s, :len(members)]
        return out

    def to_dict(self) -> Dict[str, Any]:
        doc = {name: value.tolist() for name, value in self.arrays().items()}
        doc["b_out"] = self.b_out
        doc["n_epochs"] = self.n_epochs
        return doc

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], **extra) -> "GruParams":
        return cls(**{name: arrays[name] for name in GRU_PARAM_NAMES}, **extra)


def gru_cell(params: GruParams, h_prev, u) -> np.ndarray:
    """One GRU step; h_prev is (H,) or (B, H) and u the matching input"""
    h = np.asarray(h_prev, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    z = expit(u @ params.W_z.T + h @ params.U_z.T + params.b_z)
    r = expit(u @ params.W_r.T + h @ params.U_r.T + params.b_r)
    h_tilde = np.tanh(u @ params.W_h.T + (r * h) @ params.U_h.T + params.b_h)
    return (1.0 - z) * h + z * h_tilde


def pad_sequences(x: np.ndarray, y: np.ndarray, sequences: Sequence[Sequence[int]]):
    """
    Pack index sequences into left-aligned (B, T, D) inputs, (B, T) targets
    and a boolean (B, T) mask of valid steps.
    """
    t_max = max(len(s) for s in sequences)
    inputs = np.zeros((len(sequences), t_max, x.shape[1]))
    targets = np.zeros((len(sequences), t_max))
    mask = np.zeros((len(sequences), t_max), dtype=bool)
    for b, members in enumerate(sequences):
        inputs[b, :len(members)] = x[list(members)]
        targets[b, :len(members)] = y[list(members)]
        mask[b, :len(members)] = True
    return inputs, targets, mask


def gru_forward(params: GruParams, inputs: np.ndarray, mask: np.ndarray):
    """
    Unroll over a padded batch from h0 = 0. Masked steps carry the hidden
    state through unchanged.

    Returns:
        (per-step readouts (B, T), cache for backpropagation)
    """
    batch, steps, _ = inputs.shape
    h = np.zeros((batch, params.hidden_size))
    yhat = np.zeros((batch, steps))
    cache = []
    for t in range(steps):
        u = inputs[:, t]
        z = expit(u @ params.W_z.T + h @ params.U_z.T + params.b_z)
        r = expit(u @ params.W_r.T + h @ params.U_r.T + params.b_r)
        h_tilde = np.tanh(u @ params.W_h.T + (r * h) @ params.U_h.T + params.b_h)
        m = mask[:, t:t + 1]
        h_next = np.where(m, (1.0 - z) * h + z * h_tilde, h)
        cache.append((u, h, z, r, h_tilde, h_next))
        yhat[:, t] = h_next @ params.w_out + params.b_out
        h = h_next
    return yhat, cache


def gru_loss(params: GruParams, inputs: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    yhat, _ = gru_forward(params, inputs, mask)
    err = np.where(mask, yhat - targets, 0.0)
    return float(np.sum(err * err) / np.count_nonzero(mask))


def gru_backprop_grad(params: GruParams, inputs: np.ndarray, targets: np.ndarray,
                      mask: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Loss (mean squared error over valid steps) and its gradient by
    backpropagation through time.

    Returns:
        (loss, gradient arrays keyed like GruParams.arrays())
    """
    yhat, cache = gru_forward(params, inputs, mask)
    n_valid = np.count_nonzero(mask)
    err = np.where(mask, yhat - targets, 0.0)
    loss = float(np.sum(err * err) / n_valid)

    grads = {name: np.zeros_like(value) for name, value in params.arrays().items()}
    dh_next = np.zeros((inputs.shape[0], params.hidden_size))
    for t in range(inputs.shape[1] - 1, -1, -1):
        u, h_prev, z, r, h_tilde, h_t = cache[t]
        e = 2.0 * err[:, t] / n_valid
        grads["w_out"] += h_t.T @ e
        grads["b_out"] += e.sum()
        dh = dh_next + np.outer(e, params.w_out)

        m = mask[:, t:t + 1]
        dh_cell = np.where(m, dh, 0.0)
        dh_prev = np.where(m, 0.0, dh) + dh_cell * (1.0 - z)

        dz = dh_cell * (h_tilde - h_prev)
        da_h = dh_cell * z * (1.0 - h_tilde ** 2)
        grads["W_h"] += da_h.T @ u
        grads["U_h"] += da_h.T @ (r * h_prev)
        grads["b_h"] += da_h.sum(axis=0)
        d_rh = da_h @ params.U_h
        dh_prev += d_rh * r

        da_z = dz * z * (1.0 - z)
        da_r = d_rh * h_prev * r * (1.0 - r)
        grads["W_z"] += da_z.T @ u
        grads["U_z"] += da_z.T @ h_prev
        grads["b_z"] += da_z.sum(axis=0)
        grads["W_r"] += da_r.T @ u
        grads["U_r"] += da_r.T @ h_prev
        grads["b_r"] += da_r.sum(axis=0)
        dh_prev += da_z @ params.U_z + da_r @ params.U_r
        dh_next = dh_prev
    return loss, grads


def init_gru(input_size: int, hidden_size: int, rng: np.random.Generator) -> GruParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases"""
    k = 1.0 / np.sqrt(hidden_size)
    arrays = {}
    for name in ("W_z", "W_r", "W_h"):
        arrays[name] = rng.uniform(-k, k, size=(hidden_size, input_size))
    for name in ("U_z", "U_r", "U_h"):
        arrays[name] = rng.uniform(-k, k, size=(hidden_size, hidden_size))
    for name in ("b_z", "b_r", "b_h"):
        arrays[name] = np.zeros(hidden_size)
    arrays["w_out"] = rng.uniform(-k, k, size=hidden_size)
    arrays["b_out"] = np.zeros(1)
    return GruParams.from_arrays(arrays)


def fit_gru(x, y, sequences=None, hidden_size: int = 32, learning_rate: float = 1e-2,
            epochs: int = 200, seed: int = 42, batch_size: int = 16) -> GruParams:
    """
    Train a GRU on exposure histories by backpropagation through time.

    Args:
        x: Standardized feature rows
        y: Standardized targets
        sequences: SequenceSet or index lists; grouped from x when omitted
        hidden_size: Hidden state width H
        learning_rate: Adam step size
        epochs: Full passes over the sequences
        seed: Seeds initialization and sequence shuffling
        batch_size: Sequences per Adam step

    Raises:
        TrainingDivergedError: loss became non-finite or exploded
    """
    xm = as_matrix(x, "x")
    yv = _vector(y, xm.shape[0])
    if isinstance(sequences, SequenceSet):
        sequences = sequences.sequences
    if sequences is None:
        sequences = sequence_order(xm)
    sequences = [list(s) for s in sequences if len(s)]
    if not sequences:
        raise ArgumentError("GRU needs at least one non-empty sequence")
    if hidden_size < 1 or epochs < 1 or batch_size < 1:
        raise ArgumentError("hidden_size, epochs and batch_size must be positive")

    rng = np.random.default_rng(seed)
    inputs, targets, mask = pad_sequences(xm, yv, sequences)
    arrays = init_gru(xm.shape[1], int(hidden_size), rng).arrays()
    arrays = {name: value.copy() for name, value in arrays.items()}
    names = list(GRU_PARAM_NAMES)
    params = [arrays[name] for name in names]
    optimizer = Adam(params, learning_rate)

    reference = gru_loss(GruParams.from_arrays(arrays), inputs, targets, mask)
    history: List[float] = []
    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(sequences))
        for start in range(0, perm.shape[0], batch_size):
            batch = perm[start:start + batch_size]
            _, grads = gru_backprop_grad(GruParams.from_arrays(arrays), inputs[batch], targets[batch], mask[batch])
            optimizer.step(params, [grads[name] for name in names])
        loss = gru_loss(GruParams.from_arrays(arrays), inputs, targets, mask)
        _check_divergence(epoch, loss, reference)
        history.append(loss)

    logger.debug(f"GRU trained {epochs} epochs on {len(sequences)} sequences, final loss {history[-1]:.4g}")
    return GruParams.from_arrays(arrays, n_epochs=epochs, history=tuple(history))


class GruRegressor(Estimator):
    family = "GRU"
    defaults: Dict[str, Any] = {"hidden_size": 32, "learning_rate": 1e-2, "epochs": 200, "batch_size": 16}

    def fit(self, x, y, seed: int = 42) -> GruParams:
        hp = self.hyperparameters
        return fit_gru(x, y, None, int(hp["hidden_size"]), float(hp["learning_rate"]), int(hp["epochs"]),
                       seed, int(hp["batch_size"]))

    @staticmethod
    def params_from_dict(doc):
        arrays = {name: np.asarray(doc[name]) for name in GRU_PARAM_NAMES}
        return GruParams.from_arrays(arrays, n_epochs=doc.get("n_epochs", 0))
