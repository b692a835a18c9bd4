"""
Classical regressors: linear, k-nearest neighbors, kernel ridge, epsilon-SVR
and Gaussian process regression.

Every family follows the same shape: an :class:`Estimator` subclass holds
hyperparameters and returns a frozen ``...Params`` object from ``fit``; the
params object predicts and serializes itself. All inputs are expected on the
standardized scale.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from services.errors import ArgumentError, ConvergenceError
from services.numerics import (
    KERNEL_JITTER,
    RbfKernelParams,
    as_matrix,
    cholesky,
    rbf_kernel,
    solve_spd,
)

logger = logging.getLogger(__name__)

LINEAR_JITTER = 1e-12


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


def _vector(y, n: Optional[int] = None, name: str = "y") -> np.ndarray:
    v = np.asarray(y, dtype=np.float64).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise ArgumentError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ArgumentError(f"{name} contains non-finite values")
    return v


class FittedParams(ABC):
    """Fitted parameters of one family: predict and serialize"""

    @abstractmethod
    def predict(self, x) -> np.ndarray:
        pass

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        pass


class Estimator(ABC):
    """Abstract base class for one regression family"""

    family: str = ""
    defaults: Dict[str, Any] = {}

    def __init__(self, **hyperparameters):
        unknown = sorted(set(hyperparameters) - set(self.defaults))
        if unknown:
            raise ArgumentError(f"Unknown hyperparameter(s) for {self.family}: {', '.join(unknown)}")
        self.hyperparameters = {**self.defaults, **hyperparameters}

    @classmethod
    def hyperparameter_names(cls) -> Tuple[str, ...]:
        return tuple(cls.defaults)

    @abstractmethod
    def fit(self, x, y, seed: int = 42) -> FittedParams:
        """Fit on standardized inputs and targets"""
        pass

    @staticmethod
    @abstractmethod
    def params_from_dict(doc: Mapping[str, Any]) -> FittedParams:
        pass


# Linear regression

@dataclass(frozen=True)
class LinearParams(FittedParams):
    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "intercept", float(self.intercept))

    def predict(self, x) -> np.ndarray:
        return as_matrix(x, "x") @ self.weights + self.intercept

    def to_dict(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist(), "intercept": self.intercept}


def fit_linear(x, y) -> LinearParams:
    """
    Least squares with intercept.

    Solves the centered normal equations (Xc^T Xc + 1e-12 I) w = Xc^T yc by
    Cholesky; the intercept is ybar - xbar . w.
    """
    xm = as_matrix(x, "x")
    yv = _vector(y, xm.shape[0])
    x_mean = xm.mean(axis=0)
    y_mean = float(yv.mean())
    xc = xm - x_mean
    gram = xc.T @ xc
    gram = 0.5 * (gram + gram.T)
    factor = cholesky(gram, jitter=LINEAR_JITTER)
    w = solve_spd(factor, xc.T @ (yv - y_mean))
    return LinearParams(w, y_mean - float(x_mean @ w))


class LinearRegressor(Estimator):
    """Ordinary least squares"""

    family = "LR"
    defaults: Dict[str, Any] = {}

    def fit(self, x, y, seed: int = 42) -> LinearParams:
        return fit_linear(x, y)

    @staticmethod
    def params_from_dict(doc):
        return LinearParams(np.asarray(doc["weights"]), doc["intercept"])


# k-nearest neighbors

@dataclass(frozen=True)
class KnnParams(FittedParams):
    k: int
    x_train: np.ndarray
    y_train: np.ndarray
    weighting: str = "inverse-distance"

    def __post_init__(self):
        object.__setattr__(self, "x_train", _readonly(self.x_train))
        object.__setattr__(self, "y_train", _readonly(self.y_train))
        if not 1 <= self.k <= self.x_train.shape[0]:
            raise ArgumentError(f"k must lie in [1, {self.x_train.shape[0]}], got {self.k}")

    def predict(self, x) -> np.ndarray:
        q = as_matrix(x, "x")
        dist = cdist(q, self.x_train)
        return np.array([_weighted_neighbors(row, self.y_train, self.k) for row in dist])

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "x_train": self.x_train.tolist(), "y_train": self.y_train.tolist(),
                "weighting": self.weighting}


def _weighted_neighbors(dist: np.ndarray, targets: np.ndarray, k: int) -> float:
    # stable sort: ties at the k-th distance go to the lowest row index
    nearest = np.argsort(dist, kind="stable")[:k]
    d = dist[nearest]
    exact = d == 0
    if np.any(exact):
        return float(np.mean(targets[nearest[exact]]))
    w = 1.0 / d
    return float(np.sum(w * targets[nearest]) / np.sum(w))


def knn_predict(p: KnnParams, q) -> float:
    """Inverse-distance weighted mean of the k nearest training targets"""
    row = np.asarray(q, dtype=np.float64).reshape(1, -1)
    return _weighted_neighbors(cdist(row, p.x_train)[0], p.y_train, p.k)


class KnnRegressor(Estimator):
    family = "KNN"
    defaults: Dict[str, Any] = {"n_neighbors": 5}

    def fit(self, x, y, seed: int = 42) -> KnnParams:
        xm = as_matrix(x, "x")
        return KnnParams(int(self.hyperparameters["n_neighbors"]), xm, _vector(y, xm.shape[0]))

    @staticmethod
    def params_from_dict(doc):
        return KnnParams(int(doc["k"]), np.asarray(doc["x_train"]), np.asarray(doc["y_train"]),
                         doc.get("weighting", "inverse-distance"))


# Kernel ridge regression

def _kernel_system(x: np.ndarray, y: np.ndarray, kernel: RbfKernelParams, ridge: float):
    """Factor K + ridge*I (plus jitter) and solve for the dual weights"""
    gram = rbf_kernel(x, x, kernel)
    factor = cholesky(gram + ridge * np.eye(x.shape[0]), jitter=KERNEL_JITTER)
    return factor, solve_spd(factor, y)


@dataclass(frozen=True)
class KrrParams(FittedParams):
    alpha: float
    kernel: RbfKernelParams
    dual_coef: np.ndarray
    x_train: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dual_coef", _readonly(self.dual_coef))
        object.__setattr__(self, "x_train", _readonly(self.x_train))

    def predict(self, x) -> np.ndarray:
        return rbf_kernel(x, self.x_train, self.kernel) @ self.dual_coef

    def to_dict(self) -> Dict[str, Any]:
        return {"alpha": self.alpha, "kernel": self.kernel.to_dict(),
                "dual_coef": self.dual_coef.tolist(), "x_train": self.x_train.tolist()}


def fit_krr(x, y, kernel: RbfKernelParams, alpha: float) -> KrrParams:
    """Dual coefficients beta solving (K + alpha I) beta = y"""
    if not alpha >= 0:
        raise ArgumentError(f"alpha must be non-negative, got {alpha!r}")
    xm = as_matrix(x, "x")
    _, beta = _kernel_system(xm, _vector(y, xm.shape[0]), kernel, alpha)
    return KrrParams(float(alpha), kernel, beta, xm)


class KernelRidgeRegressor(Estimator):
    family = "KRR"
    defaults: Dict[str, Any] = {"alpha": 1e-2, "lengthscale": 1.0}

    def fit(self, x, y, seed: int = 42) -> KrrParams:
        kernel = RbfKernelParams(lengthscale=float(self.hyperparameters["lengthscale"]))
        return fit_krr(x, y, kernel, float(self.hyperparameters["alpha"]))

    @staticmethod
    def params_from_dict(doc):
        return KrrParams(doc["alpha"], RbfKernelParams(**doc["kernel"]), np.asarray(doc["dual_coef"]),
                         np.asarray(doc["x_train"]))


# Epsilon support vector regression

@dataclass(frozen=True)
class SvrParams(FittedParams):
    C: float
    epsilon: float
    kernel: RbfKernelParams
    dual_coef: np.ndarray  # theta_i = alpha_i - alpha_i*
    bias: float
    x_train: np.ndarray
    worst_kkt: float = 0.0
    n_iter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dual_coef", _readonly(self.dual_coef))
        object.__setattr__(self, "x_train", _readonly(self.x_train))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.dual_coef)

    def predict(self, x) -> np.ndarray:
        return rbf_kernel(x, self.x_train, self.kernel) @ self.dual_coef + self.bias

    def to_dict(self) -> Dict[str, Any]:
        return {"C": self.C, "epsilon": self.epsilon, "kernel": self.kernel.to_dict(),
                "dual_coef": self.dual_coef.tolist(), "bias": self.bias, "x_train": self.x_train.tolist(),
                "worst_kkt": self.worst_kkt, "n_iter": self.n_iter}


def svr_dual_objective(gram: np.ndarray, y: np.ndarray, theta: np.ndarray, epsilon: float) -> float:
    """Dual objective to minimize: 0.5 t'Kt - y't + eps*|t|_1"""
    return float(0.5 * theta @ gram @ theta - y @ theta + epsilon * np.sum(np.abs(theta)))


def svr_kkt_residuals(gram: np.ndarray, y: np.ndarray, theta: np.ndarray, bias: float,
                      C: float, epsilon: float) -> np.ndarray:
    """
    Per-sample KKT violation of an epsilon-SVR solution.

    With r = f(x) - y: inactive samples need |r| <= eps, free samples sit on
    the tube edge (r = -eps for theta > 0, r = +eps for theta < 0), samples at
    the box bound lie on or outside the edge.
    """
    r = gram @ theta + bias - y
    at_bound = np.abs(theta) >= C * (1 - 1e-12)
    out = np.where(theta == 0, np.maximum(0.0, np.abs(r) - epsilon), 0.0)
    pos, neg = theta > 0, theta < 0
    out = np.where(pos & ~at_bound, np.abs(r + epsilon), out)
    out = np.where(pos & at_bound, np.maximum(0.0, r + epsilon), out)
    out = np.where(neg & ~at_bound, np.abs(r - epsilon), out)
    out = np.where(neg & at_bound, np.maximum(0.0, epsilon - r), out)
    return out


def fit_svr(x, y, kernel: RbfKernelParams, C: float, epsilon: float, tol: float = 1e-3,
            max_passes: int = 200) -> SvrParams:
    """
    Solve the epsilon-SVR dual with SMO pairwise updates.

    The 2n multipliers beta = [alpha; alpha*] carry signs s = [+1; -1].
    Each iteration picks the maximal violating pair (i in I_up maximizing
    -s G, j in I_low minimizing it), takes the clipped Newton step along the
    equality-preserving direction, and updates the gradient G in O(n). The
    loop stops once the violation gap is at most ``tol``; the bias is the
    mean over free multipliers, or the midpoint of the gap if none is free.

    Raises:
        ConvergenceError: after ``max_passes * 2n`` iterations without meeting tol
    """
    if not C > 0:
        raise ArgumentError(f"C must be positive, got {C!r}")
    if not epsilon >= 0:
        raise ArgumentError(f"epsilon must be non-negative, got {epsilon!r}")
    if not tol > 0:
        raise ArgumentError(f"tol must be positive, got {tol!r}")

    xm = as_matrix(x, "x")
    n = xm.shape[0]
    yv = _vector(y, n)
    gram = rbf_kernel(xm, xm, kernel)
    diag = np.diag(gram).copy()

    s = np.concatenate([np.ones(n), -np.ones(n)])
    beta = np.zeros(2 * n)
    grad = np.concatenate([epsilon - yv, epsilon + yv])
    snap = 1e-12 * C
    max_iter = max_passes * 2 * n

    n_iter = 0
    converged = False
    while n_iter < max_iter:
        up = ((s > 0) & (beta < C)) | ((s < 0) & (beta > 0))
        low = ((s > 0) & (beta > 0)) | ((s < 0) & (beta < C))
        v = -s * grad
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if not (up[i] and low[j]) or v[i] - v[j] <= tol:
            converged = True
            break

        ii, jj = i % n, j % n
        quad = diag[ii] + diag[jj] - 2.0 * gram[ii, jj]
        if quad <= 0:
            quad = 1e-12
        bound_i = C - beta[i] if s[i] > 0 else beta[i]
        bound_j = beta[j] if s[j] > 0 else C - beta[j]
        step = min((v[i] - v[j]) / quad, bound_i, bound_j)

        beta[i] += s[i] * step
        beta[j] -= s[j] * step
        for k in (i, j):
            if beta[k] < snap:
                beta[k] = 0.0
            elif beta[k] > C - snap:
                beta[k] = C
        delta = gram[:, ii] - gram[:, jj]
        grad += s * step * np.concatenate([delta, delta])
        n_iter += 1

    theta = beta[:n] - beta[n:]
    v = -s * grad
    free = (beta > 0) & (beta < C)
    if np.any(free):
        bias = float(np.mean(v[free]))
    else:
        up = ((s > 0) & (beta < C)) | ((s < 0) & (beta > 0))
        low = ((s > 0) & (beta > 0)) | ((s < 0) & (beta < C))
        bounds = [b for b in (np.max(v[up], initial=-np.inf), np.min(v[low], initial=np.inf)) if np.isfinite(b)]
        bias = float(np.mean(bounds)) if bounds else 0.0

    worst = float(np.max(svr_kkt_residuals(gram, yv, theta, bias, C, epsilon), initial=0.0))
    if not converged:
        raise ConvergenceError(f"SMO did not converge in {max_iter} iterations (worst KKT {worst:.3g})",
                               worst_kkt=worst)
    logger.debug(f"SMO converged in {n_iter} iterations, {np.count_nonzero(theta)} support vectors")
    return SvrParams(float(C), float(epsilon), kernel, theta, bias, xm, worst, n_iter)


class SupportVectorRegressor(Estimator):
    family = "SVR"
    defaults: Dict[str, Any] = {"C": 1.0, "epsilon": 0.1, "lengthscale": 1.0, "tol": 1e-3, "max_passes": 200}

    def fit(self, x, y, seed: int = 42) -> SvrParams:
        hp = self.hyperparameters
        kernel = RbfKernelParams(lengthscale=float(hp["lengthscale"]))
        return fit_svr(x, y, kernel, float(hp["C"]), float(hp["epsilon"]), float(hp["tol"]), int(hp["max_passes"]))

    @staticmethod
    def params_from_dict(doc):
        return SvrParams(doc["C"], doc["epsilon"], RbfKernelParams(**doc["kernel"]), np.asarray(doc["dual_coef"]),
                         doc["bias"], np.asarray(doc["x_train"]), doc.get("worst_kkt", 0.0), doc.get("n_iter", 0))


# Gaussian process regression

@dataclass(frozen=True)
class GprParams(FittedParams):
    kernel: RbfKernelParams
    noise_variance: float
    chol: np.ndarray
    weights: np.ndarray
    x_train: np.ndarray

    def __post_init__(self):
        for name in ("chol", "weights", "x_train"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def posterior(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """Latent posterior mean and variance (observation noise excluded)"""
        cross = rbf_kernel(queries, self.x_train, self.kernel)
        mean = cross @ self.weights
        v = solve_triangular(self.chol, cross.T, lower=True, check_finite=False)
        var = self.kernel.signal_variance - np.sum(v * v, axis=0)
        if np.any(var < -1e-10):
            logger.warning(f"GPR variance fell to {var.min():.3g}; clamping at 0")
        return mean, np.maximum(var, 0.0)

    def predict(self, x) -> np.ndarray:
        return rbf_kernel(x, self.x_train, self.kernel) @ self.weights

    def to_dict(self) -> Dict[str, Any]:
        return {"kernel": self.kernel.to_dict(), "noise_variance": self.noise_variance,
                "chol": self.chol.tolist(), "weights": self.weights.tolist(), "x_train": self.x_train.tolist()}


def fit_gpr(x, y, kernel: RbfKernelParams, noise_variance: float) -> GprParams:
    """Zero-mean GP: factor K + noise*I and precompute (K + noise*I)^-1 y"""
    if not noise_variance >= 0:
        raise ArgumentError(f"noise_variance must be non-negative, got {noise_variance!r}")
    xm = as_matrix(x, "x")
    factor, weights = _kernel_system(xm, _vector(y, xm.shape[0]), kernel, noise_variance)
    return GprParams(kernel, float(noise_variance), factor, weights, xm)


def gpr_posterior(x, y, kernel: RbfKernelParams, noise_variance: float, queries) -> Tuple[np.ndarray, np.ndarray]:
    return fit_gpr(x, y, kernel, noise_variance).posterior(queries)


class GaussianProcessRegressor(Estimator):
    family = "GPR"
    defaults: Dict[str, Any] = {"lengthscale": 1.0, "signal_variance": 1.0, "noise_variance": 1e-2}

    def fit(self, x, y, seed: int = 42) -> GprParams:
        hp = self.hyperparameters
        kernel = RbfKernelParams(float(hp["lengthscale"]), float(hp["signal_variance"]))
        return fit_gpr(x, y, kernel, float(hp["noise_variance"]))

    @staticmethod
    def params_from_dict(doc):
        return GprParams(RbfKernelParams(**doc["kernel"]), doc["noise_variance"], np.asarray(doc["chol"]),
                         np.asarray(doc["weights"]), np.asarray(doc["x_train"]))
