"""
Dense numerical kernels shared by every estimator.

Matrices are plain 2-D float64 numpy arrays. Factorizations go through
LAPACK (``dpotrf``) so that a failing pivot can be reported by index.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf
from scipy.spatial.distance import cdist

from services.errors import ArgumentError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

# Diagonal jitter for every kernel-matrix factorization (standardized units).
KERNEL_JITTER = 1e-10
SYMMETRY_TOLERANCE = 1e-10

ArrayLike = Union[np.ndarray, list, tuple]


@dataclass(frozen=True)
class RbfKernelParams:
    """Squared-exponential kernel k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2))"""

    lengthscale: float = 1.0
    signal_variance: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ArgumentError(f"lengthscale must be positive, got {self.lengthscale!r}")
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ArgumentError(f"signal_variance must be positive, got {self.signal_variance!r}")

    def to_dict(self) -> dict:
        return {"lengthscale": float(self.lengthscale), "signal_variance": float(self.signal_variance)}


def as_matrix(a: ArrayLike, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array"""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ArgumentError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return m


def cholesky(a: ArrayLike, jitter: float = 0.0) -> np.ndarray:
    """
    Lower Cholesky factor of ``a + jitter * I``.

    Args:
        a: Square symmetric matrix
        jitter: Non-negative value added to the diagonal before factorizing

    Returns:
        Lower-triangular L with positive diagonal and L @ L.T == a + jitter * I

    Raises:
        NotPositiveDefiniteError: with the 0-based index of the failing pivot
    """
    m = as_matrix(a, "a")
    n, cols = m.shape
    if n != cols:
        raise ArgumentError(f"cholesky needs a square matrix, got {m.shape}")
    if jitter < 0:
        raise ArgumentError(f"jitter must be non-negative, got {jitter!r}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
        raise ArgumentError("cholesky needs a symmetric matrix")

    if jitter:
        m = m + jitter * np.eye(n)
    factor, info = dpotrf(m, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(pivot=int(info) - 1)
    if info < 0:
        raise ArgumentError(f"dpotrf rejected argument {-info}")
    return factor


def solve_spd(l: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Solve (L L^T) x = b given the lower factor from :func:`cholesky`"""
    factor = np.asarray(l, dtype=np.float64)
    rhs = np.asarray(b, dtype=np.float64)
    if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
        raise ArgumentError(f"factor must be square, got shape {factor.shape}")
    if rhs.shape[0] != factor.shape[0]:
        raise ArgumentError(f"right-hand side has length {rhs.shape[0]}, expected {factor.shape[0]}")
    return cho_solve((factor, True), rhs, check_finite=True)


def rbf_kernel(x: ArrayLike, z: ArrayLike, params: RbfKernelParams) -> np.ndarray:
    """Kernel matrix K[i, j] = k(x_i, z_j)"""
    xm = as_matrix(x, "x")
    zm = as_matrix(z, "z")
    if xm.shape[1] != zm.shape[1]:
        raise ArgumentError(f"column mismatch: {xm.shape[1]} vs {zm.shape[1]}")
    sq = cdist(xm, zm, metric="sqeuclidean")
    return params.signal_variance * np.exp(-sq / (2.0 * params.lengthscale ** 2))


def erf(x):
    """Error function, exactly odd: erf(-x) == -erf(x)"""
    v = np.asarray(x, dtype=np.float64)
    out = np.sign(v) * special.erf(np.abs(v))
    return float(out) if out.ndim == 0 else out


def erfc(x):
    """Complementary error function 1 - erf(x), accurate in the tail"""
    out = special.erfc(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out
