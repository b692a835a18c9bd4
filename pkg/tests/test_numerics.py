import math

import numpy as np
import pytest

from services.errors import ArgumentError, NotPositiveDefiniteError
from services.numerics import RbfKernelParams, cholesky, erf, erfc, rbf_kernel, solve_spd


def test_cholesky_reconstructs_spd_matrix(rng):
    a = rng.normal(size=(6, 6))
    spd = a @ a.T + 6 * np.eye(6)
    l = cholesky(spd)
    np.testing.assert_allclose(l @ l.T, spd, atol=1e-10)
    assert np.all(np.diag(l) > 0)
    assert np.allclose(l, np.tril(l))


def test_cholesky_reports_failing_pivot():
    m = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(NotPositiveDefiniteError) as err:
        cholesky(m)
    assert err.value.pivot == 2


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ArgumentError):
        cholesky(np.array([[2.0, 1.0], [0.0, 2.0]]))


def test_jitter_rescues_semidefinite():
    ones = np.ones((3, 3))
    with pytest.raises(NotPositiveDefiniteError):
        cholesky(ones)
    l = cholesky(ones, jitter=1e-8)
    np.testing.assert_allclose(l @ l.T, ones + 1e-8 * np.eye(3), atol=1e-12)


def test_solve_spd(rng):
    a = rng.normal(size=(5, 5))
    spd = a @ a.T + np.eye(5)
    b = rng.normal(size=5)
    x = solve_spd(cholesky(spd), b)
    np.testing.assert_allclose(spd @ x, b, atol=1e-10)


def test_rbf_kernel_diagonal_and_symmetry(rng):
    x = rng.normal(size=(7, 3))
    params = RbfKernelParams(lengthscale=1.5, signal_variance=2.0)
    k = rbf_kernel(x, x, params)
    np.testing.assert_allclose(np.diag(k), 2.0)
    np.testing.assert_allclose(k, k.T)
    assert rbf_kernel([[0.0, 0.0, 0.0]], [[1e3, 0.0, 0.0]], params)[0, 0] == 0.0


def test_rbf_kernel_value():
    params = RbfKernelParams(lengthscale=2.0)
    k = rbf_kernel([[0.0]], [[2.0]], params)
    assert math.isclose(k[0, 0], math.exp(-0.5), rel_tol=1e-15)


def test_kernel_params_validation():
    with pytest.raises(ArgumentError):
        RbfKernelParams(lengthscale=0.0)


def test_erf_properties():
    assert erf(0.0) == 0.0
    assert math.isclose(erf(1.0), 0.8427007929497149, rel_tol=1e-15)
    xs = np.linspace(-4, 4, 81)
    np.testing.assert_array_equal(erf(-xs), -erf(xs))
    assert erfc(0.0) == 1.0
    assert math.isclose(erfc(1.0), 0.15729920705028513, rel_tol=1e-14)
    assert erfc(10.0) > 0


def _erf_series(x: float) -> float:
    """erf(x) = 2/sqrt(pi) * exp(-x^2) * sum 2^n x^(2n+1) / (1*3*...*(2n+1)); all terms positive"""
    ax = abs(x)
    term, terms, n = ax, [ax], 0
    while term > 1e-18 * terms[0] or n < 2 * ax * ax:
        n += 1
        term *= 2.0 * ax * ax / (2 * n + 1)
        terms.append(term)
    value = 2.0 / math.sqrt(math.pi) * math.exp(-ax * ax) * math.fsum(terms)
    return math.copysign(value, x)


def test_erf_matches_series_on_plus_minus_six():
    xs = np.linspace(-6.0, 6.0, 241)
    worst = max(abs(erf(float(x)) - _erf_series(float(x))) for x in xs)
    assert worst <= 1e-12
    assert erf(6.0) == 1.0


def test_erf_is_monotone_on_fine_grid():
    xs = np.arange(-6000, 6001) / 1000.0
    values = erf(xs)
    assert np.all(np.diff(values) >= 0)
    inner = np.abs(xs[:-1]) < 4.0
    assert np.all(np.diff(values)[inner] > 0)


def test_rbf_kernel_long_lengthscale_is_flat(rng):
    x = rng.normal(size=(5, 3))
    k = rbf_kernel(x, x, RbfKernelParams(lengthscale=1e6, signal_variance=1.7))
    np.testing.assert_allclose(k, 1.7, atol=1e-9)
