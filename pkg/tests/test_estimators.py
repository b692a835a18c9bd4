import numpy as np
import pytest

from services.errors import ArgumentError, ConvergenceError
from services.estimators import (
    KnnParams,
    KnnRegressor,
    fit_gpr,
    fit_krr,
    fit_linear,
    fit_svr,
    gpr_posterior,
    knn_predict,
    svr_dual_objective,
    svr_kkt_residuals,
)
from services.numerics import RbfKernelParams, rbf_kernel


# Linear regression

def test_linear_recovers_exact_line(rng):
    x = np.zeros((30, 14))
    x[:, 0] = rng.normal(size=30)
    p = fit_linear(x, 2.0 * x[:, 0] + 1.0)
    assert abs(p.weights[0] - 2.0) <= 1e-9
    assert abs(p.intercept - 1.0) <= 1e-9
    np.testing.assert_allclose(p.weights[1:], 0.0, atol=1e-9)


def test_linear_constant_target(rng):
    p = fit_linear(rng.normal(size=(20, 14)), np.full(20, 3.5))
    np.testing.assert_array_equal(p.weights, 0.0)
    assert p.intercept == pytest.approx(3.5, abs=1e-12)


def test_linear_residual_orthogonal_to_columns(rng):
    x = rng.normal(size=(50, 14))
    y = rng.normal(size=50)
    p = fit_linear(x, y)
    r = y - p.predict(x)
    assert np.max(np.abs(x.T @ r)) <= 1e-6
    assert abs(r.sum()) <= 1e-6


def test_linear_row_order_invariance(rng):
    x = rng.normal(size=(40, 14))
    y = x @ rng.normal(size=14) + rng.normal(scale=0.1, size=40)
    perm = rng.permutation(40)
    q = rng.normal(size=(10, 14))
    np.testing.assert_allclose(fit_linear(x, y).predict(q), fit_linear(x[perm], y[perm]).predict(q), atol=1e-6)


# k-nearest neighbors

def test_knn_zero_distance_override():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    p = KnnParams(2, x, np.array([5.0, 7.0, 9.0]))
    assert knn_predict(p, [1.0, 0.0]) == 7.0


def test_knn_inverse_distance_weighting():
    p = KnnParams(2, np.array([[1.0], [3.0], [10.0]]), np.array([0.0, 4.0, 100.0]))
    assert knn_predict(p, [0.0]) == pytest.approx(1.0, abs=1e-12)


def test_knn_equal_distances_give_mean():
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    p = KnnParams(4, x, np.array([1.0, 2.0, 3.0, 6.0]))
    assert knn_predict(p, [0.0, 0.0]) == pytest.approx(3.0, abs=1e-12)


def test_knn_tie_prefers_lowest_index():
    x = np.array([[2.0], [1.0], [-1.0]])
    p = KnnParams(1, x, np.array([10.0, 20.0, 30.0]))
    # rows 1 and 2 are both at distance 1
    assert knn_predict(p, [0.0]) == 20.0


def test_knn_prediction_within_neighbor_range(rng):
    x = rng.normal(size=(40, 14))
    y = rng.normal(size=40)
    p = KnnRegressor(n_neighbors=5).fit(x, y)
    for q in rng.normal(size=(20, 14)):
        nearest = np.argsort(np.linalg.norm(x - q, axis=1), kind="stable")[:5]
        value = knn_predict(p, q)
        assert y[nearest].min() - 1e-12 <= value <= y[nearest].max() + 1e-12


def test_knn_rejects_k_above_n():
    with pytest.raises(ArgumentError):
        KnnParams(5, np.zeros((3, 2)), np.zeros(3))


# Kernel ridge and Gaussian process

def test_krr_interpolates_with_tiny_alpha(rng):
    x = rng.normal(size=(20, 14))
    y = rng.normal(size=20)
    p = fit_krr(x, y, RbfKernelParams(1.0), 1e-12)
    np.testing.assert_allclose(p.predict(x), y, atol=1e-6)


def test_krr_shrinks_to_zero_with_huge_alpha(rng):
    x = rng.normal(size=(20, 14))
    y = rng.normal(size=20)
    p = fit_krr(x, y, RbfKernelParams(1.0), 1e12)
    np.testing.assert_allclose(p.predict(rng.normal(size=(5, 14))), 0.0, atol=1e-6)
    np.testing.assert_allclose(p.predict(x), 0.0, atol=1e-6)


def test_krr_dual_solves_regularized_system(rng):
    x = rng.normal(size=(15, 3))
    y = rng.normal(size=15)
    kernel = RbfKernelParams(1.3)
    p = fit_krr(x, y, kernel, 0.1)
    k = rbf_kernel(x, x, kernel)
    np.testing.assert_allclose((k + 0.1 * np.eye(15)) @ p.dual_coef, y, atol=1e-8)


def test_krr_matches_gpr_mean_on_random_instances(rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 101))
        x = rng.normal(size=(n, 14))
        y = rng.normal(size=n)
        q = rng.normal(size=(10, 14))
        ell = float(rng.uniform(0.5, 4.0))
        alpha = float(10 ** rng.uniform(-4, 0))
        krr = fit_krr(x, y, RbfKernelParams(ell, 1.0), alpha).predict(q)
        mean, _ = gpr_posterior(x, y, RbfKernelParams(ell, 1.0), alpha, q)
        worst = max(worst, float(np.max(np.abs(krr - mean))))
    assert worst <= 1e-8


def test_krr_training_error_grows_with_alpha(rng):
    x = rng.normal(size=(40, 4))
    y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=40)
    kernel = RbfKernelParams(1.0)
    errors = [np.mean((fit_krr(x, y, kernel, a).predict(x) - y) ** 2) for a in 10.0 ** np.arange(-4, 3)]
    assert np.all(np.diff(errors) >= -1e-12)


def test_gpr_noiseless_interpolation(rng):
    x = rng.normal(size=(15, 14))
    y = rng.normal(size=15)
    mean, var = gpr_posterior(x, y, RbfKernelParams(1.0), 0.0, x[3:4])
    assert mean[0] == pytest.approx(y[3], abs=1e-8)
    assert var[0] == pytest.approx(0.0, abs=1e-8)


def test_gpr_reverts_to_prior_far_away(rng):
    x = rng.normal(size=(10, 14))
    kernel = RbfKernelParams(1.0, 2.0)
    mean, var = gpr_posterior(x, rng.normal(size=10), kernel, 1e-2, x[:1] + 1e3)
    assert abs(mean[0]) <= 1e-9
    assert var[0] == pytest.approx(2.0, abs=1e-9)


def test_gpr_variance_bounds(rng):
    x = rng.normal(size=(30, 3))
    kernel = RbfKernelParams(0.8, 1.5)
    p = fit_gpr(x, rng.normal(size=30), kernel, 1e-3)
    _, var = p.posterior(np.vstack([x, rng.normal(size=(50, 3))]))
    assert np.all(var >= 0)
    assert np.all(var <= 1.5 + 1e-9)


def test_kernel_fits_row_order_invariant(rng):
    x = rng.normal(size=(30, 5))
    y = rng.normal(size=30)
    perm = rng.permutation(30)
    q = rng.normal(size=(8, 5))
    kernel = RbfKernelParams(1.5)
    a = fit_krr(x, y, kernel, 0.1).predict(q)
    b = fit_krr(x[perm], y[perm], kernel, 0.1).predict(q)
    np.testing.assert_allclose(a, b, atol=1e-6)
    mean_a, var_a = fit_gpr(x, y, kernel, 0.1).posterior(q)
    mean_b, var_b = fit_gpr(x[perm], y[perm], kernel, 0.1).posterior(q)
    np.testing.assert_allclose(mean_a, mean_b, atol=1e-6)
    np.testing.assert_allclose(var_a, var_b, atol=1e-6)


# Support vector regression

def _project(v, s, C):
    """Euclidean projection onto {0 <= b <= C, s.b = 0} by bisection on the multiplier"""
    lo, hi = -1e3, 1e3
    for _ in range(60):
        mu = 0.5 * (lo + hi)
        if np.dot(s, np.clip(v - mu * s, 0.0, C)) > 0:
            lo = mu
        else:
            hi = mu
    return np.clip(v - 0.5 * (lo + hi) * s, 0.0, C)


def _qp_oracle(gram, y, C, epsilon, iterations=5000):
    """Accelerated projected gradient on the 2n-variable dual"""
    n = y.shape[0]
    s = np.concatenate([np.ones(n), -np.ones(n)])
    q = np.outer(s, s) * np.block([[gram, gram], [gram, gram]])
    p = np.concatenate([epsilon - y, epsilon + y])
    step = 1.0 / np.linalg.eigvalsh(q).max()
    beta = np.zeros(2 * n)
    z, t = beta.copy(), 1.0
    for _ in range(iterations):
        nxt = _project(z - step * (q @ z + p), s, C)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = nxt + ((t - 1) / t_next) * (nxt - beta)
        beta, t = nxt, t_next
    theta = beta[:n] - beta[n:]
    return svr_dual_objective(gram, y, theta, epsilon)


def test_svr_constant_target_has_no_support_vectors():
    x = np.linspace(-1, 1, 10).reshape(-1, 1)
    p = fit_svr(x, np.full(10, 4.0), RbfKernelParams(1.0), C=1.0, epsilon=1.0)
    np.testing.assert_array_equal(p.dual_coef, 0.0)
    np.testing.assert_allclose(p.predict(x), 4.0)


@pytest.mark.slow
def test_svr_matches_brute_force_dual(rng):
    kernel = RbfKernelParams(1.0)
    for _ in range(10):
        n = int(rng.integers(4, 9))
        x = rng.uniform(-2, 2, size=(n, 1))
        y = np.sin(2 * x[:, 0]) + 0.1 * rng.normal(size=n)
        p = fit_svr(x, y, kernel, C=1.0, epsilon=0.1, tol=1e-6)
        gram = rbf_kernel(x, x, kernel)
        ours = svr_dual_objective(gram, y, p.dual_coef, 0.1)
        assert ours == pytest.approx(_qp_oracle(gram, y, 1.0, 0.1), abs=1e-4)
        assert p.worst_kkt <= 1e-6


def test_svr_kkt_and_equality_constraint(rng):
    x = rng.normal(size=(40, 3))
    y = x[:, 0] - 0.5 * x[:, 1] ** 2 + 0.1 * rng.normal(size=40)
    kernel = RbfKernelParams(1.0)
    p = fit_svr(x, y, kernel, C=10.0, epsilon=0.05, tol=1e-3)
    assert p.worst_kkt <= 1e-3
    assert abs(p.dual_coef.sum()) <= 1e-8
    assert np.all(np.abs(p.dual_coef) <= 10.0)
    residuals = svr_kkt_residuals(rbf_kernel(x, x, kernel), y, p.dual_coef, p.bias, 10.0, 0.05)
    assert residuals.max() <= 1e-3


def test_svr_row_order_invariance(rng):
    x = rng.normal(size=(30, 2))
    y = np.cos(x[:, 0]) + 0.05 * rng.normal(size=30)
    perm = rng.permutation(30)
    q = rng.normal(size=(10, 2))
    kernel = RbfKernelParams(1.0)
    a = fit_svr(x, y, kernel, 1.0, 0.1, tol=1e-3).predict(q)
    b = fit_svr(x[perm], y[perm], kernel, 1.0, 0.1, tol=1e-3).predict(q)
    np.testing.assert_allclose(a, b, atol=1e-2)


def test_svr_iteration_cap_raises(rng):
    x = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    with pytest.raises(ConvergenceError) as err:
        fit_svr(x, y, RbfKernelParams(1.0), C=100.0, epsilon=0.01, tol=1e-9, max_passes=0)
    assert err.value.worst_kkt is not None


def test_svr_rejects_bad_arguments():
    x = np.zeros((3, 1))
    with pytest.raises(ArgumentError):
        fit_svr(x, np.zeros(3), RbfKernelParams(), C=0.0, epsilon=0.1)
    with pytest.raises(ArgumentError):
        fit_svr(x, np.zeros(3), RbfKernelParams(), C=1.0, epsilon=-0.1)
