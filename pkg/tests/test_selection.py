import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from rarescreen.errors import ConvergenceWarning, EmptyMatrix, SingleClass
from rarescreen.selection import (
    LAMBDA_GRID,
    SelectionConfig,
    choose_lambda,
    kkt_violation,
    l1_logistic_fit,
    l1_logistic_select,
    near_constant_filter,
    select_features,
    smooth_gradient,
    zero_point_lambda,
)

from conftest import labels_with_both, random_binary


def objective(X, y, w, b, lam):
    z = b + X @ w
    return float(np.mean(np.logaddexp(0, z) - y * z) + lam * np.abs(w).sum())


def oracle_fit(X, y, lam):
    """Independent solver: split w = u - v with u, v >= 0 and run L-BFGS-B."""
    X = np.asarray(X, float)
    n, d = X.shape

    def f(theta):
        u, v, b = theta[:d], theta[d:2 * d], theta[-1]
        z = b + X @ (u - v)
        p = 0.5 * (1 + np.tanh(0.5 * z))
        r = (p - y) / n
        gw = X.T @ r
        val = np.mean(np.logaddexp(0, z) - y * z) + lam * (u.sum() + v.sum())
        return val, np.concatenate([gw + lam, -gw + lam, [r.sum()]])

    bounds = [(0, None)] * (2 * d) + [(None, None)]
    res = minimize(f, np.zeros(2 * d + 1), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-10})
    return res.fun


def test_filter_examples():
    X = np.zeros((100, 3), dtype=np.uint8)
    X[:50, 1] = 1
    X[:14, 2] = 1  # 86 zeros
    assert near_constant_filter(X, 0.85) == [1]
    with pytest.raises(EmptyMatrix):
        near_constant_filter(np.zeros((0, 3)))


def test_filter_threshold_is_exclusive():
    X = np.zeros((100, 1), dtype=np.uint8)
    X[:15] = 1  # majority exactly 85
    assert near_constant_filter(X, 0.85) == []
    X[:16] = 1
    assert near_constant_filter(X, 0.85) == [0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.5, 1.0), st.floats(0.5, 1.0))
def test_filter_monotone_in_threshold(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    X = random_binary(np.random.default_rng(seed), 30, 12, p=0.2)
    kept_lo = set(near_constant_filter(X, lo))
    kept_hi = near_constant_filter(X, hi)
    assert kept_lo <= set(kept_hi)
    assert kept_hi == sorted(kept_hi)


def test_zero_point_gives_all_zero(rng):
    X = random_binary(rng, 60, 8)
    y = labels_with_both(rng, 60)
    lam = zero_point_lambda(X, y)
    res = l1_logistic_select(X, y, lambda_=lam * 1.0001)
    assert res.kept_columns == ()
    assert math.isclose(res.intercept, math.log(y.mean() / (1 - y.mean())), abs_tol=1e-9)
    just_below = l1_logistic_select(X, y, lambda_=lam * 0.9)
    assert len(just_below.kept_columns) >= 1


def test_perfect_column_kept_positive_and_matches_brute_force():
    y = np.array([1, 1, 1, 0, 0, 0, 0, 1, 0, 0], dtype=float)
    X = np.column_stack([y, np.array([1, 0, 1, 0, 1, 0, 1, 0, 1, 0])]).astype(float)
    lam = 0.01
    res = l1_logistic_select(X, y, lambda_=lam)
    assert 0 in res.kept_columns and res.weight_of(0) > 0
    # brute force over the perfect column's weight and the intercept, other weight fixed at the solution
    w2 = res.weight_of(1)
    grid_w = np.linspace(0, 15, 601)
    grid_b = np.linspace(-10, 5, 601)
    W, B = np.meshgrid(grid_w, grid_b)
    Z = B[..., None] + W[..., None] * X[:, 0] + w2 * X[:, 1]
    obj = np.mean(np.logaddexp(0, Z) - y * Z, axis=-1) + lam * (np.abs(W) + abs(w2))
    ours = objective(X, y, res.full_weights, res.intercept, lam)
    assert ours <= obj.min() + 1e-9


def test_lambda_zero_gradient_vanishes(rng):
    X = rng.normal(size=(10, 3))
    y = np.array([1, 0, 1, 0, 0, 1, 1, 0, 1, 0], dtype=float)
    w, b, _, converged = l1_logistic_fit(X, y, 0.0, tolerance=1e-8)
    g, gb = smooth_gradient(X, y, w, b)
    assert converged
    assert np.linalg.norm(np.append(g, gb)) <= 1e-6


@pytest.mark.parametrize("seed", range(8))
def test_matches_independent_solver(seed):
    rng = np.random.default_rng(seed)
    X = random_binary(rng, 80, 10)
    y = labels_with_both(rng, 80).astype(float)
    y[X[:, 0] == 1] = (rng.random((X[:, 0] == 1).sum()) < 0.8)
    for lam in (0.002, 0.02):
        res = l1_logistic_select(X, y, lambda_=lam)
        ours = objective(X, y, res.full_weights, res.intercept, lam)
        assert ours <= oracle_fit(X, y, lam) + 1e-7
        assert kkt_violation(X, y, res.full_weights, res.intercept, lam) <= 1e-4


def test_objective_trace_non_increasing(rng):
    X = random_binary(rng, 120, 25)
    y = labels_with_both(rng, 120)
    for lam in LAMBDA_GRID:
        res = l1_logistic_select(X, y, lambda_=lam)
        diffs = np.diff(res.objective_trace)
        assert (diffs <= 1e-9).all()
        assert res.kept_columns == tuple(sorted(res.kept_columns))


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        l1_logistic_select(np.ones((4, 2)), np.zeros(4), lambda_=0.1)


def test_iteration_cap_flags_result(rng):
    X = random_binary(rng, 50, 6)
    y = labels_with_both(rng, 50)
    with pytest.warns(ConvergenceWarning):
        res = l1_logistic_select(X, y, SelectionConfig(max_iterations=1, tolerance=1e-14), lambda_=1e-4)
    assert not res.converged


def test_select_features_indexes_original_columns(small_matrix):
    X, y = small_matrix.X, small_matrix.labels
    res = select_features(X, y, SelectionConfig(lambda_=0.01))
    filtered = set(near_constant_filter(X))
    assert set(res.kept_columns) <= filtered
    assert res.full_weights.shape == (X.shape[1],)
    for c, w in zip(res.kept_columns, res.weights):
        assert res.full_weights[c] == w
    names = {small_matrix.feature_space.descriptors[c].name for c in res.kept_columns}
    assert "cardiac arrest" in names


def test_choose_lambda_is_from_grid_and_deterministic(small_matrix):
    X, y = small_matrix.X[:, near_constant_filter(small_matrix.X)], small_matrix.labels
    a = choose_lambda(X, y, cv_k=3, seed=1)
    assert a in LAMBDA_GRID
    assert a == choose_lambda(X, y, cv_k=3, seed=1)


def test_determinism(small_matrix):
    cfg = SelectionConfig(lambda_=0.001)
    a = select_features(small_matrix.X, small_matrix.labels, cfg)
    b = select_features(small_matrix.X, small_matrix.labels, cfg)
    assert a == b and a.objective_trace == b.objective_trace


def test_no_warning_on_easy_fit(rng):
    X = random_binary(rng, 40, 5)
    y = labels_with_both(rng, 40)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        l1_logistic_select(X, y, lambda_=0.01)
