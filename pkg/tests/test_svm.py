import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarescreen.cohort import Label
from rarescreen.errors import ConvergenceWarning, DimensionMismatch, SingleClass
from rarescreen.svm import (
    KernelSpec,
    SvmModel,
    dual_objective,
    kernel_eval,
    kernel_matrix,
    kkt_residual,
    smo_fit,
    smo_solve,
    svm_decision,
)
from rarescreen.vectorizer import SparseVector

LINEAR = KernelSpec("linear")


def random_feasible(rng, y, C, size):
    """Uniform box samples rescaled so that sum(alpha * y) = 0 while staying in [0, C]."""
    A = rng.random((size, len(y))) * C
    pos, neg = y > 0, y < 0
    sp, sn = A[:, pos].sum(1), A[:, neg].sum(1)
    scale_p = np.where(sp > sn, sn / np.where(sp > 0, sp, 1), 1.0)
    scale_n = np.where(sn > sp, sp / np.where(sn > 0, sn, 1), 1.0)
    A[:, pos] *= scale_p[:, None]
    A[:, neg] *= scale_n[:, None]
    return A


def test_kernel_examples():
    a, b = SparseVector(6, (0, 1, 2)), SparseVector(6, (3, 4))
    assert kernel_eval(a, a, KernelSpec("rbf", 0.5)) == 1.0
    assert kernel_eval(a, b, LINEAR) == 0.0
    x, z = SparseVector(6, (0, 1)), SparseVector(6, (2, 3))
    assert abs(kernel_eval(x, z, KernelSpec("rbf", 0.001)) - math.exp(-0.004)) <= 1e-12
    assert abs(kernel_eval(x.to_dense(), z.to_dense(), KernelSpec("rbf", 0.001)) - 0.9960079893) <= 1e-9
    with pytest.raises(DimensionMismatch):
        kernel_eval(SparseVector(3, ()), SparseVector(4, ()), LINEAR)
    with pytest.raises(ValueError):
        KernelSpec("rbf", 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_sparse_and_dense_kernels_agree(seed):
    rng = np.random.default_rng(seed)
    X = (rng.random((2, 12)) < 0.4).astype(np.uint8)
    for spec in (LINEAR, KernelSpec("rbf", 0.1)):
        sparse = kernel_eval(SparseVector.from_dense(X[0]), SparseVector.from_dense(X[1]), spec)
        assert math.isclose(sparse, kernel_matrix(X[:1], X[1:], spec)[0, 0], rel_tol=1e-12)


def test_two_point_analytic():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    m = smo_fit(X, np.array([1, 0]), c=100, spec=LINEAR, tolerance=1e-9)
    order = np.argsort(-m.support_labels)
    assert np.allclose(m.alphas[order], [0.5, 0.5], atol=1e-6)
    assert abs(m.bias) <= 1e-6
    label, margin = svm_decision(m, np.array([2.0, 0.0]))
    assert label is Label.POSITIVE and abs(margin - 2.0) <= 1e-6
    assert abs(svm_decision(m, X[0])[1] - 1.0) <= 1e-6


def test_bias_only_model():
    m = SvmModel(np.zeros((0, 2)), np.zeros(0), np.zeros(0), -0.3, LINEAR, 1.0, 2)
    label, margin = svm_decision(m, np.ones(2))
    assert label is Label.NEGATIVE and margin == -0.3


def test_single_class():
    with pytest.raises(SingleClass):
        smo_fit(np.eye(3), np.ones(3))


@pytest.mark.parametrize("seed", range(20))
def test_dual_near_optimal_against_random_feasible_points(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    X = (rng.random((n, 5)) < 0.5).astype(float)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    C = float(rng.choice([0.01, 0.1, 1, 10, 100]))
    spec = KernelSpec("rbf", 0.5) if seed % 2 else LINEAR
    K = kernel_matrix(X, X, spec)
    sol = smo_solve(K, y, C, tolerance=1e-6)
    assert sol.converged
    assert (sol.alpha >= 0).all() and (sol.alpha <= C).all()
    assert abs(sol.alpha @ y) <= 1e-8
    assert kkt_residual(sol.alpha, K, y, C) <= 1e-6
    ours = dual_objective(sol.alpha, K, y)
    samples = random_feasible(rng, y, C, 10_000)
    assert np.allclose(samples @ y, 0, atol=1e-9)
    Q = (y[:, None] * y[None, :]) * K
    sampled = samples.sum(1) - 0.5 * np.einsum("si,ij,sj->s", samples, Q, samples)
    assert ours >= sampled.max() - 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.01, 0.1, 1.0, 10.0, 100.0]), st.booleans())
def test_converged_models_are_feasible(seed, C, rbf):
    rng = np.random.default_rng(seed)
    X = (rng.random((25, 8)) < 0.4).astype(float)
    y = (rng.random(25) < 0.4).astype(int)
    y[0], y[1] = 1, 0
    spec = KernelSpec("rbf", 0.001) if rbf else LINEAR
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        m = smo_fit(X, y, C, spec)
    if m.converged:
        assert (m.alphas > 0).all() and (m.alphas <= C).all()
        assert abs(m.alphas @ m.support_labels) <= 1e-8
        assert m.kkt_residual <= 1e-3


def test_iteration_cap_flags_model():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = (rng.random(40) < 0.5).astype(int)
    y[0], y[1] = 1, 0
    with pytest.warns(ConvergenceWarning):
        m = smo_fit(X, y, 100, LINEAR, tolerance=1e-12, max_passes=0)
    assert not m.converged


def test_separable_data_classified():
    rng = np.random.default_rng(4)
    y = (rng.random(40) < 0.5).astype(int)
    y[0], y[1] = 1, 0
    X = (rng.random((40, 6)) < 0.3).astype(float)
    X[:, 0] = y
    for spec in (LINEAR, KernelSpec("rbf", 0.5)):
        m = smo_fit(X, y, 10, spec)
        assert np.array_equal(m.predict(X), y)
