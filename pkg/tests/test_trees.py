import math
from collections import Counter

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarescreen.cohort import Label
from rarescreen.errors import DimensionMismatch, EmptyCounts, EmptyMatrix, NoUsefulStump, SingleClass
from rarescreen.trees import (
    AdaBoostModel,
    Decision,
    ForestModel,
    Leaf,
    adaboost_rounds,
    best_split,
    ensemble_predict,
    fit_adaboost,
    fit_decision_tree,
    fit_forest,
    fit_tree,
    impurity,
    stump_errors,
    tree_depth,
    tree_predict,
)

from conftest import labels_with_both, random_binary

mpmath.mp.dps = 50


def exact_impurity(neg, pos, criterion):
    total = neg + pos
    if total == 0:
        return mpmath.mpf(0)
    ps = [mpmath.mpf(neg) / total, mpmath.mpf(pos) / total]
    if criterion == "gini":
        return 1 - sum(p * p for p in ps)
    return -sum(p * mpmath.log(p, 2) for p in ps if p > 0)


def split_oracle(X, y, criterion):
    """Enumerate every column; exact ties resolve to the lowest column."""
    y = [int(v) for v in y]
    n = len(y)
    parent = exact_impurity(n - sum(y), sum(y), criterion)
    best = None
    for j in range(X.shape[1]):
        left = [y[i] for i in range(n) if X[i, j] == 0]
        right = [y[i] for i in range(n) if X[i, j] == 1]
        child = sum(
            mpmath.mpf(len(part)) / n * exact_impurity(len(part) - sum(part), sum(part), criterion)
            for part in (left, right)
        )
        gain = parent - child
        if best is None or gain - best[1] > mpmath.mpf(10) ** -30:
            best = (j, gain)
    if best[1] <= mpmath.mpf(10) ** -30:
        return None
    return best


def test_impurity_examples():
    assert impurity((1, 1), "gini") == 0.5
    assert impurity((5, 0), "entropy") == 0
    assert abs(impurity((3, 1), "entropy") - 0.8112781245) <= 1e-9
    with pytest.raises(EmptyCounts):
        impurity((0, 0))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50))
def test_impurity_bounds(neg, pos):
    if neg + pos == 0:
        return
    g, e = impurity((neg, pos), "gini"), impurity((neg, pos), "entropy")
    assert 0 <= g <= 0.5 + 1e-15 and 0 <= e <= 1 + 1e-15
    assert (g == 0) == (neg == 0 or pos == 0) == (e == 0)


def test_best_split_finds_label_column():
    rng = np.random.default_rng(3)
    y = labels_with_both(rng, 30)
    X = random_binary(rng, 30, 6)
    X[:, 4] = y
    feat, gain = best_split(X, y)
    assert feat == 4
    assert math.isclose(gain, impurity((30 - y.sum(), y.sum()), "gini"), abs_tol=1e-12)


def test_best_split_constant_and_ties():
    y = np.array([0, 1, 0, 1])
    assert best_split(np.ones((4, 3)), y) is None
    X = np.zeros((4, 10), dtype=np.uint8)
    X[:, 3] = y
    X[:, 8] = y
    assert best_split(X, y)[0] == 3
    assert best_split(X, y, candidate_features=[8, 3])[0] == 3
    with pytest.raises(EmptyMatrix):
        best_split(np.zeros((0, 2)), np.zeros(0))


@pytest.mark.parametrize("criterion", ["gini", "entropy"])
def test_best_split_matches_enumeration(criterion):
    rng = np.random.default_rng(11)
    for _ in range(40):
        X = random_binary(rng, 20, 8, p=rng.uniform(0.2, 0.6))
        X[:, rng.integers(8)] = X[:, rng.integers(8)]  # plant duplicate columns for ties
        y = labels_with_both(rng, 20)
        got, want = best_split(X, y, criterion=criterion), split_oracle(X, y, criterion)
        if want is None:
            assert got is None
        else:
            assert got[0] == want[0]
            assert abs(got[1] - float(want[1])) <= 1e-12


def check_tree(node, X, y, rows, used=()):
    if isinstance(node, Leaf):
        pos = int(y[rows].sum())
        assert node.class_counts == (len(rows) - pos, pos)
        return
    assert node.feature not in used
    col = X[rows, node.feature]
    check_tree(node.absent, X, y, rows[col == 0], used + (node.feature,))
    check_tree(node.present, X, y, rows[col == 1], used + (node.feature,))


def test_tree_perfect_feature_depth_one():
    rng = np.random.default_rng(5)
    y = labels_with_both(rng, 25)
    X = random_binary(rng, 25, 5)
    X[:, 2] = y
    root = fit_tree(X, y)
    assert tree_depth(root) == 1 and root.feature == 2
    assert np.array_equal(tree_predict(root, X), y)


def test_single_class_tree_is_leaf():
    root = fit_tree(np.ones((4, 2)), np.ones(4))
    assert root == Leaf(1, (0, 4))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["gini", "entropy"]))
def test_tree_invariants(seed, criterion):
    rng = np.random.default_rng(seed)
    X = random_binary(rng, 30, 6)
    y = labels_with_both(rng, 30)
    root = fit_tree(X, y, criterion)
    check_tree(root, X, y, np.arange(30))
    assert fit_tree(X, y, criterion) == root

    # growth stops only at pure nodes or where no split lowers impurity
    def leaves(node, rows):
        if isinstance(node, Leaf):
            yield rows
            return
        col = X[rows, node.feature]
        yield from leaves(node.absent, rows[col == 0])
        yield from leaves(node.present, rows[col == 1])

    for rows in leaves(root, np.arange(30)):
        pos = y[rows].sum()
        assert pos in (0, len(rows)) or best_split(X[rows], y[rows], criterion=criterion) is None


def test_forest_degenerate_equals_tree():
    rng = np.random.default_rng(8)
    X = random_binary(rng, 40, 7)
    y = labels_with_both(rng, 40)
    forest = fit_forest(X, y, 1, seed=3, bootstrap=False, max_features=None)
    Q = random_binary(rng, 30, 7)
    assert np.array_equal(forest.predict(Q), tree_predict(fit_tree(X, y), Q))


def test_forest_mode_and_even_split():
    pos, neg = Leaf(1, (0, 1)), Leaf(0, (1, 0))
    f3 = ForestModel((pos, pos, neg), 2, 3, "gini", 0, None)
    assert ensemble_predict(f3, np.zeros(2)) is Label.POSITIVE
    f2 = ForestModel((pos, neg), 2, 2, "gini", 0, None)
    assert ensemble_predict(f2, np.zeros(2)) is Label.NEGATIVE


def test_forest_matches_hand_tally():
    rng = np.random.default_rng(21)
    X = random_binary(rng, 60, 16)
    y = labels_with_both(rng, 60)
    forest = fit_forest(X, y, 15, seed=4)
    assert len(forest.trees) == 15 and forest.feature_subsample_size == 4
    Q = random_binary(rng, 10, 16)
    for q, got in zip(Q, forest.predict(Q)):
        tally = Counter(int(tree_predict(t, q[None, :])[0]) for t in forest.trees)
        assert got == (1 if tally[1] > tally[0] else 0)


def test_forest_deterministic_and_seed_sensitive():
    rng = np.random.default_rng(2)
    X = random_binary(rng, 50, 20)
    y = labels_with_both(rng, 50)
    a = fit_forest(X, y, 10, seed=9)
    assert a == fit_forest(X, y, 10, seed=9)
    assert a.trees != fit_forest(X, y, 10, seed=10).trees


def four_point():
    X = np.array([[0], [1], [1], [0]])
    y = np.array([1, 1, 1, 0])
    return X, y


def test_adaboost_first_round_fixture():
    X, y = four_point()
    first = next(adaboost_rounds(X, y, 3))
    assert first.feature == 0 and first.polarity == 1
    assert abs(first.error - 0.25) <= 1e-12
    assert abs(first.alpha - 0.5 * math.log(3)) <= 1e-12
    assert np.allclose(first.weights, [0.5, 1 / 6, 1 / 6, 1 / 6], atol=1e-9, rtol=0)


def test_adaboost_separable_stops_at_zero_error():
    X = np.array([[1, 0], [1, 1], [0, 1], [0, 0]])
    y = np.array([1, 1, 0, 0])
    model = fit_adaboost(X, y, 10)
    assert len(model.stumps) == 1 and model.training_errors == (0.0,)
    assert math.isclose(model.alphas[0], 0.5 * math.log((1 - 1e-10) / 1e-10))
    assert np.array_equal(model.predict(X), y)


def test_adaboost_no_useful_stump():
    X = np.array([[1], [1], [0], [0]])
    y = np.array([1, 0, 1, 0])
    with pytest.raises(NoUsefulStump):
        fit_adaboost(X, y, 5)
    with pytest.raises(SingleClass):
        fit_adaboost(X, np.ones(4), 5)


def test_adaboost_stops_when_chance_reached():
    # after one round the only remaining stumps sit at exactly 0.5
    X, y = four_point()
    model = fit_adaboost(X, y, 50)
    assert all(e < 0.5 for e in model.training_errors)
    assert len(model.stumps) == len(model.alphas) == len(model.training_errors)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_adaboost_weight_law_and_bound(seed):
    rng = np.random.default_rng(seed)
    X = random_binary(rng, 30, 5).astype(float)
    y = labels_with_both(rng, 30)
    s = np.where(y == 1, 1.0, -1.0)
    bound = 1.0
    score = np.zeros(30)
    for r in adaboost_rounds(X, y, 15):
        assert abs(r.weights.sum() - 1) <= 1e-12
        assert 0 <= r.error <= 0.5
        e = max(r.error, 1e-10)
        assert abs(r.alpha - 0.5 * math.log((1 - e) / e)) <= 1e-12
        if r.error > 0:
            # the stump just used is exactly at chance under the weights it induced
            err = stump_errors(X, s, r.weights)[2 * r.feature + (0 if r.polarity == 1 else 1)]
            assert abs(err - 0.5) <= 1e-9
        bound *= 2 * math.sqrt(r.error * (1 - r.error))
        score += r.alpha * r.polarity * (2 * X[:, r.feature] - 1)
        train_err = np.mean((score > 0).astype(int) != y)
        assert train_err <= bound + 1e-12


def test_ensemble_predict_variants():
    assert ensemble_predict(Leaf(1, (0, 3)), np.zeros(4)) is Label.POSITIVE
    stump = AdaBoostModel(((0, 1),), (1.0,), (0.2,), 2)
    assert ensemble_predict(stump, np.array([1, 0])) is Label.POSITIVE
    assert ensemble_predict(stump, np.array([0, 0])) is Label.NEGATIVE
    assert ensemble_predict(AdaBoostModel((), (), (), 2), np.zeros(2)) is Label.NEGATIVE
    with pytest.raises(DimensionMismatch):
        ensemble_predict(Decision(5, Leaf(0, (1, 0)), Leaf(1, (0, 1))), np.zeros(3))
    model = fit_decision_tree(np.array([[0], [1]]), np.array([0, 1]))
    with pytest.raises(DimensionMismatch):
        model.predict(np.zeros((1, 2)))
