"""Decision trees on binary features, bagged random forests, and AdaBoost over stumps."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from ._arrays import as_query_matrix, check_both_classes
from .cohort import Label
from .errors import DimensionMismatch, EmptyCounts, EmptyMatrix, NoUsefulStump
from .vectorizer import SparseVector

# gains closer than this to the best count as ties (lowest column wins)
GAIN_TIE_TOL = 1e-12
EPS_MIN = 1e-10


class Criterion(str, enum.Enum):
    GINI = "gini"
    ENTROPY = "entropy"


def impurity(class_counts, criterion: Criterion | str = Criterion.GINI) -> float:
    """Gini (1 - sum p^2) or entropy (-sum p log2 p) of a two-class count pair."""
    neg, pos = class_counts
    if neg < 0 or pos < 0:
        raise ValueError("counts must be >= 0")
    total = neg + pos
    if total == 0:
        raise EmptyCounts("impurity of an empty node")
    criterion = Criterion(criterion)
    ps = (neg / total, pos / total)
    if criterion is Criterion.GINI:
        return 1.0 - sum(p * p for p in ps)
    return -sum(p * math.log2(p) for p in ps if p > 0)


def _impurity_vec(pos, total, criterion):
    """Vectorized impurity; nodes with total 0 get 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = np.where(total > 0, pos / np.maximum(total, 1), 0.0)
        p0 = np.where(total > 0, 1.0 - p1, 0.0)
        if criterion is Criterion.GINI:
            out = 1.0 - (p0 * p0 + p1 * p1)
        else:
            out = -(np.where(p0 > 0, p0 * np.log2(np.where(p0 > 0, p0, 1.0)), 0.0)
                    + np.where(p1 > 0, p1 * np.log2(np.where(p1 > 0, p1, 1.0)), 0.0))
    return np.where(total > 0, out, 0.0)


def split_gains(X, y, candidates, criterion) -> np.ndarray:
    """Weighted impurity decrease of splitting on each candidate column."""
    criterion = Criterion(criterion)
    sub = np.asarray(X)[:, candidates].astype(np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = float(len(y))
    n_pos = y.sum()
    present = sub.sum(0)
    present_pos = y @ sub
    absent = m - present
    absent_pos = n_pos - present_pos
    parent = impurity((m - n_pos, n_pos), criterion)
    child = (present / m) * _impurity_vec(present_pos, present, criterion) + (absent / m) * _impurity_vec(
        absent_pos, absent, criterion
    )
    return parent - child


def best_split(X, y, candidate_features=None, criterion=Criterion.GINI):
    """Return ``(feature, impurity_decrease)`` of the best split, or None.

    Ties (within 1e-12) go to the lowest column id; a best decrease that is
    not positive yields None.
    """
    X = np.asarray(X)
    if X.shape[0] == 0:
        raise EmptyMatrix("best_split needs rows")
    cands = np.arange(X.shape[1]) if candidate_features is None else np.sort(np.asarray(candidate_features, dtype=int))
    if cands.size == 0:
        return None
    gains = split_gains(X, y, cands, criterion)
    top = gains.max()
    if top <= GAIN_TIE_TOL:
        return None
    j = int(np.flatnonzero(gains >= top - GAIN_TIE_TOL)[0])
    return int(cands[j]), float(gains[j])


@dataclass(frozen=True)
class Leaf:
    label: int
    class_counts: tuple[int, int]  # (negative, positive)


@dataclass(frozen=True)
class Decision:
    feature: int
    absent: Leaf | Decision
    present: Leaf | Decision


TreeNode = Leaf | Decision


def _leaf(y) -> Leaf:
    pos = int(np.sum(y))
    neg = len(y) - pos
    return Leaf(1 if pos > neg else 0, (neg, pos))


def _grow(X, y, rows, criterion, n_sub, rng) -> TreeNode:
    yr = y[rows]
    pos = int(yr.sum())
    if pos == 0 or pos == len(rows):
        return _leaf(yr)
    d = X.shape[1]
    if n_sub is not None and n_sub < d:
        cands = np.sort(rng.choice(d, size=n_sub, replace=False))
    else:
        cands = None
    split = best_split(X[rows], yr, cands, criterion)
    if split is None:
        return _leaf(yr)
    f = split[0]
    col = X[rows, f]
    return Decision(
        f,
        _grow(X, y, rows[col == 0], criterion, n_sub, rng),
        _grow(X, y, rows[col == 1], criterion, n_sub, rng),
    )


def fit_tree(X, y, criterion=Criterion.GINI, feature_subsample_size=None, rng=None) -> TreeNode:
    """Grow a tree until every leaf is pure or no split lowers impurity.

    With ``feature_subsample_size`` each split only considers that many
    columns, drawn without replacement from ``rng``.
    """
    X = np.asarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("fit_tree needs at least one row")
    if feature_subsample_size is not None and rng is None:
        rng = np.random.default_rng(0)
    return _grow(X, y, np.arange(X.shape[0]), Criterion(criterion), feature_subsample_size, rng)


def _route(node, X, rows, out):
    if isinstance(node, Leaf):
        out[rows] = node.label
        return
    col = X[rows, node.feature]
    _route(node.absent, X, rows[col == 0], out)
    _route(node.present, X, rows[col != 0], out)


def tree_predict(node: TreeNode, X) -> np.ndarray:
    X = np.asarray(X)
    out = np.zeros(X.shape[0], dtype=np.int8)
    _route(node, X, np.arange(X.shape[0]), out)
    return out


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.absent), tree_depth(node.present))


def max_feature_index(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return -1
    return max(node.feature, max_feature_index(node.absent), max_feature_index(node.present))


@dataclass(frozen=True)
class TreeModel:
    root: TreeNode
    dimension: int
    criterion: Criterion = Criterion.GINI

    def predict(self, X) -> np.ndarray:
        Q, _ = as_query_matrix(X, self.dimension)
        return tree_predict(self.root, Q)


def fit_decision_tree(X, y, criterion=Criterion.GINI) -> TreeModel:
    X = np.asarray(X)
    return TreeModel(fit_tree(X, y, criterion), X.shape[1], Criterion(criterion))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeNode, ...]
    dimension: int
    n_estimators: int
    criterion: Criterion
    seed: int
    feature_subsample_size: int | None

    def votes(self, X) -> np.ndarray:
        Q, _ = as_query_matrix(X, self.dimension)
        return np.sum([tree_predict(t, Q) for t in self.trees], axis=0, dtype=np.int64)

    def predict(self, X) -> np.ndarray:
        # strict majority; an even split goes negative
        return (2 * self.votes(X) > len(self.trees)).astype(np.int8)


def fit_forest(
    X, y, n_estimators=10, criterion=Criterion.GINI, seed=0, bootstrap=True, max_features="sqrt"
) -> ForestModel:
    """Bagged trees with per-split feature subsampling.

    Tree ``t`` draws its bootstrap sample and split candidates from its own
    child of ``SeedSequence(seed)``, so results do not depend on fit order.
    ``max_features`` is "sqrt" (ceil of sqrt(d)), an int, or None for all.
    """
    X = np.asarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("fit_forest needs at least one row")
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    n, d = X.shape
    if max_features == "sqrt":
        n_sub = max(1, math.ceil(math.sqrt(d)))
    else:
        n_sub = max_features
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child)
        if bootstrap:
            idx = rng.integers(0, n, size=n)
            Xt, yt = X[idx], y[idx]
        else:
            Xt, yt = X, y
        trees.append(fit_tree(Xt, yt, criterion, n_sub, rng))
    return ForestModel(tuple(trees), d, n_estimators, Criterion(criterion), int(seed), n_sub)


# ----------------------------------------------------------------------------
# AdaBoost


@dataclass(frozen=True)
class BoostRound:
    feature: int
    polarity: int
    error: float
    alpha: float
    weights: np.ndarray  # sample weights after this round's update


@dataclass(frozen=True)
class AdaBoostModel:
    stumps: tuple[tuple[int, int], ...]  # (feature, polarity)
    alphas: tuple[float, ...]
    training_errors: tuple[float, ...]
    dimension: int

    def decision_function(self, X) -> np.ndarray:
        Q, _ = as_query_matrix(X, self.dimension)
        score = np.zeros(len(Q))
        for (f, pol), a in zip(self.stumps, self.alphas):
            score += a * pol * (2.0 * Q[:, f] - 1.0)
        return score

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int8)


def stump_errors(X, s, w) -> np.ndarray:
    """Weighted error of every stump, laid out as [f0+, f0-, f1+, f1-, ...].

    A stump (f, +1) predicts positive when column f is present; (f, -1)
    predicts positive when it is absent.
    """
    wpos = np.where(s > 0, w, 0.0)
    wneg = np.where(s < 0, w, 0.0)
    absent = 1.0 - X
    err_plus = wneg @ X + wpos @ absent
    err_minus = wpos @ X + wneg @ absent
    return np.column_stack([err_plus, err_minus]).ravel()


def adaboost_rounds(X, y, n_estimators) -> Iterator[BoostRound]:
    """Run discrete AdaBoost, yielding each retained round.

    Stops after a round with zero error (alpha capped via eps=1e-10) or
    before a round whose best stump has error >= 0.5.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    check_both_classes(y, "AdaBoost")
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    s = np.where(y == 1, 1.0, -1.0)
    n = len(s)
    w = np.full(n, 1.0 / n)
    for t in range(n_estimators):
        errs = stump_errors(X, s, w)
        best = int(np.argmin(errs))
        f, pol = best // 2, 1 if best % 2 == 0 else -1
        eps = float(min(max(errs[best], 0.0), 1.0))
        if eps >= 0.5:
            if t == 0:
                raise NoUsefulStump("no stump beats chance on the first round")
            return
        e = max(eps, EPS_MIN)
        alpha = 0.5 * math.log((1.0 - e) / e)
        h = pol * (2.0 * X[:, f] - 1.0)
        w = w * np.exp(-alpha * s * h)
        w = w / w.sum()
        yield BoostRound(f, pol, eps, alpha, w)
        if eps == 0.0:
            return


def fit_adaboost(X, y, n_estimators=50) -> AdaBoostModel:
    rounds = list(adaboost_rounds(X, y, n_estimators))
    return AdaBoostModel(
        stumps=tuple((r.feature, r.polarity) for r in rounds),
        alphas=tuple(r.alpha for r in rounds),
        training_errors=tuple(r.error for r in rounds),
        dimension=np.asarray(X).shape[1],
    )


def ensemble_predict(model, x) -> Label:
    """Label for one query from a bare tree, a TreeModel, a forest or AdaBoost."""
    if isinstance(model, (Leaf, Decision)):
        dim = x.dimension if isinstance(x, SparseVector) else np.shape(x)[-1]
        if dim <= max_feature_index(model):
            raise DimensionMismatch(f"query dimension {dim} too small for tree")
        Q, _ = as_query_matrix(x, dim)
        return Label(int(tree_predict(model, Q)[0]))
    return Label(int(model.predict(x)[0]))
