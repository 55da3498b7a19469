"""F1 scoring, stratified k-fold cross-validation and exhaustive grid search."""

from __future__ import annotations

import enum
import itertools
import logging
import math
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basic_classifiers import Weighting, knn_fit, nb_fit
from .errors import ConvergenceWarning, FoldError, ScreeningError, TooFewPerClass
from .svm import KernelKind, KernelSpec, smo_fit
from .trees import Criterion, fit_adaboost, fit_decision_tree, fit_forest
from .vectorizer import DesignMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> ConfusionCounts:
        t = np.asarray(y_true) == 1
        p = np.asarray(y_pred) == 1
        return cls(int((t & p).sum()), int((~t & p).sum()), int((t & ~p).sum()), int((~t & ~p).sum()))

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def f1_score(counts: ConfusionCounts) -> float:
    """Harmonic mean of precision and recall; zero denominators give 0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# ----------------------------------------------------------------------------
# Folds


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def splits(self):
        for f in range(self.k):
            yield self.train_indices(f), self.test_indices(f)


def stratified_kfold(labels, k: int = 10, seed: int = 0) -> FoldAssignment:
    """Shuffle each class with ``seed`` and deal its rows round-robin into ``k`` folds.

    Dealing continues across classes (positives first), so per-fold class
    counts differ by at most one and fold sizes stay balanced.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.full(len(labels), -1, dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise TooFewPerClass("positive" if cls == 1 else "negative", len(idx), k)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    if (fold_of < 0).any():
        raise ValueError("labels must be 0/1")
    return FoldAssignment(fold_of, k, seed)


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


# ----------------------------------------------------------------------------
# Algorithms and grids


class Algorithm(str, enum.Enum):
    # declaration order is the reporting order and the overall-best tie order
    KNN = "knn"
    NAIVE_BAYES = "naive_bayes"
    SVM = "svm"
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"
    ADABOOST = "adaboost"

    @property
    def title(self):
        return _TITLES[self]


_TITLES = {
    Algorithm.KNN: "K Nearest Neighbor",
    Algorithm.NAIVE_BAYES: "Naive Bayes",
    Algorithm.SVM: "SVM",
    Algorithm.DECISION_TREE: "Decision Tree",
    Algorithm.RANDOM_FOREST: "Random Forest",
    Algorithm.ADABOOST: "AdaBoost",
}


@dataclass(frozen=True)
class ModelConfig:
    """One grid cell: an algorithm plus its hyper-parameter values."""

    algorithm: Algorithm
    params: tuple[tuple[str, object], ...] = ()

    @property
    def kwargs(self) -> dict:
        return dict(self.params)

    def label(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.params) or "-"

    def dedup_key(self):
        """Configurations that must train identical models share a key (linear SVM ignores gamma)."""
        kw = self.kwargs
        if self.algorithm is Algorithm.SVM and kw.get("kernel") == "linear":
            return (self.algorithm, tuple((k, v) for k, v in self.params if k != "gamma"))
        return (self.algorithm, self.params)

    def fit(self, X, y, seed: int = 0):
        kw = self.kwargs
        a = self.algorithm
        if a is Algorithm.KNN:
            return knn_fit(X, y, kw.get("k", 1), Weighting(kw.get("weights", "uniform")))
        if a is Algorithm.NAIVE_BAYES:
            return nb_fit(X, y, kw.get("alpha", 1.0))
        if a is Algorithm.SVM:
            spec = KernelSpec(KernelKind(kw.get("kernel", "linear")), kw.get("gamma", 1e-3))
            return smo_fit(X, y, kw.get("C", 1.0), spec, kw.get("tolerance", 1e-3), kw.get("max_passes", 100))
        if a is Algorithm.DECISION_TREE:
            return fit_decision_tree(X, y, Criterion(kw.get("criterion", "gini")))
        if a is Algorithm.RANDOM_FOREST:
            return fit_forest(X, y, kw.get("n_estimators", 10), Criterion(kw.get("criterion", "gini")), seed)
        if a is Algorithm.ADABOOST:
            return fit_adaboost(X, y, kw.get("n_estimators", 50))
        raise ValueError(f"unknown algorithm {a}")


@dataclass(frozen=True)
class ParamGrid:
    algorithm: Algorithm
    axes: tuple[tuple[str, tuple], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "axes", tuple((name, tuple(vals)) for name, vals in self.axes))
        if self.size < 1:
            raise ValueError(f"grid for {self.algorithm.value} is empty")

    @property
    def size(self) -> int:
        return math.prod(len(v) for _, v in self.axes)

    def configs(self) -> list[ModelConfig]:
        names = [n for n, _ in self.axes]
        return [
            ModelConfig(self.algorithm, tuple(zip(names, combo)))
            for combo in itertools.product(*(v for _, v in self.axes))
        ]


DEFAULT_GRIDS = {
    Algorithm.KNN: ParamGrid(Algorithm.KNN, (("k", (1, 2, 3)), ("weights", ("uniform", "distance")))),
    Algorithm.NAIVE_BAYES: ParamGrid(Algorithm.NAIVE_BAYES, ()),
    Algorithm.SVM: ParamGrid(
        Algorithm.SVM,
        (("C", (0.01, 0.1, 1, 10, 100)), ("kernel", ("linear", "rbf")), ("gamma", (1e-3, 1e-4))),
    ),
    Algorithm.DECISION_TREE: ParamGrid(Algorithm.DECISION_TREE, (("criterion", ("gini", "entropy")),)),
    Algorithm.RANDOM_FOREST: ParamGrid(
        Algorithm.RANDOM_FOREST, (("n_estimators", (10, 15, 100)), ("criterion", ("gini", "entropy")))
    ),
    Algorithm.ADABOOST: ParamGrid(Algorithm.ADABOOST, (("n_estimators", (10, 15, 100)),)),
}


# ----------------------------------------------------------------------------
# Cross-validation


@dataclass(frozen=True)
class CVResult:
    fold_f1: tuple[float, ...]
    fold_confusion: tuple[ConfusionCounts, ...]
    unconverged: int = 0

    @property
    def mean_f1(self) -> float:
        return float(sum(self.fold_f1) / len(self.fold_f1))

    @property
    def confusion(self) -> ConfusionCounts:
        return sum(self.fold_confusion, ConfusionCounts())


Selector = Callable[[np.ndarray, np.ndarray], Sequence[int]]


def _unpack(data):
    if isinstance(data, DesignMatrix):
        return data.X, data.labels
    X, y = data
    return np.asarray(X), np.asarray(y)


def cross_validate(
    data,
    learner,
    k: int = 10,
    seed: int = 0,
    folds: FoldAssignment | None = None,
    selector: Selector | None = None,
    fold_columns: Sequence[Sequence[int]] | None = None,
) -> CVResult:
    """Fit on k-1 folds, score F1 on the held-out fold, for every fold.

    ``learner`` is anything with ``fit(X, y, seed)`` returning an object with
    ``predict(X)``.  ``selector(X_train, y_train)`` (or precomputed
    ``fold_columns``) restricts columns per fold using training rows only.
    """
    X, y = _unpack(data)
    folds = folds or stratified_kfold(y, k, seed)
    scores, confusions, unconverged = [], [], 0
    for f, (train, test) in enumerate(folds.splits()):
        try:
            if fold_columns is not None:
                cols = list(fold_columns[f])
            elif selector is not None:
                cols = list(selector(X[train], y[train]))
            else:
                cols = None
            Xtr = X[train] if cols is None else X[np.ix_(train, cols)]
            Xte = X[test] if cols is None else X[np.ix_(test, cols)]
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ConvergenceWarning)
                model = learner.fit(Xtr, y[train], fold_seed(folds.seed, f))
                pred = model.predict(Xte)
            unconverged += sum(issubclass(w.category, ConvergenceWarning) for w in caught)
        except ScreeningError as exc:
            raise FoldError(f, exc) from exc
        cm = ConfusionCounts.from_predictions(y[test], pred)
        confusions.append(cm)
        scores.append(f1_score(cm))
    return CVResult(tuple(scores), tuple(confusions), unconverged)


# ----------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class ConfigResult:
    config: ModelConfig
    cv: CVResult

    @property
    def mean_f1(self):
        return self.cv.mean_f1


@dataclass(frozen=True)
class EvalReport:
    algorithm: Algorithm
    k: int
    seed: int
    per_config: tuple[ConfigResult, ...]
    evaluated: int = field(default=0)

    @property
    def best(self) -> ConfigResult:
        # max() keeps the first maximal element: enumeration order breaks ties
        return max(self.per_config, key=lambda r: r.mean_f1)

    @property
    def best_config(self) -> ModelConfig:
        return self.best.config

    @property
    def best_mean_f1(self) -> float:
        return self.best.mean_f1

    @property
    def unconverged(self) -> int:
        return sum(r.cv.unconverged for r in self.per_config)

    def table_rows(self) -> list[list[str]]:
        rows = []
        for r in self.per_config:
            cm = r.cv.confusion
            rows.append(
                [self.algorithm.value, r.config.label()]
                + [repr(s) for s in r.cv.fold_f1]
                + [repr(r.mean_f1), str(cm.tp), str(cm.fp), str(cm.fn), str(cm.tn)]
            )
        return rows

    def to_tsv(self, header: bool = True) -> str:
        lines = []
        if header:
            lines.append("\t".join(report_header(self.k)))
        lines += ["\t".join(r) for r in self.table_rows()]
        return "\n".join(lines) + "\n"


def report_header(k: int) -> list[str]:
    return ["algorithm", "config"] + [f"fold_{i + 1}" for i in range(k)] + ["mean_f1", "tp", "fp", "fn", "tn"]


def _run_cell(args):
    X, y, config, folds, fold_columns = args
    return cross_validate((X, y), config, folds=folds, fold_columns=fold_columns)


def grid_search(
    data,
    grid: ParamGrid,
    k: int = 10,
    seed: int = 0,
    folds: FoldAssignment | None = None,
    selector: Selector | None = None,
    fold_columns: Sequence[Sequence[int]] | None = None,
    n_jobs: int = 1,
) -> EvalReport:
    """Cross-validate every configuration of ``grid`` on one shared fold assignment.

    Configurations guaranteed to train identical models (linear SVM at
    different gammas) are fitted once and reported under each cell.
    Results do not depend on ``n_jobs``.
    """
    X, y = _unpack(data)
    folds = folds or stratified_kfold(y, k, seed)
    if fold_columns is None and selector is not None:
        fold_columns = [list(selector(X[tr], y[tr])) for tr, _ in folds.splits()]
    configs = grid.configs()
    unique = {}
    for c in configs:
        unique.setdefault(c.dedup_key(), c)
    tasks = [(X, y, c, folds, fold_columns) for c in unique.values()]
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    by_key = dict(zip(unique, results))
    per_config = tuple(ConfigResult(c, by_key[c.dedup_key()]) for c in configs)
    if len(per_config) != grid.size:
        raise AssertionError(f"evaluated {len(per_config)} configurations, grid has {grid.size}")
    log.info("%s: evaluated %d configurations (%d distinct fits)", grid.algorithm.value, len(per_config), len(tasks))
    return EvalReport(grid.algorithm, folds.k, folds.seed, per_config, evaluated=len(per_config))
