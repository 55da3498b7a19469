"""Two-stage feature selection: near-constant filter, then L1 logistic regression."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceWarning, EmptyMatrix, SingleClass

LAMBDA_GRID = (0.0001, 0.001, 0.01, 0.1)


@dataclass(frozen=True)
class SelectionConfig:
    majority_threshold: float = 0.85
    lambda_: float | None = None  # None: pick from LAMBDA_GRID by cross-validation
    max_iterations: int = 1000
    tolerance: float = 1e-6

    def __post_init__(self):
        if not 0.5 < self.majority_threshold <= 1:
            raise ValueError("majority_threshold must lie in (0.5, 1]")
        if self.lambda_ is not None and self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass(frozen=True)
class SelectionResult:
    kept_columns: tuple[int, ...]
    weights: tuple[float, ...]
    intercept: float
    objective_trace: tuple[float, ...] = ()
    converged: bool = True
    lambda_: float = 0.0
    full_weights: np.ndarray = field(default=None, repr=False, compare=False)

    def weight_of(self, column: int) -> float:
        try:
            return self.weights[self.kept_columns.index(column)]
        except ValueError:
            return 0.0


def near_constant_filter(X, majority_threshold: float = 0.85) -> list[int]:
    """Columns whose majority value covers less than ``majority_threshold`` of rows."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("near_constant_filter needs a non-empty matrix")
    ones = X.sum(axis=0, dtype=np.int64)
    n = X.shape[0]
    majority = np.maximum(ones, n - ones)
    return [int(j) for j in np.flatnonzero(majority < majority_threshold * n)]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _mean_logloss(z, y):
    # mean of log(1 + e^z) - y z, written stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def smooth_gradient(X, y, w, b):
    """Gradient of the mean logistic loss w.r.t. (w, b)."""
    X = np.asarray(X, dtype=np.float64)
    r = _sigmoid(b + X @ w) - y
    return X.T @ r / X.shape[0], float(r.mean())


def zero_point_lambda(X, y) -> float:
    """Smallest penalty at which all feature weights are zero."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = y.mean() - y
    return float(np.max(np.abs(X.T @ r)) / X.shape[0]) if X.shape[1] else 0.0


def kkt_violation(X, y, w, b, lam) -> float:
    """Largest violation of the L1 logistic subgradient optimality conditions."""
    g, gb = smooth_gradient(X, y, w, b)
    viol = np.where(w == 0, np.maximum(np.abs(g) - lam, 0.0), np.abs(g + lam * np.sign(w)))
    return float(max(viol.max(initial=0.0), abs(gb)))


def _soft(x, t):
    return math.copysign(max(abs(x) - t, 0.0), x)


def _objective(z, y, w, lam):
    return _mean_logloss(z, y) + lam * float(np.abs(w).sum())


def _inner_cd(g, gb, H, hb, hbb, w, lam, sweeps=50, tol=1e-12):
    """Cyclic coordinate descent on the local quadratic model.

    Minimizes g.dw + gb db + 1/2 [dw'H dw + 2 db hb.dw + hbb db^2] + lam |w + dw|_1
    and returns the step (dw, db).
    """
    d = len(w)
    u = w.copy()
    r = g.copy()  # gradient of the quadratic part at the current step, per feature
    rb = gb
    db = 0.0
    diag = np.diag(H)
    for _ in range(sweeps):
        move = 0.0
        if hbb > 0:
            delta = -rb / hbb
            if delta:
                db += delta
                r += hb * delta
                rb += hbb * delta
                move = abs(delta)
        for j in range(d):
            hjj = diag[j]
            if hjj <= 0:
                continue
            uj = u[j]
            new = _soft(uj - r[j] / hjj, lam / hjj)
            delta = new - uj
            if delta:
                u[j] = new
                r += H[:, j] * delta
                rb += hb[j] * delta
                move = max(move, abs(delta))
        if move <= tol:
            break
    return u - w, db


def l1_logistic_fit(X, y, lam, max_iterations=1000, tolerance=1e-6):
    """Minimize mean logistic loss + lam * ||w||_1 with an unpenalized intercept.

    Each iteration builds the second-order model of the loss at the current
    point, minimizes it (plus the exact L1 term) by cyclic coordinate
    descent with soft-thresholding, then backtracks along that step until
    the true objective decreases.  Stops when the largest coordinate move of
    an iteration or the subgradient optimality violation falls within
    ``tolerance``.

    Returns ``(w, b, trace, converged)``; ``trace`` holds the objective
    after every iteration and never increases.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    ybar = y.mean()
    w = np.zeros(d)
    b = math.log(ybar / (1 - ybar))
    z = np.full(n, b)
    obj = _objective(z, y, w, lam)
    trace = [obj]
    converged = False
    for _ in range(max_iterations):
        p = _sigmoid(z)
        resid = p - y
        curv = p * (1 - p)
        g = X.T @ resid / n
        gb = float(resid.mean())
        Xw = X * curv[:, None]
        H = X.T @ Xw / n
        hb = Xw.sum(0) / n
        hbb = float(curv.mean())
        dw, db = _inner_cd(g, gb, H, hb, hbb, w, lam, tol=tolerance * 1e-2)
        # Armijo decrease bound for the composite objective
        pen_now = lam * float(np.abs(w).sum())
        expected = float(g @ dw) + gb * db + lam * float(np.abs(w + dw).sum()) - pen_now
        dz = X @ dw + db
        t = 1.0
        accepted = False
        for _ in range(40):
            w_new = w + t * dw
            z_new = z + t * dz
            obj_new = _objective(z_new, y, w_new, lam)
            if obj_new <= obj + 1e-4 * t * min(expected, 0.0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        move = t * max(float(np.abs(dw).max(initial=0.0)), abs(db))
        w, b = w_new, b + t * db
        z = b + X @ w
        obj = _objective(z, y, w, lam)
        trace.append(obj)
        if move <= tolerance or kkt_violation(X, y, w, b, lam) <= tolerance:
            converged = True
            break
    if not converged and kkt_violation(X, y, w, b, lam) <= tolerance:
        converged = True
    return w, b, trace, converged


def l1_logistic_select(X, y, config: SelectionConfig | None = None, lambda_: float | None = None) -> SelectionResult:
    """Fit the L1 logistic model; kept columns are those with nonzero weight.

    ``X`` is assumed already filtered; column ids in the result index ``X``.
    """
    config = config or SelectionConfig()
    lam = lambda_ if lambda_ is not None else config.lambda_
    if lam is None:
        raise ValueError("no penalty given; resolve lambda before fitting")
    X = np.asarray(X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise EmptyMatrix("l1_logistic_select needs rows")
    if len(np.unique(y)) < 2:
        raise SingleClass("L1 selection needs both classes")
    w, b, trace, converged = l1_logistic_fit(X, y, lam, config.max_iterations, config.tolerance)
    if not converged:
        warnings.warn(
            f"L1 logistic fit did not converge in {config.max_iterations} sweeps", ConvergenceWarning, stacklevel=2
        )
    kept = np.flatnonzero(w != 0)
    return SelectionResult(
        kept_columns=tuple(int(j) for j in kept),
        weights=tuple(float(w[j]) for j in kept),
        intercept=float(b),
        objective_trace=tuple(trace),
        converged=converged,
        lambda_=float(lam),
        full_weights=w,
    )


@dataclass(frozen=True)
class L1LogisticModel:
    """The fitted L1 logistic model used as a classifier for penalty tuning."""

    weights: np.ndarray
    intercept: float

    def decision_function(self, X):
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.weights

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int8)


@dataclass(frozen=True)
class L1LogisticLearner:
    lambda_: float
    max_iterations: int = 1000
    tolerance: float = 1e-6

    def fit(self, X, y, seed=0):
        if len(np.unique(y)) < 2:
            raise SingleClass("L1 logistic fit needs both classes")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            w, b, _, _ = l1_logistic_fit(X, y, self.lambda_, self.max_iterations, self.tolerance)
        return L1LogisticModel(w, b)


def choose_lambda(X, y, grid=LAMBDA_GRID, config: SelectionConfig | None = None, cv_k=5, seed=0) -> float:
    """Penalty from ``grid`` with the best cross-validated F1 of the L1 logistic classifier.

    Ties go to the earlier grid value.
    """
    from .evaluation import cross_validate, stratified_kfold

    config = config or SelectionConfig()
    folds = stratified_kfold(y, cv_k, seed)
    best, lam = -1.0, grid[0]
    for cand in grid:
        learner = L1LogisticLearner(cand, config.max_iterations, config.tolerance)
        score = cross_validate((X, y), learner, folds=folds).mean_f1
        if score > best:
            best, lam = score, cand
    return lam


def select_features(X, y, config: SelectionConfig | None = None, cv_k: int = 5, seed: int = 0) -> SelectionResult:
    """Near-constant filter followed by L1 logistic selection.

    Column ids in the result index ``X``.  An unset penalty is chosen with
    :func:`choose_lambda` on the filtered columns.
    """
    config = config or SelectionConfig()
    X = np.asarray(X)
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise SingleClass("feature selection needs both classes")
    filtered = near_constant_filter(X, config.majority_threshold)
    Xf = X[:, filtered]
    lam = config.lambda_
    if lam is None:
        lam = choose_lambda(Xf, y, LAMBDA_GRID, config, cv_k, seed)
    res = l1_logistic_select(Xf, y, config, lambda_=lam)
    full = np.zeros(X.shape[1])
    full[filtered] = res.full_weights
    return SelectionResult(
        kept_columns=tuple(filtered[j] for j in res.kept_columns),
        weights=res.weights,
        intercept=res.intercept,
        objective_trace=res.objective_trace,
        converged=res.converged,
        lambda_=res.lambda_,
        full_weights=full,
    )
