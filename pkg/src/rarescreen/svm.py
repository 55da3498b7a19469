"""Soft-margin SVM trained in the dual by sequential minimal optimization."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._arrays import as_query_matrix, check_both_classes
from .cohort import Label
from .errors import ConvergenceWarning, DimensionMismatch
from .vectorizer import SparseVector

TAU = 1e-12


class KernelKind(str, enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.LINEAR
    gamma: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.RBF and not self.gamma > 0:
            raise ValueError("rbf kernel needs gamma > 0")


def kernel_eval(x, z, spec: KernelSpec) -> float:
    if isinstance(x, SparseVector) and isinstance(z, SparseVector):
        if x.dimension != z.dimension:
            raise DimensionMismatch(f"dimensions {x.dimension} and {z.dimension} differ")
        a, b = set(x.active), set(z.active)
        if spec.kind is KernelKind.LINEAR:
            return float(len(a & b))
        return math.exp(-spec.gamma * len(a ^ b))
    xa = x.to_dense() if isinstance(x, SparseVector) else np.asarray(x, dtype=np.float64)
    za = z.to_dense() if isinstance(z, SparseVector) else np.asarray(z, dtype=np.float64)
    if xa.shape != za.shape:
        raise DimensionMismatch(f"shapes {xa.shape} and {za.shape} differ")
    return float(kernel_matrix(xa[None, :], za[None, :], spec)[0, 0])


def kernel_matrix(A, B, spec: KernelSpec) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    gram = A @ B.T
    if spec.kind is KernelKind.LINEAR:
        return gram
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * gram
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


def dual_objective(alpha, K, y) -> float:
    """sum(alpha) - 1/2 alpha' Q alpha with Q_ij = y_i y_j K_ij."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _violation_sets(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return up, low


def kkt_residual(alpha, K, y, C) -> float:
    """Maximal violating-pair gap m(alpha) - M(alpha), floored at 0."""
    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G = y * (K @ (alpha * y)) - 1.0
    v = -y * G
    up, low = _violation_sets(alpha, y, C)
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(v[up].max() - v[low].min()))


@dataclass(frozen=True)
class SmoSolution:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    residual: float


def smo_solve(K, y, C, tolerance=1e-3, max_iter=100_000) -> SmoSolution:
    """Solve the soft-margin dual for a precomputed kernel matrix.

    Each step picks the maximal violating pair and updates it analytically,
    clipping to the box [0, C] along the equality constraint.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    converged = False
    it = 0
    while it < max_iter:
        v = -y * G
        up, low = _violation_sets(alpha, y, C)
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if not up[i] or not low[j] or v[i] - v[j] <= tolerance:
            # refresh the incrementally maintained gradient before accepting
            G = Q @ alpha - 1.0
            v = -y * G
            if not up.any() or not low.any() or v[up].max() - v[low].min() <= tolerance:
                converged = True
                break
            continue
        it += 1
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Q[i, j]
            delta = (-G[i] - G[j]) / (quad if quad > 0 else TAU)
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Q[i, j]
            delta = (G[i] - G[j]) / (quad if quad > 0 else TAU)
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        G += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)

    G = Q @ alpha - 1.0
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    return SmoSolution(alpha, -rho, it, converged, kkt_residual(alpha, K, y, C))


@dataclass(frozen=True)
class SvmModel:
    support_rows: np.ndarray
    support_labels: np.ndarray  # +1 / -1
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    c: float
    dimension: int
    converged: bool = True
    kkt_residual: float = 0.0

    def decision_function(self, X) -> np.ndarray:
        Q, _ = as_query_matrix(X, self.dimension)
        if len(self.alphas) == 0:
            return np.full(len(Q), self.bias)
        return kernel_matrix(Q, self.support_rows, self.kernel) @ (self.alphas * self.support_labels) + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int8)


def smo_fit(X, y, c=1.0, spec: KernelSpec | None = None, tolerance=1e-3, max_passes=100) -> SvmModel:
    """Train an SVM; labels are 0/1 (mapped to -1/+1 internally).

    The solver runs at most ``max_passes * n`` pair updates; hitting that
    cap flags the model as not converged and emits a ConvergenceWarning.
    """
    spec = spec or KernelSpec()
    if c <= 0:
        raise ValueError("C must be > 0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    check_both_classes(y, "SVM")
    s = np.where(y == 1, 1.0, -1.0)
    K = kernel_matrix(X, X, spec)
    sol = smo_solve(K, s, float(c), tolerance, max_passes * len(s))
    if not sol.converged:
        warnings.warn(f"SMO stopped after {sol.iterations} updates without converging", ConvergenceWarning, stacklevel=2)
    sv = sol.alpha > 0
    return SvmModel(
        support_rows=X[sv],
        support_labels=s[sv],
        alphas=sol.alpha[sv],
        bias=sol.bias,
        kernel=spec,
        c=float(c),
        dimension=X.shape[1],
        converged=sol.converged,
        kkt_residual=sol.residual,
    )


def svm_decision(model: SvmModel, x) -> tuple[Label, float]:
    margin = float(model.decision_function(x)[0])
    return Label(int(margin > 0)), margin
