"""K-nearest neighbors and Bernoulli naive Bayes over binary features.

Both break ties toward the negative class.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._arrays import as_query_matrix, check_both_classes
from .cohort import Label
from .errors import EmptyMatrix, KTooLarge


VOTE_TIE_RTOL = 1e-12


class Weighting(str, enum.Enum):
    UNIFORM = "uniform"
    DISTANCE = "distance"


@dataclass(frozen=True)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int
    weighting: Weighting

    @property
    def dimension(self):
        return self.X.shape[1]

    def predict(self, X) -> np.ndarray:
        Q, _ = as_query_matrix(X, self.dimension)
        train = self.X.astype(np.float64)
        sq = (Q * Q).sum(1)[:, None] + (train * train).sum(1)[None, :] - 2.0 * Q @ train.T
        sq = np.maximum(sq, 0.0)
        out = np.empty(len(Q), dtype=np.int8)
        for i, row in enumerate(sq):
            # stable sort: equal distances keep training order
            nn = np.argsort(row, kind="stable")[: self.k]
            out[i] = _vote(row[nn], self.y[nn], self.weighting)
        return out


def _vote(sqdist, labels, weighting) -> int:
    if weighting is Weighting.DISTANCE:
        exact = sqdist == 0
        if exact.any():
            labels = labels[exact]
            weights = np.ones(len(labels))
        else:
            weights = 1.0 / np.sqrt(sqdist)
    else:
        weights = np.ones(len(labels))
    pos = weights[labels == 1].sum()
    neg = weights[labels == 0].sum()
    # sums equal up to rounding are ties, and ties go to Negative
    return 1 if pos - neg > VOTE_TIE_RTOL * (pos + neg) else 0


def knn_fit(X, y, k: int = 1, weighting: Weighting | str = Weighting.UNIFORM) -> KnnModel:
    """Store the training rows; KNN does no work until prediction."""
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyMatrix("knn_fit needs at least one row")
    if not 1 <= k <= X.shape[0]:
        raise KTooLarge(f"k={k} with {X.shape[0]} stored rows")
    return KnnModel(X.copy(), y.copy(), int(k), Weighting(weighting))


def knn_predict(model: KnnModel, x) -> Label:
    return Label(int(model.predict(x)[0]))


@dataclass(frozen=True)
class NbModel:
    log_prior: np.ndarray  # (2,) indexed by label
    log_likelihood_present: np.ndarray  # (2, d)
    log_likelihood_absent: np.ndarray  # (2, d)
    smoothing_alpha: float = 1.0

    @property
    def dimension(self):
        return self.log_likelihood_present.shape[1]

    def joint_log_likelihood(self, X) -> np.ndarray:
        Q, _ = as_query_matrix(X, self.dimension)
        return self.log_prior + Q @ self.log_likelihood_present.T + (1.0 - Q) @ self.log_likelihood_absent.T

    def predict_proba(self, X) -> np.ndarray:
        """Posterior of each class, shape (n, 2)."""
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - np.logaddexp(jll[:, :1], jll[:, 1:]))

    def predict(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return (jll[:, 1] > jll[:, 0]).astype(np.int8)


def nb_fit(X, y, smoothing_alpha: float = 1.0) -> NbModel:
    """Bernoulli naive Bayes with Laplace-style smoothing.

    P(present | c) = (present_count_c + alpha) / (count_c + 2 alpha).
    """
    if smoothing_alpha <= 0:
        raise ValueError("smoothing_alpha must be > 0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    check_both_classes(y, "naive Bayes")
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
    present = np.vstack([X[y == 0].sum(0), X[y == 1].sum(0)])
    p = (present + smoothing_alpha) / (counts[:, None] + 2.0 * smoothing_alpha)
    return NbModel(
        log_prior=np.log(counts / counts.sum()),
        log_likelihood_present=np.log(p),
        log_likelihood_absent=np.log1p(-p),
        smoothing_alpha=float(smoothing_alpha),
    )


def nb_predict(model: NbModel, x) -> tuple[Label, float]:
    """Label and positive-class posterior for one query."""
    post = model.predict_proba(x)[0]
    return Label(int(model.predict(x)[0])), float(post[1])
