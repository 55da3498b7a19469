"""Input coercion shared by the classifiers."""

import numpy as np

from .errors import DimensionMismatch
from .vectorizer import SparseVector


def as_query_matrix(x, dimension: int) -> tuple[np.ndarray, bool]:
    """Coerce a SparseVector, 1-D row or 2-D batch to a float matrix.

    Returns the matrix and whether the input was a single row.
    """
    if isinstance(x, SparseVector):
        if x.dimension != dimension:
            raise DimensionMismatch(f"query has dimension {x.dimension}, model expects {dimension}")
        return x.to_dense()[None, :].astype(np.float64), True
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dimension:
        raise DimensionMismatch(f"query has shape {np.shape(x)}, model expects {dimension} columns")
    return arr, single


def check_both_classes(y, what: str):
    from .errors import SingleClass

    y = np.asarray(y)
    if y.size == 0 or np.all(y == y[0]):
        raise SingleClass(f"{what} needs both classes present")
