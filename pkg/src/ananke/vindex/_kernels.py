"""Row-scoring kernels for the flat index.

Two interchangeable implementations: a numba ``@njit`` loop and a pure-numpy
path. Set ``ANANKE_DISABLE_NUMBA=1`` to force numpy (also used automatically
when numba is not importable). Both accumulate in float64; per-row results are
deterministic within one path but may differ in the last ulp across paths.
"""

from __future__ import annotations

import os

import numpy as np

COSINE, INNER_PRODUCT, EUCLIDEAN = 0, 1, 2

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ANANKE_DISABLE_NUMBA", "").strip().lower() not in (
    "1", "true", "yes", "on")


def _row_norms_numpy(matrix: np.ndarray) -> np.ndarray:
    return np.sqrt((matrix * matrix).sum(axis=1))


def _score_numpy(matrix: np.ndarray, norms: np.ndarray, query: np.ndarray, metric: int) -> np.ndarray:
    if metric == EUCLIDEAN:
        diff = matrix - query
        return -np.sqrt((diff * diff).sum(axis=1))
    dots = (matrix * query).sum(axis=1)
    if metric == INNER_PRODUCT:
        return dots
    qn = np.sqrt((query * query).sum())
    denom = norms * qn
    out = np.zeros_like(dots)
    np.divide(dots, denom, out=out, where=denom > 0)
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _row_norms_jit(matrix):
        n, d = matrix.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += matrix[i, j] * matrix[i, j]
            out[i] = np.sqrt(acc)
        return out

    @njit(cache=True)
    def _score_jit(matrix, norms, query, metric):
        n, d = matrix.shape
        out = np.empty(n)
        qn = 0.0
        for j in range(d):
            qn += query[j] * query[j]
        qn = np.sqrt(qn)
        for i in range(n):
            acc = 0.0
            if metric == 2:
                for j in range(d):
                    diff = matrix[i, j] - query[j]
                    acc += diff * diff
                out[i] = -np.sqrt(acc)
            else:
                for j in range(d):
                    acc += matrix[i, j] * query[j]
                if metric == 1:
                    out[i] = acc
                else:
                    denom = norms[i] * qn
                    out[i] = acc / denom if denom > 0.0 else 0.0
        return out


def _want_numba(use_numba: bool | None) -> bool:
    if use_numba is None:
        return USE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba requested but not installed")
    return use_numba


def row_norms(matrix: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if _want_numba(use_numba):
        return _row_norms_jit(matrix)
    return _row_norms_numpy(matrix)


def score_rows(matrix: np.ndarray, norms: np.ndarray, query: np.ndarray, metric: int,
               use_numba: bool | None = None) -> np.ndarray:
    """Score every row of ``matrix`` against ``query``; higher is better for all metrics."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    query = np.ascontiguousarray(query, dtype=np.float64)
    if _want_numba(use_numba):
        return _score_jit(matrix, np.ascontiguousarray(norms, dtype=np.float64), query, int(metric))
    return _score_numpy(matrix, norms, query, int(metric))


def backend_name(use_numba: bool | None = None) -> str:
    return "numba" if _want_numba(use_numba) else "numpy"
