"""Exact dense softmax attention ``D^-1 A V`` with ``A = exp(Q K^T)``.

No max-subtraction: the surrogate's error bounds are stated on raw
exponentials, so overflow is reported instead of rescaled away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ledger import QueryCostLedger
from .linalg import ShapeError, as_dense, matmul

DENSE_GUARD = 2**14


class RangeError(ArithmeticError):
    pass


@dataclass(frozen=True)
class AttentionOutput:
    matrix: np.ndarray
    row_sums: np.ndarray


def _check_shapes(q, k_mat, v=None):
    if q.shape[1] != k_mat.shape[1]:
        raise ShapeError(f"q and k_mat dimensions differ: {q.shape[1]} vs {k_mat.shape[1]}")
    if v is not None and v.shape[0] != k_mat.shape[0]:
        raise ShapeError(f"v has {v.shape[0]} rows, k_mat has {k_mat.shape[0]}")


def _exp_checked(scores: np.ndarray, row_offset: int = 0) -> np.ndarray:
    with np.errstate(over="ignore"):
        a = np.exp(scores)
    bad = ~np.isfinite(a)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise RangeError(f"exp overflow at ({row_offset + i}, {j}): score {scores[i, j]!r}")
    return a


def normalize_rows(m: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(diag(m 1)^-1 m v, m 1)``; the one expression both sides of every comparison use."""
    sums = m.sum(axis=1)
    return (m @ v) / sums[:, None], sums


def exact_dense_A(q, k_mat) -> np.ndarray:
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    _check_shapes(q, k_mat)
    if max(q.shape[0], k_mat.shape[0]) > DENSE_GUARD:
        raise ValueError(f"dense A limited to n <= {DENSE_GUARD}")
    return _exp_checked(matmul(q, k_mat))


def exact_attention(q, k_mat, v, ledger: QueryCostLedger | None = None,
                    *, block_rows: int = 1024) -> AttentionOutput:
    """Reference attention, computed in row blocks so A is never held whole."""
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    v = as_dense(v, "v")
    _check_shapes(q, k_mat, v)
    n, m, d, dv = q.shape[0], k_mat.shape[0], q.shape[1], v.shape[1]
    out = np.empty((n, dv))
    sums = np.empty(n)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        a = _exp_checked(matmul(q[start:stop], k_mat), start)
        out[start:stop], sums[start:stop] = normalize_rows(a, v)
    if ledger is not None:
        # scores, exp, row sums, A V, normalisation
        ledger.attention_flops += n * m * d + n * m + n * m + n * m * dv + n * dv
    return AttentionOutput(out, sums)
