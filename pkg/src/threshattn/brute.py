from __future__ import annotations

import numpy as np

from .ledger import QueryCostLedger
from .linalg import ShapeError, SupportSets, as_dense, matmul, row_scores, seq_dot


def row_score_oracle(q, k_mat, i: int, j: int, ledger: QueryCostLedger | None = None) -> float:
    """One evaluation of the membership oracle's score ``<Q_i, K_j>``."""
    n_q, n_k = q.shape[0], k_mat.shape[0]
    if not (0 <= i < n_q and 0 <= j < n_k):
        raise IndexError(f"({i}, {j}) outside [{n_q}] x [{n_k}]")
    if ledger is not None:
        ledger.oracle_calls += 1
        ledger.classical_scan_calls += 1
        ledger.dot_product_flops += q.shape[1]
    return seq_dot(q[i], k_mat[j])


def supports_from_scores(scores: np.ndarray, tau: float) -> list[tuple]:
    out = []
    for row in scores:
        idx = np.flatnonzero(row >= tau)
        out.append((idx, row[idx].copy()))
    return out


def brute_row_search(q, k_mat, tau: float, i: int, ledger: QueryCostLedger | None = None):
    """Scan one row: ``n`` oracle calls, returns ``(indices, scores)``."""
    scores = row_scores(q, k_mat, i)
    if ledger is not None:
        ledger.oracle_calls += k_mat.shape[0]
        ledger.classical_scan_calls += k_mat.shape[0]
        ledger.dot_product_flops += k_mat.shape[0] * q.shape[1]
    idx = np.flatnonzero(scores >= tau)
    return idx, scores[idx]


def brute_force_support(q, k_mat, tau: float, ledger: QueryCostLedger | None = None,
                        *, block_rows: int = 1024) -> SupportSets:
    """Scan every score and keep ``j`` with ``<Q_i, K_j> >= tau``."""
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    if q.shape[1] != k_mat.shape[1]:
        raise ShapeError(f"q and k_mat dimensions differ: {q.shape[1]} vs {k_mat.shape[1]}")
    rows, scores = [], []
    for start in range(0, q.shape[0], block_rows):
        for idx, sc in supports_from_scores(matmul(q[start:start + block_rows], k_mat), tau):
            rows.append(idx)
            scores.append(sc)
    if ledger is not None:
        calls = q.shape[0] * k_mat.shape[0]
        ledger.oracle_calls += calls
        ledger.classical_scan_calls += calls
        ledger.dot_product_flops += calls * q.shape[1]
    return SupportSets.from_lists(q.shape[0], rows, scores)
