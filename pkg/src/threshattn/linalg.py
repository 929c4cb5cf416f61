"""Dense primitives, support-set containers and the (tau, k)-goodness checker.

Dense matrices are plain ``float64`` numpy arrays.  Scores are always produced
by :func:`matmul` or :func:`row_scores`, which accumulate the ``d`` products of
each dot product strictly left to right.  That makes every path in the package
(dense reference, brute force, tree queries, Grover oracle) agree bit-for-bit
on every score, so threshold ties and on-support equalities survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


def as_dense(x, name: str = "matrix") -> np.ndarray:
    """Validate ``x`` as a finite 2-D float64 matrix with at least one row and column."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _accumulate(out: np.ndarray, a_t: np.ndarray, b_t: np.ndarray) -> np.ndarray:
    # a_t: (d, n), b_t: (d, m).  Column l of b contributes a[:, l] * b[:, l].
    # Exact-zero entries of b add a signed zero, so they are skipped.
    for l in range(a_t.shape[0]):
        col = b_t[l]
        nz = np.flatnonzero(col)
        if nz.size == col.size:
            out += np.multiply.outer(a_t[l], col)
        elif nz.size:
            out[:, nz] += np.multiply.outer(a_t[l], col[nz])
    return out


def matmul(a, b_transposed, *, block_rows: int = 256) -> np.ndarray:
    """Return ``a @ b_transposed.T`` with left-to-right accumulation per entry.

    Both operands store d-dimensional rows; ``result[i, j] = <a_i, b_j>``.
    The result equals a naive triple loop exactly (up to the sign of zero).
    """
    a = as_dense(a, "a")
    b = as_dense(b_transposed, "b_transposed")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"inner dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    b_t = np.ascontiguousarray(b.T)
    out = np.zeros((a.shape[0], b.shape[0]))
    for start in range(0, a.shape[0], block_rows):
        stop = min(start + block_rows, a.shape[0])
        a_t = np.ascontiguousarray(a[start:stop].T)
        _accumulate(out[start:stop], a_t, b_t)
    return out


def pair_scores(q_row: np.ndarray, k_rows: np.ndarray) -> np.ndarray:
    """``<q_row, K_j>`` for each row of ``k_rows``, same accumulation order as :func:`matmul`.

    Zero products are added rather than skipped, so only the sign of a zero
    result can differ from :func:`matmul`.
    """
    if k_rows.shape[0] == 0:
        return np.empty(0)
    return np.cumsum(k_rows * q_row, axis=1)[:, -1]


def row_scores(q: np.ndarray, k_mat: np.ndarray, i: int) -> np.ndarray:
    """Scores of query row ``i`` against every key; equal to ``matmul(q, k_mat)[i]``."""
    return pair_scores(q[i], k_mat)


def seq_dot(x: np.ndarray, y: np.ndarray) -> float:
    """Scalar dot product with the same accumulation order as :func:`matmul`."""
    s = 0.0
    for a, b in zip(x.tolist(), y.tolist()):
        if b != 0.0:
            s += a * b
    return s


def entrywise_inf_norm_diff(x, y) -> float:
    """Max over all entries of ``|x - y|`` (entrywise, not the operator norm)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - y)))


@dataclass(frozen=True)
class SupportSets:
    """Per-row supports ``S_i`` with the raw scores that put them there."""

    n: int
    rows: tuple[np.ndarray, ...]
    scores: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.rows) != self.n or len(self.scores) != self.n:
            raise ValueError("need exactly n index lists and n score lists")
        for idx, sc in zip(self.rows, self.scores):
            if idx.shape != sc.shape:
                raise ValueError("index and score lists must be parallel")
            if idx.size > 1 and np.any(np.diff(idx) <= 0):
                raise ValueError("support indices must be sorted and duplicate-free")

    @classmethod
    def from_lists(cls, n: int, rows, scores) -> "SupportSets":
        r = tuple(np.asarray(x, dtype=np.int64) for x in rows)
        s = tuple(np.asarray(x, dtype=np.float64) for x in scores)
        return cls(n, r, s)

    def sizes(self) -> np.ndarray:
        return np.array([r.size for r in self.rows], dtype=np.int64)

    def total(self) -> int:
        return int(self.sizes().sum())

    def same_as(self, other: "SupportSets") -> bool:
        """Indices and scores identical row by row."""
        if self.n != other.n:
            return False
        return all(
            np.array_equal(a, b) and np.array_equal(sa, sb)
            for a, b, sa, sb in zip(self.rows, other.rows, self.scores, other.scores)
        )


@dataclass(frozen=True)
class SparseCorrection:
    """The k-row-sparse part ``C = B - ones`` of the surrogate matrix."""

    n: int
    row_indices: tuple[np.ndarray, ...]
    row_values: tuple[np.ndarray, ...]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i, (idx, val) in enumerate(zip(self.row_indices, self.row_values)):
            out[i, idx] = val
        return out


@dataclass(frozen=True)
class GoodnessReport:
    is_good: bool
    max_row_support: int
    min_on_support_score: float
    max_off_support_score: float
    min_off_support_score: float
    tau: float = field(default=math.nan)
    k: int = 0
    eta: float = math.nan

    def failures(self) -> list[str]:
        """Names of the violated conditions, empty when the instance is good."""
        out = []
        if self.max_row_support > self.k:
            out.append(f"row support {self.max_row_support} exceeds k={self.k}")
        if self.min_on_support_score < self.tau:
            out.append(f"on-support score {self.min_on_support_score!r} below tau={self.tau!r}")
        if self.max_off_support_score > 0.0:
            out.append(f"off-support score {self.max_off_support_score!r} above 0")
        if self.min_off_support_score < -self.eta:
            out.append(f"off-support score {self.min_off_support_score!r} below -eta={-self.eta!r}")
        return out

    def to_json(self) -> dict:
        def fin(x):
            return float(x) if math.isfinite(x) else None

        return {
            "is_good": self.is_good,
            "max_row_support": self.max_row_support,
            "min_on_support_score": fin(self.min_on_support_score),
            "max_off_support_score": fin(self.max_off_support_score),
            "min_off_support_score": fin(self.min_off_support_score),
            "tau": self.tau,
            "k": self.k,
            "eta": self.eta,
        }


def goodness_from_scores(scores: np.ndarray, tau: float, k: int, eta: float) -> GoodnessReport:
    on = scores >= tau
    max_support = int(on.sum(axis=1).max()) if scores.size else 0
    on_vals = scores[on]
    off_vals = scores[~on]
    min_on = float(on_vals.min()) if on_vals.size else math.inf
    max_off = float(off_vals.max()) if off_vals.size else -math.inf
    min_off = float(off_vals.min()) if off_vals.size else math.inf
    good = max_support <= k and min_on >= tau and max_off <= 0.0 and min_off >= -eta
    return GoodnessReport(good, max_support, min_on, max_off, min_off, float(tau), int(k), float(eta))


def merge_goodness(reports: list[GoodnessReport], tau: float, k: int, eta: float) -> GoodnessReport:
    """Combine reports computed over disjoint row blocks."""
    if len(reports) == 1:
        return reports[0]
    max_support = max(r.max_row_support for r in reports)
    min_on = min(r.min_on_support_score for r in reports)
    max_off = max(r.max_off_support_score for r in reports)
    min_off = min(r.min_off_support_score for r in reports)
    good = max_support <= k and min_on >= tau and max_off <= 0.0 and min_off >= -eta
    return GoodnessReport(good, max_support, min_on, max_off, min_off, float(tau), int(k), float(eta))


def check_goodness(q, k_mat, tau: float, k: int, eta: float, *, block_rows: int = 1024) -> GoodnessReport:
    """Check the (tau, k) sparsity and the off-support gap ``[-eta, 0]`` from dense scores."""
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    if q.shape[1] != k_mat.shape[1]:
        raise ShapeError(f"q and k_mat dimensions differ: {q.shape[1]} vs {k_mat.shape[1]}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    reports = [goodness_from_scores(matmul(q[start:start + block_rows], k_mat), tau, k, eta)
               for start in range(0, q.shape[0], block_rows)]
    return merge_goodness(reports, tau, k, eta)
