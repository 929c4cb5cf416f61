"""Sparse surrogate ``B`` and attention through the all-ones / sparse split.

``B`` equals ``A = exp(QK^T)`` on each row's support and 1 elsewhere, so
``B = ones + C`` with ``C`` nonzero only on the supports.  Then
``B V = 1 (1^T V) + C V``: one column-sum of ``V`` shared by every row plus a
k-sparse product, and ``D(B)`` needs only ``n + sum_j C_ij``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .ledger import QueryCostLedger
from .linalg import (GoodnessReport, ShapeError, SparseCorrection, SupportSets, as_dense,
                     check_goodness, entrywise_inf_norm_diff)
from .reference import AttentionOutput, exact_dense_A, normalize_rows

EPS = float(np.finfo(np.float64).eps)
SLACK_FACTOR = 64


class GoodnessError(ValueError):
    """The instance violates a precondition of the error bounds."""

    def __init__(self, report: GoodnessReport):
        self.report = report
        super().__init__("; ".join(report.failures()) or "instance is not (tau, k)-good")


@dataclass(frozen=True)
class SparseB:
    n: int
    tau: float
    correction: SparseCorrection
    values: tuple[np.ndarray, ...]   # B on the support, exp(score)
    row_sums: np.ndarray             # diagonal of D(B)

    @property
    def support(self) -> tuple[np.ndarray, ...]:
        return self.correction.row_indices

    def to_dense(self) -> np.ndarray:
        out = np.ones((self.n, self.n))
        for i, (idx, val) in enumerate(zip(self.support, self.values)):
            out[i, idx] = val
        return out

    def correction_csr(self) -> sp.csr_matrix:
        c = self.correction
        lengths = [idx.size for idx in c.row_indices]
        indptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        indices = np.concatenate(c.row_indices) if indptr[-1] else np.empty(0, dtype=np.int64)
        data = np.concatenate(c.row_values) if indptr[-1] else np.empty(0)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n, self.n))


def build_B(support: SupportSets, tau: float) -> SparseB:
    """Surrogate with ``exp(score)`` on each support and 1 elsewhere."""
    values, corr = [], []
    sums = np.empty(support.n)
    for i, (idx, sc) in enumerate(zip(support.rows, support.scores)):
        if sc.size and sc.min() < tau:
            j = int(idx[np.argmin(sc)])
            raise ValueError(f"support ({i}, {j}) has score {sc.min()!r} below tau={tau!r}")
        val = np.exp(sc)
        if not np.all(np.isfinite(val)):
            raise ArithmeticError(f"exp overflow in support row {i}")
        c = val - 1.0
        values.append(val)
        corr.append(c)
        sums[i] = support.n + c.sum()
    correction = SparseCorrection(support.n, tuple(support.rows), tuple(corr))
    return SparseB(support.n, float(tau), correction, tuple(values), sums)


def sparse_attention(b: SparseB, v, ledger: QueryCostLedger | None = None) -> AttentionOutput:
    """``D(B)^-1 B V`` in O(nkd): shared column sum of V plus the sparse correction."""
    v = as_dense(v, "v")
    if v.shape[0] != b.n:
        raise ShapeError(f"v has {v.shape[0]} rows, B has {b.n}")
    if np.any(b.row_sums <= 0):
        raise ValueError("D(B) has a non-positive diagonal entry")
    n, d = v.shape
    colsum = v.sum(axis=0)
    out = (colsum[None, :] + b.correction_csr() @ v) / b.row_sums[:, None]
    if ledger is not None:
        ledger.attention_flops += n * d + sum(idx.size for idx in b.support) * d + n * d
    return AttentionOutput(out, b.row_sums.copy())


@dataclass(frozen=True)
class ErrorReport:
    eta: float
    lhs_no_v: float
    lhs_with_v: float
    bound_no_v: float
    bound_with_v: float
    diag_rel_err: float
    entry_err: float
    v_inf: float
    with_v_ratio: float      # lhs_with_v / (eta * ||V||_inf), nan when the product is 0
    fast_path_dev: float     # sparse_attention vs dense D(B)^-1 B V

    def to_json(self) -> dict:
        return {k: (None if isinstance(x, float) and not math.isfinite(x) else x)
                for k, x in asdict(self).items()}


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    bound: float
    passed: bool
    slack: float = 0.0       # floating-point allowance added to the bound

    @property
    def margin(self) -> float:
        return self.bound + self.slack - self.measured


def fp_slack(n: int, scale: float = 1.0) -> float:
    return SLACK_FACTOR * EPS * n * max(1.0, scale)


def _dense_pair(q, k_mat, b: SparseB):
    a = exact_dense_A(q, k_mat)
    bd = b.to_dense()
    return a, bd


def _require_good(q, k_mat, b: SparseB, eta: float, k: int | None) -> GoodnessReport:
    k = int(max(idx.size for idx in b.support)) if k is None else k
    rep = check_goodness(q, k_mat, b.tau, k, eta)
    if not rep.is_good:
        raise GoodnessError(rep)
    return rep


def error_report(q, k_mat, v, b: SparseB, eta: float, *, k: int | None = None) -> ErrorReport:
    """Measure every error quantity against the dense reference.

    Both sides are normalised by the same dense expression, so a surrogate
    equal to ``A`` reports exactly zero error; ``fast_path_dev`` separately
    tracks the O(nkd) path against that dense expression.
    """
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    v = as_dense(v, "v")
    _require_good(q, k_mat, b, eta, k)
    a, bd = _dense_pair(q, k_mat, b)
    da = a.sum(axis=1)
    db = bd.sum(axis=1)
    pa = a / da[:, None]
    pb = bd / db[:, None]
    out_a, _ = normalize_rows(a, v)
    out_b, _ = normalize_rows(bd, v)
    fast = sparse_attention(b, v).matrix
    v_inf = float(np.max(np.abs(v)))
    lhs_v = entrywise_inf_norm_diff(out_a, out_b)
    denom = eta * v_inf
    return ErrorReport(
        eta=float(eta),
        lhs_no_v=entrywise_inf_norm_diff(pa, pb),
        lhs_with_v=lhs_v,
        bound_no_v=3 * eta,
        bound_with_v=3 * eta**2,
        diag_rel_err=float(np.max(np.abs(da - db) / da)),
        entry_err=entrywise_inf_norm_diff(a, bd),
        v_inf=v_inf,
        with_v_ratio=lhs_v / denom if denom > 0 else math.nan,
        fast_path_dev=entrywise_inf_norm_diff(fast, out_b),
    )


def certify(q, k_mat, v, b: SparseB, eta: float, *, k: int | None = None) -> list[Check]:
    """Every inequality of the perturbation analysis, measured on one instance.

    Parts P1-P5 bound entries and row sums, D1-D3 the diagonal, and the two
    norm checks the normalised matrix with and without V.  Floating-point
    allowance is ``64 * eps * n`` times the scale of the compared quantity;
    P2 (on-support equality) allows none.
    """
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    v = as_dense(v, "v")
    _require_good(q, k_mat, b, eta, k)
    n = b.n
    a, bd = _dense_pair(q, k_mat, b)
    on = np.zeros((n, n), dtype=bool)
    for i, idx in enumerate(b.support):
        on[i, idx] = True
    sizes = on.sum(axis=1)
    diff = np.abs(a - bd)
    a1 = a.sum(axis=1)
    b1 = bd.sum(axis=1)
    row_gap = np.abs(a1 - b1)
    scale = float(a1.max())
    tau = b.tau
    checks = []

    def add(name, measured, bound, slack=0.0):
        measured = float(measured)
        checks.append(Check(name, measured, float(bound), measured <= bound + slack, float(slack)))

    add("P1 off-support |A-B| <= 2 eta", diff[~on].max() if (~on).any() else 0.0, 2 * eta, fp_slack(n))
    add("P2 on-support A == B (count of unequal entries)", np.count_nonzero(a[on] != bd[on]), 0)
    add("P3 |(A1)_i - (B1)_i| <= 2 n eta", row_gap.max(), 2 * n * eta, fp_slack(n, scale))
    # P4 as two one-sided checks: the negated margins must not exceed 0
    p4a = float(np.max(sizes * math.exp(tau) - a1))
    add("P4a (A1)_i >= |S_i| exp(tau)  [max of |S_i| exp(tau) - (A1)_i]", p4a, 0.0, fp_slack(n, scale))
    p4b = float(np.max(2 * n - sizes * math.exp(tau)))
    add("P4b |S_i| exp(tau) >= 2n  [max of 2n - |S_i| exp(tau)]", p4b, 0.0, fp_slack(n, 2 * n))
    add("P5 |(A1)_i - (B1)_i| <= eta (A1)_i  [max ratio]", np.max(row_gap / a1), eta, fp_slack(n))
    add("D1 |D(A)-D(B)|_ii <= eta D(B)_ii  [max ratio]", np.max(row_gap / b1), eta, fp_slack(n))
    add("D2 |D(A)-D(B)|_ii <= eta D(A)_ii  [max ratio]", np.max(row_gap / a1), eta, fp_slack(n))
    add("D3 |A-B|_ij <= 2 eta", diff.max(), 2 * eta, fp_slack(n))

    pa = a / a1[:, None]
    pb = bd / b1[:, None]
    add("N1 ||D(A)^-1 A - D(B)^-1 B||_inf <= 3 eta", entrywise_inf_norm_diff(pa, pb), 3 * eta, fp_slack(n))
    out_a, _ = normalize_rows(a, v)
    out_b, _ = normalize_rows(bd, v)
    v_inf = float(np.max(np.abs(v)))
    lhs_v = entrywise_inf_norm_diff(out_a, out_b)
    add("N2 ||D(A)^-1 A V - D(B)^-1 B V||_inf <= 3 eta ||V||_inf", lhs_v, 3 * eta * v_inf, fp_slack(n, v_inf))
    if v_inf <= eta:
        add("N2' same, with ||V||_inf <= eta: <= 3 eta^2", lhs_v, 3 * eta**2, fp_slack(n, v_inf))
    fast = sparse_attention(b, v).matrix
    add("F  sparse path vs dense D(B)^-1 B V", entrywise_inf_norm_diff(fast, out_b), 0.0, fp_slack(n, v_inf))
    return checks
