import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from threshattn.instances import InstanceSpec, generate
from threshattn.ledger import QueryCostLedger
from threshattn.linalg import SupportSets
from threshattn.reference import exact_attention, exact_dense_A
from threshattn.sparse import GoodnessError, build_B, certify, error_report, sparse_attention


def empty_support(n):
    return SupportSets.from_lists(n, [[]] * n, [[]] * n)


def test_empty_support_is_uniform():
    b = build_B(empty_support(3), tau=1.0)
    assert np.array_equal(b.to_dense(), np.ones((3, 3)))
    assert b.row_sums.tolist() == [3.0, 3.0, 3.0]
    v = np.array([[1.0, 2.0], [3.0, 5.0], [-1.0, 8.0]])
    out = sparse_attention(b, v).matrix
    assert np.allclose(out, v.sum(axis=0) / 3, rtol=0, atol=1e-15)


def test_small_example():
    s = SupportSets.from_lists(2, [[1], []], [[math.log(9)], []])
    b = build_B(s, tau=1.0)
    assert b.to_dense()[0].tolist() == pytest.approx([1.0, 9.0], rel=4e-16)
    assert b.row_sums[0] == pytest.approx(10.0, rel=4e-16)


def test_score_below_tau_rejected():
    s = SupportSets.from_lists(1, [[0]], [[0.5]])
    with pytest.raises(ValueError, match=r"\(0, 0\)"):
        build_B(s, tau=1.0)


def test_correction_invariants():
    inst = generate(InstanceSpec(n=40, k=4, eta=0.1, seed=2))
    b = build_B(inst.truth, inst.spec.tau)
    c = b.correction.to_dense()
    assert np.array_equal(b.to_dense(), 1.0 + c)
    for i, idx in enumerate(inst.truth.rows):
        assert np.flatnonzero(c[i]).tolist() == idx.tolist()
    assert np.all(b.row_sums >= 40)
    assert np.all(np.concatenate(b.correction.row_values) >= math.exp(inst.spec.tau) - 1)
    assert np.array_equal(b.correction_csr().toarray(), c)


def full_support_instance(n, seed):
    g = np.random.default_rng(seed)
    tau = 2 * math.log(max(n, 2))
    s = g.uniform(tau, tau + 1, (n, n))
    rows = [np.arange(n)] * n
    return s, np.eye(n), g.uniform(-1, 1, (n, 3)), SupportSets.from_lists(n, rows, list(s)), tau


@given(st.integers(1, 24), st.integers(0, 2**32 - 1))
def test_full_support_boundary(n, seed):
    q, k, v, support, tau = full_support_instance(n, seed)
    b = build_B(support, tau)
    assert np.max(np.abs(b.to_dense() - exact_dense_A(q, k))) <= 1e-13 * np.exp(tau + 1)
    got = sparse_attention(b, v).matrix
    assert np.max(np.abs(got - exact_attention(q, k, v).matrix)) <= 1e-12


def test_rows_of_normalised_B_sum_to_one():
    inst = generate(InstanceSpec(n=64, k=6, eta=0.1, seed=5))
    bd = build_B(inst.truth, inst.spec.tau).to_dense()
    assert np.allclose((bd / bd.sum(axis=1, keepdims=True)).sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_ledger_charge():
    inst = generate(InstanceSpec(n=32, k=4, seed=1))
    lg = QueryCostLedger()
    b = build_B(inst.truth, inst.spec.tau)
    sparse_attention(b, inst.v, lg)
    d = inst.v.shape[1]
    assert lg.attention_flops == 32 * d + inst.truth.total() * d + 32 * d


def test_error_report_eta_zero_is_exact():
    inst = generate(InstanceSpec(n=48, k=3, eta=0.0, seed=4, v_inf_cap=1.0))
    rep = error_report(inst.q, inst.k_mat, inst.v, build_B(inst.truth, inst.spec.tau), 0.0)
    assert rep.lhs_no_v == 0.0 and rep.lhs_with_v == 0.0 and rep.entry_err == 0.0


def test_n2_trivial():
    inst = generate(InstanceSpec(n=2, k=1, eta=0.0, seed=0))
    rep = error_report(inst.q, inst.k_mat, inst.v, build_B(inst.truth, inst.spec.tau), 0.0)
    assert rep.lhs_no_v == rep.lhs_with_v == rep.entry_err == rep.diag_rel_err == 0.0


def test_error_report_n128():
    eta = 1e-2
    inst = generate(InstanceSpec(n=128, k=4, eta=eta, seed=12))
    b = build_B(inst.truth, inst.spec.tau)
    rep = error_report(inst.q, inst.k_mat, inst.v, b, eta)
    assert rep.lhs_no_v <= 3e-2 and rep.entry_err <= 2e-2 and rep.diag_rel_err <= 1e-2
    v = np.clip(inst.v * (eta / np.max(np.abs(inst.v))), -eta, eta)
    v.flat[np.argmax(np.abs(v))] = eta                   # ||V||_inf = eta exactly
    rep_v = error_report(inst.q, inst.k_mat, v, b, eta)
    assert rep_v.v_inf == eta and rep_v.lhs_with_v <= 3e-4
    assert rep_v.with_v_ratio <= 3.0


def test_sparse_vs_exact_n256():
    eta = 1e-2
    inst = generate(InstanceSpec(n=256, k=4, eta=eta, seed=7))
    out = sparse_attention(build_B(inst.truth, inst.spec.tau), inst.v).matrix
    assert np.max(np.abs(inst.v)) <= eta
    assert np.max(np.abs(out - exact_attention(inst.q, inst.k_mat, inst.v).matrix)) <= 3 * eta**2


def test_goodness_violation_is_named():
    inst = generate(InstanceSpec(n=32, k=2, eta=0.05, seed=8))
    q = inst.q.copy()
    off = next(j for j in range(32) if j not in inst.truth.rows[0])
    q[0, off] = -0.1                                     # -2 eta
    b = build_B(inst.truth, inst.spec.tau)
    with pytest.raises(GoodnessError, match="below -eta"):
        error_report(q, inst.k_mat, inst.v, b, 0.05)
    with pytest.raises(GoodnessError):
        certify(q, inst.k_mat, inst.v, b, 0.05)


@pytest.mark.parametrize("eta", [0.0, 1e-3, 1e-1])
def test_certify_all_pass(eta):
    inst = generate(InstanceSpec(n=96, k=5, eta=eta, seed=21))
    checks = certify(inst.q, inst.k_mat, inst.v, build_B(inst.truth, inst.spec.tau), eta, k=5)
    assert [c.name.split()[0] for c in checks if not c.passed] == []
    assert {c.name.split()[0] for c in checks} >= {"P1", "P2", "P3", "P4a", "P4b", "P5", "N1", "N2"}
