"""Grover search simulated through its exact two-dimensional rotation.

After ``j`` iterations on ``t`` marked items out of ``n``, the state sits at
angle ``(2j + 1) * asin(sqrt(t / n))`` from the unmarked axis, so a measurement
hits a marked item with probability ``sin^2`` of that angle.  Sampling that
outcome reproduces the measurement distribution and the oracle-call count of a
real device without materialising amplitudes.

``find_all_marked`` handles an unknown number of solutions with the
exponential schedule: iteration counts are drawn uniformly below a cap ``M``
that grows by ``lambda`` after every miss (up to ``sqrt(n)``) and resets after
every new find.  Found items are excluded classically.  The search stops after
``fail_streak_limit`` consecutive misses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from . import rng as rngmod
from .ledger import QueryCostLedger, map_rows
from .linalg import ShapeError, SupportSets, as_dense, row_scores

ANALYTIC_CONSTANT = 9 / 4
STATEVECTOR_LIMIT = 1024


@dataclass(frozen=True)
class GroverConfig:
    mode: Literal["sampled", "analytic"] = "sampled"
    lam: float = 6 / 5
    fail_streak_limit: int | None = None  # None: 3 * ceil(log2 n)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("sampled", "analytic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 1.0 < self.lam < 4 / 3:
            raise ValueError("lam must lie strictly between 1 and 4/3")
        if self.fail_streak_limit is not None and self.fail_streak_limit < 1:
            raise ValueError("fail_streak_limit must be >= 1")

    def streak_limit(self, n: int) -> int:
        if self.fail_streak_limit is not None:
            return self.fail_streak_limit
        return max(1, 3 * math.ceil(math.log2(max(n, 2))))


def grover_success_prob(n: int, t: int, j: int) -> float:
    """Probability that measuring after ``j`` iterations yields one of ``t`` marked items."""
    if t == 0:
        return 0.0
    if not (1 <= t <= n) or j < 0:
        raise ValueError(f"need 1 <= t <= n and j >= 0, got n={n}, t={t}, j={j}")
    if j == 0:
        return t / n                        # sin^2(asin(sqrt(t/n))), without rounding
    theta = math.asin(math.sqrt(t / n))
    return math.sin((2 * j + 1) * theta) ** 2


def marked_mass_trace(n: int, marked, jmax: int) -> np.ndarray:
    """Statevector marked-probability after 0..jmax oracle+diffusion rounds."""
    if n > STATEVECTOR_LIMIT:
        raise ValueError(f"statevector path limited to n <= {STATEVECTOR_LIMIT}")
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(list(marked), dtype=np.int64)] = True
    amp = np.full(n, 1.0 / math.sqrt(n))
    out = np.empty(jmax + 1)
    for j in range(jmax + 1):
        out[j] = float(np.sum(amp[mask] ** 2))
        amp[mask] *= -1.0                   # oracle
        amp = 2.0 * amp.mean() - amp        # inversion about the mean
    return out


@dataclass(frozen=True)
class RotationReport:
    n: int
    marked: tuple[int, ...]
    j: int
    marked_mass: float
    model_prob: float
    difference: float


def validate_rotation_model(n: int, marked=None, j: int = 1, seed: int = 0) -> RotationReport:
    """Compare the closed-form success probability with an explicit statevector.

    ``marked=None`` draws a random marked set from ``seed``.
    """
    if n < 1 or n & (n - 1):
        raise ValueError("statevector validation needs n a power of two")
    if n > STATEVECTOR_LIMIT:
        raise ValueError(f"statevector path limited to n <= {STATEVECTOR_LIMIT}")
    if marked is None:
        g = rngmod.stream(seed, rngmod.TRIAL, n, j)
        t = int(g.integers(0, n + 1))
        marked = np.sort(g.choice(n, size=t, replace=False))
    marked = tuple(sorted({int(x) for x in marked}))
    mass = float(marked_mass_trace(n, marked, j)[j])
    model = grover_success_prob(n, len(marked), j)
    return RotationReport(n, marked, j, mass, model, abs(mass - model))


def _as_mask(n: int, membership) -> np.ndarray:
    if isinstance(membership, np.ndarray) and membership.dtype == bool:
        if membership.shape != (n,):
            raise ShapeError("membership mask must have length n")
        return membership
    return np.asarray(membership(np.arange(n)), dtype=bool)


def find_all_marked(n: int, membership: Callable[[np.ndarray], np.ndarray] | np.ndarray,
                    cfg: GroverConfig, ledger: QueryCostLedger | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Return the sorted indices ``x`` in ``[n]`` with ``membership(x)`` true.

    ``membership`` is a vectorised predicate (or a boolean mask).  The
    simulator reads the whole mask to know the rotation angle; only the calls
    a quantum device would make are charged to ``ledger``.
    """
    ledger = ledger if ledger is not None else QueryCostLedger()
    mask = _as_mask(n, membership)
    marked = np.flatnonzero(mask)

    if cfg.mode == "analytic":
        calls = math.ceil(sum(ANALYTIC_CONSTANT * math.sqrt(n / t) for t in range(1, marked.size + 1)))
        ledger.oracle_calls += calls
        ledger.classical_scan_calls += marked.size
        ledger.grover_iterations += max(calls - marked.size, 0)
        return marked

    rng = rng if rng is not None else rngmod.stream(cfg.seed, rngmod.GROVER)
    limit = cfg.streak_limit(n)
    cap = math.sqrt(n)
    unfound = marked.tolist()
    unfound_set = set(unfound)
    found: list[int] = []
    big_m, streak = 1.0, 0
    while streak < limit:
        m = int(rng.integers(0, math.ceil(big_m)))
        ledger.grover_iterations += m
        ledger.oracle_calls += m + 1          # m in superposition, one classical check
        ledger.classical_scan_calls += 1
        t = len(unfound)
        # with t == n every basis state is marked
        if t and (t == n or rng.random() < grover_success_prob(n, t, m)):
            outcome = unfound[int(rng.integers(t))]
        else:
            outcome = int(rng.integers(n))
            while outcome in unfound_set:
                outcome = int(rng.integers(n))
        if outcome in unfound_set and bool(mask[outcome]):
            unfound.remove(outcome)
            unfound_set.discard(outcome)
            found.append(outcome)
            big_m, streak = 1.0, 0
        else:
            streak += 1
            big_m = min(cfg.lam * big_m, cap)
    return np.array(sorted(found), dtype=np.int64)


def grover_row_search(q: np.ndarray, k_mat: np.ndarray, tau: float, cfg: GroverConfig, i: int):
    """Search row ``i``; returns ``(indices, scores, ledger)``.

    The oracle marks ``j`` when ``<Q_i, K_j> >= tau``; each call costs one
    d-length dot product.
    """
    scores = row_scores(q, k_mat, i)
    lg = QueryCostLedger()
    idx = find_all_marked(k_mat.shape[0], scores >= tau, cfg, lg,
                          rngmod.stream(cfg.seed, rngmod.GROVER, i))
    lg.dot_product_flops += lg.oracle_calls * q.shape[1]
    return idx, scores[idx], lg


def build_support_grover(q, k_mat, tau: float, cfg: GroverConfig | None = None,
                         ledger: QueryCostLedger | None = None) -> SupportSets:
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    if q.shape[1] != k_mat.shape[1]:
        raise ShapeError(f"q and k_mat dimensions differ: {q.shape[1]} vs {k_mat.shape[1]}")
    cfg = cfg or GroverConfig()
    results = map_rows(lambda i: grover_row_search(q, k_mat, tau, cfg, i), range(q.shape[0]))
    if ledger is not None:
        for _, _, lg in results:
            ledger.merge(lg)
    return SupportSets.from_lists(q.shape[0], [r[0] for r in results], [r[1] for r in results])
