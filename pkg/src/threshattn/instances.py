"""Seeded (tau, k, eta)-good problem instances.

``gram_exact`` places the score matrix directly (``Q = S``, ``K = I``, so
``d = n``): every support, tie and off-support value is known exactly.

``random_embed`` keeps ``d`` small.  Keys are unit directions grouped into
tight clusters of 1..k members, lifted with a constant last coordinate;
each query picks one cluster and becomes a scaled, biased copy of its centre,
so the score is positive (>= tau) on that cluster and negative elsewhere.
The off-support spread cannot be made small when ``d << n``, so this mode
either validates against the requested ``eta`` or, with ``eta=None``, records
the measured spread as the instance's ``eta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Literal

import numpy as np

from . import rng as rngmod
from .brute import supports_from_scores
from .linalg import GoodnessReport, SupportSets, goodness_from_scores, matmul, merge_goodness

MAX_RETRIES = 16
_CLUSTER_NOISE = 1e-6


class GenerationError(ValueError):
    pass


def min_tau(n: int) -> float:
    return 2.0 * math.log(n)


@dataclass(frozen=True)
class InstanceSpec:
    n: int
    k: int
    tau: float | None = None      # None: 2 ln n
    eta: float | None = 0.01      # None (random_embed only): measured
    seed: int = 0
    mode: Literal["gram_exact", "random_embed"] = "gram_exact"
    d: int | None = None          # forced to n by gram_exact
    v_inf_cap: float | None = None

    def resolved(self) -> "InstanceSpec":
        """Fill defaults and validate; raises ``ValueError`` on a bad spec."""
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"k must satisfy 1 <= k <= n, got k={self.k}, n={self.n}")
        tau = min_tau(self.n) if self.tau is None else float(self.tau)
        if tau < min_tau(self.n):
            raise ValueError(f"tau={tau} is below 2 ln n = {min_tau(self.n)}")
        if self.mode not in ("gram_exact", "random_embed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eta is None and self.mode != "random_embed":
            raise ValueError("eta may only be left unset (measured) in random_embed mode")
        if self.eta is not None and not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.mode == "gram_exact":
            if self.d is not None and self.d != self.n:
                raise ValueError("gram_exact requires d == n")
            d = self.n
        else:
            d = 16 if self.d is None else self.d
            if d < 3:
                # cluster centres live on the sphere S^(d-2); d = 2 leaves only two directions
                raise ValueError("random_embed requires d >= 3")
        cap = self.v_inf_cap
        if cap is None:
            cap = self.eta if self.eta is not None else 1.0
        return replace(self, tau=tau, d=d, v_inf_cap=float(cap))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Instance:
    spec: InstanceSpec
    q: np.ndarray
    k_mat: np.ndarray
    v: np.ndarray
    truth: SupportSets
    goodness: GoodnessReport | None = None

    @property
    def n(self) -> int:
        return self.q.shape[0]


def _values(spec: InstanceSpec) -> np.ndarray:
    g = rngmod.stream(spec.seed, rngmod.VALUES)
    return g.uniform(-spec.v_inf_cap, spec.v_inf_cap, size=(spec.n, spec.d))


def _truth_and_goodness(q, k_mat, spec: InstanceSpec, eta: float, block_rows: int = 1024):
    rows, scores, reports = [], [], []
    for start in range(0, q.shape[0], block_rows):
        s = matmul(q[start:start + block_rows], k_mat)
        for idx, sc in supports_from_scores(s, spec.tau):
            rows.append(idx)
            scores.append(sc)
        reports.append(goodness_from_scores(s, spec.tau, spec.k, eta))
    rep = merge_goodness(reports, spec.tau, spec.k, eta)
    return SupportSets.from_lists(q.shape[0], rows, scores), rep


def _gram_exact(spec: InstanceSpec) -> Instance:
    n, k, tau, eta = spec.n, spec.k, spec.tau, spec.eta
    s = np.empty((n, n))
    for i in range(n):
        g = rngmod.stream(spec.seed, rngmod.ROW, i)
        size = int(g.integers(1, k + 1))
        pos = g.choice(n, size=size, replace=False)
        row = g.uniform(-eta, 0.0, size=n) if eta > 0 else np.zeros(n)
        row[pos] = g.uniform(tau, tau + 1.0, size=size)
        s[i] = row
    q = s
    k_mat = np.eye(n)
    truth, rep = _truth_and_goodness(q, k_mat, spec, eta)
    if not rep.is_good:
        raise GenerationError("gram_exact instance failed validation: " + "; ".join(rep.failures()))
    return Instance(spec, q, k_mat, _values(spec), truth, rep)


def _cluster_sizes(g: np.random.Generator, n: int, k: int) -> list[int]:
    sizes, total = [], 0
    while total < n:
        s = min(int(g.integers(1, k + 1)), n - total)
        sizes.append(s)
        total += s
    return sizes


def _random_embed_attempt(spec: InstanceSpec, attempt: int):
    n, d, k, tau = spec.n, spec.d, spec.k, spec.tau
    g = rngmod.stream(spec.seed, rngmod.LAYOUT, attempt)
    sizes = _cluster_sizes(g, n, k)
    m = len(sizes)
    perm = g.permutation(n)
    cluster_of = np.empty(n, dtype=np.int64)
    cluster_of[perm] = np.repeat(np.arange(m), sizes)

    centers = g.standard_normal((m, d - 1))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    w = centers[cluster_of] + _CLUSTER_NOISE * g.standard_normal((n, d - 1))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    k_mat = np.hstack([w, np.ones((n, 1))])

    choice = np.array([int(rngmod.stream(spec.seed, rngmod.ROW, i, attempt).integers(m))
                       for i in range(n)])
    alpha = np.zeros(m)
    gamma = np.zeros(m)
    used = np.unique(choice)
    for start in range(0, used.size, 256):
        cs = used[start:start + 256]
        cos = w @ centers[cs].T                     # (n, len(cs))
        for col, c in enumerate(cs):
            member = cluster_of == c
            c_on = cos[member, col].min()
            c_off = cos[~member, col].max() if (~member).any() else -1.0
            gap = c_on - c_off
            if not gap > 1e-9:
                return None
            gamma[c] = c_off + gap / 2
            alpha[c] = (tau + 0.5) / (gap / 2)
    q = np.hstack([alpha[choice, None] * centers[choice], -(alpha * gamma)[choice, None]])
    return q, k_mat


def _random_embed(spec: InstanceSpec) -> Instance:
    last = None
    for attempt in range(MAX_RETRIES):
        made = _random_embed_attempt(spec, attempt)
        if made is None:
            last = "two clusters too close to separate"
            continue
        q, k_mat = made
        eta = spec.eta
        if eta is None:
            truth, rep = _truth_and_goodness(q, k_mat, spec, math.inf)
            eta = max(0.0, -rep.min_off_support_score) if math.isfinite(rep.min_off_support_score) else 0.0
            rep = replace(rep, eta=eta)
        else:
            truth, rep = _truth_and_goodness(q, k_mat, spec, eta)
        if rep.is_good:
            final = replace(spec, eta=eta)
            return Instance(final, q, k_mat, _values(spec), truth, rep)
        last = "; ".join(rep.failures())
    raise GenerationError(f"random_embed failed after {MAX_RETRIES} attempts: {last}")


def generate(spec: InstanceSpec) -> Instance:
    """Build a validated instance; ``truth`` holds the exact supports."""
    spec = spec.resolved()
    if spec.mode == "gram_exact":
        return _gram_exact(spec)
    return _random_embed(spec)
