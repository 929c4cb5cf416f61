"""Scaling benchmark: CSV rows per (n, k, d, method, seed) plus a regression summary.

Grid syntax is ``key=values`` pairs separated by ``;``.  Values are comma
lists; ``2^8..2^13`` expands to successive powers of two.  Keys:

    n       instance sizes (default 2^8..2^11)
    k       support bounds (default 8)
    d       embedding dimensions (default 16; ignored by gram_exact)
    method  exact, sparse, brute, hsr, grover-sampled, grover-analytic
    mode    random_embed (default) or gram_exact
    eta     off-support bound; "measured" (default, random_embed only)
    rows    search only this many sampled rows per instance (default: all)

Columns: ``oracle_calls`` is the search-stage total over the searched rows.
``flops`` is attention-stage flops for ``exact`` / ``sparse`` and dot-product
flops of the search for the support methods.  ``wall_ms`` is filled only when
``THRESHATTN_WALLCLOCK=1`` so that output is byte-stable by default.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .brute import brute_force_support, brute_row_search
from .grover import GroverConfig, build_support_grover, grover_row_search
from .hsr import HsrTree, build_support_hsr
from .instances import Instance, InstanceSpec, generate
from .ledger import QueryCostLedger
from .linalg import SupportSets
from .reference import exact_attention
from .sparse import build_B, sparse_attention

CSV_SCHEMA = 1
WALLCLOCK_ENV = "THRESHATTN_WALLCLOCK"
SUPPORT_METHODS = ("brute", "hsr", "grover-sampled", "grover-analytic")
ATTENTION_METHODS = ("exact", "sparse")
ALL_METHODS = ATTENTION_METHODS + SUPPORT_METHODS
COLUMNS = ("n", "k", "d", "method", "seed", "oracle_calls", "flops", "wall_ms", "support_match")


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: tuple[int, ...] = (256, 512, 1024, 2048)
    k: tuple[int, ...] = (8,)
    d: tuple[int, ...] = (16,)
    method: tuple[str, ...] = ALL_METHODS
    mode: str = "random_embed"
    eta: float | None = None
    rows: int | None = None


def _ints(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        m = re.fullmatch(r"2\^(\d+)\.\.2\^(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if lo > hi:
                raise GridError(f"empty range {part!r}")
            out.extend(2**e for e in range(lo, hi + 1))
        elif re.fullmatch(r"2\^\d+", part):
            out.append(2 ** int(part[2:]))
        elif re.fullmatch(r"\d+", part):
            out.append(int(part))
        else:
            raise GridError(f"not an integer list: {part!r}")
    return out


def parse_grid(text: str | None) -> Grid:
    if not text:
        return Grid()
    kw: dict = {}
    for item in filter(None, (s.strip() for s in text.split(";"))):
        if "=" not in item:
            raise GridError(f"expected key=values, got {item!r}")
        key, val = (s.strip() for s in item.split("=", 1))
        if key in ("n", "k", "d"):
            kw[key] = tuple(_ints(val))
        elif key == "method":
            methods = tuple(m.strip() for m in val.split(","))
            bad = [m for m in methods if m not in ALL_METHODS]
            if bad:
                raise GridError(f"unknown method(s) {bad}; choose from {list(ALL_METHODS)}")
            kw["method"] = methods
        elif key == "mode":
            if val not in ("random_embed", "gram_exact"):
                raise GridError(f"unknown mode {val!r}")
            kw["mode"] = val
        elif key == "eta":
            kw["eta"] = None if val == "measured" else float(val)
        elif key == "rows":
            kw["rows"] = int(val)
            if kw["rows"] < 1:
                raise GridError("rows must be >= 1")
        else:
            raise GridError(f"unknown grid key {key!r}")
    grid = Grid(**kw)
    if grid.mode == "gram_exact" and grid.eta is None:
        grid = Grid(**{**grid.__dict__, "eta": 0.01})
    return grid


@dataclass
class Record:
    n: int
    k: int
    d: int
    method: str
    seed: int
    rows: int
    oracle_calls: int
    flops: int
    wall_ms: float | None
    support_match: bool | None
    mode: str = "random_embed"
    ledger: QueryCostLedger = field(default_factory=QueryCostLedger)

    @property
    def dkey(self):
        return "n" if self.mode == "gram_exact" else self.d

    def csv_row(self) -> list:
        return [self.n, self.k, self.d, self.method, self.seed, self.oracle_calls, self.flops,
                "" if self.wall_ms is None else f"{self.wall_ms:.3f}",
                "" if self.support_match is None else str(self.support_match).lower()]


def sample_rows(n: int, count: int | None, seed: int) -> np.ndarray:
    if count is None or count >= n:
        return np.arange(n)
    return np.sort(rngmod.stream(seed, rngmod.TRIAL, n).choice(n, size=count, replace=False))


def _rows_match(truth: SupportSets, rows, found) -> bool:
    return all(np.array_equal(truth.rows[i], idx) and np.array_equal(truth.scores[i], sc)
               for i, (idx, sc) in zip(rows, found))


def search_rows(inst: Instance, method: str, rows: np.ndarray, seed: int,
                ledger: QueryCostLedger) -> list[tuple[np.ndarray, np.ndarray]]:
    """Run one support method on the given rows; full-instance builders when all rows."""
    q, k_mat, tau = inst.q, inst.k_mat, inst.spec.tau
    full = rows.size == inst.n
    if method.startswith("grover"):
        cfg = GroverConfig(mode=method.split("-", 1)[1], seed=seed)
        if full:
            s = build_support_grover(q, k_mat, tau, cfg, ledger)
            return list(zip(s.rows, s.scores))
        out = []
        for i in rows.tolist():
            idx, sc, lg = grover_row_search(q, k_mat, tau, cfg, i)
            ledger.merge(lg)
            out.append((idx, sc))
        return out
    if method == "brute":
        if full:
            s = brute_force_support(q, k_mat, tau, ledger)
            return list(zip(s.rows, s.scores))
        return [brute_row_search(q, k_mat, tau, i, ledger) for i in rows.tolist()]
    if method == "hsr":
        if full:
            s = build_support_hsr(q, k_mat, tau, ledger)
            return list(zip(s.rows, s.scores))
        tree = HsrTree.build(k_mat)
        return [tree.search(q[i], tau, ledger) for i in rows.tolist()]
    raise ValueError(f"unknown support method {method!r}")


def run_method(inst: Instance, method: str, seed: int, rows: int | None) -> Record:
    spec = inst.spec
    timed = os.environ.get(WALLCLOCK_ENV) == "1"
    lg = QueryCostLedger()
    t0 = time.perf_counter()
    match = None
    nrows = inst.n
    if method == "exact":
        exact_attention(inst.q, inst.k_mat, inst.v, lg)
        flops = lg.attention_flops
    elif method == "sparse":
        sparse_attention(build_B(inst.truth, spec.tau), inst.v, lg)
        flops = lg.attention_flops
    else:
        picked = sample_rows(inst.n, rows, seed)
        nrows = picked.size
        found = search_rows(inst, method, picked, seed, lg)
        match = _rows_match(inst.truth, picked.tolist(), found)
        flops = lg.dot_product_flops
    wall = (time.perf_counter() - t0) * 1e3 if timed else None
    return Record(inst.n, spec.k, spec.d, method, seed, nrows, lg.oracle_calls, flops, wall, match,
                  spec.mode, lg)


def run_grid(grid: Grid, repeats: int = 1, seed: int = 0) -> list[Record]:
    if repeats < 1:
        raise GridError("repeats must be >= 1")
    records = []
    for n in grid.n:
        for k in grid.k:
            for d in (grid.d if grid.mode == "random_embed" else (n,)):
                for r in range(repeats):
                    s = seed + r
                    inst = generate(InstanceSpec(n=n, k=k, tau=None, eta=grid.eta, seed=s,
                                                 mode=grid.mode, d=d))
                    for method in grid.method:
                        records.append(run_method(inst, method, s, grid.rows))
    return records


def loglog_slope(xs, ys) -> float:
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    if x.size < 2 or np.ptp(x) == 0:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def minimax_fit(ratios) -> tuple[float, float]:
    """``c`` minimising the largest deviation of ``c * model`` relative to the data.

    ``ratios`` holds ``measured / model`` per grid point (seed means);
    returns ``(c, max_rel_dev)``.
    """
    r = np.asarray(ratios, dtype=float)
    lo, hi = float(r.min()), float(r.max())
    c = 2.0 / (1.0 / lo + 1.0 / hi)
    return c, float(np.max(np.abs(c / r - 1.0)))


def _mean_by_n(recs, value):
    by_n: dict[int, list[float]] = {}
    for rec in recs:
        by_n.setdefault(rec.n, []).append(value(rec))
    ns = sorted(by_n)
    return ns, [float(np.mean(by_n[n])) for n in ns]


def summarize(records: list[Record]) -> list[tuple]:
    """Rows ``(method, k, d, quantity, value)``; ``d`` is ``n`` for gram_exact groups."""
    groups: dict[tuple, list[Record]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.k, rec.dkey), []).append(rec)
    out = []
    for (method, k, dkey), recs in groups.items():
        if method in SUPPORT_METHODS:
            ns, per_row = _mean_by_n(recs, lambda r: r.oracle_calls / r.rows)
            out.append((method, k, dkey, "slope_oracle_calls_per_row", loglog_slope(ns, per_row)))
            out.append((method, k, dkey, "support_match_rate",
                        float(np.mean([bool(r.support_match) for r in recs]))))
        ns, fl = _mean_by_n(recs, lambda r: r.flops)
        out.append((method, k, dkey, "slope_flops", loglog_slope(ns, fl)))
        if method == "exact":
            c, dev = minimax_fit(_mean_by_n(recs, lambda r: r.flops / (r.n * r.n * r.d))[1])
            out += [(method, k, dkey, "fit_c_n2d", c), (method, k, dkey, "fit_max_rel_dev", dev)]
        elif method == "sparse":
            c, dev = minimax_fit(_mean_by_n(recs, lambda r: r.flops / (r.n * r.k * r.d))[1])
            out += [(method, k, dkey, "fit_c_nkd", c), (method, k, dkey, "fit_max_rel_dev", dev)]
    out += crossover(records, out)
    return out


def crossover(records: list[Record], fits: list[tuple]) -> list[tuple]:
    """Where sparse attention flops drop below dense ones.

    ``crossover_n_measured`` is the smallest grid ``n`` at which the mean sparse
    flops undercut the dense flops (nan if none); ``crossover_n_fitted`` solves
    ``c_sparse * n * k * d = c_exact * n^2 * d`` with the fitted constants.
    """
    c_of = {(m, k, d, q): v for m, k, d, q, v in fits}
    out = []
    for (m, k, d, q), c_s in c_of.items():
        if m != "sparse" or q != "fit_c_nkd":
            continue
        c_e = c_of.get(("exact", k, d, "fit_c_n2d"))
        if c_e is None:
            continue
        ns_s, fs = _mean_by_n([r for r in records if (r.method, r.k, r.dkey) == ("sparse", k, d)],
                              lambda r: r.flops)
        ns_e, fe = _mean_by_n([r for r in records if (r.method, r.k, r.dkey) == ("exact", k, d)],
                              lambda r: r.flops)
        dense = dict(zip(ns_e, fe))
        below = [n for n, f in zip(ns_s, fs) if n in dense and f < dense[n]]
        out.append(("sparse", k, d, "crossover_n_measured", float(min(below)) if below else math.nan))
        out.append(("sparse", k, d, "crossover_n_fitted", c_s * k / c_e))
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def to_csv(records: list[Record], summary: list[tuple]) -> str:
    buf = io.StringIO()
    buf.write(f"#schema,{CSV_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for rec in records:
        w.writerow(rec.csv_row())
    buf.write("#summary\n")
    w.writerow(("method", "k", "d", "quantity", "value"))
    for row in summary:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()
