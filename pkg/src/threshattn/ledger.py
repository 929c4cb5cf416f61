from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

THREADS_ENV = "THRESHATTN_THREADS"


@dataclass
class QueryCostLedger:
    """Machine-independent cost counters shared by every pipeline stage.

    ``oracle_calls`` counts membership-predicate evaluations (one d-length dot
    product plus a threshold test each), whether issued inside a Grover
    iteration or classically.  ``classical_scan_calls`` is the classical subset.
    """

    oracle_calls: int = 0
    grover_iterations: int = 0
    dot_product_flops: int = 0
    classical_scan_calls: int = 0
    nodes_visited: int = 0
    attention_flops: int = 0

    def merge(self, other: "QueryCostLedger") -> "QueryCostLedger":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def to_json(self) -> dict:
        return asdict(self)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_rows(fn, rows, threads: int | None = None) -> list:
    """Apply ``fn`` to each row index, preserving order.

    Each call must own its state (ledger, RNG) so results do not depend on the
    number of threads.
    """
    threads = thread_count() if threads is None else threads
    rows = list(rows)
    if threads <= 1 or len(rows) < 2:
        return [fn(i) for i in rows]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, rows))
