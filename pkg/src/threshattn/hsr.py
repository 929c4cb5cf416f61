"""Dynamic half-space range reporting over a bounding-box tree.

A query ``(b, c)`` reports every live point ``z`` with ``<b, z> >= c``.  Each
node keeps the axis-aligned box of its subtree; the extremes of ``<b, .>``
over a box come coordinatewise from the signs of ``b``.  Subtrees whose box
maximum falls below ``c`` are pruned, subtrees whose box minimum clears ``c``
are reported wholesale, and only straddling leaves test points one by one.

Box extremes are widened by a rounding allowance, so a pruned or bulk-reported
subtree is decided correctly even for points sitting exactly on the
hyperplane.  Answers are therefore identical to a linear scan.
"""

from __future__ import annotations

import numpy as np

from .ledger import QueryCostLedger, map_rows
from .linalg import ShapeError, SupportSets, as_dense, pair_scores

LEAF_SIZE = 16
_EPS = np.finfo(np.float64).eps


class _Node:
    __slots__ = ("lo", "hi", "left", "right", "ids", "dim", "split")

    def __init__(self, lo, hi, ids=None, left=None, right=None, dim=-1, split=0.0):
        self.lo = lo
        self.hi = hi
        self.ids = ids  # python list of ids for leaves, None for internal nodes
        self.left = left
        self.right = right
        self.dim = dim
        self.split = split

    @property
    def is_leaf(self) -> bool:
        return self.ids is not None


class HsrTree:
    """Half-space reporting structure with stable integer ids.

    Removal tombstones the point; the tree is rebuilt once tombstones outnumber
    live points, or once the live count has doubled since the last rebuild.
    """

    def __init__(self, d: int, leaf_size: int = LEAF_SIZE):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = d
        self.leaf_size = leaf_size
        self._points = np.empty((16, d))
        self._alive = np.zeros(16, dtype=bool)
        self._next_id = 0
        self.root: _Node | None = None
        self.live_count = 0
        self.tombstone_count = 0
        self._live_at_rebuild = 0
        self.rebuilds = 0

    # construction ------------------------------------------------------

    @classmethod
    def build(cls, points, leaf_size: int = LEAF_SIZE) -> "HsrTree":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2:
            raise ShapeError("points must be a 2-D array (m, d)")
        tree = cls(pts.shape[1], leaf_size)
        m = pts.shape[0]
        if m:
            tree._grow(m)
            tree._points[:m] = pts
            tree._alive[:m] = True
            tree._next_id = m
            tree.live_count = m
            tree._rebuild()
        return tree

    def _grow(self, need: int):
        cap = self._points.shape[0]
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        pts = np.empty((cap, self.d))
        pts[: self._next_id] = self._points[: self._next_id]
        alive = np.zeros(cap, dtype=bool)
        alive[: self._next_id] = self._alive[: self._next_id]
        self._points, self._alive = pts, alive

    def _build_node(self, ids: np.ndarray) -> _Node:
        pts = self._points[ids]
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        if ids.size <= self.leaf_size:
            return _Node(lo, hi, ids=ids.tolist())
        dim = int(np.argmax(hi - lo))
        order = np.argsort(pts[:, dim], kind="stable")
        half = ids.size // 2
        split = float(pts[order[half - 1], dim])
        return _Node(
            lo, hi,
            left=self._build_node(ids[order[:half]]),
            right=self._build_node(ids[order[half:]]),
            dim=dim, split=split,
        )

    def _rebuild(self):
        ids = np.flatnonzero(self._alive[: self._next_id])
        self.root = self._build_node(ids) if ids.size else None
        self.tombstone_count = 0
        self._live_at_rebuild = self.live_count
        self.rebuilds += 1

    # updates -----------------------------------------------------------

    def insert(self, z) -> int:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.size != self.d:
            raise ShapeError(f"point has dimension {z.size}, tree has {self.d}")
        if not np.all(np.isfinite(z)):
            raise ValueError("point contains non-finite entries")
        pid = self._next_id
        self._grow(pid + 1)
        self._points[pid] = z
        self._alive[pid] = True
        self._next_id += 1
        self.live_count += 1

        if self.root is None:
            self.root = _Node(z.copy(), z.copy(), ids=[pid])
        else:
            node, parent, went_left = self.root, None, False
            while True:
                np.minimum(node.lo, z, out=node.lo)
                np.maximum(node.hi, z, out=node.hi)
                if node.is_leaf:
                    break
                parent = node
                went_left = z[node.dim] <= node.split
                node = node.left if went_left else node.right
            node.ids.append(pid)
            if len(node.ids) > 2 * self.leaf_size:
                self._split_leaf(node, parent, went_left)

        if self.live_count >= 2 * max(self._live_at_rebuild, self.leaf_size):
            self._rebuild()
        return pid

    def _split_leaf(self, leaf: _Node, parent: _Node | None, is_left: bool):
        ids = np.asarray(leaf.ids, dtype=np.int64)
        live = ids[self._alive[ids]]
        self.tombstone_count -= ids.size - live.size
        fresh = self._build_node(live)
        if parent is None:
            self.root = fresh
        elif is_left:
            parent.left = fresh
        else:
            parent.right = fresh

    def remove(self, pid: int) -> None:
        if not (0 <= pid < self._next_id) or not self._alive[pid]:
            raise KeyError(f"no live point with id {pid}")
        self._alive[pid] = False
        self.live_count -= 1
        self.tombstone_count += 1
        if self.tombstone_count > self.live_count:
            self._rebuild()

    # queries -----------------------------------------------------------

    def point(self, pid: int) -> np.ndarray:
        return self._points[pid].copy()

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self._alive[: self._next_id])

    def _subtree_ids(self, node: _Node) -> list[int]:
        out, stack = [], [node]
        while stack:
            nd = stack.pop()
            if nd.is_leaf:
                out.extend(nd.ids)
            else:
                stack.append(nd.left)
                stack.append(nd.right)
        return out

    def search(self, b, c: float, ledger: QueryCostLedger | None = None,
               debug: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Return sorted ids with ``<b, z> >= c`` and their scores."""
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if b.size != self.d:
            raise ShapeError(f"direction has dimension {b.size}, tree has {self.d}")
        if self.root is None:
            return np.empty(0, dtype=np.int64), np.empty(0)
        c = float(c)
        bpos = np.maximum(b, 0.0)
        bneg = np.minimum(b, 0.0)
        babs = np.abs(b)
        widen = 4.0 * (self.d + 2) * _EPS

        found_ids: list[np.ndarray] = []
        found_scores: list[np.ndarray] = []
        bulk: list[int] = []
        visited = tested = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            visited += 1
            upper = float(node.hi @ bpos + node.lo @ bneg)
            lower = float(node.lo @ bpos + node.hi @ bneg)
            slack = widen * float(babs @ np.maximum(np.abs(node.lo), np.abs(node.hi)))
            if upper < c - slack:
                if debug:
                    self._assert_decision(node, b, c, expect=False)
                continue
            if lower >= c + slack:
                if debug:
                    self._assert_decision(node, b, c, expect=True)
                bulk.extend(self._subtree_ids(node))
                continue
            if node.is_leaf:
                ids = np.asarray(node.ids, dtype=np.int64)
                ids = ids[self._alive[ids]]
                sc = pair_scores(b, self._points[ids])
                tested += ids.size
                hit = sc >= c
                found_ids.append(ids[hit])
                found_scores.append(sc[hit])
            else:
                stack.append(node.right)
                stack.append(node.left)

        if bulk:
            ids = np.asarray(bulk, dtype=np.int64)
            ids = ids[self._alive[ids]]
            found_ids.append(ids)
            found_scores.append(pair_scores(b, self._points[ids]))
            tested += ids.size

        if ledger is not None:
            ledger.nodes_visited += visited
            ledger.oracle_calls += tested
            ledger.classical_scan_calls += tested
            ledger.dot_product_flops += tested * self.d + visited * 2 * self.d

        ids = np.concatenate(found_ids) if found_ids else np.empty(0, dtype=np.int64)
        scores = np.concatenate(found_scores) if found_scores else np.empty(0)
        order = np.argsort(ids, kind="stable")
        return ids[order], scores[order]

    def query(self, b, c: float, ledger: QueryCostLedger | None = None) -> np.ndarray:
        return self.search(b, c, ledger)[0]

    def _assert_decision(self, node: _Node, b, c, expect: bool):
        ids = np.asarray(self._subtree_ids(node), dtype=np.int64)
        ids = ids[self._alive[ids]]
        hits = pair_scores(b, self._points[ids]) >= c
        if expect:
            assert hits.all(), "bulk-reported subtree contains a non-reporting point"
        else:
            assert not hits.any(), "pruned subtree contains a reporting point"

    # introspection -----------------------------------------------------

    def depth(self) -> int:
        """Number of internal-node levels on the longest root-to-leaf path."""
        def rec(node):
            if node is None or node.is_leaf:
                return 0
            return 1 + max(rec(node.left), rec(node.right))
        return rec(self.root)

    def check_invariants(self) -> None:
        """Every live point sits in every ancestor box and is reachable once."""
        seen = []

        def rec(node, boxes):
            boxes = boxes + [(node.lo, node.hi)]
            if node.is_leaf:
                for pid in node.ids:
                    if not self._alive[pid]:
                        continue
                    z = self._points[pid]
                    for lo, hi in boxes:
                        assert np.all(lo <= z) and np.all(z <= hi), f"point {pid} escapes a box"
                    seen.append(pid)
            else:
                rec(node.left, boxes)
                rec(node.right, boxes)

        if self.root is not None:
            rec(self.root, [])
        assert sorted(seen) == self.live_ids().tolist(), "live points missing or duplicated"
        assert self.tombstone_count <= self.live_count or self.live_count == 0


def hsr_init(points) -> HsrTree:
    return HsrTree.build(points)


def hsr_query(tree: HsrTree, b, c: float) -> np.ndarray:
    return tree.query(b, c)


def hsr_insert(tree: HsrTree, z) -> int:
    return tree.insert(z)


def hsr_remove(tree: HsrTree, pid: int) -> None:
    tree.remove(pid)


def build_support_hsr(q, k_mat, tau: float, ledger: QueryCostLedger | None = None) -> SupportSets:
    """Supports via one half-space query per query row.

    The tree stores the key rows and is queried with ``b = Q_i, c = tau``, so
    row ``i`` receives exactly ``{j : <Q_i, K_j> >= tau}``.
    """
    q = as_dense(q, "q")
    k_mat = as_dense(k_mat, "k_mat")
    if q.shape[1] != k_mat.shape[1]:
        raise ShapeError(f"q and k_mat dimensions differ: {q.shape[1]} vs {k_mat.shape[1]}")
    tree = HsrTree.build(k_mat)

    def one(i):
        row_ledger = QueryCostLedger()
        ids, sc = tree.search(q[i], tau, row_ledger)
        return ids, sc, row_ledger

    results = map_rows(one, range(q.shape[0]))
    if ledger is not None:
        for _, _, lg in results:
            ledger.merge(lg)
    return SupportSets.from_lists(q.shape[0], [r[0] for r in results], [r[1] for r in results])
