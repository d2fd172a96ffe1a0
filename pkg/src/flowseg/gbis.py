"""Graph-based segmentation of foreground samples by flow similarity.

Nodes are lattice samples; each keeps edges to its four most similar
8-neighbours.  Segments are merged in ascending edge order with the
Felzenszwalb-Huttenlocher predicate, using an adaptive scale ``tau``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import NegativeTau, ZeroPeaks
from .sampler import SamplePointSet

EDGES_PER_POINT = 4
_NEIGHBOURS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected weighted graph; edge ``i`` joins ``a[i] < b[i]`` with weight ``w[i]``."""

    node_count: int
    a: np.ndarray
    b: np.ndarray
    w: np.ndarray

    @classmethod
    def from_edges(cls, node_count: int, edges) -> Graph:
        """Build from ``(a, b, w)`` triples, normalising and deduplicating pairs."""
        best: dict[tuple[int, int], float] = {}
        for a, b, w in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            key = (min(a, b), max(a, b))
            best.setdefault(key, float(w))
        keys = sorted(best)
        a = np.array([k[0] for k in keys], dtype=np.int64)
        b = np.array([k[1] for k in keys], dtype=np.int64)
        w = np.array([best[k] for k in keys], dtype=np.float64)
        return cls(node_count, a, b, w)

    @property
    def edge_count(self) -> int:
        return len(self.a)

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(w)) for a, b, w in zip(self.a, self.b, self.w)]


class SegmentForest:
    """Union-find with union by rank, path compression and per-root stats."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n
        self.internal = [0.0] * n

    def __len__(self):
        return len(self.parent)

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int, w: float) -> int:
        """Join roots ``a`` and ``b`` through an edge of weight ``w``; return the new root."""
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        self.size[a] += self.size[b]
        self.internal[a] = max(self.internal[a], self.internal[b], w)
        return a

    def labels(self) -> np.ndarray:
        """Root id of every node."""
        return np.array([self.find(i) for i in range(len(self))], dtype=np.int64)

    def segments(self) -> dict[int, list[int]]:
        """Members of each segment keyed by root, members ascending."""
        out: dict[int, list[int]] = {}
        for i in range(len(self)):
            out.setdefault(self.find(i), []).append(i)
        return out

    def count(self) -> int:
        return sum(1 for i, p in enumerate(self.parent) if i == p)


def build_graph(fg: SamplePointSet) -> Graph:
    """Lattice 8-neighbour graph keeping each point's four lightest edges."""
    n = len(fg)
    if n == 0:
        return Graph(0, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    s = fg.interval
    gx = (fg.xs - fg.offset) // s
    gy = (fg.ys - fg.offset) // s
    gw, gh = int(gx.max()) + 3, int(gy.max()) + 3
    # one cell of padding on every side so neighbour lookups never wrap
    lookup = np.full((gh, gw), -1, dtype=np.int64)
    lookup[gy + 1, gx + 1] = np.arange(n)
    nbr = np.stack([lookup[gy + 1 + dy, gx + 1 + dx] for dx, dy in _NEIGHBOURS], axis=1)
    present = nbr >= 0
    safe = np.where(present, nbr, 0)
    du = fg.us[:, None] - fg.us[safe]
    dv = fg.vs[:, None] - fg.vs[safe]
    weight = np.where(present, np.hypot(du, dv), np.inf)
    key_id = np.where(present, nbr, n)
    order = np.lexsort((key_id, weight), axis=1)[:, :EDGES_PER_POINT]
    rows = np.arange(n)[:, None]
    kept_nbr = nbr[rows, order]
    kept_w = weight[rows, order]
    valid = kept_nbr >= 0
    src = np.broadcast_to(rows, kept_nbr.shape)[valid]
    dst = kept_nbr[valid]
    w = kept_w[valid]
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    pair = lo * n + hi
    _, first = np.unique(pair, return_index=True)
    return Graph(n, lo[first], hi[first], w[first])


def sorted_edge_order(graph: Graph) -> np.ndarray:
    """Total edge order by (weight, lower id, higher id)."""
    return np.lexsort((graph.b, graph.a, graph.w))


def segment(graph: Graph, tau: float) -> SegmentForest:
    """Merge components in ascending edge order while the weight is within
    each side's internal difference plus ``tau / size``."""
    if tau < 0 or math.isnan(tau):
        raise NegativeTau(f"tau must be >= 0, got {tau}")
    forest = SegmentForest(graph.node_count)
    order = sorted_edge_order(graph)
    find = forest.find
    size = forest.size
    internal = forest.internal
    unbounded = math.isinf(tau)
    for a, b, w in zip(graph.a[order].tolist(), graph.b[order].tolist(), graph.w[order].tolist()):
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        if unbounded or w <= min(internal[ra] + tau / size[ra], internal[rb] + tau / size[rb]):
            forest.union(ra, rb, w)
    return forest


def adaptive_tau(n_fg: int, n_peaks: int) -> float:
    """Desired segment scale: twice the foreground samples per detected peak."""
    if n_peaks < 1:
        raise ZeroPeaks("adaptive tau needs at least one peak")
    return 2.0 * n_fg / n_peaks


def write_segment_csv(forest: SegmentForest, fg: SamplePointSet, path) -> None:
    labels = forest.labels()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "segment"])
        for i in range(len(fg)):
            writer.writerow([i, int(fg.xs[i]), int(fg.ys[i]), int(labels[i])])
