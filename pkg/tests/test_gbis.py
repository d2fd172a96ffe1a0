import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowseg import gbis
from flowseg.errors import NegativeTau, ZeroPeaks
from flowseg.grid import FlowField, Mask
from flowseg.sampler import FOREGROUND, SamplePointSet, restrict_to_foreground, sample_grid

from oracles import naive_segment, partition


def lattice_points(cells, flows=None, s=3):
    cells = sorted(cells, key=lambda c: (c[1], c[0]))
    xs = [s // 2 + s * gx for gx, _ in cells]
    ys = [s // 2 + s * gy for _, gy in cells]
    flows = np.zeros((len(cells), 2)) if flows is None else np.asarray(flows, float)
    return SamplePointSet(s, 200, 200, xs, ys, flows[:, 0], flows[:, 1], FOREGROUND)


def components(n, edges):
    adj = {i: set() for i in range(n)}
    for a, b, _ in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, out = set(), []
    for i in range(n):
        if i in seen:
            continue
        comp, queue = set(), deque([i])
        while queue:
            x = queue.popleft()
            if x in comp:
                continue
            comp.add(x)
            queue.extend(adj[x] - comp)
        seen |= comp
        out.append(frozenset(comp))
    return set(out)


def test_non_adjacent_points():
    g = gbis.build_graph(lattice_points([(0, 0), (2, 0)]))
    assert g.edge_count == 0
    assert gbis.segment(g, 10).count() == 2


def test_3x3_uniform_block():
    pts = lattice_points([(x, y) for y in range(3) for x in range(3)])
    g = gbis.build_graph(pts)
    assert np.all(g.w == 0)
    assert len(components(9, g.edges())) == 1
    centre = 4
    kept_by_centre = [e for e in g.edges() if centre in e[:2]]
    assert len(kept_by_centre) >= 4


def test_four_lightest_with_id_ties():
    # centre point with 8 neighbours of increasing flow difference
    cells = [(x, y) for y in range(3) for x in range(3)]
    flows = np.zeros((9, 2))
    flows[:, 0] = [8, 7, 6, 5, 0, 4, 3, 2, 1]
    g = gbis.build_graph(lattice_points(cells, flows))
    centre_edges = {(a, b) for a, b, _ in g.edges() if 4 in (a, b)}
    # its four lightest are ids 8, 7, 6, 5 (weights 1..4); others may add their own
    assert {(4, 5), (4, 6), (4, 7), (4, 8)} <= centre_edges


def test_graph_invariants_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        labels = np.where(rng.random((30, 30)) < 0.6, 255, 0).astype(np.uint8)
        flow = FlowField(rng.normal(0, 2, (30, 30, 2)).astype(np.float32))
        fg = restrict_to_foreground(sample_grid(30, 30, 3), Mask(labels), flow)
        g = gbis.build_graph(fg)
        pairs = list(zip(g.a.tolist(), g.b.tolist()))
        assert len(pairs) == len(set(pairs))
        assert all(a < b for a, b in pairs)
        for a, b, w in g.edges():
            assert max(abs(fg.xs[a] - fg.xs[b]), abs(fg.ys[a] - fg.ys[b])) == 3
            assert w == pytest.approx(math.hypot(fg.us[a] - fg.us[b], fg.vs[a] - fg.vs[b]))
        # a point with at most four lattice neighbours keeps all of them
        for i in range(len(fg)):
            nb = [j for j in range(len(fg))
                  if j != i and max(abs(fg.xs[i] - fg.xs[j]), abs(fg.ys[i] - fg.ys[j])) == 3]
            if len(nb) <= 4:
                assert all((min(i, j), max(i, j)) in set(pairs) for j in nb)


def test_segment_tau_extremes():
    edges = [(0, 1, 1.0), (1, 2, 2.0), (3, 4, 0.5)]
    g = gbis.Graph.from_edges(6, edges)
    assert partition(gbis.segment(g, math.inf)) == {frozenset({0, 1, 2}), frozenset({3, 4}), frozenset({5})}
    assert gbis.segment(g, 0.0).count() == 6
    with pytest.raises(NegativeTau):
        gbis.segment(g, -1.0)


def test_internal_difference_bookkeeping():
    g = gbis.Graph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.5)])
    f = gbis.segment(g, 2.0)
    # 1.0 <= 0 + 2/1 merges; then 1.5 <= min(1 + 2/2, 0 + 2/1) merges
    assert f.count() == 1
    root = f.find(0)
    assert f.internal[root] == 1.5 and f.size[root] == 3


def random_graph(rng, n):
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < min(1.0, 3.0 / n):
                w = float(rng.choice([0.0, 0.5, 1.0, 2.0])) if rng.random() < 0.3 else float(rng.uniform(0, 5))
                edges.append((a, b, w))
    return edges


def test_segment_matches_naive_reference():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 51))
        edges = random_graph(rng, n)
        tau = float(rng.choice([0.0, 0.5, 3.0, 10.0, 40.0, math.inf]))
        g = gbis.Graph.from_edges(n, edges)
        assert partition(gbis.segment(g, tau)) == naive_segment(n, edges, tau)


@given(st.integers(0, 2**32 - 1), st.floats(0, 50))
def test_partition_and_connectivity(seed, tau):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    edges = random_graph(rng, n)
    f = gbis.segment(gbis.Graph.from_edges(n, edges), tau)
    segs = f.segments()
    assert sum(len(m) for m in segs.values()) == n
    assert sum(f.size[r] for r in segs) == n
    comps = components(n, edges)
    for members in segs.values():
        # each segment is connected inside the graph restricted to it
        sub = [(a, b, w) for a, b, w in edges if a in members and b in members]
        idx = {m: i for i, m in enumerate(members)}
        assert len(components(len(members), [(idx[a], idx[b], w) for a, b, w in sub])) == 1
        assert any(set(members) <= c for c in comps)
    max_w = max((w for *_, w in edges), default=0.0)
    assert all(f.internal[r] <= max_w for r in segs)


def test_segment_deterministic():
    rng = np.random.default_rng(3)
    edges = random_graph(rng, 40)
    g = gbis.Graph.from_edges(40, edges)
    assert gbis.segment(g, 5.0).labels().tolist() == gbis.segment(g, 5.0).labels().tolist()


def test_adaptive_tau():
    assert gbis.adaptive_tau(400, 2) == 400.0
    assert gbis.adaptive_tau(0, 3) == 0.0
    assert gbis.adaptive_tau(123, 1) == 246.0
    with pytest.raises(ZeroPeaks):
        gbis.adaptive_tau(10, 0)


def test_segment_csv(tmp_path):
    pts = lattice_points([(0, 0), (1, 0)])
    f = gbis.segment(gbis.build_graph(pts), 1.0)
    p = tmp_path / "s.csv"
    gbis.write_segment_csv(f, pts, p)
    assert p.read_text().splitlines()[0] == "id,x,y,segment"
