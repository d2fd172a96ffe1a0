import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowseg.errors import DimensionMismatch, ZeroInterval
from flowseg.grid import FlowField, Mask
from flowseg.sampler import FOREGROUND, restrict_to_foreground, sample_grid


def test_grid_9x9():
    g = sample_grid(9, 9, 3)
    assert len(g) == 9
    assert sorted(set(g.xs.tolist())) == [1, 4, 7] and sorted(set(g.ys.tolist())) == [1, 4, 7]


def test_grid_stride_one_and_tiny():
    assert len(sample_grid(5, 4, 1)) == 20
    g = sample_grid(2, 2, 3)
    assert (len(g), g.xs[0], g.ys[0]) == (1, 1, 1)


def test_zero_interval():
    with pytest.raises(ZeroInterval):
        sample_grid(4, 4, 0)


@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 6))
def test_grid_sorted_and_on_lattice(w, h, s):
    g = sample_grid(w, h, s)
    keys = list(zip(g.ys.tolist(), g.xs.tolist()))
    assert keys == sorted(keys)
    assert all(x % s == s // 2 and y % s == s // 2 and x < w and y < h for y, x in keys)


def _mask(labels):
    return Mask(np.asarray(labels, np.uint8))


def test_restrict_all_background_and_all_foreground():
    g = sample_grid(9, 6, 3)
    flow = FlowField.constant(9, 6, 1, 2)
    assert len(restrict_to_foreground(g, _mask(np.zeros((6, 9))), flow)) == 0
    full = restrict_to_foreground(g, _mask(np.full((6, 9), 255)), flow)
    assert len(full) == len(g) and full.provenance == FOREGROUND
    assert np.all(full.us == 1) and np.all(full.vs == 2)


def test_restrict_rectangle_count_matches_scan():
    labels = np.zeros((40, 50), np.uint8)
    labels[7:17, 11:31] = 255
    g = sample_grid(50, 40, 3)
    fg = restrict_to_foreground(g, _mask(labels), FlowField.zeros(50, 40))
    brute = sum(1 for y in range(40) for x in range(50) if x % 3 == 1 and y % 3 == 1 and labels[y, x] == 255)
    assert len(fg) == brute


@given(st.integers(0, 2**32 - 1))
def test_restrict_idempotent_and_flow_lookup(seed):
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random((12, 15)) < 0.5, 255, 0)
    flow = FlowField(rng.normal(size=(12, 15, 2)).astype(np.float32))
    g = sample_grid(15, 12, 3)
    once = restrict_to_foreground(g, _mask(labels), flow)
    assert len(once) <= len(g)
    assert restrict_to_foreground(once, _mask(labels), flow) == once
    for p in once.points():
        assert (p.u, p.v) == tuple(float(c) for c in flow.data[p.y, p.x])


def test_restrict_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        restrict_to_foreground(sample_grid(4, 4, 1), _mask(np.zeros((4, 5))), FlowField.zeros(4, 4))
