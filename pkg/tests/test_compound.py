import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowseg.compound import (
    FlowRing,
    compound,
    compound_at,
    compound_pixelwise,
    compound_trajectory,
    flow_to_color,
)
from flowseg.errors import DimensionMismatch, RingNotFull
from flowseg.grid import FlowField


def ring_of(*fields, k=None):
    return FlowRing(k or len(fields), fields)


def test_constant_fields_sum():
    r = ring_of(*[FlowField.constant(4, 3, 1, 0)] * 3)
    out = compound_pixelwise(r)
    assert np.all(out.u == 3) and np.all(out.v == 0)


def test_zero_fields_k5():
    r = ring_of(*[FlowField.zeros(5, 5)] * 5)
    assert not compound_pixelwise(r).data.any()
    assert not compound_trajectory(r).data.any()


def test_additive_inverse():
    a = np.zeros((2, 2, 2), np.float32)
    b = np.zeros((2, 2, 2), np.float32)
    a[1, 0] = (1, 2)
    b[1, 0] = (-1, -2)
    out = compound_pixelwise(ring_of(FlowField(a), FlowField(b)))
    assert out.data[1, 0].tolist() == [0.0, 0.0]


def test_ring_not_full():
    r = FlowRing(3, [FlowField.zeros(2, 2)])
    with pytest.raises(RingNotFull):
        compound_pixelwise(r)
    with pytest.raises(RingNotFull):
        compound_trajectory(r)


def test_ring_dimension_check():
    r = FlowRing(2, [FlowField.zeros(2, 2)])
    with pytest.raises(DimensionMismatch):
        r.push(FlowField.zeros(3, 2))


def test_ring_keeps_newest():
    r = FlowRing(2)
    for v in (1, 2, 3):
        r.push(FlowField.constant(1, 1, v, 0))
    assert [f.data[0, 0, 0] for f in r.fields] == [2, 3]
    assert r.full and r.occupancy == 2


def test_trajectory_constant_equals_pixelwise():
    fields = [FlowField.constant(6, 5, 0.5, -1.25)] * 4
    r = ring_of(*fields)
    assert compound_trajectory(r) == compound_pixelwise(r)


fields_st = arrays(np.float32, (4, 5, 2), elements=st.floats(-8, 8, width=32))


@given(fields_st)
def test_k1_identity_bitwise(data):
    f = FlowField(data)
    r = ring_of(f)
    assert compound_pixelwise(r).data.tobytes() == data.tobytes()
    assert compound_trajectory(r).data.tobytes() == data.tobytes()


@given(st.lists(fields_st, min_size=2, max_size=4))
def test_pixelwise_order_independent(datas):
    fields = [FlowField(d) for d in datas]
    ref = compound_pixelwise(ring_of(*fields))
    for perm in itertools.permutations(fields):
        assert compound_pixelwise(ring_of(*perm)) == ref


@given(st.lists(fields_st, min_size=2, max_size=4), st.sampled_from(["pixelwise", "trajectory"]))
def test_compound_at_matches_full_field(datas, mode):
    r = ring_of(*[FlowField(d) for d in datas])
    full = compound(r, mode)
    ys, xs = np.mgrid[0:4, 0:5]
    at = compound_at(r, xs.ravel(), ys.ravel(), mode)
    assert at.astype(np.float32).tobytes() == full.data.reshape(-1, 2).tobytes()


def test_trajectory_follows_motion():
    # newest step moves content by -2 in x; the older field is non-zero only there
    newest = FlowField.constant(10, 1, -2, 0)
    older = np.zeros((1, 10, 2), np.float32)
    older[0, 3] = (-1, 0)
    r = ring_of(FlowField(older), newest)
    traj = compound_trajectory(r)
    pix = compound_pixelwise(r)
    assert traj.data[0, 5].tolist() == [-3.0, 0.0]
    assert pix.data[0, 5].tolist() == [-2.0, 0.0]


def _rotating_bar(t, omega, size=120, length=80, width=10):
    c = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)

    def inside(angle):
        dx, dy = xs - c, ys - c
        along = dx * np.cos(angle) + dy * np.sin(angle)
        across = -dx * np.sin(angle) + dy * np.cos(angle)
        return (np.abs(along) <= length / 2) & (np.abs(across) <= width / 2)

    def back(steps):
        a = -omega * steps
        dx, dy = xs - c, ys - c
        return np.stack([c + dx * np.cos(a) - dy * np.sin(a) - xs, c + dx * np.sin(a) + dy * np.cos(a) - ys], -1)

    return inside(omega * t), back


def test_rotating_bar_trajectory_beats_pixelwise():
    omega, k, t = np.radians(3.0), 5, 10
    fields = []
    for step in range(t - k + 1, t + 1):
        mask, back = _rotating_bar(step, omega)
        data = np.where(mask[..., None], back(1), 0.0).astype(np.float32)
        fields.append(FlowField(data))
    mask, back = _rotating_bar(t, omega)
    truth = back(k)[mask]
    r = ring_of(*fields)
    epe_pix = np.hypot(*(compound_pixelwise(r).data[mask] - truth).T).mean()
    epe_traj = np.hypot(*(compound_trajectory(r).data[mask] - truth).T).mean()
    assert epe_traj <= epe_pix
    assert epe_traj < 0.5 * epe_pix


def test_color_zero_is_white():
    img = flow_to_color(FlowField.zeros(3, 2))
    assert img.dtype == np.uint8 and img.shape == (2, 3, 3)
    assert np.all(img == 255)


def test_color_hues():
    data = np.zeros((1, 3, 2), np.float32)
    data[0, 0] = (4, 0)
    data[0, 1] = (0, 4)
    img = flow_to_color(FlowField(data))
    assert img[0, 0].tolist() == [255, 0, 0]
    # hue 90 degrees at full saturation
    assert img[0, 1].tolist() == [128, 255, 0]
    assert img[0, 2].tolist() == [255, 255, 255]
