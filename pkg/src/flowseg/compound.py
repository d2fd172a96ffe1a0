"""Multi-frame flow compounding and flow visualization.

A :class:`FlowRing` holds the last ``k`` per-step backward flows
``f(t,t-1), f(t-1,t-2), ...`` (newest last).  Compounding turns them into a
single ``k``-step displacement ``f(t,t-k)`` that separates movers from the
background much better than a single step does.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable

import numpy as np
from matplotlib.colors import hsv_to_rgb

from .errors import DimensionMismatch, RingNotFull
from .grid import FlowField

PIXELWISE = "pixelwise"
TRAJECTORY = "trajectory"
COMPOUND_MODES = (PIXELWISE, TRAJECTORY)


class FlowRing:
    """Fixed-capacity buffer of per-step flows, oldest first."""

    def __init__(self, capacity: int, fields: Iterable[FlowField] = ()):
        if capacity < 1:
            raise ValueError("ring capacity must be >= 1")
        self.capacity = capacity
        self._buffer: deque[FlowField] = deque(maxlen=capacity)
        for f in fields:
            self.push(f)

    def push(self, field: FlowField) -> None:
        if self._buffer and field.shape != self._buffer[0].shape:
            raise DimensionMismatch(
                f"flow of size {field.width}x{field.height} does not match ring "
                f"size {self._buffer[0].width}x{self._buffer[0].height}"
            )
        self._buffer.append(field)

    def clear(self) -> None:
        self._buffer.clear()

    @property
    def fields(self) -> tuple[FlowField, ...]:
        return tuple(self._buffer)

    @property
    def occupancy(self) -> int:
        return len(self._buffer)

    @property
    def full(self) -> bool:
        return len(self._buffer) == self.capacity

    @property
    def shape(self) -> tuple[int, int] | None:
        return self._buffer[0].shape if self._buffer else None

    def snapshot(self) -> FlowRing:
        return FlowRing(self.capacity, self._buffer)

    def __len__(self):
        return len(self._buffer)


def _require_full(ring: FlowRing) -> tuple[FlowField, ...]:
    if not ring.full:
        raise RingNotFull(f"ring holds {ring.occupancy} of {ring.capacity} flows")
    fields = ring.fields
    shape = fields[0].shape
    if any(f.shape != shape for f in fields):
        raise DimensionMismatch("ring contains flows of different sizes")
    return fields


def _pixelwise_at(fields, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    stack = np.stack([f.data[ys, xs] for f in fields]).astype(np.float64)
    # sorting first makes the float64 reduction independent of ring order
    stack.sort(axis=0)
    return stack.sum(axis=0)


def _bilinear(data: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = data.shape[:2]
    x = np.clip(x, 0.0, w - 1)
    y = np.clip(y, 0.0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    d = data.astype(np.float64, copy=False)
    # lerp form keeps constant fields exact
    top = d[y0, x0] + fx * (d[y0, x1] - d[y0, x0])
    bot = d[y1, x0] + fx * (d[y1, x1] - d[y1, x0])
    return top + fy * (bot - top)


def _trajectory_at(fields, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    acc = fields[-1].data[ys, xs].astype(np.float64)
    fx = xs.astype(np.float64)
    fy = ys.astype(np.float64)
    for f in reversed(fields[:-1]):
        acc += _bilinear(f.data, fx + acc[..., 0], fy + acc[..., 1])
    return acc


_AT = {PIXELWISE: _pixelwise_at, TRAJECTORY: _trajectory_at}


def compound_at(ring: FlowRing, xs, ys, mode: str = PIXELWISE) -> np.ndarray:
    """Compounded flow at the given pixels only, as an ``(n, 2)`` float64 array.

    Bitwise identical to indexing the full-field result at those pixels.
    """
    if mode not in _AT:
        raise ValueError(f"unknown compound mode {mode!r}; expected one of {COMPOUND_MODES}")
    fields = _require_full(ring)
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    return _AT[mode](fields, ys, xs).astype(np.float32).astype(np.float64)


def _full(fields, at) -> FlowField:
    h, w = fields[0].shape
    ys, xs = np.mgrid[0:h, 0:w]
    return FlowField(at(fields, ys, xs).astype(np.float32))


def compound_pixelwise(ring: FlowRing) -> FlowField:
    """Per-pixel sum of every buffered flow at the same location."""
    fields = _require_full(ring)
    if len(fields) == 1:
        return fields[0]
    return _full(fields, _pixelwise_at)


def compound_trajectory(ring: FlowRing) -> FlowField:
    """Accumulate flow along the warped path instead of at a fixed pixel.

    Starting at ``p``, the newest flow is read at ``p``, each older flow at the
    location reached so far (bilinear, border-clamped).
    """
    fields = _require_full(ring)
    if len(fields) == 1:
        return fields[0]
    return _full(fields, _trajectory_at)


def compound(ring: FlowRing, mode: str = PIXELWISE) -> FlowField:
    if mode == PIXELWISE:
        return compound_pixelwise(ring)
    if mode == TRAJECTORY:
        return compound_trajectory(ring)
    raise ValueError(f"unknown compound mode {mode!r}; expected one of {COMPOUND_MODES}")


def flow_to_color(flow: FlowField) -> np.ndarray:
    """Render flow as RGB: hue gives direction, saturation relative speed.

    Saturation is normalised by the largest magnitude in this field, so a
    zero field is plain white.
    """
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    mag = np.hypot(u, v)
    peak = mag.max() if mag.size else 0.0
    hsv = np.empty(flow.shape + (3,))
    hsv[..., 0] = np.mod(np.degrees(np.arctan2(v, u)), 360.0) / 360.0
    hsv[..., 1] = np.minimum(1.0, mag / peak) if peak > 0 else 0.0
    hsv[..., 2] = 1.0
    return np.round(hsv_to_rgb(hsv) * 255.0).astype(np.uint8)
