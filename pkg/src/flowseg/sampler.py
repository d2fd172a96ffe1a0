"""Sparse lattice sampling and restriction to foreground pixels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroInterval
from .grid import FlowField, Mask

ALL = "all"
FOREGROUND = "foreground"


@dataclass(frozen=True)
class SamplePoint:
    id: int
    x: int
    y: int
    u: float = 0.0
    v: float = 0.0


@dataclass(frozen=True, eq=False)
class SamplePointSet:
    """Lattice samples stored column-wise, sorted by ``(y, x)``.

    ``ids`` are implicit: the i-th point has id ``i``.
    """

    interval: int
    width: int
    height: int
    xs: np.ndarray
    ys: np.ndarray
    us: np.ndarray
    vs: np.ndarray
    provenance: str = ALL

    def __post_init__(self):
        for name, dtype in (("xs", np.int64), ("ys", np.int64), ("us", np.float64), ("vs", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.xs)

    @property
    def offset(self) -> int:
        return self.interval // 2

    def point(self, i: int) -> SamplePoint:
        return SamplePoint(int(i), int(self.xs[i]), int(self.ys[i]), float(self.us[i]), float(self.vs[i]))

    def points(self) -> list[SamplePoint]:
        return [self.point(i) for i in range(len(self))]

    def take(self, ids) -> SamplePointSet:
        """Subset in the given order (ids are renumbered densely)."""
        ids = np.asarray(ids, dtype=np.intp)
        return SamplePointSet(
            self.interval, self.width, self.height,
            self.xs[ids], self.ys[ids], self.us[ids], self.vs[ids], self.provenance,
        )

    def flows(self) -> np.ndarray:
        return np.column_stack([self.us, self.vs])

    def coords(self) -> np.ndarray:
        return np.column_stack([self.xs, self.ys]).astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, SamplePointSet):
            return NotImplemented
        return (
            (self.interval, self.width, self.height, self.provenance)
            == (other.interval, other.width, other.height, other.provenance)
            and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("xs", "ys", "us", "vs"))
        )

    __hash__ = None


def sample_grid(width: int, height: int, s: int) -> SamplePointSet:
    """Every ``s``-th pixel in both axes, starting at ``(s // 2, s // 2)``."""
    if s < 1:
        raise ZeroInterval(f"sample interval must be >= 1, got {s}")
    off = s // 2
    gy, gx = np.meshgrid(np.arange(off, height, s), np.arange(off, width, s), indexing="ij")
    n = gx.size
    return SamplePointSet(s, width, height, gx.ravel(), gy.ravel(), np.zeros(n), np.zeros(n), ALL)


def restrict_to_foreground(samples: SamplePointSet, mask: Mask, flow: FlowField) -> SamplePointSet:
    """Keep samples on foreground pixels and attach the flow found there."""
    dims = (samples.height, samples.width)
    if mask.shape != dims or flow.shape != dims:
        raise DimensionMismatch(
            f"samples {samples.width}x{samples.height}, mask {mask.width}x{mask.height}, "
            f"flow {flow.width}x{flow.height} must agree"
        )
    keep = mask.foreground[samples.ys, samples.xs]
    xs = samples.xs[keep]
    ys = samples.ys[keep]
    uv = flow.data[ys, xs].astype(np.float64)
    return SamplePointSet(samples.interval, samples.width, samples.height, xs, ys, uv[:, 0], uv[:, 1], FOREGROUND)
