"""Empirical run-time scaling of the two core stages.

The composition-analysis core (pairwise densities and separations) should grow
quadratically with the number of analysed points, the segmentation core
(graph construction plus merging) roughly linearly.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import cfsfdp, gbis
from .sampler import FOREGROUND, SamplePointSet

DEFAULT_COUNTS = (100, 200, 400, 800, 1600)
CFSFDP_STAGE = "cfsfdp"
GBIS_STAGE = "gbis"
STAGES = (CFSFDP_STAGE, GBIS_STAGE)


def synthetic_points(n: int, seed: int = 0, s: int = 3) -> SamplePointSet:
    """``n`` lattice samples filling a square block, with a few flow blobs."""
    if n < 1:
        raise ValueError("point count must be >= 1")
    rng = np.random.default_rng([seed, n])
    side = math.ceil(math.sqrt(n))
    idx = np.arange(n)
    off = s // 2
    xs = off + s * (idx % side)
    ys = off + s * (idx // side)
    # four quadrants move differently, plus a little noise
    quad = (xs > xs.mean()).astype(int) + 2 * (ys > ys.mean()).astype(int)
    base = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, -6.0], [-4.0, 4.0]])
    flow = base[quad] + rng.normal(0.0, 0.3, (n, 2))
    width = int(xs.max()) + s
    height = int(ys.max()) + s
    return SamplePointSet(s, width, height, xs, ys, flow[:, 0], flow[:, 1], FOREGROUND)


def cfsfdp_core(points: SamplePointSet, d_c: float = 1.0, p: float = 50.0) -> None:
    feats = cfsfdp.build_features(points, p)
    rho = cfsfdp.densities(feats.vectors, d_c)
    cfsfdp.deltas(feats, rho)


def gbis_core(points: SamplePointSet, tau: float = 50.0) -> None:
    gbis.segment(gbis.build_graph(points), tau)


_CORES: dict[str, Callable[[SamplePointSet], None]] = {CFSFDP_STAGE: cfsfdp_core, GBIS_STAGE: gbis_core}


@dataclass(frozen=True)
class Timing:
    stage: str
    n: int
    median_s: float
    runs: int


def time_stage(stage: str, points: SamplePointSet, repetitions: int) -> float:
    fn = _CORES[stage]
    fn(points)  # warm-up
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn(points)
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def run(counts: Sequence[int] = DEFAULT_COUNTS, repetitions: int = 5, seed: int = 0) -> list[Timing]:
    counts = sorted({int(c) for c in counts})
    if len(counts) < 2:
        raise ValueError("need at least two distinct point counts")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    out = []
    for n in counts:
        pts = synthetic_points(n, seed)
        for stage in STAGES:
            out.append(Timing(stage, n, time_stage(stage, pts, repetitions), repetitions))
    return out


def loglog_slope(ns: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(n)."""
    slope, _ = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(times, dtype=float)), 1)
    return float(slope)


def slopes(timings: Sequence[Timing]) -> dict[str, float]:
    out = {}
    for stage in STAGES:
        rows = [t for t in timings if t.stage == stage]
        out[stage] = loglog_slope([t.n for t in rows], [t.median_s for t in rows])
    return out


def write_csv(timings: Sequence[Timing], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "n", "median_s", "runs"])
        for t in timings:
            writer.writerow([t.stage, t.n, f"{t.median_s:.9f}", t.runs])
