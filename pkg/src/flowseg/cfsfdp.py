"""Composition analysis: count moving objects through density peaks.

Each foreground sample is described by ``(u, v, x/p, y/p)``.  A point is a
peak when its density is not negligible and it is far, either in flow or in
image coordinates, from every denser point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, NonPositiveBalance, NonPositiveCutoff, TooFewPoints
from .sampler import SamplePointSet

DEFAULT_DC_FRACTION = 0.02


@dataclass(frozen=True)
class PeakParams:
    p: float = 50.0
    d_c: float | None = None
    dc_fraction: float = DEFAULT_DC_FRACTION
    c1: float = 15.0
    c2: float = 0.5
    t_d2: float = 50.0
    k: int = 5
    n_c: int = 200
    seed: int = 0

    @property
    def t_d1(self) -> float:
        return self.c2 * self.k


@dataclass(frozen=True, eq=False)
class Features:
    """Scaled 4-vectors for density, plus raw flow/coordinate parts for separations."""

    vectors: np.ndarray  # (n, 4): u, v, x/p, y/p
    flow: np.ndarray  # (n, 2): u, v
    coords: np.ndarray  # (n, 2): x, y, unscaled

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(eq=False)
class PeakAnalysis:
    subsample_ids: np.ndarray
    rho: np.ndarray
    delta_f: np.ndarray
    delta_c: np.ndarray
    d_c: float
    params: PeakParams
    is_peak: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def peaks(self) -> np.ndarray:
        """Peak ids, indexing the full foreground set."""
        return self.subsample_ids[self.is_peak]

    def rho_of(self) -> dict[int, float]:
        return {int(i): float(r) for i, r in zip(self.subsample_ids, self.rho)}


def subsample(n_points: int, n_c: int, seed) -> np.ndarray:
    """Uniform ``n_c``-subset of ``range(n_points)``, sorted; everything if it fits."""
    if n_c < 1:
        raise ValueError("N_c must be >= 1")
    if n_points <= n_c:
        return np.arange(n_points)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_points, size=n_c, replace=False))


def build_features(points: SamplePointSet, p: float) -> Features:
    if not p > 0:
        raise NonPositiveBalance(f"balance parameter p must be > 0, got {p}")
    flow = points.flows()
    coords = points.coords()
    return Features(np.column_stack([flow, coords / p]), flow, coords)


def pairwise_distances(a: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix, accumulated one coordinate at a time."""
    sq = np.zeros((len(a), len(a)))
    for col in a.T:
        diff = col[:, None] - col[None, :]
        sq += diff * diff
    return np.sqrt(sq)


def densities(vectors: np.ndarray, d_c: float, dist: np.ndarray | None = None) -> np.ndarray:
    """Gaussian-kernel density of each point, including its own ``exp(0)`` term."""
    if not d_c > 0:
        raise NonPositiveCutoff(f"cutoff distance must be > 0, got {d_c}")
    if dist is None:
        dist = pairwise_distances(vectors)
    return np.exp(-np.square(dist / d_c)).sum(axis=1)


def choose_dc(vectors: np.ndarray, fraction: float = DEFAULT_DC_FRACTION, dist: np.ndarray | None = None) -> float:
    """Nearest-rank ``fraction`` quantile of all pairwise distances.

    Falls back to the smallest positive distance when the quantile is zero
    (duplicated features), and to 1.0 when every point coincides.
    """
    n = len(vectors)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points to choose d_c, got {n}")
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if dist is None:
        dist = pairwise_distances(vectors)
    upper = np.sort(dist[np.triu_indices(n, 1)])
    rank = max(0, math.ceil(fraction * len(upper)) - 1)
    d_c = float(upper[rank])
    if d_c > 0:
        return d_c
    positive = upper[upper > 0]
    return float(positive[0]) if len(positive) else 1.0


def density_order(rho: np.ndarray) -> np.ndarray:
    """Rank of each point: 0 is densest; equal densities rank by lower index."""
    order = np.lexsort((np.arange(len(rho)), -rho))
    rank = np.empty(len(rho), dtype=np.intp)
    rank[order] = np.arange(len(rho))
    return rank


def deltas(features: Features, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Separation from the nearest denser point, in flow space and in pixels.

    The densest point instead takes its largest distance to any other point
    (``inf`` when it is alone).
    """
    n = len(features)
    if n == 0:
        raise EmptyInput("no points to analyse")
    if len(rho) != n:
        raise ValueError("rho and features differ in length")
    rank = density_order(np.asarray(rho))
    denser = rank[None, :] < rank[:, None]
    top = int(np.argmin(rank))
    out = []
    for part in (features.flow, features.coords):
        dist = pairwise_distances(part)
        delta = np.where(denser, dist, np.inf).min(axis=1)
        delta[top] = dist[top].max() if n > 1 else np.inf
        out.append(delta)
    return out[0], out[1]


def select_peaks(rho: np.ndarray, delta_f: np.ndarray, delta_c: np.ndarray, params: PeakParams) -> np.ndarray:
    """Boolean peak flags over the analysed points."""
    if len(rho) == 0:
        return np.zeros(0, dtype=bool)
    t_r = rho.max() / params.c1
    return (rho > t_r) & ((delta_f > params.t_d1) | (delta_c > params.t_d2))


def analyze(points: SamplePointSet, params: PeakParams, seed=None) -> PeakAnalysis:
    """Subsample, score and select peaks on a foreground sample set."""
    ids = subsample(len(points), params.n_c, params.seed if seed is None else seed)
    if len(ids) == 0:
        empty = np.zeros(0)
        return PeakAnalysis(ids, empty, empty, empty, float("nan"), params, np.zeros(0, dtype=bool))
    feats = build_features(points.take(ids), params.p)
    dist = pairwise_distances(feats.vectors)
    if params.d_c is not None:
        d_c = float(params.d_c)
    elif len(ids) >= 2:
        d_c = choose_dc(feats.vectors, params.dc_fraction, dist)
    else:
        d_c = 1.0  # a lone point has density 1 for any cutoff
    rho = densities(feats.vectors, d_c, dist)
    delta_f, delta_c = deltas(feats, rho)
    flags = select_peaks(rho, delta_f, delta_c, params)
    return PeakAnalysis(ids, rho, delta_f, delta_c, d_c, params, flags)


def write_decision_csv(analysis: PeakAnalysis, points: SamplePointSet, path) -> None:
    """Dump the decision graph (rho vs. separations) for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "u", "v", "rho", "delta_f", "delta_c", "is_peak"])
        for j, i in enumerate(analysis.subsample_ids):
            writer.writerow([
                int(i), int(points.xs[i]), int(points.ys[i]),
                repr(float(points.us[i])), repr(float(points.vs[i])),
                repr(float(analysis.rho[j])), repr(float(analysis.delta_f[j])),
                repr(float(analysis.delta_c[j])), int(analysis.is_peak[j]),
            ])
