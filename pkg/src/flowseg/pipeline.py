"""Per-frame moving-foreground analysis and its postprocessing."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import cfsfdp, gbis
from .compound import COMPOUND_MODES, PIXELWISE, FlowRing, compound_at
from .errors import DimensionMismatch, EmptySegment, InvariantViolation, RingNotFull
from .grid import DEFAULT_FG_POLICY, BBox, Mask
from .sampler import FOREGROUND, SamplePoint, SamplePointSet, restrict_to_foreground, sample_grid

FULL = "full"
GBIS_ONLY = "gbis_only"
DEFAULT_GBIS_ONLY_TAU = 50.0


@dataclass(frozen=True)
class PipelineParams:
    k: int = 5
    s: int = 3
    p: float = 50.0
    c1: float = 15.0
    c2: float = 0.5
    t_d2: float = 50.0
    n_c: int = 200
    d_c: float | None = None
    dc_fraction: float = cfsfdp.DEFAULT_DC_FRACTION
    compound_mode: str = PIXELWISE
    seed: int = 0
    fg_policy: tuple[int, ...] = tuple(sorted(DEFAULT_FG_POLICY))
    mode: str = FULL
    fixed_tau: float = DEFAULT_GBIS_ONLY_TAU

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.n_c < 1:
            raise ValueError("N_c must be >= 1")
        if self.compound_mode not in COMPOUND_MODES:
            raise ValueError(f"compound_mode must be one of {COMPOUND_MODES}")
        if self.mode not in (FULL, GBIS_ONLY):
            raise ValueError(f"mode must be {FULL!r} or {GBIS_ONLY!r}")
        object.__setattr__(self, "fg_policy", tuple(sorted({int(v) for v in self.fg_policy})))

    def peak_params(self) -> cfsfdp.PeakParams:
        return cfsfdp.PeakParams(
            p=self.p, d_c=self.d_c, dc_fraction=self.dc_fraction, c1=self.c1, c2=self.c2,
            t_d2=self.t_d2, k=self.k, n_c=self.n_c, seed=self.seed,
        )

    def updated(self, **overrides) -> PipelineParams:
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return replace(self, **overrides)


@dataclass(frozen=True)
class Instance:
    rep_peak: SamplePoint
    rho: float | None
    member_ids: tuple[int, ...]
    bbox: BBox
    mean_flow: tuple[float, float]  # derived convenience output for trackers

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass
class Diagnostics:
    n_fg_samples: int = 0
    n_analyzed: int = 0
    n_peaks_raw: int = 0
    n_segments_raw: int = 0
    tau: float | None = None
    ring_full: bool = True
    timing_ms: dict[str, float] = field(default_factory=dict)


@dataclass
class FrameResult:
    frame_index: int
    instances: list[Instance] = field(default_factory=list)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def boxes(self) -> list[BBox]:
        return [inst.bbox for inst in self.instances]

    def to_record(self, timing: bool = False) -> dict:
        diag = asdict(self.diagnostics)
        timing_ms = diag.pop("timing_ms")
        if timing:
            diag["timing_ms"] = {k: round(v, 3) for k, v in timing_ms.items()}
        return {
            "frame": self.frame_index,
            "instances": [
                {
                    "peak": {
                        "x": inst.rep_peak.x,
                        "y": inst.rep_peak.y,
                        "u": inst.rep_peak.u,
                        "v": inst.rep_peak.v,
                        "rho": inst.rho,
                    },
                    "bbox": inst.bbox.as_list(),
                    "size": inst.size,
                    "mean_flow": list(inst.mean_flow),
                }
                for inst in self.instances
            ],
            "diagnostics": diag,
        }

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_record(timing), separators=(",", ":"))


def select_segments(forest: gbis.SegmentForest, peaks) -> list[int]:
    """Roots of the segments holding at least one peak, in first-peak order."""
    roots: dict[int, None] = {}
    for pk in peaks:
        roots.setdefault(forest.find(int(pk)), None)
    return list(roots)


def representative_peaks(forest: gbis.SegmentForest, roots, peaks, rho) -> dict[int, int]:
    """Densest peak (ties to lower id) of every selected segment, keyed by root.

    ``rho`` maps peak id to density.
    """
    wanted = set(roots)
    best: dict[int, int] = {}
    for pk in sorted(int(p) for p in peaks):
        root = forest.find(pk)
        if root not in wanted:
            continue
        cur = best.get(root)
        if cur is None or rho[pk] > rho[cur]:
            best[root] = pk
    missing = wanted - set(best)
    if missing:
        raise InvariantViolation(f"segments without peaks: {sorted(missing)}")
    return best


def bbox_for_segment(xs, ys, s: int, width: int, height: int) -> BBox:
    """Tight box around the members, grown by ``ceil(s / 2)`` per side and
    clamped to the image."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    if xs.size == 0:
        raise EmptySegment("cannot box an empty segment")
    pad = math.ceil(s / 2)
    return BBox(
        max(0, int(xs.min()) - pad),
        max(0, int(ys.min()) - pad),
        min(width, int(xs.max()) + 1 + pad),
        min(height, int(ys.max()) + 1 + pad),
    )


def frame_seed(seed: int, frame_index: int) -> list[int]:
    # independent stream per frame so frames can be processed in any order
    return [int(seed) & 0xFFFFFFFFFFFFFFFF, int(frame_index) & 0xFFFFFFFFFFFFFFFF]


def _make_instance(fg: SamplePointSet, members: list[int], peak_id: int, rho, params: PipelineParams) -> Instance:
    ids = np.asarray(members)
    return Instance(
        rep_peak=fg.point(peak_id),
        rho=None if rho is None else float(rho),
        member_ids=tuple(int(i) for i in members),
        bbox=bbox_for_segment(fg.xs[ids], fg.ys[ids], params.s, fg.width, fg.height),
        mean_flow=(float(fg.us[ids].mean()), float(fg.vs[ids].mean())),
    )


class _Stopwatch:
    def __init__(self):
        self.timing: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.timing[name] = self.timing.get(name, 0.0) + (now - self._t) * 1e3
        self._t = now


def analyze_samples(fg: SamplePointSet, params: PipelineParams, frame_index: int = 0) -> FrameResult:
    """Run composition analysis, segmentation and postprocessing on
    foreground samples that already carry compounded flow."""
    watch = _Stopwatch()
    result = FrameResult(frame_index)
    diag = result.diagnostics
    diag.n_fg_samples = len(fg)
    if len(fg) == 0:
        watch.lap("composition")
        diag.timing_ms = watch.timing
        return result

    graph = gbis.build_graph(fg)
    watch.lap("segmentation")

    if params.mode == GBIS_ONLY:
        forest = gbis.segment(graph, params.fixed_tau)
        segments = forest.segments()
        diag.n_segments_raw = len(segments)
        diag.tau = float(params.fixed_tau)
        watch.lap("segmentation")
        for root, members in sorted(segments.items(), key=lambda kv: kv[1][0]):
            # no density information here: the first member stands in as the locator point
            result.instances.append(_make_instance(fg, members, members[0], None, params))
        watch.lap("postprocessing")
        diag.timing_ms = watch.timing
        return result

    analysis = cfsfdp.analyze(fg, params.peak_params(), seed=frame_seed(params.seed, frame_index))
    peaks = analysis.peaks
    diag.n_analyzed = len(analysis.subsample_ids)
    diag.n_peaks_raw = len(peaks)
    watch.lap("composition")
    if len(peaks) == 0:
        diag.timing_ms = watch.timing
        return result

    tau = gbis.adaptive_tau(len(fg), len(peaks))
    diag.tau = tau
    forest = gbis.segment(graph, tau)
    diag.n_segments_raw = forest.count()
    watch.lap("segmentation")

    roots = select_segments(forest, peaks)
    rho = analysis.rho_of()
    reps = representative_peaks(forest, roots, peaks, rho)
    members_by_root = forest.segments()
    for root in sorted(roots, key=lambda r: members_by_root[r][0]):
        result.instances.append(_make_instance(fg, members_by_root[root], reps[root], rho[reps[root]], params))
    watch.lap("postprocessing")
    diag.timing_ms = watch.timing
    return result


def foreground_samples(mask: Mask, flow, s: int) -> SamplePointSet:
    return restrict_to_foreground(sample_grid(mask.width, mask.height, s), mask, flow)


def analyze_frame(mask: Mask, ring: FlowRing, params: PipelineParams, frame_index: int = 0) -> FrameResult:
    """Full per-frame analysis from a foreground mask and a full flow ring.

    Flow is only compounded at foreground lattice samples; the values equal
    the full-field compounding at those pixels.
    """
    t0 = time.perf_counter()
    if not ring.full:
        raise RingNotFull(f"ring holds {ring.occupancy} of {ring.capacity} flows")
    if ring.shape != mask.shape:
        raise DimensionMismatch(
            f"mask is {mask.width}x{mask.height} but flows are {ring.shape[1]}x{ring.shape[0]}"
        )
    if mask.fg_policy != frozenset(params.fg_policy):
        mask = mask.with_policy(params.fg_policy)
    grid = sample_grid(mask.width, mask.height, params.s)
    keep = mask.foreground[grid.ys, grid.xs]
    xs, ys = grid.xs[keep], grid.ys[keep]
    uv = compound_at(ring, xs, ys, params.compound_mode)
    fg = SamplePointSet(params.s, mask.width, mask.height, xs, ys, uv[:, 0], uv[:, 1], FOREGROUND)
    t_sampling = (time.perf_counter() - t0) * 1e3
    result = analyze_samples(fg, params, frame_index)
    result.diagnostics.timing_ms = {"compound_and_sampling": t_sampling, **result.diagnostics.timing_ms}
    return result


def analyze_sequence(frames, params: PipelineParams):
    """Yield a :class:`FrameResult` for every ``(index, mask, flow)`` triple.

    ``flow`` is the per-step flow ending at that frame (``None`` for the first
    frame).  Frames seen before the ring holds ``k`` flows yield empty results
    flagged ``ring_full=False``.
    """
    ring = FlowRing(params.k)
    for index, mask, flow in frames:
        if flow is not None:
            ring.push(flow)
        if not ring.full:
            result = FrameResult(index)
            result.diagnostics.ring_full = False
            yield result
            continue
        yield analyze_frame(mask, ring, params, index)
