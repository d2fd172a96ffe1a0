import json

import numpy as np
import pytest

from flowseg import gbis
from flowseg.compound import FlowRing
from flowseg.dataset import SynthConfig, synth_scene
from flowseg.errors import DimensionMismatch, EmptySegment, InvariantViolation, RingNotFull
from flowseg.grid import BBox, FlowField, Mask, iou
from flowseg.pipeline import (
    GBIS_ONLY,
    PipelineParams,
    analyze_frame,
    analyze_sequence,
    bbox_for_segment,
    representative_peaks,
    select_segments,
)

TRAJ = PipelineParams(compound_mode="trajectory")


def run_scene(objects, params, frames=20, **cfg):
    seq = synth_scene(SynthConfig(frame_count=frames, objects=tuple(objects), **cfg))
    results = list(analyze_sequence(((f.index, f.mask(), f.flow) for f in seq.frames), params))
    return seq, results


def check_invariants(result, fg_size=None):
    seen = set()
    for inst in result.instances:
        members = set(inst.member_ids)
        assert not members & seen
        seen |= members
        assert inst.rep_peak.id in members
    assert len(result.instances) <= max(result.diagnostics.n_peaks_raw, 0) or result.diagnostics.tau is not None


def test_all_background():
    ring = FlowRing(5, [FlowField.zeros(20, 10)] * 5)
    r = analyze_frame(Mask(np.zeros((10, 20), np.uint8)), ring, PipelineParams())
    assert r.instances == [] and r.diagnostics.n_fg_samples == 0


def test_single_rectangle_one_instance():
    # uniform flow gives no flow separation, so a lone object is found through
    # the densest point's spatial reach: it needs to exceed t_d2 = 50 px
    seq, results = run_scene([(40, 60, 70, 90, 3, 0)], TRAJ)
    for r in results[6:]:
        assert len(r.instances) == 1
        assert iou(r.instances[0].bbox, seq.frame(r.frame_index).boxes[0]) >= 0.5
        check_invariants(r)


def test_two_opposing_rectangles():
    seq, results = run_scene([(20, 40, 30, 40, 3, 0), (200, 120, 30, 40, -3, 0)], TRAJ)
    for r in results[6:]:
        assert len(r.instances) == 2
        frame = seq.frame(r.frame_index)
        for inst, gt in zip(sorted(r.instances, key=lambda i: i.bbox.x_min), frame.boxes):
            assert iou(inst.bbox, gt) >= 0.5
            assert inst.mean_flow[0] == pytest.approx(-15 if gt is frame.boxes[0] else 15)


def test_pixelwise_extra_instances_stay_on_the_object():
    # the per-pixel sum leaves a ramp of partial sums at the leading edge; any
    # extra instance it causes still lies on the moving object
    seq, results = run_scene([(40, 60, 40, 50, 3, 0)], PipelineParams())
    for r in results[6:]:
        assert len(r.instances) >= 1
        gt = seq.frame(r.frame_index).boxes[0]
        for inst in r.instances:
            assert iou(inst.bbox, gt) > 0


def test_ring_warmup_and_k1():
    seq, results = run_scene([(40, 60, 40, 50, 3, 0)], TRAJ, frames=8)
    assert [r.diagnostics.ring_full for r in results] == [False] * 5 + [True] * 3
    assert all(r.instances == [] for r in results[:5])
    _, results = run_scene([(40, 60, 40, 50, 3, 0)], TRAJ.updated(k=1), frames=4)
    assert results[0].diagnostics.ring_full is False
    assert all(r.diagnostics.ring_full for r in results[1:])


def test_single_sample_foreground():
    labels = np.zeros((12, 12), np.uint8)
    labels[4, 4] = 255
    ring = FlowRing(5, [FlowField.constant(12, 12, 1, 0)] * 5)
    r = analyze_frame(Mask(labels), ring, PipelineParams())
    assert len(r.instances) == 1
    assert r.instances[0].bbox == BBox(2, 2, 7, 7)
    assert r.diagnostics.tau == 2.0


def test_zero_peak_frame():
    # compact blob, uniform flow: nothing is separated enough to be a peak
    labels = np.zeros((40, 40), np.uint8)
    labels[10:25, 10:25] = 255
    ring = FlowRing(5, [FlowField.constant(40, 40, 1, 0)] * 5)
    r = analyze_frame(Mask(labels), ring, PipelineParams())
    assert r.instances == [] and r.diagnostics.n_peaks_raw == 0 and r.diagnostics.tau is None


def test_analyze_frame_errors():
    with pytest.raises(RingNotFull):
        analyze_frame(Mask(np.zeros((4, 4), np.uint8)), FlowRing(2, [FlowField.zeros(4, 4)]), PipelineParams(k=2))
    with pytest.raises(DimensionMismatch):
        analyze_frame(Mask(np.zeros((4, 5), np.uint8)), FlowRing(1, [FlowField.zeros(4, 4)]), PipelineParams(k=1))


def test_gbis_only_emits_every_segment():
    labels = np.zeros((30, 60), np.uint8)
    labels[3:12, 3:12] = 255
    labels[3:12, 40:55] = 255
    ring = FlowRing(1, [FlowField.zeros(60, 30)])
    r = analyze_frame(Mask(labels), ring, PipelineParams(k=1, mode=GBIS_ONLY))
    assert len(r.instances) == 2 and all(i.rho is None for i in r.instances)
    rec = json.loads(r.to_json())
    assert rec["instances"][0]["peak"]["rho"] is None


def test_fg_policy_override():
    labels = np.full((9, 9), 170, np.uint8)
    ring = FlowRing(1, [FlowField.zeros(9, 9)])
    assert analyze_frame(Mask(labels), ring, PipelineParams(k=1)).diagnostics.n_fg_samples == 0
    r = analyze_frame(Mask(labels), ring, PipelineParams(k=1, fg_policy=(170,)))
    assert r.diagnostics.n_fg_samples == 9


def _forest(groups, n):
    f = gbis.SegmentForest(n)
    for g in groups:
        for a in g[1:]:
            f.union(f.find(g[0]), f.find(a), 0.0)
    return f


def test_select_segments_examples():
    f = _forest([[0, 1], [2, 3], [4, 5]], 6)
    assert select_segments(f, []) == []
    assert len(select_segments(f, [0, 1])) == 1
    assert [set(f.segments()[r]) for r in select_segments(f, [1, 5])] == [{0, 1}, {4, 5}]


def test_representative_peaks_examples():
    f = _forest([[0, 1, 2]], 3)
    roots = select_segments(f, [0, 2])
    assert list(representative_peaks(f, roots, [0, 2], {0: 4.2, 2: 7.1}).values()) == [2]
    assert list(representative_peaks(f, roots, [0, 2], {0: 3.0, 2: 3.0}).values()) == [0]
    single = _forest([[0], [1]], 2)
    assert sorted(representative_peaks(single, select_segments(single, [0, 1]), [0, 1], {0: 1, 1: 1}).values()) == [0, 1]
    with pytest.raises(InvariantViolation):
        representative_peaks(single, [single.find(1)], [0], {0: 1.0})


def test_bbox_examples():
    assert bbox_for_segment([10], [10], 3, 100, 100) == BBox(8, 8, 13, 13)
    assert bbox_for_segment([3, 30], [6, 12], 3, 100, 100) == BBox(1, 4, 33, 15)
    assert bbox_for_segment([0], [0], 3, 100, 100) == BBox(0, 0, 3, 3)
    assert bbox_for_segment([99], [49], 3, 100, 50) == BBox(97, 47, 100, 50)
    with pytest.raises(EmptySegment):
        bbox_for_segment([], [], 3, 10, 10)


def test_boxes_contain_members_and_determinism():
    cfg = SynthConfig(n_objects=4, seed=3, frame_count=20)
    seq = synth_scene(cfg)
    params = PipelineParams(compound_mode="trajectory")
    a = [r.to_json() for r in analyze_sequence(((f.index, f.mask(), f.flow) for f in seq.frames), params)]
    b = [r.to_json() for r in analyze_sequence(((f.index, f.mask(), f.flow) for f in seq.frames), params)]
    assert a == b
    for r in analyze_sequence(((f.index, f.mask(), f.flow) for f in seq.frames), params):
        check_invariants(r)
        for inst in r.instances:
            assert inst.bbox.contains(inst.rep_peak.x, inst.rep_peak.y)


def test_record_schema():
    labels = np.zeros((12, 12), np.uint8)
    labels[4, 4] = 255
    ring = FlowRing(1, [FlowField.constant(12, 12, 1, 0)])
    r = analyze_frame(Mask(labels), ring, PipelineParams(k=1), frame_index=7)
    rec = r.to_record()
    assert list(rec) == ["frame", "instances", "diagnostics"]
    assert list(rec["instances"][0]) == ["peak", "bbox", "size", "mean_flow"]
    assert list(rec["instances"][0]["peak"]) == ["x", "y", "u", "v", "rho"]
    assert "timing_ms" not in rec["diagnostics"]
    assert "timing_ms" in r.to_record(timing=True)["diagnostics"]


def test_params_validation():
    with pytest.raises(ValueError):
        PipelineParams(k=0)
    with pytest.raises(ValueError):
        PipelineParams(compound_mode="nope")
    with pytest.raises(ValueError):
        PipelineParams().updated(bogus=1)
    p = PipelineParams()
    assert (p.k, p.s, p.p, p.c1, p.c2, p.t_d2, p.n_c) == (5, 3, 50, 15, 0.5, 50, 200)
