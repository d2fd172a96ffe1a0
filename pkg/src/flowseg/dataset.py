"""Sequence inputs: CDnet-style directories and a synthetic scene generator.

Directory layout (shared by both)::

    <root>/groundtruth/gt000001.png   8-bit masks (.png or .pgm), 1-based frames
    <root>/temporalROI.txt            "first last" evaluated frame range
    <root>/gt_boxes.csv               frame,object,x_min,y_min,x_max,y_max (optional)
    <flow_dir>/000002.flo             f(t, t-1): maps frame t pixels back to t-1

The first frame has no predecessor, so its flow file is optional.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, astuple, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigInvalid, DimensionMismatch, FrameGap, InputError, IoFailure, MissingRoiFile
from .grid import (
    DEFAULT_FG_POLICY,
    BBox,
    FlowField,
    Mask,
    read_flo,
    read_flo_header,
    read_mask,
    read_mask_size,
    write_flo,
    write_mask,
)

MASK_DIR = "groundtruth"
FLOW_DIR = "flow"
ROI_FILE = "temporalROI.txt"
BOXES_FILE = "gt_boxes.csv"
CONFIG_FILE = "synth_config.json"
MASK_NAME = "gt{:06d}.pgm"
FLOW_NAME = "{:06d}.flo"
_MASK_RE = re.compile(r"^gt(\d+)\.(png|pgm)$", re.IGNORECASE)
_FLOW_RE = re.compile(r"^(\d+)\.flo$")

FG = 255
BG = 0


# --- CDnet-style sequences ----------------------------------------------------


@dataclass(frozen=True)
class FrameRecord:
    index: int
    mask_path: Path
    flow_path: Path | None


@dataclass
class SequenceSource:
    root: Path
    records: list[FrameRecord]
    roi: tuple[int, int]
    width: int
    height: int
    fg_policy: frozenset = DEFAULT_FG_POLICY

    @property
    def name(self) -> str:
        return self.root.name

    def __iter__(self) -> Iterator[FrameRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def in_roi(self, index: int) -> bool:
        return self.roi[0] <= index <= self.roi[1]

    def eval_indices(self) -> list[int]:
        return [r.index for r in self.records if self.in_roi(r.index)]

    def load_mask(self, record: FrameRecord) -> Mask:
        return read_mask(record.mask_path, self.fg_policy)

    def load_flow(self, record: FrameRecord) -> FlowField | None:
        return None if record.flow_path is None else read_flo(record.flow_path)

    def frames(self) -> Iterator[tuple[int, Mask, FlowField | None]]:
        for rec in self.records:
            yield rec.index, self.load_mask(rec), self.load_flow(rec)


def read_roi(path) -> tuple[int, int]:
    path = Path(path)
    if not path.is_file():
        raise MissingRoiFile(f"temporal ROI file not found: {path}")
    parts = path.read_text().split()
    if len(parts) < 2:
        raise InputError(f"{path}: expected two integers, got {path.read_text()!r}")
    try:
        first, last = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise InputError(f"{path}: expected two integers") from exc
    if first > last:
        raise InputError(f"{path}: empty ROI {first}..{last}")
    return first, last


def load_cdnet_sequence(root, flow_dir=None, fg_policy=DEFAULT_FG_POLICY) -> SequenceSource:
    """Index a sequence directory and align its masks with per-step flows."""
    root = Path(root)
    flow_dir = root / FLOW_DIR if flow_dir is None else Path(flow_dir)
    mask_dir = root / MASK_DIR
    if not mask_dir.is_dir():
        raise IoFailure(f"mask directory not found: {mask_dir}")
    if not flow_dir.is_dir():
        raise IoFailure(f"flow directory not found: {flow_dir}")
    roi = read_roi(root / ROI_FILE)

    masks: dict[int, Path] = {}
    for p in sorted(mask_dir.iterdir()):
        m = _MASK_RE.match(p.name)
        if m:
            idx = int(m.group(1))
            if idx in masks:
                raise InputError(f"frame {idx} has more than one mask file")
            masks[idx] = p
    if not masks:
        raise InputError(f"no gtNNNNNN.png/.pgm masks in {mask_dir}")
    flows = {int(m.group(1)): p for p in flow_dir.iterdir() if (m := _FLOW_RE.match(p.name))}

    indices = sorted(masks)
    first, last = indices[0], indices[-1]
    missing = sorted(set(range(first, last + 1)) - set(masks))
    if missing:
        raise FrameGap(f"mask for frame {missing[0]} is missing ({mask_dir})")
    if not (first <= roi[0] and roi[1] <= last):
        raise InputError(f"temporal ROI {roi[0]}..{roi[1]} exceeds frames {first}..{last}")

    width, height = read_mask_size(masks[first])
    records = []
    for idx in indices:
        size = read_mask_size(masks[idx])
        if size != (width, height):
            raise DimensionMismatch(f"mask for frame {idx} is {size[0]}x{size[1]}, expected {width}x{height}")
        flow_path = flows.get(idx)
        if flow_path is None and idx != first:
            raise FrameGap(f"flow for frame {idx} is missing ({flow_dir / FLOW_NAME.format(idx)})")
        if flow_path is not None:
            fsize = read_flo_header(flow_path)
            if fsize != (width, height):
                raise DimensionMismatch(
                    f"flow for frame {idx} is {fsize[0]}x{fsize[1]}, expected {width}x{height}"
                )
        records.append(FrameRecord(idx, masks[idx], flow_path))
    return SequenceSource(root, records, roi, width, height, frozenset(fg_policy))


def read_boxes_csv(path) -> dict[int, list[BBox]]:
    """Per-frame ground-truth boxes; rows are ordered by object within a frame."""
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"ground-truth box file not found: {path}")
    out: dict[int, list[tuple[int, BBox]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            box = BBox(int(row["x_min"]), int(row["y_min"]), int(row["x_max"]), int(row["y_max"]))
            out.setdefault(int(row["frame"]), []).append((int(row.get("object") or 0), box))
    return {f: [b for _, b in sorted(v, key=lambda t: t[0])] for f, v in out.items()}


def write_boxes_csv(boxes: dict[int, list[BBox]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "object", "x_min", "y_min", "x_max", "y_max"])
        for frame in sorted(boxes):
            for obj, b in enumerate(boxes[frame]):
                writer.writerow([frame, obj, *b.as_list()])


def load_ground_truth(root) -> tuple[dict[int, list[BBox]], tuple[int, int]]:
    """Boxes for every ROI frame (frames without rows get an empty list)."""
    root = Path(root)
    roi = read_roi(root / ROI_FILE)
    boxes = read_boxes_csv(root / BOXES_FILE)
    return {i: boxes.get(i, []) for i in range(roi[0], roi[1] + 1)}, roi


# --- synthetic scenes ---------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Rigid rectangles translating at constant velocity.

    Every pair of objects is separable either by motion (velocities differ by
    ``min_velocity_separation`` px/frame in some component) or by space (they
    never come closer than ``min_spatial_gap`` pixels).
    """

    width: int = 320
    height: int = 240
    n_objects: int = 2
    frame_count: int = 200
    seed: int = 0
    size_min: tuple[int, int] = (20, 24)
    size_max: tuple[int, int] = (48, 64)
    velocity_max: float = 1.5
    min_velocity_separation: float = 2.0
    min_spatial_gap: int = 6
    flow_noise_sigma: float = 0.0
    mask_noise: float = 0.0
    warmup: int = 5
    max_attempts: int = 2000
    objects: tuple = field(default=(), compare=True)

    def __post_init__(self):
        object.__setattr__(self, "size_min", tuple(int(v) for v in self.size_min))
        object.__setattr__(self, "size_max", tuple(int(v) for v in self.size_max))
        object.__setattr__(self, "objects", tuple(SynthObject(*o) if not isinstance(o, SynthObject) else o
                                                  for o in self.objects))
        if not 0 <= self.n_objects <= 8 and not self.objects:
            raise ConfigInvalid(f"n_objects must be in 0..8, got {self.n_objects}")
        if self.width < 1 or self.height < 1 or self.frame_count < 1:
            raise ConfigInvalid("dimensions and frame_count must be positive")
        if any(a > b for a, b in zip(self.size_min, self.size_max)) or min(self.size_min) < 1:
            raise ConfigInvalid(f"bad size range {self.size_min}..{self.size_max}")
        if self.size_max[0] > self.width or self.size_max[1] > self.height:
            raise ConfigInvalid("objects larger than the frame")
        if self.flow_noise_sigma < 0 or not 0 <= self.mask_noise <= 1:
            raise ConfigInvalid("noise levels must be non-negative (mask_noise <= 1)")
        if self.warmup < 0:
            raise ConfigInvalid("warmup must be >= 0")

    @property
    def roi(self) -> tuple[int, int]:
        return min(self.warmup + 1, self.frame_count), self.frame_count

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects"] = [list(astuple(o)) for o in self.objects]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        d = dict(d)
        for key in ("size_min", "size_max"):
            if key in d:
                d[key] = tuple(d[key])
        if "objects" in d:
            d["objects"] = tuple(SynthObject(*o) for o in d["objects"])
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigInvalid(f"unknown synth option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class SynthObject:
    """Rectangle of size ``w x h`` whose top-left corner at frame ``t`` (1-based)
    is ``(x0 + vx * (t - 1), y0 + vy * (t - 1))`` rounded half up."""

    x0: float
    y0: float
    w: int
    h: int
    vx: float
    vy: float

    def position(self, t: int) -> tuple[int, int]:
        return (math.floor(self.x0 + self.vx * (t - 1) + 0.5), math.floor(self.y0 + self.vy * (t - 1) + 0.5))

    def box(self, t: int) -> BBox:
        x, y = self.position(t)
        return BBox(x, y, x + self.w, y + self.h)

    def step_flow(self, t: int) -> tuple[int, int]:
        """Backward displacement of this object's pixels from frame t to t-1."""
        x1, y1 = self.position(t)
        x0, y0 = self.position(t - 1)
        return x0 - x1, y0 - y1

    def compounded_flow(self, t: int, k: int) -> tuple[int, int]:
        x1, y1 = self.position(t)
        x0, y0 = self.position(t - k)
        return x0 - x1, y0 - y1


@dataclass(eq=False)
class SynthFrame:
    index: int
    labels: np.ndarray
    flow: FlowField | None
    boxes: list[BBox]
    object_ids: np.ndarray  # visible object per pixel, -1 for background

    def mask(self, fg_policy=DEFAULT_FG_POLICY) -> Mask:
        return Mask(self.labels, frozenset(fg_policy))


@dataclass(eq=False)
class SynthSequence:
    config: SynthConfig
    objects: list[SynthObject]
    frames: list[SynthFrame]

    @property
    def roi(self) -> tuple[int, int]:
        return self.config.roi

    def frame(self, index: int) -> SynthFrame:
        return self.frames[index - 1]

    def gt_boxes(self) -> dict[int, list[BBox]]:
        return {f.index: list(f.boxes) for f in self.frames}

    def eval_frames(self) -> list[SynthFrame]:
        lo, hi = self.roi
        return [f for f in self.frames if lo <= f.index <= hi]


def _gap(a: BBox, b: BBox) -> int:
    """Pixels of background between two boxes (negative when they overlap)."""
    dx = max(b.x_min - a.x_max, a.x_min - b.x_max)
    dy = max(b.y_min - a.y_max, a.y_min - b.y_max)
    return max(dx, dy)


def separable(a: SynthObject, b: SynthObject, config: SynthConfig) -> bool:
    if max(abs(a.vx - b.vx), abs(a.vy - b.vy)) >= config.min_velocity_separation:
        return True
    return all(_gap(a.box(t), b.box(t)) >= config.min_spatial_gap for t in range(1, config.frame_count + 1))


def _inside(obj: SynthObject, config: SynthConfig) -> bool:
    for t in (1, config.frame_count):
        box = obj.box(t)
        if box.x_min < 0 or box.y_min < 0 or box.x_max > config.width or box.y_max > config.height:
            return False
    return True


def _spawn(rng: np.random.Generator, config: SynthConfig) -> SynthObject | None:
    w = int(rng.integers(config.size_min[0], config.size_max[0] + 1))
    h = int(rng.integers(config.size_min[1], config.size_max[1] + 1))
    span = max(config.frame_count - 1, 1)
    # cap speed so the object can stay in frame for the whole sequence
    vx_cap = min(config.velocity_max, max(config.width - w - 1, 0) / span)
    vy_cap = min(config.velocity_max, max(config.height - h - 1, 0) / span)
    vx = float(rng.uniform(-vx_cap, vx_cap))
    vy = float(rng.uniform(-vy_cap, vy_cap))
    travel_x = vx * (config.frame_count - 1)
    travel_y = vy * (config.frame_count - 1)
    lo_x, hi_x = max(0.0, -travel_x), config.width - w - max(0.0, travel_x)
    lo_y, hi_y = max(0.0, -travel_y), config.height - h - max(0.0, travel_y)
    if hi_x < lo_x or hi_y < lo_y:
        return None
    obj = SynthObject(float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y)), w, h, vx, vy)
    return obj if _inside(obj, config) else None


def place_objects(config: SynthConfig) -> list[SynthObject]:
    if config.objects:
        objs = list(config.objects)
        for i, a in enumerate(objs):
            if not _inside(a, config):
                raise ConfigInvalid(f"object {i} leaves the frame")
            for j in range(i):
                if not separable(objs[j], a, config):
                    raise ConfigInvalid(f"objects {j} and {i} are neither motion- nor space-separated")
        return objs
    rng = np.random.default_rng(config.seed)
    placed: list[SynthObject] = []
    attempts = 0
    while len(placed) < config.n_objects:
        attempts += 1
        if attempts > config.max_attempts:
            raise ConfigInvalid(
                f"could not place {config.n_objects} separable objects in {config.max_attempts} attempts"
            )
        obj = _spawn(rng, config)
        if obj is not None and all(separable(o, obj, config) for o in placed):
            placed.append(obj)
    return placed


def _paint(objects: list[SynthObject], t: int, shape: tuple[int, int]) -> np.ndarray:
    ids = np.full(shape, -1, dtype=np.int16)
    for i, obj in enumerate(objects):  # later objects occlude earlier ones
        b = obj.box(t)
        ids[b.y_min:b.y_max, b.x_min:b.x_max] = i
    return ids


def synth_scene(config: SynthConfig) -> SynthSequence:
    """Generate masks, true per-step flows and boxes, fully determined by the seed."""
    objects = place_objects(config)
    shape = (config.height, config.width)
    noise_rng = np.random.default_rng([config.seed, 1])
    frames = []
    for t in range(1, config.frame_count + 1):
        ids = _paint(objects, t, shape)
        labels = np.where(ids >= 0, FG, BG).astype(np.uint8)
        if config.mask_noise > 0:
            flips = noise_rng.random(shape) < config.mask_noise
            labels[flips] = FG - labels[flips]
        flow = None
        if t > 1:
            data = np.zeros(shape + (2,), dtype=np.float32)
            for i, obj in enumerate(objects):
                data[ids == i] = obj.step_flow(t)
            if config.flow_noise_sigma > 0:
                data += noise_rng.normal(0.0, config.flow_noise_sigma, data.shape).astype(np.float32)
            flow = FlowField(data)
        frames.append(SynthFrame(t, labels, flow, [o.box(t) for o in objects], ids))
    return SynthSequence(config, objects, frames)


def export_sequence(seq: SynthSequence, out_dir) -> Path:
    """Write a synthetic sequence in the CDnet-style layout."""
    out = Path(out_dir)
    try:
        (out / MASK_DIR).mkdir(parents=True, exist_ok=True)
        (out / FLOW_DIR).mkdir(parents=True, exist_ok=True)
        for f in seq.frames:
            write_mask(f.labels, out / MASK_DIR / MASK_NAME.format(f.index))
            if f.flow is not None:
                write_flo(f.flow, out / FLOW_DIR / FLOW_NAME.format(f.index))
        lo, hi = seq.roi
        (out / ROI_FILE).write_text(f"{lo} {hi}\n")
        write_boxes_csv(seq.gt_boxes(), out / BOXES_FILE)
        (out / CONFIG_FILE).write_text(json.dumps(seq.config.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write sequence to {out}: {exc}") from exc
    return out


def suite_configs(n_scenes: int = 20, base_seed: int = 0, **overrides) -> list[SynthConfig]:
    """The seeded scene suite used for end-to-end checks.

    Scene ``i`` uses seed ``base_seed + i``; its object count (1 to 5) is drawn
    from a separate stream seeded with ``1000 + base_seed + i``.
    """
    out = []
    for i in range(n_scenes):
        n = int(np.random.default_rng(1000 + base_seed + i).integers(1, 6))
        out.append(SynthConfig(n_objects=n, seed=base_seed + i, **overrides))
    return out
