"""Grid types (flow fields, label masks, boxes) and their file formats."""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DepthMismatch,
    DimensionMismatch,
    InputError,
    IoFailure,
    MagicMismatch,
    NonFiniteValue,
    TruncatedFile,
    UnsupportedFormat,
)

FLO_MAGIC = 202021.25
_FLO_MAGIC_BYTES = np.array([FLO_MAGIC], dtype="<f4").tobytes()
_FLO_HEADER = 12

DEFAULT_FG_POLICY = frozenset({255})


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense per-pixel displacement field.

    ``data`` has shape ``(height, width, 2)`` with ``data[y, x] == (u, v)``.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 2:
            raise DimensionMismatch(f"flow data must be (H, W, 2), got {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteValue("flow field contains NaN or Inf")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def u(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.data[..., 1]

    @classmethod
    def zeros(cls, width: int, height: int) -> FlowField:
        return cls(np.zeros((height, width, 2), dtype=np.float32))

    @classmethod
    def constant(cls, width: int, height: int, u: float, v: float) -> FlowField:
        data = np.empty((height, width, 2), dtype=np.float32)
        data[..., 0] = u
        data[..., 1] = v
        return cls(data)

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Mask:
    """8-bit label image plus the set of labels counted as foreground."""

    labels: np.ndarray
    fg_policy: frozenset = DEFAULT_FG_POLICY

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels)
        if labels.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {labels.shape}")
        if labels.dtype != np.uint8:
            if labels.size and (labels.min() < 0 or labels.max() > 255):
                raise DepthMismatch("mask labels must fit in 8 bits")
            labels = labels.astype(np.uint8)
        policy = frozenset(int(v) for v in self.fg_policy)
        if not policy:
            raise InputError("fg_policy must not be empty")
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "fg_policy", policy)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @cached_property
    def foreground(self) -> np.ndarray:
        """Boolean array, True where the label is in ``fg_policy``."""
        fg = np.isin(self.labels, np.fromiter(self.fg_policy, dtype=np.int16))
        return _frozen(fg)

    def foreground_count(self) -> int:
        return int(self.foreground.sum())

    def with_policy(self, fg_policy: Iterable[int]) -> Mask:
        return Mask(self.labels, frozenset(fg_policy))


@dataclass(frozen=True, order=True)
class BBox:
    """Integer box covering ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"empty box: {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x < self.x_max and self.y_min <= y < self.y_max

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: list[BBox], b: list[BBox]) -> np.ndarray:
    out = np.zeros((len(a), len(b)))
    for i, ba in enumerate(a):
        for j, bb in enumerate(b):
            out[i, j] = iou(ba, bb)
    return out


# --- Middlebury .flo --------------------------------------------------------


def read_flo(path) -> FlowField:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != _FLO_MAGIC_BYTES:
        raise MagicMismatch(f"{path}: not a .flo file (bad magic)")
    if len(raw) < _FLO_HEADER:
        raise TruncatedFile(f"{path}: header truncated")
    width, height = np.frombuffer(raw, dtype="<i4", count=2, offset=4)
    if width < 0 or height < 0:
        raise MagicMismatch(f"{path}: negative dimensions {width}x{height}")
    expected = _FLO_HEADER + 8 * int(width) * int(height)
    if len(raw) != expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_FLO_HEADER)
    if not np.isfinite(data).all():
        raise NonFiniteValue(f"{path}: flow contains NaN or Inf")
    return FlowField(data.reshape(int(height), int(width), 2).astype(np.float32))


def write_flo(flow: FlowField, path) -> None:
    header = _FLO_MAGIC_BYTES + np.array([flow.width, flow.height], dtype="<i4").tobytes()
    payload = flow.data.astype("<f4", copy=False).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_flo_header(path) -> tuple[int, int]:
    """Return ``(width, height)`` without loading the payload."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(_FLO_HEADER)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if head[:4] != _FLO_MAGIC_BYTES:
        raise MagicMismatch(f"{path}: not a .flo file (bad magic)")
    if len(head) < _FLO_HEADER:
        raise TruncatedFile(f"{path}: header truncated")
    width, height = np.frombuffer(head, dtype="<i4", count=2, offset=4)
    return int(width), int(height)


# --- masks ------------------------------------------------------------------

_MASK_FORMATS = {"PPM": "PGM", "PNG": "PNG"}  # Pillow reports PGM files as PPM


def _open_mask_image(path) -> Image.Image:
    try:
        img = Image.open(path)
    except FileNotFoundError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: unrecognised image format") from exc
    if img.format not in _MASK_FORMATS:
        raise UnsupportedFormat(f"{path}: {img.format} masks are not supported (PGM or PNG)")
    if img.mode != "L":
        raise DepthMismatch(f"{path}: expected 8-bit single-channel image, got mode {img.mode}")
    return img


def read_mask(path, fg_policy: Iterable[int] = DEFAULT_FG_POLICY) -> Mask:
    with _open_mask_image(path) as img:
        labels = np.asarray(img, dtype=np.uint8)
    return Mask(labels.copy(), frozenset(fg_policy))


def read_mask_size(path) -> tuple[int, int]:
    with _open_mask_image(path) as img:
        return img.size


def write_mask(mask: Mask | np.ndarray, path) -> None:
    """Write labels as binary PGM (``.pgm``) or 8-bit PNG (``.png``)."""
    labels = mask.labels if isinstance(mask, Mask) else np.asarray(mask, dtype=np.uint8)
    ext = os.path.splitext(str(path))[1].lower()
    fmt = {".pgm": "PPM", ".png": "PNG"}.get(ext)
    if fmt is None:
        raise UnsupportedFormat(f"{path}: mask output must be .pgm or .png")
    try:
        Image.fromarray(labels, mode="L").save(path, format=fmt)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_rgb(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 image as PPM (P6) or PNG, chosen by extension."""
    ext = os.path.splitext(str(path))[1].lower()
    fmt = {".ppm": "PPM", ".png": "PNG"}.get(ext)
    if fmt is None:
        raise UnsupportedFormat(f"{path}: image output must be .ppm or .png")
    try:
        Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format=fmt)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc

