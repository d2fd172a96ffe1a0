"""Box-level evaluation: IoU-thresholded matching, recall/precision curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import FrameCountMismatch
from .grid import BBox, iou_matrix

DEFAULT_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 10))


def _ratio(num: int, den: int) -> float:
    # empty denominators count as perfect
    return 1.0 if den == 0 else num / den


@dataclass
class FrameMatch:
    pairs: list[tuple[int, int, float]]
    unmatched_preds: list[int]
    unmatched_gts: list[int]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_preds)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gts)


def match_ious(ious: np.ndarray, threshold: float) -> FrameMatch:
    """Greedy one-to-one matching on a precomputed IoU matrix (preds x gts)."""
    if not 0 < threshold <= 1:
        raise ValueError(f"IoU threshold must lie in (0, 1], got {threshold}")
    n_pred, n_gt = ious.shape
    cand = [(-ious[i, j], i, j) for i in range(n_pred) for j in range(n_gt) if ious[i, j] >= threshold]
    cand.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for neg, i, j in cand:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, float(-neg)))
    return FrameMatch(
        pairs,
        [i for i in range(n_pred) if i not in used_p],
        [j for j in range(n_gt) if j not in used_g],
    )


def match_boxes(preds: Sequence[BBox], gts: Sequence[BBox], threshold: float = 0.5) -> FrameMatch:
    """Match predictions to ground truth by repeatedly taking the largest
    remaining IoU at or above ``threshold`` (ties: lower pred, then lower gt)."""
    return match_ious(iou_matrix(list(preds), list(gts)), threshold)


@dataclass(frozen=True)
class CurvePoint:
    iou_threshold: float
    recall: float
    precision: float
    tp: int
    fp: int
    fn: int


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, m: FrameMatch) -> None:
        self.tp += m.tp
        self.fp += m.fp
        self.fn += m.fn

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)


def _as_boxes(frame) -> list[BBox]:
    return frame.boxes() if hasattr(frame, "boxes") else list(frame)


def pr_curve(
    preds: Mapping[int, Sequence[BBox]] | Sequence,
    gts: Mapping[int, Sequence[BBox]] | Sequence,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> list[CurvePoint]:
    """Pooled recall/precision over all frames at each IoU threshold.

    ``preds`` and ``gts`` are either aligned sequences or mappings keyed by
    frame index; elements are box lists or FrameResults.
    """
    thresholds = [float(t) for t in thresholds]
    if any(not 0 < t < 1 for t in thresholds) or any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing inside (0, 1)")
    if isinstance(gts, Mapping):
        if not isinstance(preds, Mapping):
            raise FrameCountMismatch("predictions are a sequence but ground truth is keyed by frame")
        missing = sorted(set(gts) - set(preds))
        if missing:
            raise FrameCountMismatch(f"no predictions for {len(missing)} ground-truth frame(s), first {missing[0]}")
        keys = sorted(gts)
        pairs = [(_as_boxes(preds[k]), list(gts[k])) for k in keys]
    else:
        if isinstance(preds, Mapping) or len(preds) != len(gts):
            raise FrameCountMismatch(f"{len(preds)} prediction frames vs {len(gts)} ground-truth frames")
        pairs = [(_as_boxes(p), list(g)) for p, g in zip(preds, gts)]
    matrices = [iou_matrix(p, g) for p, g in pairs]
    out = []
    for t in thresholds:
        c = Counts()
        for m in matrices:
            c.add(match_ious(m, t))
        out.append(CurvePoint(t, c.recall, c.precision, c.tp, c.fp, c.fn))
    return out


def at_threshold(curve: Sequence[CurvePoint], threshold: float = 0.5) -> CurvePoint:
    for pt in curve:
        if abs(pt.iou_threshold - threshold) < 1e-9:
            return pt
    raise KeyError(f"threshold {threshold} not on the curve")


def write_curve_csv(curve: Sequence[CurvePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iou_threshold", "recall", "precision", "tp", "fp", "fn"])
        for pt in curve:
            writer.writerow([f"{pt.iou_threshold:g}", f"{pt.recall:.6f}", f"{pt.precision:.6f}", pt.tp, pt.fp, pt.fn])


def plot_curves(curves: Mapping[str, Sequence[CurvePoint]], path) -> None:
    """Recall and precision versus IoU threshold, one line per sequence."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_re, ax_pr) = plt.subplots(1, 2, figsize=(9, 3.6))
    for name, curve in curves.items():
        t = [p.iou_threshold for p in curve]
        ax_re.plot(t, [p.recall for p in curve], marker="o", ms=3, label=name)
        ax_pr.plot(t, [p.precision for p in curve], marker="o", ms=3, label=name)
    for ax, title in ((ax_re, "Recall"), (ax_pr, "Precision")):
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("IoU threshold")
        ax.set_title(title)
        ax.grid(alpha=0.3)
    ax_pr.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


@dataclass
class SequenceScore:
    name: str
    recall: float
    precision: float


@dataclass
class Table:
    """Per-sequence recall/precision with an averaged last column."""

    scores: list[SequenceScore] = field(default_factory=list)

    @property
    def avg_recall(self) -> float:
        return float(np.mean([s.recall for s in self.scores])) if self.scores else 1.0

    @property
    def avg_precision(self) -> float:
        return float(np.mean([s.precision for s in self.scores])) if self.scores else 1.0

    def render(self) -> str:
        names = [s.name for s in self.scores] + ["Avg"]
        width = max(6, *(len(n) for n in names))
        cell = f"{{:>{width}}}"
        lines = [
            "Name " + " ".join(cell.format(n) for n in names),
            "Re   " + " ".join(cell.format(f"{v:.3f}") for v in [s.recall for s in self.scores] + [self.avg_recall]),
            "Pr   " + " ".join(cell.format(f"{v:.3f}") for v in [s.precision for s in self.scores] + [self.avg_precision]),
        ]
        return "\n".join(lines) + "\n"
