"""``flowseg`` command line: analyze, eval, synth, flowviz, bench.

Exit codes: 0 success, 1 bad input, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, bench, evaluation
from .compound import COMPOUND_MODES, FlowRing, compound, flow_to_color
from .dataset import SynthConfig, export_sequence, load_cdnet_sequence, load_ground_truth, synth_scene
from .errors import ConfigInvalid, FlowsegError, FrameGap, InputError, InvariantViolation, IoFailure
from .grid import BBox, read_flo, write_rgb
from .pipeline import FULL, GBIS_ONLY, FrameResult, PipelineParams, analyze_frame

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

THREADS_ENV = "FLOWSEG_THREADS"

_PARAM_HELP = {
    "k": "frames compounded into one displacement",
    "s": "sampling stride in pixels",
    "p": "coordinate balance divisor in the density features",
    "c1": "outlier divisor: peaks need rho > rho_max / c1",
    "c2": "flow separation factor: threshold c2 * k",
    "t_d2": "spatial separation threshold in pixels",
    "n_c": "points analysed per frame (random subset above this)",
    "d_c": "density cutoff; 'auto' uses the dc_fraction quantile",
    "dc_fraction": "pairwise-distance quantile used when d_c is auto",
    "compound_mode": "per-pixel sum or warped-trajectory accumulation",
    "seed": "seed for the per-frame subsample",
    "fg_policy": "comma-separated mask values that count as foreground",
    "mode": "full pipeline or segmentation-only ablation",
    "fixed_tau": "merge parameter used by the gbis_only mode",
}


class _Parser(argparse.ArgumentParser):
    # usage mistakes are input errors, not invariant violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _format_default(name: str, value) -> str:
    if name == "d_c" and value is None:
        return "auto"
    if name == "fg_policy":
        return ",".join(str(v) for v in value)
    return str(value)


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline parameters (defaults follow the published settings)")
    defaults = PipelineParams()
    for f in fields(PipelineParams):
        flag = "--" + f.name.replace("_", "-")
        default = _format_default(f.name, getattr(defaults, f.name))
        kwargs = {"dest": f.name, "default": None, "help": f"{_PARAM_HELP[f.name]} (default: {default})"}
        if f.name == "compound_mode":
            kwargs["choices"] = COMPOUND_MODES
        elif f.name == "mode":
            kwargs["choices"] = (FULL, GBIS_ONLY)
        group.add_argument(flag, **kwargs)
    parser.add_argument("--config", type=Path, help="TOML file of parameters; flags override it")


def _coerce(name: str, value):
    """Convert a flag string or config value to the PipelineParams field type."""
    try:
        if name in ("k", "s", "n_c", "seed"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if name == "d_c":
            return None if value is None or str(value).lower() == "auto" else float(value)
        if name in ("compound_mode", "mode"):
            return str(value)
        if name == "fg_policy":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if isinstance(value, int):
                value = [value]
            vals = tuple(int(v) for v in value)
            if not vals or any(not 0 <= v <= 255 for v in vals):
                raise ValueError
            return vals
        return float(value)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"invalid value for {name}: {value!r}") from None


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc


def params_from_args(args) -> PipelineParams:
    """Defaults, then the config file, then explicit flags."""
    cfg = load_config(getattr(args, "config", None))
    known = {f.name for f in fields(PipelineParams)}
    overrides = {}
    for key, value in cfg.items():
        if isinstance(value, dict):
            continue  # other commands' sections
        if key not in known:
            raise ConfigInvalid(f"unknown parameter {key!r} in {args.config}")
        overrides[key] = _coerce(key, value)
    for name in known:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = _coerce(name, value)
    try:
        return PipelineParams(**overrides)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def _worker_count(requested: int | None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ConfigInvalid(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


# --- analyze -------------------------------------------------------------------


def draw_boxes(mask_labels: np.ndarray, boxes: list[BBox], color=(255, 0, 0)) -> np.ndarray:
    """Grey mask with one-pixel box outlines."""
    img = np.repeat(mask_labels[..., None], 3, axis=2).astype(np.uint8) // 2
    for b in boxes:
        x1, y1 = b.x_max - 1, b.y_max - 1
        img[b.y_min, b.x_min:b.x_max] = color
        img[y1, b.x_min:b.x_max] = color
        img[b.y_min:b.y_max, b.x_min] = color
        img[b.y_min:b.y_max, x1] = color
    return img


def _analyze_one(mask, ring, params, index) -> FrameResult:
    if ring is None:
        result = FrameResult(index)
        result.diagnostics.ring_full = False
        return result
    try:
        return analyze_frame(mask, ring, params, index)
    except FlowsegError as exc:
        exc.args = (f"frame {index}: {exc}",)
        raise


def run_analyze(source, params: PipelineParams, workers: int = 1):
    """Yield results in frame order; frames are analysed concurrently."""
    ring = FlowRing(params.k)
    window = max(2 * workers, 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        for index, mask, flow in source.frames():
            if flow is not None:
                ring.push(flow)
            snap = ring.snapshot() if ring.full else None
            pending.append((mask, pool.submit(_analyze_one, mask, snap, params, index)))
            while len(pending) >= window:
                m, fut = pending.popleft()
                yield m, fut.result()
        while pending:
            m, fut = pending.popleft()
            yield m, fut.result()


def cmd_analyze(args) -> int:
    params = params_from_args(args)
    source = load_cdnet_sequence(args.sequence, args.flow_dir, params.fg_policy)
    out = Path(args.output)
    if args.overlays:
        Path(args.overlays).mkdir(parents=True, exist_ok=True)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        fh = open(out, "w", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {out}: {exc}") from exc
    with fh:
        for mask, result in run_analyze(source, params, _worker_count(args.threads)):
            fh.write(result.to_json(timing=args.timing) + "\n")
            if args.overlays:
                write_rgb(draw_boxes(mask.labels, result.boxes()),
                          Path(args.overlays) / f"overlay{result.frame_index:06d}.png")
    return 0


# --- eval ------------------------------------------------------------------------


def read_results(path) -> dict[int, list[BBox]]:
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"results file not found: {path}")
    out: dict[int, list[BBox]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out[int(rec["frame"])] = [BBox(*inst["bbox"]) for inst in rec["instances"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: malformed result line ({exc})") from exc
    return out


def _thresholds(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigInvalid(f"bad threshold list {text!r}") from None


def cmd_eval(args) -> int:
    if len(args.results) != len(args.gt):
        raise InputError(f"{len(args.results)} results file(s) but {len(args.gt)} --gt sequence(s)")
    thresholds = _thresholds(args.thresholds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = evaluation.Table()
    curves = {}
    for res_path, gt_dir in zip(args.results, args.gt):
        gts, _ = load_ground_truth(gt_dir)
        preds = read_results(res_path)
        curve = evaluation.pr_curve(preds, gts, thresholds)
        name = Path(gt_dir).resolve().name
        curves[name] = curve
        evaluation.write_curve_csv(curve, out_dir / f"{name}_curve.csv")
        try:
            pt = evaluation.at_threshold(curve, 0.5)
        except KeyError:
            pt = evaluation.at_threshold(evaluation.pr_curve(preds, gts, [0.5]), 0.5)
        table.scores.append(evaluation.SequenceScore(name, pt.recall, pt.precision))
    text = table.render()
    (out_dir / "table.txt").write_text(text)
    if not args.no_plot:
        evaluation.plot_curves(curves, out_dir / "curves.png")
    sys.stdout.write(text)
    return 0


# --- synth -----------------------------------------------------------------------

_SYNTH_FLAGS = ("width", "height", "n_objects", "frame_count", "seed", "velocity_max",
                "flow_noise_sigma", "mask_noise", "warmup")


def cmd_synth(args) -> int:
    cfg = load_config(args.config).get("synth", {})
    if not isinstance(cfg, dict):
        raise ConfigInvalid("[synth] must be a table")
    cfg = dict(cfg)
    for name in _SYNTH_FLAGS:
        value = getattr(args, name)
        if value is not None:
            cfg[name] = value
    try:
        config = SynthConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    export_sequence(synth_scene(config), args.out_dir)
    return 0


# --- flowviz ---------------------------------------------------------------------

_FLO_RE = re.compile(r"^(\d+)\.flo$")


def cmd_flowviz(args) -> int:
    flow_dir = Path(args.flow_dir)
    if not flow_dir.is_dir():
        raise IoFailure(f"flow directory not found: {flow_dir}")
    if args.k < 1:
        raise ConfigInvalid("k must be >= 1")
    files = sorted((int(m.group(1)), p) for p in flow_dir.iterdir() if (m := _FLO_RE.match(p.name)))
    if len(files) < args.k:
        raise FrameGap(f"{flow_dir} holds {len(files)} flow file(s); k={args.k} needs at least {args.k}")
    for (a, _), (b, _) in zip(files, files[1:]):
        if b != a + 1:
            raise FrameGap(f"flow for frame {a + 1} is missing in {flow_dir}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ring = FlowRing(args.k)
    for index, path in files:
        ring.push(read_flo(path))
        if ring.full:
            write_rgb(flow_to_color(compound(ring, args.compound_mode)), out / f"flow{index:06d}.png")
    return 0


# --- bench -----------------------------------------------------------------------


def cmd_bench(args) -> int:
    try:
        counts = [int(c) for c in args.counts.split(",") if c.strip()]
    except ValueError:
        raise ConfigInvalid(f"bad count list {args.counts!r}") from None
    if len(set(counts)) < 2 or min(counts) < 1:
        raise ConfigInvalid("need at least two distinct positive point counts")
    if args.repetitions < 1:
        raise ConfigInvalid("repetitions must be >= 1")
    timings = bench.run(counts, args.repetitions, args.seed)
    if args.output:
        bench.write_csv(timings, args.output)
    for t in timings:
        print(f"{t.stage:7s} n={t.n:6d} median={t.median_s * 1e3:10.3f} ms")
    for stage, slope in bench.slopes(timings).items():
        print(f"slope {stage}: {slope:.3f}")
    return 0


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowseg", description="Moving-foreground instance analysis from masks and optical flow.")
    parser.add_argument("--version", action="version", version=f"flowseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="find moving instances in a sequence")
    p.add_argument("sequence", type=Path, help="sequence directory (groundtruth/, temporalROI.txt)")
    p.add_argument("--flow-dir", type=Path, help="per-step .flo files (default: <sequence>/flow)")
    p.add_argument("-o", "--output", type=Path, required=True, help="JSON Lines output")
    p.add_argument("--overlays", type=Path, help="write box overlays here")
    p.add_argument("--timing", action="store_true", help="include per-stage timing in diagnostics")
    p.add_argument("--threads", type=int, help=f"worker threads (capped by ${THREADS_ENV})")
    _add_param_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="score results against ground-truth boxes")
    p.add_argument("results", nargs="+", type=Path, help="JSON Lines results, one per sequence")
    p.add_argument("--gt", action="append", required=True, type=Path,
                   help="sequence directory with gt_boxes.csv; repeat once per results file")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="where curves and the table go")
    p.add_argument("--thresholds", default=",".join(f"{t:g}" for t in evaluation.DEFAULT_THRESHOLDS),
                   help="comma-separated IoU thresholds (default: 0.1,...,0.9)")
    p.add_argument("--no-plot", action="store_true", help="skip the curve plot")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic sequence")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--config", type=Path, help="TOML file with a [synth] table")
    defaults = SynthConfig()
    for name in _SYNTH_FLAGS:
        kind = float if isinstance(getattr(defaults, name), float) else int
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None,
                       help=f"(default: {getattr(defaults, name)})")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("flowviz", help="colour-code compounded flow")
    p.add_argument("flow_dir", type=Path)
    p.add_argument("-k", type=int, default=5, help="frames to compound (default: 5)")
    p.add_argument("--compound-mode", choices=COMPOUND_MODES, default=PipelineParams().compound_mode)
    p.add_argument("-o", "--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_flowviz)

    p = sub.add_parser("bench", help="time the core stages and fit log-log slopes")
    p.add_argument("--counts", default=",".join(str(c) for c in bench.DEFAULT_COUNTS))
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, help="timing CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"flowseg: internal error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"flowseg: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"flowseg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
