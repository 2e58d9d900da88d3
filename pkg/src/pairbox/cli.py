"""Command-line toolkit composing the library into end-to-end pipelines.

Subcommands:

* ``evaluate``    -- score a detection file against annotations; emits a
                     summary table, the authoritative curve CSV, and an
                     optional SVG plot.
* ``shift-sweep`` -- inject horizontal thermal misalignment over a sweep of
                     shifts, run a mock detector (or load per-shift
                     detection files) and tabulate pooled-IoU miss rates.
* ``generate``    -- write a seeded synthetic paired dataset.
* ``nms``         -- apply paired NMS to a detection file.
* ``assign``      -- label anchor pairs against ground truth and optionally
                     draw a mini-batch.
* ``losses``      -- evaluate the proposal/detector losses on a sample file,
                     with an optional finite-difference gradient check.

Every command is deterministic given its arguments and seeds; outputs are
byte-stable across runs and across ``PAIRBOX_THREADS`` settings. Exit codes:
0 success, 1 evaluation-domain error, 2 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .evaluation import (
    DEFAULT_FPPI_REFS,
    VARIANTS,
    EvalConfig,
    EvalReport,
    EvaluationError,
    evaluate,
    write_curve_csv,
)
from .formats import (
    Dataset,
    DatasetMeta,
    ParseError,
    read_dataset,
    read_detections,
    write_dataset,
    write_detections,
)
from .geometry import Box, PairedBox
from .pairnms import paired_nms
from .regression import (
    BoxOffsets,
    DetectorSample,
    LossConfig,
    RpnSample,
    cross_entropy,
    detector_loss,
    rpn_loss,
    smooth_l1,
)
from .sampling import (
    AssignmentConfig,
    assign_detector,
    assign_rpn,
    generate_anchor_grid,
    sample_minibatch,
)
from .simulation import MockDetectorSpec, SceneSpec, ShiftSpec, apply_shift, generate_scene, mock_detect

__all__ = ["RunConfig", "main"]

DEFAULT_SHIFT_SWEEP = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class RunConfig:
    """Resolved pipeline settings shared by the evaluating commands."""

    iou_thresholds: tuple[float, ...] = (0.5, 0.7)
    variants: tuple[str, ...] = VARIANTS
    shift_sweep: tuple[float, ...] = DEFAULT_SHIFT_SWEEP
    assignment: AssignmentConfig = AssignmentConfig()
    proposal_nms_thresh: float = 0.7
    detection_nms_thresh: float = 0.5
    min_height: float = 55.0
    out_dir: Optional[Path] = None

    def eval_config(self, variants: Optional[tuple[str, ...]] = None) -> EvalConfig:
        return EvalConfig(
            iou_thresholds=self.iou_thresholds,
            variants=variants or self.variants,
            min_height=self.min_height,
        )


def format_eval_table(report: EvalReport) -> str:
    lines = ["variant     iou_thresh  log_avg_miss_rate"]
    for e in report.entries:
        lines.append(f"{e.variant:<11} {e.iou_thresh:<10.2f}  {e.lamr:.4f}")
    return "\n".join(lines) + "\n"


def format_sweep_table(rows: Sequence[tuple[float, dict[float, float]]],
                       thresholds: Sequence[float]) -> str:
    header = "shift_dx  " + "  ".join(f"mr_multimodal@{t:.2f}" for t in thresholds)
    lines = [header]
    for dx, cells in rows:
        vals = "  ".join(f"{cells[t]:<18.4f}" for t in thresholds)
        lines.append(f"{dx:<8.1f}  {vals}".rstrip())
    return "\n".join(lines) + "\n"


def format_sweep_csv(rows: Sequence[tuple[float, dict[float, float]]],
                     thresholds: Sequence[float]) -> str:
    lines = ["shift_dx,iou_thresh,lamr"]
    for dx, cells in rows:
        for t in thresholds:
            lines.append(f"{dx:.9g},{t:.9g},{cells[t]:.9g}")
    return "\n".join(lines) + "\n"


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_curve_svg(report: EvalReport) -> str:
    """Minimal static miss-rate plot: log-x FPPI with the nine reference
    gridlines, linear miss-rate y axis, one polyline per table cell."""
    width, height = 640, 480
    ml, mr_, mt, mb = 60, 20, 20, 50
    x0, x1 = math.log10(1e-3), math.log10(10.0)

    def px(fppi: float) -> float:
        clamped = min(max(fppi, 1e-3), 10.0)
        return ml + (math.log10(clamped) - x0) / (x1 - x0) * (width - ml - mr_)

    def py(miss: float) -> float:
        return mt + (1.0 - miss) * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for ref in DEFAULT_FPPI_REFS:
        x = px(ref)
        parts.append(
            f'<line x1="{x:.2f}" y1="{mt}" x2="{x:.2f}" y2="{height - mb}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
    parts.append(
        f'<rect x="{ml}" y="{mt}" width="{width - ml - mr_}" height="{height - mt - mb}" '
        'fill="none" stroke="black" stroke-width="1"/>'
    )
    for i, e in enumerate(report.entries):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{px(p.fppi):.2f},{py(p.miss_rate):.2f}" for p in e.curve.points)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{ml + 8}" y="{mt + 16 + 14 * i}" font-size="11" fill="{color}">'
            f"{e.variant}@{e.iou_thresh:.2f} lamr={e.lamr:.4f}</text>"
        )
    parts.append(
        f'<text x="{width // 2}" y="{height - 12}" font-size="12" text-anchor="middle">'
        "false positives per image (log scale)</text>"
    )
    parts.append(
        f'<text x="16" y="{height // 2}" font-size="12" '
        f'transform="rotate(-90 16 {height // 2})" text-anchor="middle">miss rate</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_evaluate(args) -> int:
    dataset = read_dataset(args.ground_truth)
    detections = read_detections(args.detections)
    run = RunConfig(
        iou_thresholds=tuple(args.iou_thresh),
        variants=tuple(args.variants),
        min_height=args.min_height,
        out_dir=Path(args.out) if args.out is not None else None,
    )
    report = evaluate(dataset.frames, detections, run.eval_config())
    table = format_eval_table(report)
    if run.out_dir is not None:
        out = run.out_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "eval_table.txt", table)
        write_curve_csv(report, out / "eval_curves.csv")
        if args.format == "svg":
            _write_text(out / "eval_curves.svg", render_curve_svg(report))
    if args.format == "table":
        sys.stdout.write(table)
    elif args.format == "csv":
        write_curve_csv(report, sys.stdout)
    else:
        sys.stdout.write(render_curve_svg(report))
    return 0


def _mock_spec_from_args(args, meta: DatasetMeta) -> MockDetectorSpec:
    return MockDetectorSpec(
        mode=args.mock,
        center_noise_sigma=args.center_sigma,
        size_noise_sigma=args.size_sigma,
        miss_prob=args.miss_prob,
        fp_per_frame=args.fp_per_frame,
        score_noise_sigma=args.score_sigma,
        image_width=meta.image_width,
        image_height=meta.image_height,
        seed=args.seed,
    )


def cmd_shift_sweep(args) -> int:
    dataset = read_dataset(args.ground_truth)
    run = RunConfig(
        iou_thresholds=tuple(args.iou_thresh),
        shift_sweep=tuple(args.shift),
        out_dir=Path(args.out) if args.out is not None else None,
    )
    thresholds = run.iou_thresholds
    rows = []
    for dx in run.shift_sweep:
        spec = ShiftSpec(dx, image_width=dataset.meta.image_width)
        shifted = apply_shift(dataset.frames, spec)
        if args.dets_pattern:
            token = int(dx) if float(dx).is_integer() else dx
            detections = read_detections(args.dets_pattern.format(dx=token))
        else:
            detections = mock_detect(shifted, _mock_spec_from_args(args, dataset.meta))
        report = evaluate(shifted, detections, run.eval_config(variants=("multimodal",)))
        rows.append((dx, {t: report.lamr("multimodal", t) for t in thresholds}))
    table = format_sweep_table(rows, thresholds)
    csv_text = format_sweep_csv(rows, thresholds)
    if run.out_dir is not None:
        out = run.out_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "shift_sweep.txt", table)
        _write_text(out / "shift_sweep.csv", csv_text)
    sys.stdout.write(csv_text if args.format == "csv" else table)
    return 0


def cmd_generate(args) -> int:
    spec = SceneSpec(
        num_frames=args.frames,
        peds_per_frame=args.peds_mean,
        height_range=(args.height_range[0], args.height_range[1]),
        width_over_height=args.aspect,
        fixed_width=args.width,
        misalign_range=(args.misalign[0], args.misalign[1]),
        image_width=args.image_size[0],
        image_height=args.image_size[1],
        x_margin=args.margin,
        seed=args.seed,
    )
    frames = generate_scene(spec)
    meta = DatasetMeta(name=args.name, image_width=spec.image_width, image_height=spec.image_height)
    write_dataset(Dataset(frames=tuple(frames), meta=meta), args.out)
    return 0


def cmd_nms(args) -> int:
    detections = read_detections(args.detections)
    out = [
        replace(fd, detections=tuple(paired_nms(fd.detections, args.iou_thresh, args.max_keep)))
        for fd in detections
    ]
    write_detections(out, args.out)
    return 0


def _load_anchor_file(path) -> list[PairedBox]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(payload, dict) or not isinstance(payload.get("anchors"), list):
        raise ParseError(path, 1, "expected an object with an 'anchors' list")
    anchors = []
    for k, raw in enumerate(payload["anchors"]):
        if not isinstance(raw, dict) or "v" not in raw or "t" not in raw:
            raise ParseError(path, 1, f"anchors[{k}]: expected 'v' and 't' boxes")
        try:
            box_v = Box(*(float(x) for x in raw["v"]))
            box_t = Box(*(float(x) for x in raw["t"]))
        except (TypeError, ValueError) as exc:
            raise ParseError(path, 1, f"anchors[{k}]: {exc}") from None
        anchors.append(PairedBox(box_v, box_t))
    return anchors


def cmd_assign(args) -> int:
    dataset = read_dataset(args.ground_truth)
    if args.anchors:
        anchors = _load_anchor_file(args.anchors)
    else:
        anchors = generate_anchor_grid(
            dataset.meta.image_width,
            dataset.meta.image_height,
            stride=args.grid_stride,
            heights=tuple(args.grid_heights),
            aspect=args.grid_aspect,
        )
    cfg = AssignmentConfig(
        rpn_pos_thresh=args.rpn_pos,
        rpn_neg_thresh=args.rpn_neg,
        det_pos_thresh=args.det_pos,
        det_neg_lo=args.det_neg_lo,
        det_neg_hi=args.det_neg_hi,
        match_best_anchor_per_gt=args.force_best_anchor,
    )
    assign = assign_rpn if args.stage == "rpn" else assign_detector
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for frame in dataset.frames:
            gts = [obj.pair for obj in frame.objects if not obj.ignore]
            result = assign(anchors, gts, cfg)
            record = {
                "frame": frame.frame_id,
                "labels": result.labels.tolist(),
                "matched_gt": result.matched_gt.tolist(),
                "max_ioum": [float(v) for v in result.max_ioum],
            }
            if args.sample_batch is not None:
                selected = sample_minibatch(
                    result, args.sample_batch, args.pos_fraction,
                    np.random.default_rng(args.seed),
                )
                record["selected"] = sorted(int(i) for i in selected)
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
    return 0


def _offsets_from(raw, field: str) -> BoxOffsets:
    try:
        return BoxOffsets.from_array(raw)
    except (TypeError, ValueError) as exc:
        raise ParseError("<losses>", 1, f"{field}: {exc}") from None


def _load_losses_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(payload, dict):
        raise ParseError(path, 1, "expected a JSON object")
    return payload


def _parse_rpn_samples(section, path) -> tuple[list[RpnSample], LossConfig]:
    cfg_raw = section.get("cfg", {})
    cfg = LossConfig(
        lam=float(cfg_raw.get("lambda", 1.0)),
        n_cls=int(cfg_raw.get("n_cls", max(len(section.get("samples", [])), 1))),
        n_reg=int(cfg_raw.get("n_reg", max(len(section.get("samples", [])), 1))),
    )
    samples = []
    for k, raw in enumerate(section.get("samples", [])):
        label = raw.get("label")
        if label not in (0, 1):
            raise ParseError(path, 1, f"rpn.samples[{k}].label: expected 0 or 1")
        if label == 1:
            samples.append(
                RpnSample(
                    objectness_logit=float(raw["logit"]),
                    label=1,
                    pred_offsets_v=_offsets_from(raw.get("pred_v"), f"rpn.samples[{k}].pred_v"),
                    pred_offsets_t=_offsets_from(raw.get("pred_t"), f"rpn.samples[{k}].pred_t"),
                    target_offsets_v=_offsets_from(raw.get("target_v"), f"rpn.samples[{k}].target_v"),
                    target_offsets_t=_offsets_from(raw.get("target_t"), f"rpn.samples[{k}].target_t"),
                )
            )
        else:
            samples.append(RpnSample(objectness_logit=float(raw["logit"]), label=0))
    return samples, cfg


def _parse_detector_samples(section, path) -> tuple[list[DetectorSample], float]:
    lam = float(section.get("lambda", 1.0))
    samples = []
    for k, raw in enumerate(section.get("samples", [])):
        scores = tuple(float(s) for s in raw.get("scores", ()))
        true_class = int(raw.get("true_class", 0))
        if true_class != 0:
            samples.append(
                DetectorSample(
                    class_scores=scores,
                    true_class=true_class,
                    pred_offsets_v=_offsets_from(raw.get("pred_v"), f"detector.samples[{k}].pred_v"),
                    pred_offsets_t=_offsets_from(raw.get("pred_t"), f"detector.samples[{k}].pred_t"),
                    target_offsets_v=_offsets_from(raw.get("target_v"), f"detector.samples[{k}].target_v"),
                    target_offsets_t=_offsets_from(raw.get("target_t"), f"detector.samples[{k}].target_t"),
                )
            )
        else:
            samples.append(DetectorSample(class_scores=scores, true_class=0))
    return samples, lam


def _gradient_check_lines(rpn_samples, det_samples) -> list[str]:
    eps = 1e-5
    sl1_pairs = []
    ce_inputs = []
    for s in rpn_samples:
        if s.label == 1:
            sl1_pairs.append((s.pred_offsets_v, s.target_offsets_v))
            sl1_pairs.append((s.pred_offsets_t, s.target_offsets_t))
    for s in det_samples:
        ce_inputs.append((np.asarray(s.class_scores, dtype=np.float64), s.true_class))
        if s.is_foreground:
            sl1_pairs.append((s.pred_offsets_v, s.target_offsets_v))
            sl1_pairs.append((s.pred_offsets_t, s.target_offsets_t))
    lines = []
    worst = 0.0
    for pred, target in sl1_pairs:
        analytic = smooth_l1(pred, target)[1].as_array()
        x = pred.as_array()
        for i in range(4):
            hi, lo = x.copy(), x.copy()
            hi[i] += eps
            lo[i] -= eps
            num = (smooth_l1(BoxOffsets.from_array(hi), target)[0]
                   - smooth_l1(BoxOffsets.from_array(lo), target)[0]) / (2 * eps)
            worst = max(worst, abs(analytic[i] - num))
    lines.append(f"grad_check smooth_l1 pairs={len(sl1_pairs)} max_abs_err={worst:.3e}")
    worst = 0.0
    for z, label in ce_inputs:
        analytic = cross_entropy(z, label)[1]
        for i in range(z.size):
            hi, lo = z.copy(), z.copy()
            hi[i] += eps
            lo[i] -= eps
            num = (cross_entropy(hi, label)[0] - cross_entropy(lo, label)[0]) / (2 * eps)
            worst = max(worst, abs(analytic[i] - num))
    lines.append(f"grad_check cross_entropy inputs={len(ce_inputs)} max_abs_err={worst:.3e}")
    return lines


def cmd_losses(args) -> int:
    payload = _load_losses_file(args.samples)
    lines = []
    rpn_samples: list[RpnSample] = []
    det_samples: list[DetectorSample] = []
    if "rpn" in payload:
        rpn_samples, cfg = _parse_rpn_samples(payload["rpn"], args.samples)
        if args.lam is not None:
            cfg = replace(cfg, lam=args.lam)
        lines.append(f"rpn_loss {rpn_loss(rpn_samples, cfg):.9g}")
    if "detector" in payload:
        det_samples, lam = _parse_detector_samples(payload["detector"], args.samples)
        if args.lam is not None:
            lam = args.lam
        for k, s in enumerate(det_samples):
            lines.append(f"detector_loss[{k}] {detector_loss(s, lam):.9g}")
    if args.grad_check:
        lines.extend(_gradient_check_lines(rpn_samples, det_samples))
    text = "\n".join(lines) + "\n" if lines else ""
    if args.out is not None:
        _write_text(Path(args.out), text)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairbox",
        description="Paired visible/thermal bounding-box toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="score detections against annotations")
    p_eval.add_argument("ground_truth", help="annotation JSONL file")
    p_eval.add_argument("detections", help="detection JSONL file")
    p_eval.add_argument("--iou-thresh", type=float, nargs="+", default=[0.5, 0.7])
    p_eval.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    p_eval.add_argument("--min-height", type=float, default=55.0)
    p_eval.add_argument("--format", choices=("table", "csv", "svg"), default="table")
    p_eval.add_argument("--out", default=None, help="directory for table/CSV/SVG outputs")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("shift-sweep", help="miss rate vs thermal shift")
    p_sweep.add_argument("ground_truth")
    p_sweep.add_argument("--shift", type=float, nargs="+", default=list(DEFAULT_SHIFT_SWEEP))
    p_sweep.add_argument("--iou-thresh", type=float, nargs="+", default=[0.5, 0.7])
    p_sweep.add_argument("--mock", choices=("paired", "single_box"), default="paired")
    p_sweep.add_argument("--center-sigma", type=float, default=0.0)
    p_sweep.add_argument("--size-sigma", type=float, default=0.0)
    p_sweep.add_argument("--miss-prob", type=float, default=0.0)
    p_sweep.add_argument("--fp-per-frame", type=float, default=0.0)
    p_sweep.add_argument("--score-sigma", type=float, default=0.0)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument(
        "--dets-pattern",
        default=None,
        help="per-shift detection file template with a {dx} placeholder "
             "(overrides the mock detector)",
    )
    p_sweep.add_argument("--format", choices=("table", "csv"), default="table")
    p_sweep.add_argument("--out", default=None, help="directory for table/CSV outputs")
    p_sweep.set_defaults(func=cmd_shift_sweep)

    p_gen = sub.add_parser("generate", help="write a synthetic paired dataset")
    p_gen.add_argument("--frames", type=int, required=True)
    p_gen.add_argument("--peds-mean", type=float, default=2.0)
    p_gen.add_argument("--height-range", type=float, nargs=2, default=[60.0, 120.0])
    p_gen.add_argument("--width", type=float, default=None, help="fixed box width")
    p_gen.add_argument("--aspect", type=float, default=0.41, help="width/height when --width unset")
    p_gen.add_argument("--misalign", type=float, nargs=2, default=[0.0, 0.0])
    p_gen.add_argument("--image-size", type=float, nargs=2, default=[640.0, 512.0],
                       metavar=("WIDTH", "HEIGHT"))
    p_gen.add_argument("--margin", type=float, default=24.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--name", default="synthetic")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_generate)

    p_nms = sub.add_parser("nms", help="apply paired NMS to a detection file")
    p_nms.add_argument("detections")
    p_nms.add_argument("--iou-thresh", type=float, default=RunConfig.detection_nms_thresh,
                       help="suppression threshold (default: final-detection setting; "
                            "use the proposal setting 0.7 for proposal-stage NMS)")
    p_nms.add_argument("--max-keep", type=int, default=None)
    p_nms.add_argument("--out", required=True)
    p_nms.set_defaults(func=cmd_nms)

    p_assign = sub.add_parser("assign", help="label anchor pairs against ground truth")
    p_assign.add_argument("ground_truth")
    p_assign.add_argument("--anchors", default=None,
                          help="JSON file with an 'anchors' list of v/t boxes")
    p_assign.add_argument("--grid-stride", type=float, default=16.0)
    p_assign.add_argument("--grid-heights", type=float, nargs="+", default=[50.0, 100.0, 200.0])
    p_assign.add_argument("--grid-aspect", type=float, default=0.41)
    p_assign.add_argument("--stage", choices=("rpn", "detector"), default="rpn")
    p_assign.add_argument("--rpn-pos", type=float, default=0.63)
    p_assign.add_argument("--rpn-neg", type=float, default=0.3)
    p_assign.add_argument("--det-pos", type=float, default=0.5)
    p_assign.add_argument("--det-neg-lo", type=float, default=0.1)
    p_assign.add_argument("--det-neg-hi", type=float, default=0.5)
    p_assign.add_argument("--force-best-anchor", action="store_true")
    p_assign.add_argument("--sample-batch", type=int, default=None,
                          help="also draw a mini-batch of this size")
    p_assign.add_argument("--pos-fraction", type=float, default=0.5)
    p_assign.add_argument("--seed", type=int, default=0)
    p_assign.add_argument("--out", required=True)
    p_assign.set_defaults(func=cmd_assign)

    p_loss = sub.add_parser("losses", help="evaluate losses on a JSON sample file")
    p_loss.add_argument("samples")
    p_loss.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="override the regression weight")
    p_loss.add_argument("--grad-check", action="store_true")
    p_loss.add_argument("--out", default=None)
    p_loss.set_defaults(func=cmd_losses)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
