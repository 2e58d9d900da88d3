"""Detection evaluation: reasonable-subset filtering, greedy matching under a
selectable IoU variant, FPPI/miss-rate curves, and log-average miss rate.

The protocol mirrors the standard pedestrian-benchmark recipe. Ground truth
below the height cutoff or under heavy occlusion becomes an ignore region:
it absorbs detections (neither true nor false positives) but is never a
miss. Matching is greedy in descending score order and one-to-one against
evaluable ground truth; the score sweep then walks the distinct detection
scores, which is equivalent to re-matching at every threshold because a
detection's match never depends on lower-scored detections.

The log-average miss rate is the geometric mean of miss rates sampled at
nine reference FPPI values, log-evenly spaced over [1e-2, 1e0], using
conservative step interpolation (the miss rate at the largest achieved FPPI
not exceeding the reference).
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence, TypeVar, Union

import numpy as np

from .geometry import PairedBox, boxes_to_array, iou_matrix, iou_multimodal_matrix
from .pairnms import Detection

__all__ = [
    "EvaluationError",
    "OCCLUSION_LEVELS",
    "VARIANTS",
    "GtObject",
    "FrameAnnotations",
    "FrameDetections",
    "FrameMatch",
    "CurvePoint",
    "MissRateCurve",
    "EvalConfig",
    "EvalEntry",
    "EvalReport",
    "DET_TP",
    "DET_FP",
    "DET_IGNORED",
    "DEFAULT_FPPI_REFS",
    "filter_reasonable",
    "match_frame",
    "miss_rate_curve",
    "log_average_miss_rate",
    "evaluate",
    "substitute_single_modality",
    "write_curve_csv",
]

FrameId = Union[str, int]

OCCLUSION_LEVELS = ("none", "partial", "heavy")
VARIANTS = ("visible", "thermal", "multimodal")

# per-detection outcome codes
DET_TP = 1
DET_FP = 0
DET_IGNORED = -1

# nine reference FPPI values, quarter-decade steps over [1e-2, 1e0]
DEFAULT_FPPI_REFS = tuple(10.0 ** (-2.0 + 0.25 * k) for k in range(9))


class EvaluationError(ValueError):
    """Raised for protocol-domain failures (as opposed to I/O or parsing)."""


@dataclass(frozen=True)
class GtObject:
    """One annotated object with its occlusion level and ignore flag."""

    pair: PairedBox
    occlusion: str = "none"
    ignore: bool = False

    def __post_init__(self):
        if self.occlusion not in OCCLUSION_LEVELS:
            raise ValueError(
                f"occlusion must be one of {OCCLUSION_LEVELS}, got {self.occlusion!r}"
            )


@dataclass(frozen=True)
class FrameAnnotations:
    """Ground truth for one image."""

    frame_id: FrameId
    objects: tuple[GtObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class FrameDetections:
    """Scored detections for one image (possibly none)."""

    frame_id: FrameId
    detections: tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))


def substitute_single_modality(
    frame_id: FrameId,
    boxes_with_scores: Iterable[tuple],
) -> FrameDetections:
    """Build paired detections from single-box output.

    Each (box, score) entry becomes a detection whose visible and thermal
    boxes are both the given box, which is how detectors that emit one box
    per object are evaluated against paired ground truth.
    """
    dets = [Detection(PairedBox.aligned(box), float(score)) for box, score in boxes_with_scores]
    return FrameDetections(frame_id, tuple(dets))


def filter_reasonable(
    frames: Sequence[FrameAnnotations],
    min_height: float = 55.0,
    height_modality: str = "thermal",
) -> list[FrameAnnotations]:
    """Mark objects outside the reasonable subset as ignore regions.

    Objects at most ``min_height`` pixels tall (measured on the
    ``height_modality`` box) or under heavy occlusion are flagged ignore;
    they are kept, not dropped, so they can still absorb detections.
    """
    if height_modality not in ("visible", "thermal"):
        raise ValueError("height_modality must be 'visible' or 'thermal'")
    out = []
    for frame in frames:
        objects = []
        for obj in frame.objects:
            box = obj.pair.thermal if height_modality == "thermal" else obj.pair.visible
            keep_out = obj.ignore or obj.occlusion == "heavy" or box.h <= min_height
            objects.append(replace(obj, ignore=keep_out) if keep_out != obj.ignore else obj)
        out.append(FrameAnnotations(frame.frame_id, tuple(objects)))
    return out


def _overlap_matrix(dets: Sequence[Detection], gts: Sequence[GtObject], variant: str) -> np.ndarray:
    dv = boxes_to_array(d.pair.visible for d in dets)
    dt = boxes_to_array(d.pair.thermal for d in dets)
    gv = boxes_to_array(g.pair.visible for g in gts)
    gt_ = boxes_to_array(g.pair.thermal for g in gts)
    if variant == "visible":
        return iou_matrix(dv, gv)
    if variant == "thermal":
        return iou_matrix(dt, gt_)
    if variant == "multimodal":
        return iou_multimodal_matrix(dv, dt, gv, gt_)
    raise ValueError(f"unknown IoU variant {variant!r}, expected one of {VARIANTS}")


@dataclass(frozen=True, eq=False)
class FrameMatch:
    """Matching outcome for one frame.

    ``det_outcomes`` (DET_TP / DET_FP / DET_IGNORED) and
    ``det_matched_gt`` follow the input detection order; ``gt_detected``
    follows the input GT order and is always False for ignore regions.
    """

    scores: np.ndarray
    det_outcomes: np.ndarray
    det_matched_gt: np.ndarray
    gt_detected: np.ndarray
    n_evaluable: int


def match_frame(
    dets: Sequence[Detection],
    gts: Sequence[GtObject],
    variant: str = "multimodal",
    thresh: float = 0.5,
) -> FrameMatch:
    """Greedily match detections to ground truth for one frame.

    Detections are visited by descending score (ties by input index). Each
    one claims the highest-overlap unmatched evaluable GT with overlap at or
    above ``thresh`` (overlap ties go to the lowest GT index); failing that,
    a detection overlapping any ignore region at or above ``thresh`` is
    discarded from scoring; the rest are false positives. Evaluable GTs left
    unclaimed are misses.
    """
    n_det = len(dets)
    n_gt = len(gts)
    scores = np.asarray([d.score for d in dets], dtype=np.float64)
    outcomes = np.full(n_det, DET_FP, dtype=np.int8)
    matched_gt = np.full(n_det, -1, dtype=np.int64)
    gt_detected = np.zeros(n_gt, dtype=bool)
    evaluable = np.asarray([not g.ignore for g in gts], dtype=bool)
    n_evaluable = int(np.count_nonzero(evaluable))
    if n_det == 0:
        return FrameMatch(scores, outcomes, matched_gt, gt_detected, n_evaluable)
    if n_gt == 0:
        return FrameMatch(scores, outcomes, matched_gt, gt_detected, n_evaluable)

    overlaps = _overlap_matrix(dets, gts, variant)
    ignore_cols = np.flatnonzero(~evaluable)
    taken = np.zeros(n_gt, dtype=bool)
    order = sorted(range(n_det), key=lambda i: (-scores[i], i))
    for i in order:
        row = overlaps[i]
        candidates = evaluable & ~taken
        best_j = -1
        best_ov = 0.0
        for j in np.flatnonzero(candidates):
            ov = row[j]
            if ov > best_ov:  # strict: overlap ties keep the lowest GT index
                best_ov = ov
                best_j = int(j)
        if best_j >= 0 and best_ov >= thresh:
            outcomes[i] = DET_TP
            matched_gt[i] = best_j
            taken[best_j] = True
            gt_detected[best_j] = True
        elif ignore_cols.size and float(row[ignore_cols].max()) >= thresh:
            outcomes[i] = DET_IGNORED
    return FrameMatch(scores, outcomes, matched_gt, gt_detected, n_evaluable)


@dataclass(frozen=True)
class CurvePoint:
    """One operating point of the detector at a given score threshold."""

    score_thresh: float
    fppi: float
    miss_rate: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class MissRateCurve:
    points: tuple[CurvePoint, ...]
    n_frames: int
    n_evaluable: int


def miss_rate_curve(matches: Sequence[FrameMatch]) -> MissRateCurve:
    """Aggregate per-frame matches into an FPPI/miss-rate curve.

    One point per distinct detection score, in descending threshold order.
    At threshold t only detections with score >= t count. With no
    detections at all, a single all-miss point at threshold 1.0 is emitted
    (scores are bounded by 1).
    """
    n_frames = len(matches)
    n_gt = sum(m.n_evaluable for m in matches)
    if n_gt == 0:
        raise EvaluationError("miss rate undefined: no evaluable ground truth objects")
    scores = np.concatenate([m.scores for m in matches]) if matches else np.zeros(0)
    outcomes = (
        np.concatenate([m.det_outcomes for m in matches]) if matches else np.zeros(0, np.int8)
    )
    if scores.size == 0:
        point = CurvePoint(1.0, 0.0, 1.0, tp=0, fp=0, fn=n_gt)
        return MissRateCurve((point,), n_frames, n_gt)
    desc = np.argsort(-scores, kind="stable")
    scores = scores[desc]
    is_tp = np.cumsum(outcomes[desc] == DET_TP)
    is_fp = np.cumsum(outcomes[desc] == DET_FP)
    points = []
    for k in range(scores.size):
        if k + 1 < scores.size and scores[k + 1] == scores[k]:
            continue  # extend through the whole tie group
        tp = int(is_tp[k])
        fp = int(is_fp[k])
        fn = n_gt - tp
        points.append(
            CurvePoint(
                score_thresh=float(scores[k]),
                fppi=fp / n_frames,
                miss_rate=fn / n_gt,
                tp=tp,
                fp=fp,
                fn=fn,
            )
        )
    return MissRateCurve(tuple(points), n_frames, n_gt)


def log_average_miss_rate(
    curve: MissRateCurve,
    refs: Sequence[float] = DEFAULT_FPPI_REFS,
    epsilon: float = 0.0,
) -> float:
    """Geometric mean of miss rates sampled at the reference FPPI values.

    Each reference takes the miss rate of the curve point with the largest
    FPPI not exceeding it (for duplicate FPPI values the last point in curve
    order wins); references below the smallest achieved FPPI take the miss
    rate at that smallest FPPI. Sampled rates are floored at ``epsilon``;
    with the default floor of 0 the mean is defined as 0 whenever any
    sampled rate is 0.
    """
    if not curve.points:
        raise EvaluationError("cannot average an empty curve")
    step: dict[float, float] = {}
    for p in curve.points:
        step[p.fppi] = p.miss_rate
    xs = sorted(step)
    ys = [step[x] for x in xs]
    sampled = []
    for r in refs:
        idx = int(np.searchsorted(np.asarray(xs), r, side="right")) - 1
        if idx < 0:
            idx = 0
        sampled.append(max(ys[idx], epsilon))
    if any(s == 0.0 for s in sampled):
        return 0.0
    return float(math.exp(sum(math.log(s) for s in sampled) / len(sampled)))


@dataclass(frozen=True)
class EvalConfig:
    """Protocol parameters for a full evaluation run."""

    iou_thresholds: tuple[float, ...] = (0.5, 0.7)
    variants: tuple[str, ...] = VARIANTS
    min_height: float = 55.0
    height_modality: str = "thermal"
    mr_epsilon: float = 0.0
    fppi_refs: tuple[float, ...] = DEFAULT_FPPI_REFS

    def __post_init__(self):
        if not self.iou_thresholds or any(not 0.0 < t <= 1.0 for t in self.iou_thresholds):
            raise ValueError("iou_thresholds must be non-empty with values in (0, 1]")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown or not self.variants:
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}")


@dataclass(frozen=True)
class EvalEntry:
    """Curve and summary number for one (variant, IoU threshold) cell."""

    variant: str
    iou_thresh: float
    curve: MissRateCurve
    lamr: float


@dataclass(frozen=True)
class EvalReport:
    entries: tuple[EvalEntry, ...]

    def entry(self, variant: str, iou_thresh: float) -> EvalEntry:
        for e in self.entries:
            if e.variant == variant and e.iou_thresh == iou_thresh:
                return e
        raise KeyError(f"no entry for variant={variant!r}, iou_thresh={iou_thresh!r}")

    def lamr(self, variant: str, iou_thresh: float) -> float:
        return self.entry(variant, iou_thresh).lamr


_T = TypeVar("_T")
_R = TypeVar("_R")


def thread_count() -> int:
    """Worker cap for per-frame parallelism; PAIRBOX_THREADS overrides."""
    env = os.environ.get("PAIRBOX_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _ordered_map(fn: Callable[[_T], _R], items: Sequence[_T]) -> list[_R]:
    """Map preserving order; threads only pay off past a few dozen frames."""
    workers = thread_count()
    if workers <= 1 or len(items) < 64:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def evaluate(
    annotations: Sequence[FrameAnnotations],
    detections: Sequence[FrameDetections],
    config: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Run the full protocol over every configured variant and threshold.

    Detections must reference known frame ids; annotated frames without
    detections count as all-miss frames. Per-frame matching is independent
    and runs through an order-preserving map, so reports are identical
    regardless of worker count.
    """
    ann_ids = [f.frame_id for f in annotations]
    if len(set(ann_ids)) != len(ann_ids):
        raise EvaluationError("duplicate frame ids in annotations")
    det_by_frame: dict[FrameId, FrameDetections] = {}
    for fd in detections:
        if fd.frame_id in det_by_frame:
            raise EvaluationError(f"duplicate detection entries for frame {fd.frame_id!r}")
        det_by_frame[fd.frame_id] = fd
    ann_id_set = set(ann_ids)
    unknown = [fid for fid in det_by_frame if fid not in ann_id_set]
    if unknown:
        raise EvaluationError(
            "detections reference unknown frame ids: "
            + ", ".join(repr(u) for u in unknown)
        )
    filtered = filter_reasonable(annotations, config.min_height, config.height_modality)
    frame_inputs = [
        (det_by_frame[f.frame_id].detections if f.frame_id in det_by_frame else (), f.objects)
        for f in filtered
    ]
    entries = []
    for variant in config.variants:
        for thresh in config.iou_thresholds:
            matches = _ordered_map(
                lambda pair: match_frame(pair[0], pair[1], variant, thresh), frame_inputs
            )
            curve = miss_rate_curve(matches)
            lamr = log_average_miss_rate(curve, config.fppi_refs, config.mr_epsilon)
            entries.append(EvalEntry(variant, thresh, curve, lamr))
    return EvalReport(tuple(entries))


def write_curve_csv(report: EvalReport, dst) -> None:
    """Write all curve points as CSV (UTF-8, LF, 9 significant digits).

    ``dst`` may be a path or a text file object.
    """
    if hasattr(dst, "write"):
        _write_curve_csv(report, dst)
        return
    with open(dst, "w", encoding="utf-8", newline="\n") as fh:
        _write_curve_csv(report, fh)


def _write_curve_csv(report: EvalReport, fh: io.TextIOBase) -> None:
    fh.write("variant,iou_thresh,score_thresh,fppi,miss_rate\n")
    for e in report.entries:
        for p in e.curve.points:
            fh.write(
                f"{e.variant},{e.iou_thresh:.9g},{p.score_thresh:.9g},"
                f"{p.fppi:.9g},{p.miss_rate:.9g}\n"
            )
