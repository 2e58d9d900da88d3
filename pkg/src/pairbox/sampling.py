"""Training-sample assignment for paired boxes and mini-batch drawing.

Anchor pairs and RoI pairs are labeled positive/negative/ignore from their
best multi-modal IoU against the ground-truth pairs, then mini-batches are
drawn with a capped positive fraction. Assignment is pure; sampling takes an
explicit seeded random source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, PairedBox, iou_multimodal_matrix, pairs_to_arrays

__all__ = [
    "POSITIVE",
    "NEGATIVE",
    "IGNORE",
    "AssignmentConfig",
    "AssignmentResult",
    "assign_rpn",
    "assign_detector",
    "sample_minibatch",
    "generate_anchor_grid",
]

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass(frozen=True)
class AssignmentConfig:
    """Thresholds and batch shapes for the two assignment stages.

    Proposal stage: positive above ``rpn_pos_thresh`` (strict), negative
    below ``rpn_neg_thresh`` (strict), ignore in between. Detection stage:
    positive at or above ``det_pos_thresh``, negative inside
    [det_neg_lo, det_neg_hi), ignore below the band.
    """

    rpn_pos_thresh: float = 0.63
    rpn_neg_thresh: float = 0.3
    det_pos_thresh: float = 0.5
    det_neg_lo: float = 0.1
    det_neg_hi: float = 0.5
    rpn_batch: int = 256
    rpn_pos_fraction: float = 0.5
    det_batch: int = 128
    det_pos_fraction: float = 0.25
    match_best_anchor_per_gt: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rpn_neg_thresh <= self.rpn_pos_thresh <= 1.0:
            raise ValueError("need 0 <= rpn_neg_thresh <= rpn_pos_thresh <= 1")
        if not 0.0 <= self.det_neg_lo < self.det_neg_hi <= 1.0:
            raise ValueError("need 0 <= det_neg_lo < det_neg_hi <= 1")
        if not self.det_neg_hi <= self.det_pos_thresh <= 1.0:
            raise ValueError("need det_neg_hi <= det_pos_thresh <= 1")
        for name in ("rpn_pos_fraction", "det_pos_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.rpn_batch < 1 or self.det_batch < 1:
            raise ValueError("batch sizes must be >= 1")


@dataclass(frozen=True, eq=False)
class AssignmentResult:
    """Per-candidate labels, matched GT indices and best overlaps.

    ``labels`` holds POSITIVE/NEGATIVE/IGNORE codes; ``matched_gt`` is the
    index of the best-overlapping GT for positive candidates and -1
    elsewhere; ``max_ioum`` is each candidate's best multi-modal IoU over
    all GT pairs (0 when there are none).
    """

    labels: np.ndarray
    matched_gt: np.ndarray
    max_ioum: np.ndarray

    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == POSITIVE)

    def negatives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == NEGATIVE)

    def ignored(self) -> np.ndarray:
        return np.flatnonzero(self.labels == IGNORE)


def _overlap_stats(candidates: Sequence[PairedBox], gts: Sequence[PairedBox]):
    cv, ct = pairs_to_arrays(candidates)
    gv, gt_ = pairs_to_arrays(gts)
    overlaps = iou_multimodal_matrix(cv, ct, gv, gt_)
    max_ioum = overlaps.max(axis=1)
    best_gt = overlaps.argmax(axis=1)  # ties resolve to the lowest GT index
    return overlaps, max_ioum, best_gt


def _no_gt_result(n: int) -> AssignmentResult:
    return AssignmentResult(
        labels=np.full(n, NEGATIVE, dtype=np.int8),
        matched_gt=np.full(n, -1, dtype=np.int64),
        max_ioum=np.zeros(n, dtype=np.float64),
    )


def assign_rpn(
    anchors: Sequence[PairedBox],
    gts: Sequence[PairedBox],
    cfg: AssignmentConfig = AssignmentConfig(),
) -> AssignmentResult:
    """Label anchor pairs against GT pairs by best multi-modal IoU.

    Positive strictly above ``rpn_pos_thresh``, negative strictly below
    ``rpn_neg_thresh``, ignore in between. With no GT pairs every anchor is
    negative. When ``cfg.match_best_anchor_per_gt`` is set, the
    first-best anchor of each GT (by lowest anchor index among maxima) is
    additionally forced positive provided its overlap is nonzero.
    """
    n = len(anchors)
    if len(gts) == 0:
        return _no_gt_result(n)
    overlaps, max_ioum, best_gt = _overlap_stats(anchors, gts)
    labels = np.full(n, IGNORE, dtype=np.int8)
    labels[max_ioum > cfg.rpn_pos_thresh] = POSITIVE
    labels[max_ioum < cfg.rpn_neg_thresh] = NEGATIVE
    if cfg.match_best_anchor_per_gt and n > 0:
        for j in range(len(gts)):
            col = overlaps[:, j]
            i = int(col.argmax())
            if col[i] > 0.0:
                labels[i] = POSITIVE
    matched_gt = np.where(labels == POSITIVE, best_gt, -1).astype(np.int64)
    return AssignmentResult(labels=labels, matched_gt=matched_gt, max_ioum=max_ioum)


def assign_detector(
    rois: Sequence[PairedBox],
    gts: Sequence[PairedBox],
    cfg: AssignmentConfig = AssignmentConfig(),
) -> AssignmentResult:
    """Label RoI pairs against GT pairs by best multi-modal IoU.

    Positive at or above ``det_pos_thresh``; negative inside
    [det_neg_lo, det_neg_hi); everything else (including RoIs below the
    negative band) is ignore. With no GT pairs the best overlap is 0, which
    falls below the band, so all RoIs are ignore unless ``det_neg_lo`` is 0.
    """
    n = len(rois)
    if len(gts) == 0:
        max_ioum = np.zeros(n, dtype=np.float64)
        labels = np.full(n, IGNORE, dtype=np.int8)
        labels[(max_ioum >= cfg.det_neg_lo) & (max_ioum < cfg.det_neg_hi)] = NEGATIVE
        return AssignmentResult(
            labels=labels,
            matched_gt=np.full(n, -1, dtype=np.int64),
            max_ioum=max_ioum,
        )
    _, max_ioum, best_gt = _overlap_stats(rois, gts)
    labels = np.full(n, IGNORE, dtype=np.int8)
    labels[(max_ioum >= cfg.det_neg_lo) & (max_ioum < cfg.det_neg_hi)] = NEGATIVE
    labels[max_ioum >= cfg.det_pos_thresh] = POSITIVE
    matched_gt = np.where(labels == POSITIVE, best_gt, -1).astype(np.int64)
    return AssignmentResult(labels=labels, matched_gt=matched_gt, max_ioum=max_ioum)


def sample_minibatch(
    result: AssignmentResult,
    batch: int,
    pos_fraction: float,
    rng: int | np.random.Generator,
) -> np.ndarray:
    """Draw a mini-batch of candidate indices, positives first.

    Samples up to ``int(batch * pos_fraction)`` positives uniformly without
    replacement and fills the remainder with negatives; scarce positives are
    compensated with extra negatives. ``rng`` must be an explicit seed or
    generator so the draw is reproducible.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if not 0.0 < pos_fraction < 1.0:
        raise ValueError("pos_fraction must lie in (0, 1)")
    if rng is None:
        raise ValueError("a seed or np.random.Generator is required")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pos = result.positives()
    neg = result.negatives()
    if pos.size == 0 and neg.size == 0:
        raise ValueError("no positive or negative candidates to sample from")
    n_pos = min(pos.size, int(batch * pos_fraction))
    n_neg = min(neg.size, batch - n_pos)
    pos_sel = gen.permutation(pos)[:n_pos]
    neg_sel = gen.permutation(neg)[:n_neg]
    return np.concatenate([pos_sel, neg_sel])


def generate_anchor_grid(
    image_width: float,
    image_height: float,
    stride: float = 16.0,
    heights: Sequence[float] = (50.0, 100.0, 200.0),
    aspect: float = 0.41,
) -> list[PairedBox]:
    """Regular anchor grid with identical visible/thermal boxes.

    One anchor per (cell center, height) with width = aspect * height.
    Anchors may extend past the image border.
    """
    if image_width <= 0 or image_height <= 0 or stride <= 0:
        raise ValueError("image dimensions and stride must be positive")
    if aspect <= 0 or any(h <= 0 for h in heights):
        raise ValueError("aspect and anchor heights must be positive")
    anchors = []
    ny = int(math.floor(image_height / stride))
    nx = int(math.floor(image_width / stride))
    for iy in range(ny):
        cy = (iy + 0.5) * stride
        for ix in range(nx):
            cx = (ix + 0.5) * stride
            for h in heights:
                w = aspect * h
                box = Box(cx - 0.5 * w, cy - 0.5 * h, w, h)
                anchors.append(PairedBox.aligned(box))
    return anchors
