"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written against different primitives than
the code under test: pixel counting on boolean grids instead of closed-form
areas, an O(n^2) pure-python NMS, central finite differences instead of
analytic gradients, and per-threshold re-matching instead of the one-pass
score sweep.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def rasterized_counts(a, b, scale: int = 10):
    """Pixel counts (inter, union, area_a, area_b) of two integer boxes.

    Boxes are (x, y, w, h) tuples with integer-valued fields. Each box is
    painted onto a boolean grid at ``scale`` cells per pixel and regions are
    measured by counting cells, so the result is exact. Counts are returned
    in grid cells (pixel areas times scale**2).
    """
    ax, ay, aw, ah = (int(v) for v in a)
    bx, by, bw, bh = (int(v) for v in b)
    ox = min(ax, bx)
    oy = min(ay, by)
    width = (max(ax + aw, bx + bw) - ox) * scale
    height = (max(ay + ah, by + bh) - oy) * scale
    ga = np.zeros((max(height, 1), max(width, 1)), dtype=bool)
    gb = np.zeros_like(ga)
    ga[(ay - oy) * scale:(ay - oy + ah) * scale, (ax - ox) * scale:(ax - ox + aw) * scale] = True
    gb[(by - oy) * scale:(by - oy + bh) * scale, (bx - ox) * scale:(bx - ox + bw) * scale] = True
    inter = int(np.count_nonzero(ga & gb))
    union = int(np.count_nonzero(ga | gb))
    return inter, union, int(np.count_nonzero(ga)), int(np.count_nonzero(gb))


def rasterized_iou(a, b, scale: int = 10) -> float:
    inter, union, _, _ = rasterized_counts(a, b, scale)
    return inter / union if union > 0 else 0.0


def rasterized_iou_multimodal(gv, gt, dv, dt, scale: int = 10) -> float:
    inter_v, union_v, _, _ = rasterized_counts(gv, dv, scale)
    inter_t, union_t, _, _ = rasterized_counts(gt, dt, scale)
    den = union_v + union_t
    return (inter_v + inter_t) / den if den > 0 else 0.0


def naive_iou(a, b) -> float:
    """Scalar IoU on (x, y, w, h) tuples, written independently."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        inter = 0.0
    else:
        inter = iw * ih
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


def naive_nms(boxes, scores, thresh):
    """Reference greedy single-modality NMS.

    ``boxes`` is a list of (x, y, w, h) tuples. Candidates are visited by
    descending score with ties broken by input index; a candidate is dropped
    when its IoU with any already-kept box exceeds ``thresh`` strictly.
    Returns kept indices in visit order.
    """
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(naive_iou(boxes[i], boxes[k]) <= thresh for k in kept):
            kept.append(i)
    return kept


def central_difference(f, x, eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at 1-D point x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += eps
        lo[i] -= eps
        grad[i] = (f(hi) - f(lo)) / (2.0 * eps)
    return grad


def best_assignment_tp_count(overlaps, thresh) -> int:
    """Maximum number of detection-GT matches over all one-to-one assignments.

    Brute force over permutations; only usable for tiny instances. Used to
    document where greedy matching agrees with the optimal assignment.
    """
    n_det, n_gt = overlaps.shape
    best = 0
    for perm in itertools.permutations(range(n_gt), min(n_det, n_gt)):
        count = 0
        for det_idx, gt_idx in enumerate(perm):
            if overlaps[det_idx, gt_idx] >= thresh:
                count += 1
        best = max(best, count)
    return best


def geometric_mean(values) -> float:
    vals = list(values)
    if any(v == 0 for v in vals):
        return 0.0
    return math.exp(sum(math.log(v) for v in vals) / len(vals))
