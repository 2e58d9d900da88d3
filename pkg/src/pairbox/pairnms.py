"""Non-maximum suppression over scored paired boxes.

Suppression is decided on the thermal boxes only (the reference modality);
when a thermal box is suppressed its visible partner goes with it, so paired
relations survive. The kept thermal set is exactly what a standard greedy
NMS on the thermal boxes alone would keep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .geometry import PairedBox, boxes_to_array

__all__ = ["Detection", "paired_nms"]


@dataclass(frozen=True)
class Detection:
    """A scored paired detection."""

    pair: PairedBox
    score: float
    class_id: int = 0

    def __post_init__(self):
        if not math.isfinite(self.score) or not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be a finite value in [0, 1], got {self.score!r}")


def paired_nms(
    dets: Sequence[Detection],
    iou_thresh: float,
    max_keep: Optional[int] = None,
) -> list[Detection]:
    """Greedy score-descending NMS on thermal boxes, carrying pairs along.

    Within each class, detections are visited by descending score (ties
    broken by input index, earlier wins); a detection is suppressed when its
    thermal IoU with an already-kept detection strictly exceeds
    ``iou_thresh``. Kept detections are returned unmodified, sorted by
    descending score (same tie rule), truncated to ``max_keep`` if given.
    """
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must lie in [0, 1], got {iou_thresh!r}")
    if max_keep is not None and max_keep < 0:
        raise ValueError("max_keep must be >= 0")
    by_class: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_class.setdefault(d.class_id, []).append(i)
    kept: list[int] = []
    for class_id in sorted(by_class):
        idx = np.asarray(by_class[class_id], dtype=np.int64)
        thermal = boxes_to_array(dets[i].pair.thermal for i in idx)
        scores = np.asarray([dets[i].score for i in idx], dtype=np.float64)
        # descending score, ties by position (== ascending input index)
        order = np.lexsort((np.arange(idx.size), -scores))
        keep_local = _kernels.nms_keep(thermal, order, float(iou_thresh))
        kept.extend(int(idx[k]) for k in keep_local)
    kept.sort(key=lambda i: (-dets[i].score, i))
    if max_keep is not None:
        kept = kept[:max_keep]
    return [dets[i] for i in kept]
