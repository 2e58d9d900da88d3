"""Pure-numpy kernels: pairwise IoU matrices and greedy NMS.

This is the fallback backend used when the compiled extension is not
available. The arithmetic here is mirrored expression for expression in
``_native.pyx`` so both backends return bit-identical results.

Boxes are (N, 4) float64 arrays of (x, y, w, h) with the half-open pixel
convention: boxes touching only along an edge do not intersect.
"""

from __future__ import annotations

import numpy as np


def _as_boxes(arr) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != 4:
        raise ValueError(f"expected an (N, 4) box array, got shape {out.shape}")
    return out


def _intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise intersection areas, shape (len(a), len(b))."""
    ax1 = a[:, 0:1]
    ay1 = a[:, 1:2]
    ax2 = ax1 + a[:, 2:3]
    ay2 = ay1 + a[:, 3:4]
    bx1 = b[None, :, 0]
    by1 = b[None, :, 1]
    bx2 = bx1 + b[None, :, 2]
    by2 = by1 + b[None, :, 3]
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    return np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)


def iou_matrix(a, b) -> np.ndarray:
    a = _as_boxes(a)
    b = _as_boxes(b)
    inter = _intersection(a, b)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    out = np.zeros_like(inter)
    mask = union > 0.0
    out[mask] = inter[mask] / union[mask]
    return out


def ioum_matrix(av, at, bv, bt) -> np.ndarray:
    av = _as_boxes(av)
    at = _as_boxes(at)
    bv = _as_boxes(bv)
    bt = _as_boxes(bt)
    if av.shape != at.shape or bv.shape != bt.shape:
        raise ValueError("visible and thermal box arrays must have matching shapes")
    inter_v = _intersection(av, bv)
    inter_t = _intersection(at, bt)
    union_v = (av[:, 2] * av[:, 3])[:, None] + (bv[:, 2] * bv[:, 3])[None, :] - inter_v
    union_t = (at[:, 2] * at[:, 3])[:, None] + (bt[:, 2] * bt[:, 3])[None, :] - inter_t
    num = inter_v + inter_t
    den = union_v + union_t
    out = np.zeros_like(num)
    mask = den > 0.0
    out[mask] = num[mask] / den[mask]
    return out


def _intersection_elementwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2, bx2) - np.maximum(a[:, 0], b[:, 0])
    ih = np.minimum(ay2, by2) - np.maximum(a[:, 1], b[:, 1])
    return np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)


def iou_elementwise(a, b) -> np.ndarray:
    a = _as_boxes(a)
    b = _as_boxes(b)
    if a.shape != b.shape:
        raise ValueError("elementwise IoU requires equal-length box arrays")
    inter = _intersection_elementwise(a, b)
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - inter
    out = np.zeros_like(inter)
    mask = union > 0.0
    out[mask] = inter[mask] / union[mask]
    return out


def ioum_elementwise(av, at, bv, bt) -> np.ndarray:
    av = _as_boxes(av)
    at = _as_boxes(at)
    bv = _as_boxes(bv)
    bt = _as_boxes(bt)
    if not (av.shape == at.shape == bv.shape == bt.shape):
        raise ValueError("elementwise multi-modal IoU requires equal-length box arrays")
    inter_v = _intersection_elementwise(av, bv)
    inter_t = _intersection_elementwise(at, bt)
    union_v = av[:, 2] * av[:, 3] + bv[:, 2] * bv[:, 3] - inter_v
    union_t = at[:, 2] * at[:, 3] + bt[:, 2] * bt[:, 3] - inter_t
    num = inter_v + inter_t
    den = union_v + union_t
    out = np.zeros_like(num)
    mask = den > 0.0
    out[mask] = num[mask] / den[mask]
    return out


def nms_keep(boxes, order, thresh: float) -> np.ndarray:
    """Greedy NMS walking ``order``; returns kept indices in that order.

    A box is suppressed when its IoU with an already-kept box is strictly
    greater than ``thresh``. The caller fixes the tie rule by choosing
    ``order``.
    """
    boxes = _as_boxes(boxes)
    order = np.ascontiguousarray(order, dtype=np.int64)
    x1 = boxes[:, 0]
    y1 = boxes[:, 1]
    x2 = x1 + boxes[:, 2]
    y2 = y1 + boxes[:, 3]
    areas = boxes[:, 2] * boxes[:, 3]
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    keep = []
    for k in range(order.shape[0]):
        i = order[k]
        if suppressed[i]:
            continue
        keep.append(i)
        rest = order[k + 1:]
        rest = rest[~suppressed[rest]]
        if rest.size == 0:
            continue
        iw = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        ih = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)
        union = areas[i] + areas[rest] - inter
        ov = np.zeros_like(inter)
        mask = union > 0.0
        ov[mask] = inter[mask] / union[mask]
        suppressed[rest[ov > thresh]] = True
    return np.asarray(keep, dtype=np.int64)
