# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels: pairwise IoU matrices and greedy NMS.

Every function mirrors its counterpart in ``_python`` expression for
expression, so the two backends return bit-identical float64 results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _inter(double ax, double ay, double aw, double ah,
                          double bx, double by, double bw, double bh) noexcept nogil:
    cdef double ax2 = ax + aw
    cdef double bx2 = bx + bw
    cdef double iw = (ax2 if ax2 < bx2 else bx2) - (ax if ax > bx else bx)
    if iw <= 0.0:
        return 0.0
    cdef double ay2 = ay + ah
    cdef double by2 = by + bh
    cdef double ih = (ay2 if ay2 < by2 else by2) - (ay if ay > by else by)
    if ih <= 0.0:
        return 0.0
    return iw * ih


cdef object _boxes(object arr):
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != 4:
        raise ValueError(f"expected an (N, 4) box array, got shape {out.shape}")
    return out


def iou_matrix(object a_in, object b_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = _boxes(a_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = _boxes(b_in)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m), dtype=np.float64)
    cdef double inter, union_
    with nogil:
        for i in range(n):
            for j in range(m):
                inter = _inter(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                               b[j, 0], b[j, 1], b[j, 2], b[j, 3])
                union_ = a[i, 2] * a[i, 3] + b[j, 2] * b[j, 3] - inter
                if union_ > 0.0:
                    out[i, j] = inter / union_
    return out


def ioum_matrix(object av_in, object at_in, object bv_in, object bt_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] av = _boxes(av_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] at = _boxes(at_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bv = _boxes(bv_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bt = _boxes(bt_in)
    if av.shape[0] != at.shape[0] or bv.shape[0] != bt.shape[0]:
        raise ValueError("visible and thermal box arrays must have matching shapes")
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m), dtype=np.float64)
    cdef double inter_v, inter_t, union_v, union_t, num, den
    with nogil:
        for i in range(n):
            for j in range(m):
                inter_v = _inter(av[i, 0], av[i, 1], av[i, 2], av[i, 3],
                                 bv[j, 0], bv[j, 1], bv[j, 2], bv[j, 3])
                inter_t = _inter(at[i, 0], at[i, 1], at[i, 2], at[i, 3],
                                 bt[j, 0], bt[j, 1], bt[j, 2], bt[j, 3])
                union_v = av[i, 2] * av[i, 3] + bv[j, 2] * bv[j, 3] - inter_v
                union_t = at[i, 2] * at[i, 3] + bt[j, 2] * bt[j, 3] - inter_t
                num = inter_v + inter_t
                den = union_v + union_t
                if den > 0.0:
                    out[i, j] = num / den
    return out


def iou_elementwise(object a_in, object b_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = _boxes(a_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = _boxes(b_in)
    if a.shape[0] != b.shape[0]:
        raise ValueError("elementwise IoU requires equal-length box arrays")
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double inter, union_
    with nogil:
        for i in range(n):
            inter = _inter(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                           b[i, 0], b[i, 1], b[i, 2], b[i, 3])
            union_ = a[i, 2] * a[i, 3] + b[i, 2] * b[i, 3] - inter
            if union_ > 0.0:
                out[i] = inter / union_
    return out


def ioum_elementwise(object av_in, object at_in, object bv_in, object bt_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] av = _boxes(av_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] at = _boxes(at_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bv = _boxes(bv_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bt = _boxes(bt_in)
    if not (av.shape[0] == at.shape[0] == bv.shape[0] == bt.shape[0]):
        raise ValueError("elementwise multi-modal IoU requires equal-length box arrays")
    cdef Py_ssize_t n = av.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double inter_v, inter_t, union_v, union_t, num, den
    with nogil:
        for i in range(n):
            inter_v = _inter(av[i, 0], av[i, 1], av[i, 2], av[i, 3],
                             bv[i, 0], bv[i, 1], bv[i, 2], bv[i, 3])
            inter_t = _inter(at[i, 0], at[i, 1], at[i, 2], at[i, 3],
                             bt[i, 0], bt[i, 1], bt[i, 2], bt[i, 3])
            union_v = av[i, 2] * av[i, 3] + bv[i, 2] * bv[i, 3] - inter_v
            union_t = at[i, 2] * at[i, 3] + bt[i, 2] * bt[i, 3] - inter_t
            num = inter_v + inter_t
            den = union_v + union_t
            if den > 0.0:
                out[i] = num / den
    return out


def nms_keep(object boxes_in, object order_in, double thresh):
    """Greedy NMS walking ``order``; returns kept indices in that order.

    A box is suppressed when its IoU with an already-kept box is strictly
    greater than ``thresh``.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] boxes = _boxes(boxes_in)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.ascontiguousarray(order_in, dtype=np.int64)
    cdef Py_ssize_t n = boxes.shape[0], total = order.shape[0], k, r, kept
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] suppressed = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] keep = np.empty(total, dtype=np.int64)
    cdef cnp.int64_t i, j
    cdef double inter, union_, ov
    kept = 0
    with nogil:
        for k in range(total):
            i = order[k]
            if suppressed[i]:
                continue
            keep[kept] = i
            kept += 1
            for r in range(k + 1, total):
                j = order[r]
                if suppressed[j]:
                    continue
                inter = _inter(boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3],
                               boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3])
                union_ = boxes[i, 2] * boxes[i, 3] + boxes[j, 2] * boxes[j, 3] - inter
                ov = inter / union_ if union_ > 0.0 else 0.0
                if ov > thresh:
                    suppressed[j] = 1
    return keep[:kept].copy()
