"""pairbox: paired visible/thermal bounding-box toolkit.

Geometry (multi-modal IoU), paired NMS with a thermal reference, anchor/RoI
assignment over paired boxes, modal-wise regression losses with analytic
gradients, the FPPI/log-average-miss-rate evaluation protocol, and
misalignment simulation with mock detectors.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .geometry import Box, PairedBox, area, intersection_area, iou, iou_multimodal

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Box",
    "PairedBox",
    "area",
    "intersection_area",
    "iou",
    "iou_multimodal",
    "__version__",
]
