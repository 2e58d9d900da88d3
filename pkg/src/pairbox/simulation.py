"""Misalignment injection, synthetic paired scenes, and mock detectors.

These pieces let the full pipeline run end to end without a trained network:
``apply_shift`` translates thermal annotations horizontally (clipping at the
image border), ``generate_scene`` builds seeded paired ground truth, and
``mock_detect`` stands in for a detector, either emitting an independent box
per modality (paired mode) or one box duplicated into both modalities
(single-box mode, the behavior of detectors unaware of misalignment).

Randomness contract: each operation takes one root seed; per-frame streams
are derived from it with fixed sub-stream keys, so output never depends on
iteration or thread order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evaluation import FrameAnnotations, FrameDetections, GtObject
from .geometry import Box, PairedBox
from .pairnms import Detection

__all__ = [
    "ShiftSpec",
    "SceneSpec",
    "MockDetectorSpec",
    "apply_shift",
    "generate_scene",
    "mock_detect",
]


@dataclass(frozen=True)
class ShiftSpec:
    """Horizontal thermal shift in pixels, clipped to [0, image_width]."""

    dx: float
    image_width: float = 640.0

    def __post_init__(self):
        if not math.isfinite(self.dx) or not math.isfinite(self.image_width):
            raise ValueError("shift parameters must be finite")
        if self.image_width <= 0:
            raise ValueError("image_width must be positive")
        if abs(self.dx) >= self.image_width:
            raise ValueError("|dx| must be smaller than the image width")


def _shift_box(b: Box, dx: float, width: float) -> Box:
    left = min(max(b.x + dx, 0.0), width)
    right = min(max(b.x + b.w + dx, 0.0), width)
    return Box(left, b.y, right - left, b.h)


def apply_shift(frames: Sequence[FrameAnnotations], spec: ShiftSpec) -> list[FrameAnnotations]:
    """Translate every thermal box horizontally by ``spec.dx``.

    Shifted boxes are clipped to [0, image_width], possibly down to zero
    width. Visible boxes, pairing, occlusion and ignore flags are untouched.
    A zero shift returns the input frames unchanged.
    """
    if spec.dx == 0.0:
        return list(frames)
    out = []
    for frame in frames:
        objects = tuple(
            GtObject(
                pair=PairedBox(
                    visible=obj.pair.visible,
                    thermal=_shift_box(obj.pair.thermal, spec.dx, spec.image_width),
                ),
                occlusion=obj.occlusion,
                ignore=obj.ignore,
            )
            for obj in frame.objects
        )
        out.append(FrameAnnotations(frame.frame_id, objects))
    return out


@dataclass(frozen=True)
class SceneSpec:
    """Parameters for seeded synthetic paired scenes.

    Pedestrian counts are Poisson per frame; heights are uniform over
    ``height_range`` (which must have positive extent); widths are either
    ``fixed_width`` or ``width_over_height`` times the height. Thermal boxes
    are the visible boxes offset horizontally by a uniform draw from
    ``misalign_range``. ``x_margin`` keeps objects away from the vertical
    image borders so later shifts do not clip them.
    """

    num_frames: int
    peds_per_frame: float = 2.0
    height_range: tuple[float, float] = (60.0, 120.0)
    width_over_height: float = 0.41
    fixed_width: float | None = None
    misalign_range: tuple[float, float] = (0.0, 0.0)
    image_width: float = 640.0
    image_height: float = 512.0
    x_margin: float = 24.0
    seed: int = 0

    def __post_init__(self):
        if self.num_frames < 0:
            raise ValueError("num_frames must be >= 0")
        if self.peds_per_frame < 0:
            raise ValueError("peds_per_frame must be >= 0")
        lo, hi = self.height_range
        if not (0.0 < lo < hi):
            raise ValueError("height_range must satisfy 0 < low < high")
        if hi >= self.image_height:
            raise ValueError("height_range must fit inside the image")
        if self.fixed_width is not None and self.fixed_width <= 0:
            raise ValueError("fixed_width must be positive")
        if self.width_over_height <= 0:
            raise ValueError("width_over_height must be positive")
        if self.misalign_range[0] > self.misalign_range[1]:
            raise ValueError("misalign_range must be (low, high) with low <= high")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.x_margin < 0:
            raise ValueError("x_margin must be >= 0")
        max_width = self.fixed_width if self.fixed_width is not None else self.width_over_height * hi
        if 2 * self.x_margin + max_width >= self.image_width:
            raise ValueError("x_margin leaves no room to place objects")


def _frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_scene(spec: SceneSpec) -> list[FrameAnnotations]:
    """Generate seeded paired ground truth; frame ids are 0..num_frames-1."""
    frames = []
    for f in range(spec.num_frames):
        rng = _frame_rng(spec.seed, f)
        objects = []
        for _ in range(int(rng.poisson(spec.peds_per_frame))):
            h = float(rng.uniform(*spec.height_range))
            w = float(spec.fixed_width) if spec.fixed_width is not None else spec.width_over_height * h
            x = float(rng.uniform(spec.x_margin, spec.image_width - w - spec.x_margin))
            y = float(rng.uniform(0.0, spec.image_height - h))
            dx = float(rng.uniform(*spec.misalign_range))
            visible = Box(x, y, w, h)
            objects.append(GtObject(PairedBox(visible, visible.translate(dx, 0.0))))
        frames.append(FrameAnnotations(f, tuple(objects)))
    return frames


@dataclass(frozen=True)
class MockDetectorSpec:
    """Parametric stand-in for a trained detector.

    ``paired`` mode perturbs each modality's box independently around its
    own ground truth (a detector with one regressor per modality);
    ``single_box`` mode perturbs one box around the visible ground truth and
    duplicates it into both modalities (a detector that emits a single box
    per object). Confidence follows
    clamp(1 - perturbation / box_diagonal + noise, score_floor, 1);
    false-positive boxes are Poisson per frame with uniform scores.
    """

    mode: str = "paired"
    center_noise_sigma: float = 0.0
    size_noise_sigma: float = 0.0
    miss_prob: float = 0.0
    fp_per_frame: float = 0.0
    score_floor: float = 0.05
    score_noise_sigma: float = 0.0
    image_width: float = 640.0
    image_height: float = 512.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("paired", "single_box"):
            raise ValueError("mode must be 'paired' or 'single_box'")
        if self.center_noise_sigma < 0 or self.size_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ValueError("miss_prob must lie in [0, 1]")
        if self.fp_per_frame < 0:
            raise ValueError("fp_per_frame must be >= 0")
        if not 0.0 < self.score_floor <= 1.0:
            raise ValueError("score_floor must lie in (0, 1]")
        if self.score_noise_sigma < 0:
            raise ValueError("score_noise_sigma must be >= 0")


def _perturb(box: Box, rng: np.random.Generator, spec: MockDetectorSpec) -> tuple[Box, float]:
    """Jitter a box; returns the new box and the perturbation magnitude (px)."""
    dcx = float(rng.normal(0.0, spec.center_noise_sigma)) if spec.center_noise_sigma > 0 else 0.0
    dcy = float(rng.normal(0.0, spec.center_noise_sigma)) if spec.center_noise_sigma > 0 else 0.0
    sw = math.exp(float(rng.normal(0.0, spec.size_noise_sigma))) if spec.size_noise_sigma > 0 else 1.0
    sh = math.exp(float(rng.normal(0.0, spec.size_noise_sigma))) if spec.size_noise_sigma > 0 else 1.0
    if dcx == 0.0 and dcy == 0.0 and sw == 1.0 and sh == 1.0:
        return box, 0.0
    w = box.w * sw
    h = box.h * sh
    cx, cy = box.center
    new = Box(cx + dcx - 0.5 * w, cy + dcy - 0.5 * h, w, h)
    mag = math.sqrt(dcx * dcx + dcy * dcy + (w - box.w) ** 2 + (h - box.h) ** 2)
    return new, mag


def _score(mag: float, box: Box, rng: np.random.Generator, spec: MockDetectorSpec) -> float:
    diag = math.sqrt(box.w * box.w + box.h * box.h)
    raw = 1.0 - (mag / diag if diag > 0 else 0.0)
    if spec.score_noise_sigma > 0:
        raw += float(rng.normal(0.0, spec.score_noise_sigma))
    return min(max(raw, spec.score_floor), 1.0)


def _false_positive(rng: np.random.Generator, spec: MockDetectorSpec) -> Detection:
    h = float(rng.uniform(40.0, min(160.0, spec.image_height)))
    w = 0.41 * h
    x = float(rng.uniform(0.0, max(spec.image_width - w, 1.0)))
    y = float(rng.uniform(0.0, max(spec.image_height - h, 1.0)))
    score = float(rng.uniform(spec.score_floor, 1.0))
    return Detection(PairedBox.aligned(Box(x, y, w, h)), score)


def mock_detect(
    frames: Sequence[FrameAnnotations],
    spec: MockDetectorSpec,
) -> list[FrameDetections]:
    """Emit detections for every non-ignored object, plus false positives.

    Per object, a miss is drawn with ``miss_prob``; surviving objects get a
    perturbed detection according to the mode. Streams are keyed by frame
    position, so results are reproducible for a fixed seed.
    """
    out = []
    for f, frame in enumerate(frames):
        rng = _frame_rng(spec.seed, f)
        dets = []
        for obj in frame.objects:
            if obj.ignore:
                continue
            if rng.random() < spec.miss_prob:
                continue
            if spec.mode == "paired":
                box_v, mag_v = _perturb(obj.pair.visible, rng, spec)
                box_t, mag_t = _perturb(obj.pair.thermal, rng, spec)
                mag = 0.5 * (mag_v + mag_t)
                pair = PairedBox(box_v, box_t)
                score = _score(mag, obj.pair.visible, rng, spec)
            else:
                box, mag = _perturb(obj.pair.visible, rng, spec)
                pair = PairedBox.aligned(box)
                score = _score(mag, obj.pair.visible, rng, spec)
            dets.append(Detection(pair, score))
        if spec.fp_per_frame > 0:
            for _ in range(int(rng.poisson(spec.fp_per_frame))):
                dets.append(_false_positive(rng, spec))
        out.append(FrameDetections(frame.frame_id, tuple(dets)))
    return out
