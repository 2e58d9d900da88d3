"""JSON-Lines dataset and detection files.

One frame per line. Annotation files optionally start with a metadata line:

    {"meta":{"name":"...","width":640.0,"height":512.0}}
    {"frame":0,"objects":[{"v":[x,y,w,h],"t":[x,y,w,h],"occ":"none","ignore":false}]}

Detection files hold scored pairs, with a single-box form accepted for
detectors that emit one box per object (it is duplicated into both
modalities on read):

    {"frame":0,"dets":[{"v":[...],"t":[...],"score":0.9}]}
    {"frame":1,"dets":[{"box":[...],"score":0.8}]}

Writers emit a canonical form (metadata line first, full records, compact
separators, floats in shortest round-trip notation, LF endings), so
write(read(f)) is byte-identical for files produced by these writers.
Parsers reject records that violate domain invariants and report the file,
line number, and offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence, Union

from .evaluation import (
    OCCLUSION_LEVELS,
    FrameAnnotations,
    FrameDetections,
    GtObject,
    substitute_single_modality,
)
from .geometry import Box, PairedBox
from .pairnms import Detection

__all__ = [
    "ParseError",
    "DatasetMeta",
    "Dataset",
    "read_dataset",
    "write_dataset",
    "read_detections",
    "write_detections",
]

FrameId = Union[str, int]


class ParseError(ValueError):
    """A malformed record, reported with file path and line number."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class DatasetMeta:
    name: str = ""
    image_width: float = 640.0
    image_height: float = 512.0

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")


@dataclass(frozen=True)
class Dataset:
    frames: tuple[FrameAnnotations, ...]
    meta: DatasetMeta = DatasetMeta()

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        ids = [f.frame_id for f in self.frames]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate frame ids in dataset")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _parse_frame_id(record: dict, path, line_no: int) -> FrameId:
    if "frame" not in record:
        raise ParseError(path, line_no, "missing 'frame' field")
    fid = record["frame"]
    if isinstance(fid, bool) or not isinstance(fid, (str, int)):
        raise ParseError(path, line_no, f"frame id must be a string or integer, got {fid!r}")
    return fid


def _parse_box(value, path, line_no: int, field: str) -> Box:
    if (
        not isinstance(value, list)
        or len(value) != 4
        or not all(_is_number(v) for v in value)
    ):
        raise ParseError(path, line_no, f"{field}: expected [x, y, w, h] with finite numbers")
    try:
        return Box(*(float(v) for v in value))
    except ValueError as exc:
        raise ParseError(path, line_no, f"{field}: {exc}") from None


def _check_keys(record: dict, allowed: set, path, line_no: int, context: str):
    unknown = sorted(set(record) - allowed)
    if unknown:
        raise ParseError(path, line_no, f"{context}: unknown field(s) {', '.join(unknown)}")


def _load_json_line(line: str, path, line_no: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(path, line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict):
        raise ParseError(path, line_no, "expected a JSON object")
    return record


def _parse_meta(record: dict, path, line_no: int) -> DatasetMeta:
    meta = record["meta"]
    if not isinstance(meta, dict):
        raise ParseError(path, line_no, "meta: expected a JSON object")
    _check_keys(meta, {"name", "width", "height"}, path, line_no, "meta")
    name = meta.get("name", "")
    if not isinstance(name, str):
        raise ParseError(path, line_no, "meta.name: expected a string")
    width = meta.get("width", 640.0)
    height = meta.get("height", 512.0)
    if not _is_number(width) or not _is_number(height) or width <= 0 or height <= 0:
        raise ParseError(path, line_no, "meta.width/height: expected positive numbers")
    return DatasetMeta(name=name, image_width=float(width), image_height=float(height))


def read_dataset(path) -> Dataset:
    """Parse an annotation file; raises :class:`ParseError` on bad records."""
    meta = DatasetMeta()
    frames: list[FrameAnnotations] = []
    seen: set[FrameId] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _load_json_line(line, path, line_no)
            if "meta" in record:
                if line_no != 1 or frames:
                    raise ParseError(path, line_no, "metadata line only allowed first")
                _check_keys(record, {"meta"}, path, line_no, "metadata line")
                meta = _parse_meta(record, path, line_no)
                continue
            _check_keys(record, {"frame", "objects"}, path, line_no, "frame record")
            fid = _parse_frame_id(record, path, line_no)
            if fid in seen:
                raise ParseError(path, line_no, f"duplicate frame id {fid!r}")
            seen.add(fid)
            raw_objects = record.get("objects")
            if not isinstance(raw_objects, list):
                raise ParseError(path, line_no, "missing or invalid 'objects' list")
            objects = []
            for k, raw in enumerate(raw_objects):
                if not isinstance(raw, dict):
                    raise ParseError(path, line_no, f"objects[{k}]: expected a JSON object")
                _check_keys(raw, {"v", "t", "occ", "ignore"}, path, line_no, f"objects[{k}]")
                if "v" not in raw or "t" not in raw:
                    raise ParseError(path, line_no, f"objects[{k}]: needs both 'v' and 't' boxes")
                box_v = _parse_box(raw["v"], path, line_no, f"objects[{k}].v")
                box_t = _parse_box(raw["t"], path, line_no, f"objects[{k}].t")
                occ = raw.get("occ", "none")
                if occ not in OCCLUSION_LEVELS:
                    raise ParseError(
                        path, line_no,
                        f"objects[{k}].occ: expected one of {OCCLUSION_LEVELS}, got {occ!r}",
                    )
                ignore = raw.get("ignore", False)
                if not isinstance(ignore, bool):
                    raise ParseError(path, line_no, f"objects[{k}].ignore: expected a boolean")
                objects.append(GtObject(PairedBox(box_v, box_t), occlusion=occ, ignore=ignore))
            frames.append(FrameAnnotations(fid, tuple(objects)))
    return Dataset(frames=tuple(frames), meta=meta)


def _box_json(b: Box) -> list[float]:
    return [float(b.x), float(b.y), float(b.w), float(b.h)]


def _dump(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=True)


def write_dataset(dataset: Dataset, path) -> None:
    """Write the canonical annotation form (metadata line, then frames)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        meta = {
            "meta": {
                "name": dataset.meta.name,
                "width": float(dataset.meta.image_width),
                "height": float(dataset.meta.image_height),
            }
        }
        fh.write(_dump(meta) + "\n")
        for frame in dataset.frames:
            record = {
                "frame": frame.frame_id,
                "objects": [
                    {
                        "v": _box_json(obj.pair.visible),
                        "t": _box_json(obj.pair.thermal),
                        "occ": obj.occlusion,
                        "ignore": obj.ignore,
                    }
                    for obj in frame.objects
                ],
            }
            fh.write(_dump(record) + "\n")


def read_detections(path) -> list[FrameDetections]:
    """Parse a detection file; single-box records are duplicated into pairs."""
    out: list[FrameDetections] = []
    seen: set[FrameId] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _load_json_line(line, path, line_no)
            _check_keys(record, {"frame", "dets"}, path, line_no, "detection record")
            fid = _parse_frame_id(record, path, line_no)
            if fid in seen:
                raise ParseError(path, line_no, f"duplicate frame id {fid!r}")
            seen.add(fid)
            raw_dets = record.get("dets")
            if not isinstance(raw_dets, list):
                raise ParseError(path, line_no, "missing or invalid 'dets' list")
            dets = []
            for k, raw in enumerate(raw_dets):
                if not isinstance(raw, dict):
                    raise ParseError(path, line_no, f"dets[{k}]: expected a JSON object")
                _check_keys(raw, {"v", "t", "box", "score"}, path, line_no, f"dets[{k}]")
                if "score" not in raw or not _is_number(raw["score"]):
                    raise ParseError(path, line_no, f"dets[{k}].score: expected a finite number")
                score = float(raw["score"])
                if not 0.0 <= score <= 1.0:
                    raise ParseError(
                        path, line_no, f"dets[{k}].score: must lie in [0, 1], got {score}"
                    )
                if "box" in raw:
                    if "v" in raw or "t" in raw:
                        raise ParseError(
                            path, line_no,
                            f"dets[{k}]: 'box' cannot be combined with 'v'/'t'",
                        )
                    box = _parse_box(raw["box"], path, line_no, f"dets[{k}].box")
                    dets.append(
                        substitute_single_modality(fid, [(box, score)]).detections[0]
                    )
                else:
                    if "v" not in raw or "t" not in raw:
                        raise ParseError(
                            path, line_no,
                            f"dets[{k}]: needs 'v' and 't' boxes (or a single 'box')",
                        )
                    box_v = _parse_box(raw["v"], path, line_no, f"dets[{k}].v")
                    box_t = _parse_box(raw["t"], path, line_no, f"dets[{k}].t")
                    dets.append(Detection(PairedBox(box_v, box_t), score))
            out.append(FrameDetections(fid, tuple(dets)))
    return out


def write_detections(detections: Sequence[FrameDetections], path) -> None:
    """Write the canonical paired detection form."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for fd in detections:
            record = {
                "frame": fd.frame_id,
                "dets": [
                    {
                        "v": _box_json(d.pair.visible),
                        "t": _box_json(d.pair.thermal),
                        "score": float(d.score),
                    }
                    for d in fd.detections
                ],
            }
            fh.write(_dump(record) + "\n")
