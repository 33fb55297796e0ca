"""On-disk formats: detections, annotations, tracker output, embeddings, config.

Text formats are comma-separated, one record per line, MOT-challenge style.
Parsers are strict: malformed input raises :class:`FormatError` with the
offending line number instead of being coerced. Serialization is canonical,
so ``serialize(parse(text)) == text`` for files produced by this module.

Embeddings live in a binary sidecar: a 16-byte header (4 magic bytes,
version, dimension D, row count N, all little-endian u32 after the magic)
followed by N*D float32 values. Row i belongs to detection record i of the
companion detection file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .detection import Detection
from .geometry import BoundingBox
from .tracker import TrackerParams, TrackletRow
from .association import AssociationParams
from .motion import MotionParams

__all__ = [
    "FormatError",
    "AnnotationRecord",
    "EmbeddingTable",
    "EMBEDDING_MAGIC",
    "parse_detections",
    "serialize_detections",
    "write_detections",
    "parse_annotations",
    "serialize_annotations",
    "write_annotations",
    "parse_tracks",
    "serialize_tracks",
    "write_tracks",
    "read_embeddings",
    "write_embeddings",
    "parse_tracker_config",
    "parse_tracker_config_values",
    "build_tracker_params",
    "serialize_tracker_config",
]

EMBEDDING_MAGIC = b"DTEB"
EMBEDDING_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Raised for any malformed on-disk input."""


@dataclass(frozen=True)
class AnnotationRecord:
    """One VisDrone-style ground-truth row.

    ``category`` 0 marks ignored regions and 11 "others"; downstream
    evaluation decides how those are treated.
    """

    frame: int
    target_id: int
    box: BoundingBox
    score: float
    category: int
    truncation: int
    occlusion: int


@dataclass(eq=False)
class EmbeddingTable:
    """N rows of D-dimensional float32 appearance embeddings."""

    dim: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise FormatError("embedding dimension must be >= 1")
        self.data = np.ascontiguousarray(self.data, dtype="<f4").reshape(-1, self.dim)

    @property
    def count(self) -> int:
        return int(self.data.shape[0])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EmbeddingTable)
            and self.dim == other.dim
            and np.array_equal(self.data, other.data)
        )


def _fmt(value: float) -> str:
    """Canonical number rendering: integral values drop the fraction."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _iter_rows(text: str, n_fields: int, where: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != n_fields:
            raise FormatError(
                f"{where}:{lineno}: expected {n_fields} comma-separated fields, got {len(fields)}"
            )
        yield lineno, fields


def _to_float(value: str, where: str, lineno: int, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise FormatError(f"{where}:{lineno}: {name} is not a number: {value!r}") from None


def _to_int(value: str, where: str, lineno: int, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise FormatError(f"{where}:{lineno}: {name} is not an integer: {value!r}") from None


def _read_text(path) -> tuple[str, str]:
    path = Path(path)
    return path.read_text(encoding="utf-8"), str(path)


def _check_box(w: float, h: float, where: str, lineno: int) -> None:
    if w <= 0 or h <= 0:
        raise FormatError(f"{where}:{lineno}: box width/height must be positive, got {w}x{h}")


def _check_frame(frame: int, where: str, lineno: int) -> None:
    if frame < 0:
        raise FormatError(f"{where}:{lineno}: frame must be nonnegative, got {frame}")


def _check_confidence(score: float, where: str, lineno: int) -> None:
    if not 0.0 <= score <= 1.0:
        raise FormatError(f"{where}:{lineno}: confidence must be in [0, 1], got {score}")


# --- detections: frame,x,y,w,h,score,class ---------------------------------


def parse_detections_text(text: str, where: str = "<string>") -> list[Detection]:
    records: list[Detection] = []
    for lineno, f in _iter_rows(text, 7, where):
        frame = _to_int(f[0], where, lineno, "frame")
        _check_frame(frame, where, lineno)
        x = _to_float(f[1], where, lineno, "x")
        y = _to_float(f[2], where, lineno, "y")
        w = _to_float(f[3], where, lineno, "w")
        h = _to_float(f[4], where, lineno, "h")
        _check_box(w, h, where, lineno)
        score = _to_float(f[5], where, lineno, "score")
        _check_confidence(score, where, lineno)
        class_id = _to_int(f[6], where, lineno, "class")
        records.append(
            Detection(
                frame_id=frame,
                box=BoundingBox(x, y, w, h),
                class_id=class_id,
                confidence=score,
                embedding_ref=len(records),
            )
        )
    return records


def parse_detections(path) -> list[Detection]:
    """Detections in file order; ``embedding_ref`` is the 0-based row index."""
    text, where = _read_text(path)
    return parse_detections_text(text, where)


def serialize_detections(records: Iterable[Detection]) -> str:
    lines = []
    for d in records:
        b = d.box
        lines.append(
            f"{d.frame_id},{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},{_fmt(b.height)},"
            f"{_fmt(d.confidence)},{d.class_id}"
        )
    return "".join(line + "\n" for line in lines)


def write_detections(records: Iterable[Detection], path) -> None:
    Path(path).write_text(serialize_detections(records), encoding="utf-8")


# --- annotations: frame,id,left,top,w,h,score,category,trunc,occl ----------


def parse_annotations_text(text: str, where: str = "<string>") -> list[AnnotationRecord]:
    records = []
    for lineno, f in _iter_rows(text, 10, where):
        frame = _to_int(f[0], where, lineno, "frame")
        _check_frame(frame, where, lineno)
        target = _to_int(f[1], where, lineno, "target_id")
        x = _to_float(f[2], where, lineno, "bbox_left")
        y = _to_float(f[3], where, lineno, "bbox_top")
        w = _to_float(f[4], where, lineno, "bbox_width")
        h = _to_float(f[5], where, lineno, "bbox_height")
        _check_box(w, h, where, lineno)
        score = _to_float(f[6], where, lineno, "score")
        category = _to_int(f[7], where, lineno, "object_category")
        truncation = _to_int(f[8], where, lineno, "truncation")
        occlusion = _to_int(f[9], where, lineno, "occlusion")
        records.append(
            AnnotationRecord(
                frame=frame,
                target_id=target,
                box=BoundingBox(x, y, w, h),
                score=score,
                category=category,
                truncation=truncation,
                occlusion=occlusion,
            )
        )
    return records


def parse_annotations(path) -> list[AnnotationRecord]:
    text, where = _read_text(path)
    return parse_annotations_text(text, where)


def serialize_annotations(records: Iterable[AnnotationRecord]) -> str:
    lines = []
    for r in records:
        b = r.box
        lines.append(
            f"{r.frame},{r.target_id},{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},"
            f"{_fmt(b.height)},{_fmt(r.score)},{r.category},{r.truncation},{r.occlusion}"
        )
    return "".join(line + "\n" for line in lines)


def write_annotations(records: Iterable[AnnotationRecord], path) -> None:
    Path(path).write_text(serialize_annotations(records), encoding="utf-8")


# --- tracker output: frame,track_id,x,y,w,h,confidence,class,-1,-1 ---------


def parse_tracks_text(text: str, where: str = "<string>") -> list[TrackletRow]:
    rows = []
    for lineno, f in _iter_rows(text, 10, where):
        frame = _to_int(f[0], where, lineno, "frame")
        _check_frame(frame, where, lineno)
        track_id = _to_int(f[1], where, lineno, "track_id")
        x = _to_float(f[2], where, lineno, "x")
        y = _to_float(f[3], where, lineno, "y")
        w = _to_float(f[4], where, lineno, "w")
        h = _to_float(f[5], where, lineno, "h")
        _check_box(w, h, where, lineno)
        conf = _to_float(f[6], where, lineno, "confidence")
        _check_confidence(conf, where, lineno)
        class_id = _to_int(f[7], where, lineno, "class")
        # Trailing MOT placeholder fields; values are not interpreted.
        _to_float(f[8], where, lineno, "field9")
        _to_float(f[9], where, lineno, "field10")
        rows.append(
            TrackletRow(
                frame_id=frame,
                track_id=track_id,
                box=BoundingBox(x, y, w, h),
                class_id=class_id,
                confidence=conf,
            )
        )
    return rows


def parse_tracks(path) -> list[TrackletRow]:
    text, where = _read_text(path)
    return parse_tracks_text(text, where)


def serialize_tracks(rows: Iterable[TrackletRow]) -> str:
    lines = []
    for r in rows:
        b = r.box
        lines.append(
            f"{r.frame_id},{r.track_id},{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},"
            f"{_fmt(b.height)},{_fmt(r.confidence)},{r.class_id},-1,-1"
        )
    return "".join(line + "\n" for line in lines)


def write_tracks(rows: Iterable[TrackletRow], path) -> None:
    Path(path).write_text(serialize_tracks(rows), encoding="utf-8")


# --- embeddings binary sidecar ----------------------------------------------


def read_embeddings(path) -> EmbeddingTable:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: too short for a {_HEADER.size}-byte header")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise FormatError(f"{path}: embedding dimension is zero")
    expected = _HEADER.size + count * dim * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - _HEADER.size} bytes, header claims "
            f"{count}x{dim} float32 ({expected - _HEADER.size} bytes)"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    return EmbeddingTable(dim=int(dim), data=data.copy())


def write_embeddings(table: EmbeddingTable, path) -> None:
    header = _HEADER.pack(
        EMBEDDING_MAGIC, EMBEDDING_VERSION, table.dim, table.count
    )
    Path(path).write_bytes(header + table.data.tobytes())


# --- tracker configuration: "key = value" lines -----------------------------

_INT_KEYS = {"n_init", "max_age", "gallery_budget"}
_FLOAT_KEYS = {
    "confidence_floor",
    "lambda_app",
    "gate_threshold",
    "max_app_distance",
    "max_iou_distance",
    "std_weight_position",
    "std_weight_velocity",
}


def parse_tracker_config_values(text: str, where: str = "<string>") -> dict:
    """Flat key/value mapping from configuration text; strict about keys."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{where}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in values:
            raise FormatError(f"{where}:{lineno}: duplicate key {key!r}")
        if key in _INT_KEYS:
            values[key] = _to_int(value, where, lineno, key)
        elif key in _FLOAT_KEYS:
            values[key] = _to_float(value, where, lineno, key)
        else:
            known = ", ".join(sorted(_INT_KEYS | _FLOAT_KEYS))
            raise FormatError(f"{where}:{lineno}: unknown key {key!r} (known: {known})")
    return values


def parse_tracker_config_text(text: str, where: str = "<string>") -> TrackerParams:
    return build_tracker_params(parse_tracker_config_values(text, where))


def parse_tracker_config(path) -> TrackerParams:
    text, where = _read_text(path)
    return parse_tracker_config_text(text, where)


def build_tracker_params(values: dict) -> TrackerParams:
    """Assemble TrackerParams from a flat key-value mapping."""
    assoc_kwargs = {}
    motion_kwargs = {}
    tracker_kwargs = {}
    for key, val in values.items():
        if key in ("lambda_app", "gate_threshold", "max_app_distance", "max_iou_distance", "gallery_budget"):
            assoc_kwargs[key] = val
        elif key in ("std_weight_position", "std_weight_velocity"):
            motion_kwargs[key] = val
        elif key in ("n_init", "max_age", "confidence_floor"):
            tracker_kwargs[key] = val
        else:
            raise FormatError(f"unknown tracker parameter {key!r}")
    return TrackerParams(
        association=AssociationParams(**assoc_kwargs),
        motion=MotionParams(**motion_kwargs),
        **tracker_kwargs,
    )


def serialize_tracker_config(params: TrackerParams) -> str:
    a, m = params.association, params.motion
    pairs = [
        ("n_init", params.n_init),
        ("max_age", params.max_age),
        ("confidence_floor", params.confidence_floor),
        ("lambda_app", a.lambda_app),
        ("gate_threshold", a.gate_threshold),
        ("max_app_distance", a.max_app_distance),
        ("max_iou_distance", a.max_iou_distance),
        ("gallery_budget", a.gallery_budget),
        ("std_weight_position", m.std_weight_position),
        ("std_weight_velocity", m.std_weight_velocity),
    ]
    return "".join(f"{key} = {_fmt(float(val))}\n" for key, val in pairs)
