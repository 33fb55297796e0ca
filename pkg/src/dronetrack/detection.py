"""Per-frame detection record shared by the pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import BoundingBox

__all__ = ["Detection", "group_by_frame"]


@dataclass(frozen=True)
class Detection:
    """One detector output: box, class label, confidence, optional embedding.

    ``embedding_ref`` indexes a row of a companion embedding table; None when
    the detection carries no appearance information.
    """

    frame_id: int
    box: BoundingBox
    class_id: int
    confidence: float
    embedding_ref: int | None = None


def group_by_frame(detections) -> dict[int, list[Detection]]:
    """Group detections by frame id, preserving input order within a frame."""
    grouped: dict[int, list[Detection]] = {}
    for det in detections:
        grouped.setdefault(det.frame_id, []).append(det)
    return grouped
