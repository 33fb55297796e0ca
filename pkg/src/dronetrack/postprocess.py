"""Box decoding and the inference-time filtering pipeline.

Raw per-anchor regressions are decoded into boxes, then detections pass
through score thresholding, per-level top-k, class-wise greedy NMS, and a
global detection cap.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .detection import Detection
from .geometry import BoundingBox, iou_matrix

__all__ = [
    "decode_deltas",
    "decode_delta_array",
    "nms",
    "nms_pipeline",
    "SCORE_THRESH",
    "TOPK_PER_LEVEL",
    "NMS_IOU",
    "MAX_DETECTIONS",
]

# Inference-time defaults.
SCORE_THRESH = 0.05
TOPK_PER_LEVEL = 1000
NMS_IOU = 0.5
MAX_DETECTIONS = 500


def decode_deltas(anchor: BoundingBox, deltas: tuple[float, float, float, float]) -> BoundingBox:
    """Apply (dx, dy, dw, dh) regression deltas to an anchor box.

    Centers shift by (dx * w, dy * h); sizes scale by exp(dw), exp(dh).
    Zero deltas reproduce the anchor bit-exactly.
    """
    dx, dy, dw, dh = (float(v) for v in deltas)
    if not all(math.isfinite(v) for v in (dx, dy, dw, dh)):
        raise ValueError(f"non-finite deltas: {deltas}")
    new_w = anchor.width * math.exp(dw)
    new_h = anchor.height * math.exp(dh)
    # Offset form: left' = left + w*(dx + (1 - exp(dw))/2), identity at 0.
    new_left = anchor.left + anchor.width * (dx + (1.0 - math.exp(dw)) / 2.0)
    new_top = anchor.top + anchor.height * (dy + (1.0 - math.exp(dh)) / 2.0)
    return BoundingBox(new_left, new_top, new_w, new_h)


def decode_delta_array(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorized :func:`decode_deltas` over (N, 4) tlwh anchors and deltas."""
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 4)
    if anchors.shape != deltas.shape:
        raise ValueError("anchors and deltas must have matching shapes")
    if not np.isfinite(deltas).all():
        raise ValueError("non-finite deltas")
    w, h = anchors[:, 2], anchors[:, 3]
    exp_w = np.exp(deltas[:, 2])
    exp_h = np.exp(deltas[:, 3])
    out = np.empty_like(anchors)
    out[:, 0] = anchors[:, 0] + w * (deltas[:, 0] + (1.0 - exp_w) / 2.0)
    out[:, 1] = anchors[:, 1] + h * (deltas[:, 1] + (1.0 - exp_h) / 2.0)
    out[:, 2] = w * exp_w
    out[:, 3] = h * exp_h
    return out


def _nms_keep(boxes: np.ndarray, scores: Sequence[float], iou_thresh: float) -> list[int]:
    """Indices surviving greedy NMS; suppression at IoU strictly above thresh."""
    order = np.array(sorted(range(len(scores)), key=lambda i: (-scores[i], i)))
    keep: list[int] = []
    while order.size > 0:
        i = int(order[0])
        keep.append(i)
        if order.size == 1:
            break
        rest = order[1:]
        overlaps = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
        order = rest[overlaps <= iou_thresh]
    return sorted(keep)


def nms(detections: Sequence[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy non-maximum suppression over one class.

    Highest score first; a detection is suppressed when its IoU with an
    already-kept detection is strictly greater than ``iou_thresh``. Score
    ties are broken by input order.
    """
    if not detections:
        return []
    boxes = np.array([d.box.to_tlwh() for d in detections], dtype=float)
    scores = [d.confidence for d in detections]
    return [detections[i] for i in _nms_keep(boxes, scores, iou_thresh)]


def nms_pipeline(
    detections_per_level: Sequence[Sequence[Detection]],
    score_thresh: float = SCORE_THRESH,
    topk_per_level: int = TOPK_PER_LEVEL,
    nms_iou: float = NMS_IOU,
    max_dets: int = MAX_DETECTIONS,
) -> list[Detection]:
    """Filter raw detections the way the inference pipeline does.

    Per level: drop scores below ``score_thresh`` and keep the top
    ``topk_per_level`` by score. Levels are merged, NMS runs per class, and
    at most ``max_dets`` highest-scoring detections survive. Output is sorted
    by descending score with ties in input order.
    """
    merged: list[Detection] = []
    for level_dets in detections_per_level:
        kept = [d for d in level_dets if d.confidence >= score_thresh]
        kept.sort(key=lambda d: -d.confidence)  # stable: ties keep input order
        merged.extend(kept[:topk_per_level])

    by_class: dict[int, list[int]] = {}
    for idx, det in enumerate(merged):
        by_class.setdefault(det.class_id, []).append(idx)

    survivor_ids: list[int] = []
    for class_id in sorted(by_class):
        indices = by_class[class_id]
        boxes = np.array([merged[i].box.to_tlwh() for i in indices], dtype=float)
        scores = [merged[i].confidence for i in indices]
        survivor_ids.extend(indices[k] for k in _nms_keep(boxes, scores, nms_iou))

    survivor_ids.sort(key=lambda i: (-merged[i].confidence, i))
    return [merged[i] for i in survivor_ids[:max_dets]]
