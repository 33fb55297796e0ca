"""Detection AP/AR and tracklet-AP evaluation.

Detection metrics follow the MS-COCO protocol: greedy score-ordered
matching per image, 101-point interpolated average precision averaged over
ten IoU thresholds (0.50:0.05:0.95) and all categories, and average recall
at fixed per-image detection budgets.

Tracking metrics treat a whole tracklet as the unit of matching. A
predicted tracklet matches a ground-truth tracklet of the same class when
their mean per-frame IoU, taken over the union of the frames either one
occupies (frames missing from one side count as IoU 0), reaches the
threshold. That matching rule is a documented stand-in: the upstream
benchmark does not define one.

VisDrone conventions: annotation rows with category 0 (ignored regions) and
11 (others) are excluded from ground truth, and detections overlapping an
ignored region with IoU above 0.5 are discarded before matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .detection import Detection
from .geometry import BoundingBox, iou, iou_matrix
from .io_formats import AnnotationRecord
from .tracker import TrackletRow

__all__ = [
    "EvalConfig",
    "GroundTruthBox",
    "DetectionReport",
    "TrackingReport",
    "eval_detection",
    "eval_tracking",
    "detection_ground_truth",
    "tracking_ground_truth",
    "VISDRONE_CATEGORIES",
    "CATEGORY_NAMES",
    "IGNORED_REGION_CATEGORY",
    "OTHERS_CATEGORY",
]

VISDRONE_CATEGORIES = tuple(range(1, 11))
IGNORED_REGION_CATEGORY = 0
OTHERS_CATEGORY = 11

CATEGORY_NAMES = {
    1: "pedestrian",
    2: "people",
    3: "bicycle",
    4: "car",
    5: "van",
    6: "truck",
    7: "tricycle",
    8: "awning-tricycle",
    9: "bus",
    10: "motor",
}

_RECALL_POINTS = np.linspace(0.0, 1.0, 101)
_IGNORE_OVERLAP = 0.5

DETECTION_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
TRACKING_IOU_THRESHOLDS = (0.25, 0.50, 0.75)


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DETECTION_IOU_THRESHOLDS
    max_dets_levels: tuple[int, ...] = (1, 10, 100, 500)
    categories: tuple[int, ...] = VISDRONE_CATEGORIES

    def __post_init__(self) -> None:
        thr = self.iou_thresholds
        if not thr or list(thr) != sorted(thr):
            raise ValueError("iou_thresholds must be non-empty and ascending")
        if any(not 0.0 < t <= 1.0 for t in thr):
            raise ValueError("iou_thresholds must lie in (0, 1]")
        if not self.max_dets_levels or any(k < 1 for k in self.max_dets_levels):
            raise ValueError("max_dets_levels must be positive")

    @classmethod
    def detection(cls) -> "EvalConfig":
        return cls()

    @classmethod
    def tracking(cls) -> "EvalConfig":
        return cls(iou_thresholds=TRACKING_IOU_THRESHOLDS)


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: int
    class_id: int
    box: BoundingBox


def detection_ground_truth(
    records: Iterable[AnnotationRecord],
) -> tuple[list[GroundTruthBox], dict[int, list[BoundingBox]]]:
    """Split annotations into evaluable ground truth and ignored regions."""
    ground_truth: list[GroundTruthBox] = []
    ignore_regions: dict[int, list[BoundingBox]] = {}
    for rec in records:
        if rec.category == IGNORED_REGION_CATEGORY:
            ignore_regions.setdefault(rec.frame, []).append(rec.box)
        elif rec.category == OTHERS_CATEGORY:
            continue
        else:
            ground_truth.append(GroundTruthBox(rec.frame, rec.category, rec.box))
    return ground_truth, ignore_regions


def _average_precision(tp_flags: np.ndarray, num_gt: int) -> float:
    """101-point interpolated AP from score-ordered true-positive flags."""
    if num_gt == 0:
        raise ValueError("AP is undefined without ground truth")
    if tp_flags.size == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    # Monotone envelope from the right, then sample at fixed recall points.
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_POINTS, side="left")
    sampled = np.where(idx < precision.size, precision[np.minimum(idx, precision.size - 1)], 0.0)
    return float(sampled.mean())


def _greedy_match(order: np.ndarray, overlaps: np.ndarray, threshold: float) -> np.ndarray:
    """True-positive flags for predictions processed in ``order``.

    Each prediction takes the unmatched ground truth with the highest IoU at
    or above the threshold; IoU ties go to the lowest ground-truth index.
    """
    n_gt = overlaps.shape[1] if overlaps.size else 0
    flags = np.zeros(order.size, dtype=bool)
    taken = np.zeros(n_gt, dtype=bool)
    for pos, pred_idx in enumerate(order):
        if n_gt == 0:
            break
        row = overlaps[pred_idx]
        best_gt = -1
        best_iou = 0.0
        for g in range(n_gt):
            if taken[g] or row[g] < threshold:
                continue
            if best_gt < 0 or row[g] > best_iou:
                best_iou = row[g]
                best_gt = g
        if best_gt >= 0:
            taken[best_gt] = True
            flags[pos] = True
    return flags


@dataclass
class DetectionReport:
    """AP/AR summary; every value is a fraction in [0, 1]."""

    ap: float
    ap_by_threshold: dict[float, float]
    ar_by_maxdets: dict[int, float]
    ap_by_class: dict[int, float]
    num_images: int
    num_ground_truth: int

    @property
    def ap50(self) -> float:
        return self.ap_by_threshold.get(0.5, 0.0)

    @property
    def ap75(self) -> float:
        return self.ap_by_threshold.get(0.75, 0.0)

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ap_by_threshold": {f"{t:.2f}": v for t, v in self.ap_by_threshold.items()},
            "ar_by_maxdets": {str(k): v for k, v in self.ar_by_maxdets.items()},
            "ap_by_class": {str(c): v for c, v in self.ap_by_class.items()},
            "num_images": self.num_images,
            "num_ground_truth": self.num_ground_truth,
        }

    def format_text(self) -> str:
        lines = ["Detection evaluation (values in %)"]
        lines.append(f"  {'AP':<12} {self.ap * 100:6.2f}")
        for t, v in self.ap_by_threshold.items():
            lines.append(f"  {f'AP@{t:.2f}':<12} {v * 100:6.2f}")
        for k, v in self.ar_by_maxdets.items():
            lines.append(f"  {f'AR@{k}':<12} {v * 100:6.2f}")
        if self.ap_by_class:
            lines.append("  per-class AP")
            for c, v in sorted(self.ap_by_class.items()):
                name = CATEGORY_NAMES.get(c, str(c))
                lines.append(f"    {name:<16} {v * 100:6.2f}")
        return "\n".join(lines) + "\n"


def eval_detection(
    predictions: Sequence[Detection],
    ground_truth: Sequence[GroundTruthBox],
    config: EvalConfig | None = None,
    ignore_regions: dict[int, list[BoundingBox]] | None = None,
) -> DetectionReport:
    """Score detections against per-image ground truth.

    Raises:
        ValueError: when a prediction or ground-truth row carries a class id
            outside ``config.categories``.
    """
    config = config or EvalConfig.detection()
    categories = set(config.categories)
    for det in predictions:
        if det.class_id not in categories:
            raise ValueError(f"prediction has unknown class id {det.class_id}")
    for gt in ground_truth:
        if gt.class_id not in categories:
            raise ValueError(f"ground truth has unknown class id {gt.class_id}")

    if ignore_regions:
        predictions = _drop_ignored(predictions, ignore_regions)

    images = sorted(
        {d.frame_id for d in predictions} | {g.image_id for g in ground_truth}
    )
    max_det_cap = max(config.max_dets_levels)

    # (class, image) -> score-ordered prediction list and gt boxes.
    preds_by_key: dict[tuple[int, int], list[Detection]] = {}
    for det in predictions:
        preds_by_key.setdefault((det.class_id, det.frame_id), []).append(det)
    gts_by_key: dict[tuple[int, int], list[GroundTruthBox]] = {}
    for gt in ground_truth:
        gts_by_key.setdefault((gt.class_id, gt.image_id), []).append(gt)

    ap_cells: dict[int, dict[float, float]] = {}
    ar_cells: dict[int, dict[float, dict[int, float]]] = {}
    evaluated_classes: list[int] = []
    for class_id in config.categories:
        num_gt = sum(
            len(gts_by_key.get((class_id, img), ())) for img in images
        )
        if num_gt == 0:
            continue
        evaluated_classes.append(class_id)

        per_image = []
        for img in images:
            dets = preds_by_key.get((class_id, img), [])
            order = np.array(
                sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i)),
                dtype=int,
            )[:max_det_cap]
            gt_boxes = [g.box.to_tlwh() for g in gts_by_key.get((class_id, img), [])]
            if dets and gt_boxes:
                overlaps = iou_matrix(
                    np.array([d.box.to_tlwh() for d in dets]), np.array(gt_boxes)
                )
            else:
                overlaps = np.zeros((len(dets), len(gt_boxes)))
            scores = np.array([dets[i].confidence for i in order])
            per_image.append((order, overlaps, scores))

        ap_cells[class_id] = {}
        ar_cells[class_id] = {}
        for threshold in config.iou_thresholds:
            flags_per_image = [
                _greedy_match(order, overlaps, threshold)
                for order, overlaps, _ in per_image
            ]
            # Pool across images at each detection budget; greedy flags for a
            # budget k are the first-k prefix of the full flags.
            ar_cells[class_id][threshold] = {}
            for k in sorted(set(config.max_dets_levels) | {max_det_cap}):
                scores_k = np.concatenate(
                    [scores[:k] for (_, _, scores) in per_image]
                )
                flags_k = np.concatenate([f[:k] for f in flags_per_image])
                if k in config.max_dets_levels:
                    ar_cells[class_id][threshold][k] = float(flags_k.sum()) / num_gt
                if k == max_det_cap:
                    pooled = np.argsort(-scores_k, kind="stable")
                    ap_cells[class_id][threshold] = _average_precision(
                        flags_k[pooled], num_gt
                    )

    if evaluated_classes:
        ap_by_class = {
            c: float(np.mean(list(ap_cells[c].values()))) for c in evaluated_classes
        }
        ap_by_threshold = {
            t: float(np.mean([ap_cells[c][t] for c in evaluated_classes]))
            for t in config.iou_thresholds
        }
        ap = float(np.mean(list(ap_by_class.values())))
        ar_by_maxdets = {
            k: float(
                np.mean(
                    [
                        ar_cells[c][t][k]
                        for c in evaluated_classes
                        for t in config.iou_thresholds
                    ]
                )
            )
            for k in config.max_dets_levels
        }
    else:
        ap_by_class = {}
        ap_by_threshold = {t: 0.0 for t in config.iou_thresholds}
        ap = 0.0
        ar_by_maxdets = {k: 0.0 for k in config.max_dets_levels}

    return DetectionReport(
        ap=ap,
        ap_by_threshold=ap_by_threshold,
        ar_by_maxdets=ar_by_maxdets,
        ap_by_class=ap_by_class,
        num_images=len(images),
        num_ground_truth=len(ground_truth),
    )


def _drop_ignored(
    predictions: Sequence[Detection],
    ignore_regions: dict[int, list[BoundingBox]],
) -> list[Detection]:
    kept = []
    for det in predictions:
        regions = ignore_regions.get(det.frame_id)
        if regions and any(iou(det.box, region) > _IGNORE_OVERLAP for region in regions):
            continue
        kept.append(det)
    return kept


# --- tracking ----------------------------------------------------------------


@dataclass
class _Tracklet:
    track_id: int
    class_id: int
    frames: dict[int, BoundingBox] = field(default_factory=dict)
    confidences: list[float] = field(default_factory=list)

    @property
    def mean_confidence(self) -> float:
        return float(np.mean(self.confidences)) if self.confidences else 0.0


def _collect_tracklets(rows, what: str) -> dict[int, _Tracklet]:
    tracklets: dict[int, _Tracklet] = {}
    for row in rows:
        t = tracklets.setdefault(row[1], _Tracklet(track_id=row[1], class_id=row[3]))
        frame = row[0]
        if frame in t.frames:
            raise ValueError(
                f"{what} tracklet {row[1]} has duplicate rows for frame {frame}"
            )
        if t.class_id != row[3]:
            raise ValueError(
                f"{what} tracklet {row[1]} mixes class ids {t.class_id} and {row[3]}"
            )
        t.frames[frame] = row[2]
        if row[4] is not None:
            t.confidences.append(row[4])
    return tracklets


def tracking_ground_truth(records: Iterable[AnnotationRecord]) -> dict[int, _Tracklet]:
    """Ground-truth tracklets keyed by target id; categories 0/11 excluded."""
    rows = [
        (r.frame, r.target_id, r.box, r.category, None)
        for r in records
        if r.category not in (IGNORED_REGION_CATEGORY, OTHERS_CATEGORY)
    ]
    return _collect_tracklets(rows, "ground-truth")


def _tracklet_mean_iou(a: _Tracklet, b: _Tracklet) -> float:
    union_frames = a.frames.keys() | b.frames.keys()
    if not union_frames:
        return 0.0
    total = 0.0
    for frame in a.frames.keys() & b.frames.keys():
        total += iou(a.frames[frame], b.frames[frame])
    return total / len(union_frames)


@dataclass
class TrackingReport:
    """Tracklet-AP summary; every value is a fraction in [0, 1]."""

    ap: float
    ap_by_threshold: dict[float, float]
    ap_by_class: dict[int, float]
    num_pred_tracklets: int
    num_gt_tracklets: int

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ap_by_threshold": {f"{t:.2f}": v for t, v in self.ap_by_threshold.items()},
            "ap_by_class": {str(c): v for c, v in self.ap_by_class.items()},
            "num_pred_tracklets": self.num_pred_tracklets,
            "num_gt_tracklets": self.num_gt_tracklets,
        }

    def format_text(self) -> str:
        lines = ["Tracking evaluation (values in %)"]
        lines.append(f"  {'AP':<12} {self.ap * 100:6.2f}")
        for t, v in self.ap_by_threshold.items():
            lines.append(f"  {f'AP@{t:.2f}':<12} {v * 100:6.2f}")
        if self.ap_by_class:
            lines.append("  per-class AP")
            for c, v in sorted(self.ap_by_class.items()):
                name = CATEGORY_NAMES.get(c, str(c))
                lines.append(f"    {name:<16} {v * 100:6.2f}")
        return "\n".join(lines) + "\n"


def eval_tracking(
    pred_rows: Sequence[TrackletRow],
    gt_tracklets: dict[int, _Tracklet],
    config: EvalConfig | None = None,
) -> TrackingReport:
    """Score predicted tracklets against ground-truth tracklets.

    Predictions are ranked by mean confidence; each is greedily matched to
    the unmatched same-class ground-truth tracklet with the highest mean
    per-frame IoU at or above the threshold.
    """
    config = config or EvalConfig.tracking()
    preds = _collect_tracklets(
        [(r.frame_id, r.track_id, r.box, r.class_id, r.confidence) for r in pred_rows],
        "predicted",
    )

    classes = sorted({t.class_id for t in gt_tracklets.values()})
    ap_cells: dict[int, dict[float, float]] = {}
    for class_id in classes:
        gts = [t for tid, t in sorted(gt_tracklets.items()) if t.class_id == class_id]
        cls_preds = sorted(
            (t for t in preds.values() if t.class_id == class_id),
            key=lambda t: (-t.mean_confidence, t.track_id),
        )
        overlap = np.zeros((len(cls_preds), len(gts)))
        for i, pred in enumerate(cls_preds):
            for j, gt in enumerate(gts):
                overlap[i, j] = _tracklet_mean_iou(pred, gt)

        ap_cells[class_id] = {}
        for threshold in config.iou_thresholds:
            flags = _greedy_match(np.arange(len(cls_preds)), overlap, threshold)
            ap_cells[class_id][threshold] = _average_precision(flags, len(gts))

    if classes:
        ap_by_class = {
            c: float(np.mean(list(ap_cells[c].values()))) for c in classes
        }
        ap_by_threshold = {
            t: float(np.mean([ap_cells[c][t] for c in classes]))
            for t in config.iou_thresholds
        }
        ap = float(np.mean(list(ap_by_class.values())))
    else:
        ap_by_class = {}
        ap_by_threshold = {t: 0.0 for t in config.iou_thresholds}
        ap = 0.0

    return TrackingReport(
        ap=ap,
        ap_by_threshold=ap_by_threshold,
        ap_by_class=ap_by_class,
        num_pred_tracklets=len(preds),
        num_gt_tracklets=len(gt_tracklets),
    )
