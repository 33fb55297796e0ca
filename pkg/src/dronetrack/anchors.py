"""Multi-level anchor grids, ground-truth assignment, and coverage reporting.

The anchor pyramid follows the one-stage detector convention: each level has
a stride and a base size, and every grid cell carries one anchor per
(aspect ratio, scale) combination. Anchor shapes preserve area, so the side
of the equivalent square is ``base * scale``. Anchors are not clipped to the
image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox, iou_matrix

__all__ = [
    "AnchorConfig",
    "AnchorSet",
    "AnchorAssignment",
    "CoverageStats",
    "baseline_config",
    "dense_config",
    "generate_anchors",
    "assign_anchors",
    "coverage_report",
    "scale_range",
    "LABEL_NEGATIVE",
    "LABEL_IGNORE",
]

LABEL_NEGATIVE = -1
LABEL_IGNORE = -2

# Multipliers applied on top of each level's base size.
BASELINE_SCALES = (1.0, 2.0 ** (1.0 / 3.0), 2.0 ** (2.0 / 3.0))
DENSE_SCALES = (0.1, 0.25, 0.5, 1.0, 2.0 ** (1.0 / 3.0), 2.2)

_CHUNK = 4096


@dataclass(frozen=True)
class AnchorConfig:
    """Pyramid-level anchor parameterization.

    ``aspect_ratios`` are width/height; an anchor for ratio ``r`` and scale
    ``s`` on a level with base size ``b`` has width ``b*s*sqrt(r)`` and
    height ``b*s/sqrt(r)``, i.e. area ``(b*s)**2``.
    """

    levels: tuple[str, ...] = ("P3", "P4", "P5", "P6", "P7")
    strides: tuple[int, ...] = (8, 16, 32, 64, 128)
    base_sizes: tuple[int, ...] = (32, 64, 128, 256, 512)
    aspect_ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    scales: tuple[float, ...] = BASELINE_SCALES

    def __post_init__(self) -> None:
        if not (len(self.levels) == len(self.strides) == len(self.base_sizes)):
            raise ValueError("levels, strides and base_sizes must have equal length")
        if list(self.strides) != sorted(self.strides) or list(self.base_sizes) != sorted(
            self.base_sizes
        ):
            raise ValueError("strides and base_sizes must ascend")
        if not self.aspect_ratios or not self.scales:
            raise ValueError("aspect_ratios and scales must be non-empty")
        if any(r <= 0 for r in self.aspect_ratios):
            raise ValueError(f"aspect ratios must be positive: {self.aspect_ratios}")
        if any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be positive: {self.scales}")
        if any(s <= 0 for s in self.strides):
            raise ValueError(f"strides must be positive: {self.strides}")

    @property
    def anchors_per_location(self) -> int:
        return len(self.aspect_ratios) * len(self.scales)


def baseline_config() -> AnchorConfig:
    """Standard 9-anchors-per-location configuration (3 ratios x 3 scales)."""
    return AnchorConfig(scales=BASELINE_SCALES)


def dense_config() -> AnchorConfig:
    """Six-scale configuration extending coverage toward very small boxes."""
    return AnchorConfig(scales=DENSE_SCALES)


def scale_range(config: AnchorConfig) -> tuple[float, float]:
    """Span of anchor sides, where side means sqrt(area) == base * scale."""
    sides = [b * s for b in config.base_sizes for s in config.scales]
    return (min(sides), max(sides))


@dataclass
class AnchorSet:
    """Materialized anchor grid for one image size.

    Per level, boxes are stored as an (H*W*A, 4) tlwh array laid out
    cell-major (row, then column), with the A per-location anchors ordered
    ratio-major then scale.
    """

    config: AnchorConfig
    image_size: tuple[int, int]
    grid_shapes: tuple[tuple[int, int], ...]
    boxes_by_level: dict[str, np.ndarray]

    @property
    def total(self) -> int:
        return sum(arr.shape[0] for arr in self.boxes_by_level.values())

    def all_boxes(self) -> np.ndarray:
        return np.concatenate(
            [self.boxes_by_level[lvl] for lvl in self.config.levels], axis=0
        )

    def level_boxes(self, level: str) -> np.ndarray:
        return self.boxes_by_level[level]

    def provenance(self, level: str) -> np.ndarray:
        """Array of (cell_y, cell_x, ratio_index, scale_index) per anchor."""
        li = self.config.levels.index(level)
        grid_h, grid_w = self.grid_shapes[li]
        n_ratios = len(self.config.aspect_ratios)
        n_scales = len(self.config.scales)
        iy, ix, ir, isc = np.meshgrid(
            np.arange(grid_h),
            np.arange(grid_w),
            np.arange(n_ratios),
            np.arange(n_scales),
            indexing="ij",
        )
        return np.stack(
            [iy.ravel(), ix.ravel(), ir.ravel(), isc.ravel()], axis=1
        )


def generate_anchors(config: AnchorConfig, image_size: tuple[int, int]) -> AnchorSet:
    """Tile anchors over every pyramid level for an image of (width, height).

    Grid size per level is ceil(dim / stride); anchor centers sit at
    ``(index + 0.5) * stride``. Anchors may extend past the image bounds.
    """
    width, height = image_size
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {image_size}")

    ratios = np.asarray(config.aspect_ratios, dtype=float)
    scales = np.asarray(config.scales, dtype=float)
    # (R, S) anchor extents; ratio-major then scale ordering when raveled.
    anchor_w = (scales[None, :] * np.sqrt(ratios)[:, None]).ravel()
    anchor_h = (scales[None, :] / np.sqrt(ratios)[:, None]).ravel()

    grid_shapes = []
    boxes_by_level: dict[str, np.ndarray] = {}
    for level, stride, base in zip(config.levels, config.strides, config.base_sizes):
        grid_w = math.ceil(width / stride)
        grid_h = math.ceil(height / stride)
        grid_shapes.append((grid_h, grid_w))

        w = base * anchor_w
        h = base * anchor_h
        cx = (np.arange(grid_w, dtype=float) + 0.5) * stride
        cy = (np.arange(grid_h, dtype=float) + 0.5) * stride

        shape = (grid_h, grid_w, w.shape[0])
        cx_grid = np.broadcast_to(cx[None, :, None], shape)
        cy_grid = np.broadcast_to(cy[:, None, None], shape)
        w_grid = np.broadcast_to(w[None, None, :], shape)
        h_grid = np.broadcast_to(h[None, None, :], shape)
        boxes = np.stack(
            [cx_grid - w_grid / 2.0, cy_grid - h_grid / 2.0, w_grid, h_grid], axis=-1
        ).reshape(-1, 4)
        boxes_by_level[level] = np.ascontiguousarray(boxes)

    return AnchorSet(
        config=config,
        image_size=(width, height),
        grid_shapes=tuple(grid_shapes),
        boxes_by_level=boxes_by_level,
    )


@dataclass
class AnchorAssignment:
    """Per-anchor labels plus per-ground-truth best-overlap bookkeeping.

    ``labels[i]`` is the matched ground-truth index for positive anchors,
    ``LABEL_NEGATIVE`` (-1) or ``LABEL_IGNORE`` (-2) otherwise.
    """

    labels: np.ndarray
    best_gt_iou: np.ndarray
    best_gt_anchor: np.ndarray

    @property
    def num_positive(self) -> int:
        return int((self.labels >= 0).sum())

    @property
    def num_negative(self) -> int:
        return int((self.labels == LABEL_NEGATIVE).sum())

    @property
    def num_ignore(self) -> int:
        return int((self.labels == LABEL_IGNORE).sum())


def _gt_array(gt) -> np.ndarray:
    rows = []
    for g in gt:
        rows.append(g.to_tlwh() if isinstance(g, BoundingBox) else tuple(g))
    return np.asarray(rows, dtype=float).reshape(-1, 4)


def assign_anchors(
    anchors: AnchorSet,
    gt,
    pos_iou: float = 0.5,
    neg_iou: float = 0.4,
    force_gt_argmax: bool = False,
) -> AnchorAssignment:
    """Label every anchor positive / negative / ignore against ground truth.

    An anchor is positive when its best-overlap ground truth reaches
    ``pos_iou``, negative below ``neg_iou``, ignore in between; it is matched
    to its argmax ground truth, ties broken by lowest index. With
    ``force_gt_argmax`` each ground truth additionally claims its single
    best anchor even below ``pos_iou`` (off by default).
    """
    if pos_iou < neg_iou:
        raise ValueError("pos_iou must be >= neg_iou")
    boxes = anchors.all_boxes()
    n_anchors = boxes.shape[0]
    gt_boxes = _gt_array(gt)
    n_gt = gt_boxes.shape[0]

    labels = np.full(n_anchors, LABEL_NEGATIVE, dtype=np.int64)
    best_gt_iou = np.zeros(n_gt, dtype=float)
    best_gt_anchor = np.full(n_gt, -1, dtype=np.int64)
    if n_gt == 0:
        return AnchorAssignment(labels, best_gt_iou, best_gt_anchor)

    for start in range(0, n_anchors, _CHUNK):
        chunk = boxes[start : start + _CHUNK]
        overlaps = iou_matrix(chunk, gt_boxes)
        anchor_max = overlaps.max(axis=1)
        anchor_arg = overlaps.argmax(axis=1)

        sel = slice(start, start + chunk.shape[0])
        lab = labels[sel]
        lab[anchor_max >= pos_iou] = anchor_arg[anchor_max >= pos_iou]
        lab[(anchor_max >= neg_iou) & (anchor_max < pos_iou)] = LABEL_IGNORE

        gt_max = overlaps.max(axis=0)
        gt_arg = overlaps.argmax(axis=0) + start
        better = gt_max > best_gt_iou
        best_gt_iou[better] = gt_max[better]
        best_gt_anchor[better] = gt_arg[better]

    if force_gt_argmax:
        # Each gt claims its best anchor; competing claims go to the gt with
        # the larger IoU, ties to the lowest gt index.
        claim_iou: dict[int, float] = {}
        claim_gt: dict[int, int] = {}
        for g in range(n_gt):
            a = int(best_gt_anchor[g])
            if a < 0:
                continue
            v = float(best_gt_iou[g])
            if a not in claim_iou or v > claim_iou[a]:
                claim_iou[a] = v
                claim_gt[a] = g
        for a, g in claim_gt.items():
            labels[a] = g

    return AnchorAssignment(labels, best_gt_iou, best_gt_anchor)


_BUCKETS = (
    ("<16px", 0.0, 16.0),
    ("16-32px", 16.0, 32.0),
    ("32-96px", 32.0, 96.0),
    (">=96px", 96.0, float("inf")),
)


@dataclass
class CoverageStats:
    """Fraction of ground-truth boxes that receive a positive anchor, by size.

    Size is the side of the equivalent square, sqrt(width * height).
    Assignment semantics match :func:`assign_anchors` with pure thresholding.
    """

    pos_iou: float
    buckets: list[dict]
    best_iou: np.ndarray = field(repr=False)
    histogram_edges: np.ndarray = field(repr=False)
    histogram_counts: np.ndarray = field(repr=False)

    def bucket(self, name: str) -> dict:
        for entry in self.buckets:
            if entry["bucket"] == name:
                return entry
        raise KeyError(name)

    @property
    def overall_fraction(self) -> float:
        total = sum(e["total"] for e in self.buckets)
        covered = sum(e["covered"] for e in self.buckets)
        return covered / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "pos_iou": self.pos_iou,
            "buckets": self.buckets,
            "overall_fraction": self.overall_fraction,
            "best_iou_histogram": {
                "edges": [float(x) for x in self.histogram_edges],
                "counts": [int(c) for c in self.histogram_counts],
            },
        }


def coverage_report(
    config: AnchorConfig,
    gt,
    image_size: tuple[int, int],
    pos_iou: float = 0.5,
) -> CoverageStats:
    """Coverage statistics of a ground-truth set under one anchor config.

    A ground truth is covered when at least one anchor is assigned positive
    to it (anchor best-overlap >= pos_iou and argmax at this gt).
    """
    anchor_set = generate_anchors(config, image_size)
    boxes = anchor_set.all_boxes()
    gt_boxes = _gt_array(gt)
    n_gt = gt_boxes.shape[0]

    best_iou = np.zeros(n_gt, dtype=float)
    covered = np.zeros(n_gt, dtype=bool)
    for start in range(0, boxes.shape[0], _CHUNK):
        chunk = boxes[start : start + _CHUNK]
        overlaps = iou_matrix(chunk, gt_boxes)
        best_iou = np.maximum(best_iou, overlaps.max(axis=0))
        anchor_max = overlaps.max(axis=1)
        anchor_arg = overlaps.argmax(axis=1)
        positive = anchor_max >= pos_iou
        covered[anchor_arg[positive]] = True

    sides = np.sqrt(gt_boxes[:, 2] * gt_boxes[:, 3])
    buckets = []
    for name, lo, hi in _BUCKETS:
        mask = (sides >= lo) & (sides < hi)
        total = int(mask.sum())
        hit = int(covered[mask].sum())
        buckets.append(
            {
                "bucket": name,
                "total": total,
                "covered": hit,
                "fraction": hit / total if total else 0.0,
            }
        )

    edges = np.linspace(0.0, 1.0, 21)
    counts, _ = np.histogram(best_iou, bins=edges)
    return CoverageStats(
        pos_iou=pos_iou,
        buckets=buckets,
        best_iou=best_iou,
        histogram_edges=edges,
        histogram_counts=counts,
    )
