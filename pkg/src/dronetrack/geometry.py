"""Axis-aligned box representations, conversions, and overlap arithmetic.

Coordinates are continuous (fractional pixels are allowed) and areas are
``width * height`` with no +1 convention. All functions here are pure and
safe for unrestricted parallel use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundingBox",
    "BoxXYAH",
    "iou",
    "iou_matrix",
    "to_xyah",
    "from_xyah",
]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in top-left / width / height ("tlwh") form."""

    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def center_x(self) -> float:
        return self.left + self.width / 2.0

    @property
    def center_y(self) -> float:
        return self.top + self.height / 2.0

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_tlwh(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.left + dx, self.top + dy, self.width, self.height)


@dataclass(frozen=True)
class BoxXYAH:
    """Center / aspect / height box form, the motion-model measurement space.

    ``aspect`` is width divided by height.
    """

    center_x: float
    center_y: float
    aspect: float
    height: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.center_x, self.center_y, self.aspect, self.height], dtype=float
        )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes with positive extent.

    Symmetric and in [0, 1]; 1.0 exactly for identical boxes.
    """
    inter_w = min(a.right, b.right) - max(a.left, b.left)
    inter_h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    if (
        a.left == b.left
        and a.top == b.top
        and a.width == b.width
        and a.height == b.height
    ):
        return 1.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return min(inter / union, 1.0)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two arrays of tlwh boxes.

    Args:
        a: array of shape (N, 4).
        b: array of shape (M, 4).

    Returns:
        Array of shape (N, M).
    """
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    a_right = a[:, 0] + a[:, 2]
    a_bottom = a[:, 1] + a[:, 3]
    b_right = b[:, 0] + b[:, 2]
    b_bottom = b[:, 1] + b[:, 3]

    inter_w = np.minimum(a_right[:, None], b_right[None, :]) - np.maximum(
        a[:, None, 0], b[None, :, 0]
    )
    inter_h = np.minimum(a_bottom[:, None], b_bottom[None, :]) - np.maximum(
        a[:, None, 1], b[None, :, 1]
    )
    inter = np.clip(inter_w, 0.0, None) * np.clip(inter_h, 0.0, None)
    # Areas from the derived corners, not w*h, so identical boxes give an
    # intersection equal to both areas and an IoU of exactly 1.0.
    area_a = (a_right - a[:, 0]) * (a_bottom - a[:, 1])
    area_b = (b_right - b[:, 0]) * (b_bottom - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(inter > 0.0, inter / union, 0.0)
    return np.minimum(out, 1.0)


def to_xyah(box: BoundingBox) -> BoxXYAH:
    """Convert a tlwh box to center/aspect/height form."""
    return BoxXYAH(
        center_x=box.left + box.width / 2.0,
        center_y=box.top + box.height / 2.0,
        aspect=box.width / box.height,
        height=box.height,
    )


def from_xyah(measurement: BoxXYAH) -> BoundingBox:
    """Inverse of :func:`to_xyah`; round-trips within 1e-9."""
    width = measurement.aspect * measurement.height
    return BoundingBox(
        left=measurement.center_x - width / 2.0,
        top=measurement.center_y - measurement.height / 2.0,
        width=width,
        height=measurement.height,
    )
