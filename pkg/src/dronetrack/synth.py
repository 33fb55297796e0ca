"""Deterministic synthetic sequences for closed-loop testing.

Identities move with constant velocity; detections are the ground-truth
boxes with optional additive noise, dropout, and occlusion windows.
Appearance embeddings come from per-identity clusters built on orthonormal
anchor/tangent pairs, so intra-cluster spread and inter-cluster separation
are provable: samples stay within the configured cosine radius of their
anchor, and clusters of different identities are exactly orthogonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection import Detection
from .geometry import BoundingBox
from .io_formats import AnnotationRecord, EmbeddingTable

__all__ = ["SynthConfig", "SynthResult", "generate"]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_identities: int = 5
    frames: int = 100
    image_width: int = 1920
    image_height: int = 1080
    detection_noise: float = 0.0
    miss_probability: float = 0.0
    # Inclusive (identity index, first frame, last frame) dropout windows.
    occlusions: tuple[tuple[int, int, int], ...] = ()
    embedding_dim: int = 16
    intra_radius: float = 0.05
    inter_distance_min: float = 0.8
    categories: tuple[int, ...] = (4,)
    box_side_range: tuple[float, float] = (24.0, 64.0)
    speed_range: tuple[float, float] = (0.5, 3.0)
    confidence_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if self.num_identities < 1 or self.frames < 1:
            raise ValueError("need at least one identity and one frame")
        if not 0.0 <= self.miss_probability < 1.0:
            raise ValueError("miss_probability must be in [0, 1)")
        if not 0.0 <= self.intra_radius < 1.0:
            raise ValueError("intra_radius must be in [0, 1)")
        if self.detection_noise < 0.0:
            raise ValueError("detection_noise must be nonnegative")


@dataclass
class SynthResult:
    ground_truth: list[AnnotationRecord]
    detections: list[Detection]
    embeddings: EmbeddingTable


def _cluster_basis(rng: np.random.Generator, dim: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (anchor, tangent) pair per identity."""
    raw = rng.standard_normal((dim, 2 * count))
    q, _ = np.linalg.qr(raw)
    return q[:, 0::2].T.copy(), q[:, 1::2].T.copy()


def generate(config: SynthConfig) -> SynthResult:
    """Build ground truth, detections, and embeddings for one sequence.

    Deterministic under the seed. Raises ValueError when the separability
    demands cannot be met in the configured embedding dimension.
    """
    k = config.num_identities
    if config.embedding_dim < 2 * k:
        raise ValueError(
            f"embedding_dim {config.embedding_dim} cannot hold {k} separated "
            f"clusters; need at least {2 * k}"
        )
    if config.inter_distance_min > 1.0:
        raise ValueError(
            "orthogonal clusters give inter-identity cosine distance 1.0; "
            f"cannot promise {config.inter_distance_min}"
        )
    if config.inter_distance_min <= 2.0 * config.intra_radius:
        raise ValueError(
            "inter_distance_min must exceed twice intra_radius for separable clusters"
        )

    rng = np.random.default_rng(config.seed)
    anchors, tangents = _cluster_basis(rng, config.embedding_dim, k)
    theta_max = math.acos(1.0 - config.intra_radius)

    # Per-identity geometry: start near the image center region, constant velocity.
    lo_side, hi_side = config.box_side_range
    widths = rng.uniform(lo_side, hi_side, size=k)
    heights = rng.uniform(lo_side, hi_side, size=k)
    start_x = rng.uniform(0.25 * config.image_width, 0.75 * config.image_width, size=k)
    start_y = rng.uniform(0.25 * config.image_height, 0.75 * config.image_height, size=k)
    speed = rng.uniform(*config.speed_range, size=k)
    heading = rng.uniform(0.0, 2.0 * math.pi, size=k)
    vel_x = speed * np.cos(heading)
    vel_y = speed * np.sin(heading)

    occluded: set[tuple[int, int]] = set()
    for identity, first, last in config.occlusions:
        if not 0 <= identity < k:
            raise ValueError(f"occlusion names unknown identity {identity}")
        for frame in range(first, last + 1):
            occluded.add((identity, frame))

    ground_truth: list[AnnotationRecord] = []
    detections: list[Detection] = []
    embedding_rows: list[np.ndarray] = []
    samples_per_identity: list[list[np.ndarray]] = [[] for _ in range(k)]

    for frame in range(1, config.frames + 1):
        for identity in range(k):
            cx = start_x[identity] + vel_x[identity] * (frame - 1)
            cy = start_y[identity] + vel_y[identity] * (frame - 1)
            w = widths[identity]
            h = heights[identity]
            box = BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)
            class_id = config.categories[identity % len(config.categories)]
            ground_truth.append(
                AnnotationRecord(
                    frame=frame,
                    target_id=identity + 1,
                    box=box,
                    score=1.0,
                    category=class_id,
                    truncation=0,
                    occlusion=0,
                )
            )

            if (identity, frame) in occluded:
                continue
            if config.miss_probability > 0.0 and rng.uniform() < config.miss_probability:
                continue

            if config.detection_noise > 0.0:
                noise = rng.normal(0.0, config.detection_noise, size=4)
                det_box = BoundingBox(
                    box.left + noise[0],
                    box.top + noise[1],
                    max(box.width + noise[2], 1.0),
                    max(box.height + noise[3], 1.0),
                )
            else:
                det_box = box

            theta = rng.uniform(-theta_max, theta_max)
            embedding = math.cos(theta) * anchors[identity] + math.sin(theta) * tangents[identity]
            samples_per_identity[identity].append(embedding)

            confidence = float(rng.uniform(*config.confidence_range))
            detections.append(
                Detection(
                    frame_id=frame,
                    box=det_box,
                    class_id=class_id,
                    confidence=confidence,
                    embedding_ref=len(detections),
                )
            )
            embedding_rows.append(embedding.astype(np.float32))

    _check_separation(samples_per_identity, config.inter_distance_min)

    data = (
        np.stack(embedding_rows, axis=0)
        if embedding_rows
        else np.zeros((0, config.embedding_dim), dtype=np.float32)
    )
    return SynthResult(
        ground_truth=ground_truth,
        detections=detections,
        embeddings=EmbeddingTable(dim=config.embedding_dim, data=data),
    )


def _check_separation(samples_per_identity, bound: float) -> None:
    """Assert the generated clusters honor the promised separation."""
    stacks = [np.stack(s, axis=0) for s in samples_per_identity if s]
    for i in range(len(stacks)):
        for j in range(i + 1, len(stacks)):
            min_dist = 1.0 - float((stacks[i] @ stacks[j].T).max())
            if min_dist < bound:
                raise AssertionError(
                    f"inter-identity cosine distance {min_dist:.4f} below promised {bound}"
                )
