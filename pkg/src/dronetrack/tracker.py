"""Per-frame track lifecycle: predict, associate, update, spawn, retire.

Association is strictly within object class: a car detection can never
continue a pedestrian track, however well the boxes overlap. Track ids are
issued from one global counter, so ids stay unique across classes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .association import (
    AppearanceGallery,
    AssociationParams,
    iou_match,
    matching_cascade,
)
from .detection import Detection, group_by_frame
from .geometry import BoundingBox, to_xyah
from .motion import KalmanState, MotionParams, initiate, predict, update

if TYPE_CHECKING:  # avoids a cycle; io_formats imports TrackletRow from here
    from .io_formats import EmbeddingTable

__all__ = [
    "TrackStatus",
    "Track",
    "TrackerParams",
    "TrackletRow",
    "MultiObjectTracker",
    "run_sequence",
]


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass(frozen=True)
class TrackerParams:
    """Lifecycle thresholds plus the association and motion parameter sets."""

    n_init: int = 3
    max_age: int = 30
    confidence_floor: float = 0.0
    association: AssociationParams = field(default_factory=AssociationParams)
    motion: MotionParams = field(default_factory=MotionParams)

    def __post_init__(self) -> None:
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ValueError("confidence_floor must be in [0, 1]")


@dataclass
class Track:
    """One identity-labeled trajectory with its motion state."""

    track_id: int
    class_id: int
    motion: KalmanState
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    time_since_update: int = 0
    last_confidence: float = 0.0

    @property
    def predicted_box(self) -> BoundingBox:
        x, y, aspect, height = self.motion.mean[:4]
        return BoundingBox(
            x - aspect * height / 2.0, y - height / 2.0, aspect * height, height
        )

    @property
    def is_confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    @property
    def is_tentative(self) -> bool:
        return self.status is TrackStatus.TENTATIVE


@dataclass(frozen=True)
class TrackletRow:
    """One emitted (frame, identity) observation."""

    frame_id: int
    track_id: int
    box: BoundingBox
    class_id: int
    confidence: float


class MultiObjectTracker:
    """Stateful per-sequence tracker; single-threaded within a sequence.

    Feed frames in ascending order through :meth:`step`. Confirmed tracks
    that were updated in the current frame are emitted; tentative tracks are
    silent until they accumulate ``n_init`` hits.
    """

    def __init__(self, params: TrackerParams | None = None):
        self.params = params or TrackerParams()
        self.gallery = AppearanceGallery(budget=self.params.association.gallery_budget)
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None

    def step(
        self,
        detections: list[Detection],
        embeddings: np.ndarray | None = None,
        frame_id: int | None = None,
    ) -> list[TrackletRow]:
        """Advance one frame and return the rows emitted for it.

        ``embeddings`` rows align with ``detections``; pass None to run
        motion-plus-IoU association only. ``frame_id`` is required when the
        frame has no detections.
        """
        if frame_id is None:
            if not detections:
                raise ValueError("frame_id is required when detections are empty")
            frame_id = detections[0].frame_id
        if any(d.frame_id != frame_id for d in detections):
            raise ValueError(f"detections mix frame ids (expected {frame_id})")
        if self._last_frame is not None and frame_id <= self._last_frame:
            raise ValueError(
                f"frames must be strictly ascending: got {frame_id} after {self._last_frame}"
            )
        self._last_frame = frame_id

        if embeddings is not None:
            embeddings = np.asarray(embeddings, dtype=float)
            if embeddings.shape[0] != len(detections):
                raise ValueError(
                    f"frame {frame_id}: {embeddings.shape[0]} embedding rows for "
                    f"{len(detections)} detections"
                )

        for track in self.tracks:
            track.motion = predict(track.motion, self.params.motion)
            track.time_since_update += 1

        floor = self.params.confidence_floor
        if floor > 0.0:
            kept = [i for i, d in enumerate(detections) if d.confidence >= floor]
            detections = [detections[i] for i in kept]
            if embeddings is not None:
                embeddings = embeddings[kept]

        matches, unmatched_track_ids = self._associate(detections, embeddings)

        matched_det_ids = set()
        for track, det_idx in matches:
            det = detections[det_idx]
            matched_det_ids.add(det_idx)
            track.motion = update(track.motion, to_xyah(det.box), self.params.motion)
            track.hits += 1
            track.time_since_update = 0
            track.last_confidence = det.confidence
            if embeddings is not None:
                self.gallery.add(track.track_id, embeddings[det_idx])
            if track.is_tentative and track.hits >= self.params.n_init:
                track.status = TrackStatus.CONFIRMED

        for det_idx, det in enumerate(detections):
            if det_idx not in matched_det_ids:
                emb = embeddings[det_idx] if embeddings is not None else None
                self._spawn(det, emb)

        for track in self.tracks:
            if track.track_id in unmatched_track_ids:
                if track.is_tentative:
                    track.status = TrackStatus.DELETED
                elif track.time_since_update > self.params.max_age:
                    track.status = TrackStatus.DELETED

        emitted = [
            TrackletRow(
                frame_id=frame_id,
                track_id=t.track_id,
                box=t.predicted_box,
                class_id=t.class_id,
                confidence=t.last_confidence,
            )
            for t in self.tracks
            if t.is_confirmed and t.time_since_update == 0
        ]
        emitted.sort(key=lambda row: row.track_id)

        for track in self.tracks:
            if track.status is TrackStatus.DELETED:
                self.gallery.discard(track.track_id)
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DELETED]
        return emitted

    def _associate(
        self, detections: list[Detection], embeddings: np.ndarray | None
    ) -> tuple[list[tuple[Track, int]], set[int]]:
        """Class-partitioned cascade plus IoU fallback.

        Returns (matched (track, detection index) pairs, unmatched track ids).
        """
        matches: list[tuple[Track, int]] = []
        unmatched_track_ids = {t.track_id for t in self.tracks}

        by_class: dict[int, list[int]] = {}
        for idx, det in enumerate(detections):
            by_class.setdefault(det.class_id, []).append(idx)

        for class_id in sorted(by_class):
            det_idx = by_class[class_id]
            class_tracks = [t for t in self.tracks if t.class_id == class_id]
            if not class_tracks:
                continue
            class_dets = [detections[i] for i in det_idx]

            if embeddings is not None:
                confirmed = [t for t in class_tracks if t.is_confirmed]
                cascade_matches, cascade_unmatched, leftover = matching_cascade(
                    confirmed,
                    class_dets,
                    embeddings[det_idx],
                    self.gallery,
                    self.params.association,
                    self.params.motion,
                    self.params.max_age,
                )
                for row, col in cascade_matches:
                    track = confirmed[row]
                    matches.append((track, det_idx[col]))
                    unmatched_track_ids.discard(track.track_id)
                # Tentative tracks and cascade leftovers seen last frame get
                # one more chance on plain overlap.
                iou_candidates = [t for t in class_tracks if t.is_tentative] + [
                    confirmed[i]
                    for i in cascade_unmatched
                    if confirmed[i].time_since_update == 1
                ]
                remaining = leftover
            else:
                iou_candidates = list(class_tracks)
                remaining = list(range(len(class_dets)))

            if iou_candidates and remaining:
                iou_matches, _, _ = iou_match(
                    iou_candidates,
                    [class_dets[i] for i in remaining],
                    self.params.association.max_iou_distance,
                )
                for row, col in iou_matches:
                    track = iou_candidates[row]
                    matches.append((track, det_idx[remaining[col]]))
                    unmatched_track_ids.discard(track.track_id)

        return matches, unmatched_track_ids

    def _spawn(self, det: Detection, embedding: np.ndarray | None) -> None:
        track = Track(
            track_id=self._next_id,
            class_id=det.class_id,
            motion=initiate(to_xyah(det.box), self.params.motion),
            hits=1,
            time_since_update=0,
            last_confidence=det.confidence,
        )
        self._next_id += 1
        if track.hits >= self.params.n_init:
            track.status = TrackStatus.CONFIRMED
        if embedding is not None:
            self.gallery.add(track.track_id, embedding)
        self.tracks.append(track)


def run_sequence(
    detections: list[Detection],
    embeddings: "EmbeddingTable | None",
    params: TrackerParams | None = None,
) -> list[TrackletRow]:
    """Track a whole sequence and return all emitted rows.

    Frames must ascend. Every frame between the first and last detection
    frame is stepped, so tracks age through empty frames. Each detection's
    ``embedding_ref`` must resolve into the table; the table row count must
    equal the detection count.
    """
    tracker = MultiObjectTracker(params)
    by_frame = group_by_frame(detections)
    if not by_frame:
        return []
    frames = sorted(by_frame)
    if embeddings is not None and embeddings.count != len(detections):
        frame = _misalignment_frame(by_frame, embeddings.count)
        raise ValueError(
            f"frame {frame}: embedding table has {embeddings.count} rows for "
            f"{len(detections)} detections"
        )

    output: list[TrackletRow] = []
    for frame_id in range(frames[0], frames[-1] + 1):
        frame_dets = by_frame.get(frame_id, [])
        frame_emb = None
        if embeddings is not None:
            refs = []
            for det in frame_dets:
                if det.embedding_ref is None or not (
                    0 <= det.embedding_ref < embeddings.count
                ):
                    raise ValueError(
                        f"frame {frame_id}: embedding row {det.embedding_ref} "
                        f"does not resolve (table has {embeddings.count} rows)"
                    )
                refs.append(det.embedding_ref)
            frame_emb = embeddings.data[refs] if refs else np.zeros((0, embeddings.dim))
        output.extend(tracker.step(frame_dets, frame_emb, frame_id=frame_id))
    return output


def _misalignment_frame(by_frame: dict[int, list[Detection]], table_rows: int) -> int:
    """First frame whose detections run past the embedding table."""
    seen = 0
    last = 0
    for frame_id in sorted(by_frame):
        last = frame_id
        seen += len(by_frame[frame_id])
        if seen > table_rows:
            return frame_id
    return last
