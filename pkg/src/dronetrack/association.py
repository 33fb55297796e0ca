"""Appearance galleries, fused association costs, and assignment solving.

Track-to-detection association combines three signals: cosine distance
against a per-track gallery of appearance embeddings, a Mahalanobis motion
gate, and the detector confidence fused into the final cost. Matching is
solved exactly (minimum-cost bipartite matching over the feasible entries),
either in a single shot or through the age-ordered matching cascade.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detection import Detection
from .geometry import iou_matrix, to_xyah
from .motion import CHI2INV95, MotionParams, gating_distance

__all__ = [
    "INFEASIBLE",
    "AppearanceGallery",
    "AssociationParams",
    "cosine_distance",
    "fused_cost",
    "solve_assignment",
    "matching_cascade",
    "iou_match",
]

# Sentinel cost for gated (never-matchable) entries.
INFEASIBLE = float("inf")

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class AssociationParams:
    """Knobs for the fused association cost.

    ``lambda_app`` weighs appearance distance against (1 - detector
    confidence); ``gate_threshold`` bounds the squared Mahalanobis motion
    distance (0.95 chi-square quantile, 4 dof); ``max_app_distance`` hard-gates
    on cosine distance; ``max_iou_distance`` gates the IoU fallback.
    """

    lambda_app: float = 0.7
    gate_threshold: float = CHI2INV95[4]
    max_app_distance: float = 0.4
    max_iou_distance: float = 0.7
    gallery_budget: int = 100

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_app <= 1.0:
            raise ValueError("lambda_app must be in [0, 1]")
        if self.gate_threshold <= 0 or self.max_app_distance <= 0:
            raise ValueError("gates must be positive")
        if not 0.0 <= self.max_iou_distance <= 1.0:
            raise ValueError("max_iou_distance must be in [0, 1]")
        if self.gallery_budget < 1:
            raise ValueError("gallery_budget must be >= 1")


class AppearanceGallery:
    """Per-track ring buffer of L2-normalized appearance embeddings.

    At most ``budget`` embeddings are retained per track; the oldest are
    evicted first.
    """

    def __init__(self, budget: int = 100):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.budget = budget
        self._samples: OrderedDict[int, deque] = OrderedDict()

    def add(self, track_id: int, embedding: np.ndarray) -> None:
        vec = np.asarray(embedding, dtype=float).ravel()
        norm = np.linalg.norm(vec)
        if not np.isfinite(norm) or norm < _NORM_EPS:
            raise ValueError("embedding must be finite and nonzero")
        buf = self._samples.setdefault(track_id, deque(maxlen=self.budget))
        buf.append(vec / norm)

    def discard(self, track_id: int) -> None:
        self._samples.pop(track_id, None)

    def size(self, track_id: int) -> int:
        return len(self._samples.get(track_id, ()))

    def embeddings(self, track_id: int) -> np.ndarray:
        if track_id not in self._samples or not self._samples[track_id]:
            raise KeyError(f"track {track_id} has no stored embeddings")
        return np.stack(list(self._samples[track_id]), axis=0)

    def distance_matrix(self, track_ids: Sequence[int], queries: np.ndarray) -> np.ndarray:
        """Cosine distances, one row per track, one column per query."""
        queries = np.asarray(queries, dtype=float).reshape(len(queries), -1)
        norms = np.linalg.norm(queries, axis=1, keepdims=True)
        if (norms < _NORM_EPS).any():
            raise ValueError("queries must be nonzero")
        unit = queries / norms
        out = np.empty((len(track_ids), unit.shape[0]))
        for row, tid in enumerate(track_ids):
            stored = self.embeddings(tid)
            out[row] = 1.0 - (stored @ unit.T).max(axis=0)
        return out


def cosine_distance(gallery: AppearanceGallery, track_id: int, embedding: np.ndarray) -> float:
    """Smallest cosine distance between a query and a track's stored samples.

    The query is normalized; the result is ``1 - max dot`` and lies in [0, 2].
    """
    return float(gallery.distance_matrix([track_id], [np.asarray(embedding)])[0, 0])


def fused_cost(
    d_app: float,
    gate_dist: float,
    det_confidence: float,
    params: AssociationParams = AssociationParams(),
) -> float:
    """Confidence-fused association cost for one track-detection pair.

    Hard gates make the pair INFEASIBLE when the motion gate or the
    appearance gate fails; otherwise the cost is the convex combination
    ``lambda_app * d_app + (1 - lambda_app) * (1 - confidence)``, so a
    marginal appearance match can still win when the detector is confident.
    """
    if gate_dist > params.gate_threshold or d_app > params.max_app_distance:
        return INFEASIBLE
    return params.lambda_app * d_app + (1.0 - params.lambda_app) * (1.0 - det_confidence)


def _optimum(cost: np.ndarray) -> tuple[int, float]:
    """(cardinality, total cost) of the best feasible matching.

    Cardinality is maximized first, then cost minimized. Infeasible entries
    are replaced by a value large enough that using one can never pay off.
    """
    if cost.size == 0:
        return 0, 0.0
    feasible = np.isfinite(cost)
    if not feasible.any():
        return 0, 0.0
    big = 2.0 * float(np.abs(cost[feasible]).sum()) + 1.0
    padded = np.where(feasible, cost, big)
    rows, cols = linear_sum_assignment(padded)
    keep = feasible[rows, cols]
    return int(keep.sum()), float(cost[rows[keep], cols[keep]].sum())


def solve_assignment(cost) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Exact minimum-cost bipartite matching over the feasible entries.

    Among all matchings that avoid INFEASIBLE entries, the result maximizes
    the number of matched pairs, then minimizes total cost, then is the
    lexicographically smallest (row, col) sequence among the optima.

    Returns:
        (matches sorted by row, unmatched row indices, unmatched col indices).
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-dimensional")
    n_rows, n_cols = cost.shape

    matches: list[tuple[int, int]] = []
    target_k, target_cost = _optimum(cost)
    if target_k > 0:
        tol = 1e-9 * max(1.0, abs(target_cost))
        free_cols = list(range(n_cols))
        need_k, need_cost = target_k, target_cost
        for row in range(n_rows):
            if need_k == 0:
                break
            chosen = None
            for col in free_cols:
                entry = cost[row, col]
                if not np.isfinite(entry):
                    continue
                rest = [c for c in free_cols if c != col]
                sub_k, sub_cost = _optimum(cost[np.ix_(range(row + 1, n_rows), rest)])
                if sub_k == need_k - 1 and entry + sub_cost <= need_cost + tol:
                    chosen = col
                    break
            if chosen is None:
                continue
            matches.append((row, chosen))
            free_cols.remove(chosen)
            need_k -= 1
            need_cost -= cost[row, chosen]

    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    unmatched_rows = [r for r in range(n_rows) if r not in matched_rows]
    unmatched_cols = [c for c in range(n_cols) if c not in matched_cols]
    return matches, unmatched_rows, unmatched_cols


def _fused_cost_matrix(
    tracks,
    detections: Sequence[Detection],
    embeddings: np.ndarray,
    gallery: AppearanceGallery,
    params: AssociationParams,
    motion_params: MotionParams,
) -> np.ndarray:
    measurements = [to_xyah(det.box) for det in detections]
    confidences = np.array([det.confidence for det in detections])
    d_app = gallery.distance_matrix([t.track_id for t in tracks], embeddings)
    cost = np.empty((len(tracks), len(detections)))
    for row, track in enumerate(tracks):
        gate = gating_distance(track.motion, measurements, motion_params)
        infeasible = (gate > params.gate_threshold) | (
            d_app[row] > params.max_app_distance
        )
        fused = params.lambda_app * d_app[row] + (1.0 - params.lambda_app) * (
            1.0 - confidences
        )
        cost[row] = np.where(infeasible, INFEASIBLE, fused)
    return cost


def matching_cascade(
    tracks,
    detections: Sequence[Detection],
    embeddings: np.ndarray,
    gallery: AppearanceGallery,
    params: AssociationParams = AssociationParams(),
    motion_params: MotionParams = MotionParams(),
    max_age: int = 30,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Associate tracks to detections in order of track recency.

    Tracks are grouped by ``time_since_update``; age-1 tracks are matched
    first (against all detections), then age-2 tracks compete only for the
    leftovers, and so on up to ``max_age``. Each group is solved exactly with
    the fused cost. Tracks need ``track_id``, ``motion`` and
    ``time_since_update`` attributes; ``embeddings`` rows align with
    ``detections``.

    Returns:
        (matches, unmatched track indices, unmatched detection indices),
        all indices into the input sequences.
    """
    embeddings = np.asarray(embeddings, dtype=float)
    if len(detections) != embeddings.shape[0]:
        raise ValueError("one embedding row per detection is required")

    matches: list[tuple[int, int]] = []
    unmatched_dets = list(range(len(detections)))
    for age in range(1, max_age + 1):
        if not unmatched_dets:
            break
        track_idx = [i for i, t in enumerate(tracks) if t.time_since_update == age]
        if not track_idx:
            continue
        cost = _fused_cost_matrix(
            [tracks[i] for i in track_idx],
            [detections[j] for j in unmatched_dets],
            embeddings[unmatched_dets],
            gallery,
            params,
            motion_params,
        )
        sub_matches, _, sub_unmatched = solve_assignment(cost)
        matches.extend(
            (track_idx[r], unmatched_dets[c]) for r, c in sub_matches
        )
        unmatched_dets = [unmatched_dets[c] for c in sub_unmatched]

    matched_tracks = {r for r, _ in matches}
    unmatched_tracks = [i for i in range(len(tracks)) if i not in matched_tracks]
    return matches, unmatched_tracks, unmatched_dets


def iou_match(
    tracks,
    detections: Sequence[Detection],
    max_iou_distance: float = 0.7,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Fallback association on 1 - IoU between predicted and detected boxes.

    Entries with cost above ``max_iou_distance`` are infeasible. Tracks need
    a ``motion`` attribute carrying the predicted state.
    """
    if not tracks or not detections:
        return [], list(range(len(tracks))), list(range(len(detections)))

    det_boxes = np.array([d.box.to_tlwh() for d in detections], dtype=float)
    track_boxes = np.zeros((len(tracks), 4))
    valid = np.ones(len(tracks), dtype=bool)
    for i, track in enumerate(tracks):
        x, y, aspect, height = track.motion.mean[:4]
        if height <= 0 or aspect <= 0:
            valid[i] = False
            continue
        track_boxes[i] = (
            x - aspect * height / 2.0,
            y - height / 2.0,
            aspect * height,
            height,
        )

    cost = 1.0 - iou_matrix(track_boxes, det_boxes)
    cost[~valid] = INFEASIBLE
    cost[cost > max_iou_distance] = INFEASIBLE
    return solve_assignment(cost)
