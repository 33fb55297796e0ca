"""Shared test oracles and builders."""

import itertools

import numpy as np
import pytest

from dronetrack.detection import Detection
from dronetrack.geometry import BoundingBox


def brute_force_assignment(cost: np.ndarray) -> tuple[int, float]:
    """Exhaustive matching optimum: max cardinality, then min total cost.

    Enumerates every injective assignment of the smaller side and scores only
    the finite entries, so it is independent of any solver implementation.
    """
    cost = np.asarray(cost, dtype=float)
    rows, cols = cost.shape
    if rows > cols:
        cost = cost.T
        rows, cols = cols, rows
    best_card, best_total = 0, 0.0
    for perm in itertools.permutations(range(cols), rows):
        pairs = [(r, c) for r, c in enumerate(perm) if np.isfinite(cost[r, c])]
        card = len(pairs)
        total = sum(cost[r, c] for r, c in pairs)
        if card > best_card or (card == best_card and total < best_total):
            best_card, best_total = card, total
    return best_card, best_total


def make_detection(
    frame: int,
    left: float,
    top: float,
    width: float,
    height: float,
    class_id: int = 4,
    confidence: float = 1.0,
    embedding_ref: int | None = None,
) -> Detection:
    return Detection(
        frame_id=frame,
        box=BoundingBox(left, top, width, height),
        class_id=class_id,
        confidence=confidence,
        embedding_ref=embedding_ref,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
