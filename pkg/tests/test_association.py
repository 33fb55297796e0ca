import numpy as np
import pytest

from dronetrack.association import (
    INFEASIBLE,
    AppearanceGallery,
    AssociationParams,
    cosine_distance,
    fused_cost,
    iou_match,
    matching_cascade,
    solve_assignment,
)
from dronetrack.geometry import to_xyah
from dronetrack.motion import MotionParams, initiate
from dronetrack.tracker import Track

from conftest import brute_force_assignment, make_detection


def basis(dim, index):
    vec = np.zeros(dim)
    vec[index] = 1.0
    return vec


def make_track(track_id, box, time_since_update=1, class_id=4):
    det = make_detection(1, *box, class_id=class_id)
    track = Track(track_id=track_id, class_id=class_id, motion=initiate(to_xyah(det.box)))
    track.time_since_update = time_since_update
    return track


class TestGallery:
    def test_insert_normalizes(self):
        gallery = AppearanceGallery()
        gallery.add(1, np.array([3.0, 4.0]))
        stored = gallery.embeddings(1)
        assert np.linalg.norm(stored[0]) == pytest.approx(1.0, abs=1e-12)

    def test_budget_evicts_oldest(self):
        gallery = AppearanceGallery(budget=2)
        gallery.add(1, basis(4, 0))
        gallery.add(1, basis(4, 1))
        gallery.add(1, basis(4, 2))
        stored = gallery.embeddings(1)
        assert stored.shape == (2, 4)
        # the oldest (axis 0) is gone
        assert cosine_distance(gallery, 1, basis(4, 0)) == pytest.approx(1.0)
        assert cosine_distance(gallery, 1, basis(4, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_zero_embedding(self):
        gallery = AppearanceGallery()
        with pytest.raises(ValueError):
            gallery.add(1, np.zeros(8))

    def test_empty_gallery_errors(self):
        gallery = AppearanceGallery()
        with pytest.raises(KeyError):
            gallery.embeddings(9)
        with pytest.raises(KeyError):
            cosine_distance(gallery, 9, basis(4, 0))

    def test_discard(self):
        gallery = AppearanceGallery()
        gallery.add(1, basis(4, 0))
        gallery.discard(1)
        assert gallery.size(1) == 0


class TestCosineDistance:
    def test_stored_query_is_zero(self):
        gallery = AppearanceGallery()
        gallery.add(1, basis(8, 3))
        assert cosine_distance(gallery, 1, basis(8, 3)) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_is_one(self):
        gallery = AppearanceGallery()
        gallery.add(1, basis(8, 0))
        assert cosine_distance(gallery, 1, basis(8, 1)) == pytest.approx(1.0)

    def test_diagonal_query_against_two_samples(self):
        # closest of two orthonormal samples to their normalized sum: 1 - 1/sqrt(2)
        gallery = AppearanceGallery()
        gallery.add(1, basis(8, 0))
        gallery.add(1, basis(8, 1))
        query = (basis(8, 0) + basis(8, 1)) / np.sqrt(2.0)
        expected = 1.0 - 1.0 / np.sqrt(2.0)
        assert cosine_distance(gallery, 1, query) == pytest.approx(expected, abs=1e-12)

    def test_range_bounds(self):
        gallery = AppearanceGallery()
        gallery.add(1, basis(4, 0))
        assert cosine_distance(gallery, 1, -basis(4, 0)) == pytest.approx(2.0)


class TestFusedCost:
    def test_gate_overrides_confidence(self):
        params = AssociationParams()
        cost = fused_cost(0.1, params.gate_threshold + 1.0, 0.99, params)
        assert cost == INFEASIBLE

    def test_appearance_gate(self):
        params = AssociationParams(max_app_distance=0.4)
        assert fused_cost(0.41, 0.0, 1.0, params) == INFEASIBLE

    def test_lambda_one_is_pure_appearance(self):
        params = AssociationParams(lambda_app=1.0)
        assert fused_cost(0.2, 0.0, 0.3, params) == 0.2

    def test_arithmetic_example(self):
        params = AssociationParams(lambda_app=0.7)
        assert fused_cost(0.2, 0.0, 0.9, params) == pytest.approx(0.17, abs=1e-12)

    def test_monotone_in_appearance_and_confidence(self):
        params = AssociationParams(lambda_app=0.6)
        grid = np.linspace(0.0, 0.4, 9)
        costs = [fused_cost(d, 0.0, 0.5, params) for d in grid]
        assert all(a <= b for a, b in zip(costs, costs[1:]))
        confs = np.linspace(0.0, 1.0, 9)
        costs = [fused_cost(0.2, 0.0, c, params) for c in confs]
        assert all(a >= b for a, b in zip(costs, costs[1:]))


class TestSolveAssignment:
    def test_single_zero(self):
        assert solve_assignment(np.array([[0.0]])) == ([(0, 0)], [], [])

    def test_two_by_two(self):
        matches, ur, uc = solve_assignment(np.array([[1.0, 2.0], [3.0, 1.0]]))
        assert matches == [(0, 0), (1, 1)]
        assert ur == [] and uc == []

    def test_all_infeasible(self):
        matches, ur, uc = solve_assignment(np.array([[INFEASIBLE]]))
        assert matches == [] and ur == [0] and uc == [0]

    def test_prefers_optimum_over_lexicographic(self):
        matches, _, _ = solve_assignment(np.array([[5.0, 1.0], [1.0, 5.0]]))
        assert matches == [(0, 1), (1, 0)]

    def test_lexicographic_tie_break(self):
        matches, _, _ = solve_assignment(np.ones((2, 2)))
        assert matches == [(0, 0), (1, 1)]
        matches, _, _ = solve_assignment(np.array([[2.0], [2.0]]))
        assert matches == [(0, 0)]

    def test_rectangular_with_gates(self):
        cost = np.array([[INFEASIBLE, 0.4, 0.1], [0.2, INFEASIBLE, INFEASIBLE]])
        matches, ur, uc = solve_assignment(cost)
        assert matches == [(0, 2), (1, 0)]
        assert ur == [] and uc == [1]

    def test_matches_brute_force_on_random_matrices(self):
        # Dyadic cost values keep every sum exact, so equality is meaningful.
        rng = np.random.default_rng(20240501)
        for _ in range(100):
            rows = int(rng.integers(1, 8))
            cols = int(rng.integers(1, 8))
            cost = rng.integers(0, 161, size=(rows, cols)).astype(float) / 16.0
            cost[rng.uniform(size=(rows, cols)) < 0.25] = INFEASIBLE
            matches, _, _ = solve_assignment(cost)
            total = sum(cost[r, c] for r, c in matches)
            card, best = brute_force_assignment(cost)
            assert len(matches) == card
            assert total == best

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            solve_assignment(np.zeros(3))


class TestMatchingCascade:
    def _setup(self, dim=8):
        gallery = AppearanceGallery()
        params = AssociationParams()
        motion = MotionParams()
        return gallery, params, motion

    def test_single_compatible_pair(self):
        gallery, params, motion = self._setup()
        track = make_track(1, (100, 100, 20, 40))
        gallery.add(1, basis(8, 0))
        det = make_detection(2, 100, 100, 20, 40)
        matches, ut, ud = matching_cascade(
            [track], [det], np.array([basis(8, 0)]), gallery, params, motion, max_age=5
        )
        assert matches == [(0, 0)]
        assert ut == [] and ud == []

    def test_recent_track_wins_over_cheaper_old_track(self):
        gallery, params, motion = self._setup()
        fresh = make_track(1, (100, 100, 20, 40), time_since_update=1)
        stale = make_track(2, (100, 100, 20, 40), time_since_update=3)
        # stale's gallery matches the query better (lower cost), but the
        # cascade hands age-1 tracks the detection first
        query = basis(8, 0) * 0.8 + basis(8, 1) * 0.2
        gallery.add(1, basis(8, 0) + 0.4 * basis(8, 1))
        gallery.add(2, query)
        det = make_detection(2, 100, 100, 20, 40)
        matches, ut, ud = matching_cascade(
            [fresh, stale], [det], np.array([query]), gallery, params, motion, max_age=5
        )
        assert matches == [(0, 0)]
        assert ut == [1] and ud == []

    def test_gated_detections_stay_unmatched(self):
        gallery, params, motion = self._setup()
        track = make_track(1, (100, 100, 20, 40))
        gallery.add(1, basis(8, 0))
        det = make_detection(2, 100, 100, 20, 40)
        matches, ut, ud = matching_cascade(
            [track], [det], np.array([basis(8, 1)]), gallery, params, motion, max_age=5
        )
        assert matches == []
        assert ut == [0] and ud == [0]

    def test_detections_used_at_most_once(self, rng):
        gallery, params, motion = self._setup()
        tracks = []
        for i in range(6):
            track = make_track(i + 1, (50 * i, 50, 20, 40), time_since_update=int(rng.integers(1, 4)))
            gallery.add(i + 1, basis(16, i))
            tracks.append(track)
        dets, embs = [], []
        for j in range(4):
            dets.append(make_detection(2, 50 * j + rng.uniform(-3, 3), 50, 20, 40))
            embs.append(basis(16, j))
        matches, ut, ud = matching_cascade(
            tracks, dets, np.array(embs), gallery, params, motion, max_age=5
        )
        used_tracks = [r for r, _ in matches]
        used_dets = [c for _, c in matches]
        assert len(set(used_tracks)) == len(used_tracks)
        assert len(set(used_dets)) == len(used_dets)
        assert set(used_tracks) | set(ut) == set(range(6))
        assert set(used_dets) | set(ud) == set(range(4))

    def test_lambda_one_matches_pure_appearance_assignment(self, rng):
        gallery = AppearanceGallery()
        params = AssociationParams(lambda_app=1.0)
        motion = MotionParams()
        tracks, embs, dets = [], [], []
        for i in range(5):
            tracks.append(make_track(i + 1, (80 * i, 60, 24, 48), time_since_update=1))
            gallery.add(i + 1, basis(16, i))
        order = rng.permutation(5)
        for j in order:
            jitter = rng.uniform(-2, 2, size=2)
            dets.append(
                make_detection(
                    2, 80 * j + jitter[0], 60 + jitter[1], 24, 48,
                    confidence=float(rng.uniform(0.3, 1.0)),
                )
            )
            embs.append(basis(16, int(j)))
        cascade_matches, _, _ = matching_cascade(
            tracks, dets, np.array(embs), gallery, params, motion, max_age=5
        )

        # pure appearance: same gates, cost = d_app only
        d_app = gallery.distance_matrix([t.track_id for t in tracks], np.array(embs))
        from dronetrack.motion import gating_distance

        cost = np.where(d_app > params.max_app_distance, INFEASIBLE, d_app)
        for row, track in enumerate(tracks):
            gate = gating_distance(track.motion, [to_xyah(d.box) for d in dets], motion)
            cost[row, gate > params.gate_threshold] = INFEASIBLE
        pure_matches, _, _ = solve_assignment(cost)
        assert sorted(cascade_matches) == sorted(pure_matches)


class TestIoUMatch:
    def test_identical_box_matches(self):
        track = make_track(1, (10, 10, 30, 60))
        det = make_detection(2, 10, 10, 30, 60)
        matches, ut, ud = iou_match([track], [det], 0.7)
        assert matches == [(0, 0)]

    def test_low_overlap_gated(self):
        # overlap width 10/3 gives IoU exactly 0.2, cost 0.8 > 0.7
        track = make_track(1, (0, 0, 10, 10))
        det = make_detection(2, 10 - 10 / 3, 0, 10, 10)
        matches, ut, ud = iou_match([track], [det], 0.7)
        assert matches == []
        assert ut == [0] and ud == [0]

    def test_disjoint_never_matches(self):
        track = make_track(1, (0, 0, 10, 10))
        det = make_detection(2, 500, 500, 10, 10)
        matches, _, _ = iou_match([track], [det], 0.99)
        assert matches == []

    def test_empty_inputs(self):
        assert iou_match([], [], 0.7) == ([], [], [])
        track = make_track(1, (0, 0, 10, 10))
        assert iou_match([track], [], 0.7) == ([], [0], [])
