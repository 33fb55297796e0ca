import numpy as np
import pytest

from dronetrack.io_formats import EmbeddingTable
from dronetrack.synth import SynthConfig, generate
from dronetrack.tracker import (
    MultiObjectTracker,
    TrackStatus,
    TrackerParams,
    run_sequence,
)

from conftest import make_detection


def basis(dim, index):
    vec = np.zeros(dim)
    vec[index] = 1.0
    return vec


def emb_rows(*indices, dim=8):
    return np.array([basis(dim, i) for i in indices])


class TestLifecycle:
    def test_first_detection_spawns_tentative_silently(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=3))
        emitted = tracker.step([make_detection(1, 10, 10, 20, 40)], emb_rows(0))
        assert emitted == []
        assert len(tracker.tracks) == 1
        assert tracker.tracks[0].track_id == 1
        assert tracker.tracks[0].status is TrackStatus.TENTATIVE

    def test_confirmation_after_n_init_hits(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=3))
        for frame in (1, 2):
            assert tracker.step([make_detection(frame, 10, 10, 20, 40)], emb_rows(0)) == []
        emitted = tracker.step([make_detection(3, 10, 10, 20, 40)], emb_rows(0))
        assert [row.track_id for row in emitted] == [1]
        assert tracker.tracks[0].status is TrackStatus.CONFIRMED

    def test_n_init_one_emits_immediately(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=1))
        emitted = tracker.step([make_detection(1, 10, 10, 20, 40)], emb_rows(0))
        assert [row.track_id for row in emitted] == [1]

    def test_tentative_deleted_after_single_miss(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=3))
        tracker.step([make_detection(1, 10, 10, 20, 40)], emb_rows(0))
        tracker.step([], None, frame_id=2)
        assert tracker.tracks == []

    def test_confirmed_retires_after_max_age(self):
        params = TrackerParams(n_init=1, max_age=3)
        tracker = MultiObjectTracker(params)
        tracker.step([make_detection(1, 10, 10, 20, 40)], emb_rows(0))
        for frame in range(2, 5):  # misses 1..3: still alive
            tracker.step([], None, frame_id=frame)
            assert len(tracker.tracks) == 1
        tracker.step([], None, frame_id=5)  # miss 4 exceeds max_age
        assert tracker.tracks == []

    def test_empty_frame_ages_tracks(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=1))
        tracker.step([make_detection(1, 10, 10, 20, 40)], emb_rows(0))
        tracker.step([], None, frame_id=2)
        assert tracker.tracks[0].time_since_update == 1


class TestStepValidation:
    def test_frame_regression_rejected(self):
        tracker = MultiObjectTracker()
        tracker.step([make_detection(5, 10, 10, 20, 40)], emb_rows(0))
        with pytest.raises(ValueError):
            tracker.step([make_detection(5, 10, 10, 20, 40)], emb_rows(0))
        with pytest.raises(ValueError):
            tracker.step([make_detection(3, 10, 10, 20, 40)], emb_rows(0))

    def test_mixed_frame_ids_rejected(self):
        tracker = MultiObjectTracker()
        with pytest.raises(ValueError):
            tracker.step(
                [make_detection(1, 0, 0, 5, 5), make_detection(2, 9, 9, 5, 5)],
                emb_rows(0, 1),
            )

    def test_empty_frame_requires_frame_id(self):
        tracker = MultiObjectTracker()
        with pytest.raises(ValueError):
            tracker.step([], None)

    def test_embedding_row_count_must_match(self):
        tracker = MultiObjectTracker()
        with pytest.raises(ValueError):
            tracker.step([make_detection(1, 0, 0, 5, 5)], emb_rows(0, 1))


class TestClassAwareness:
    def test_no_cross_class_match_even_at_perfect_overlap(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=1))
        tracker.step([make_detection(1, 10, 10, 20, 40, class_id=1)], emb_rows(0))
        emitted = tracker.step([make_detection(2, 10, 10, 20, 40, class_id=4)], emb_rows(0))
        # the pedestrian track is not continued by the car detection: a new
        # id spawns and the pedestrian track ages unmatched
        assert [row.track_id for row in emitted] == [2]
        classes = {t.class_id: t.track_id for t in tracker.tracks}
        assert classes == {1: 1, 4: 2}
        ped = next(t for t in tracker.tracks if t.class_id == 1)
        assert ped.time_since_update == 1

    def test_ids_unique_across_classes(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=1))
        emitted = tracker.step(
            [
                make_detection(1, 0, 0, 10, 20, class_id=1),
                make_detection(1, 100, 0, 30, 30, class_id=4),
            ],
            emb_rows(0, 1),
        )
        assert sorted(row.track_id for row in emitted) == [1, 2]
        assert {t.class_id for t in tracker.tracks} == {1, 4}


class TestConfidenceFloor:
    def test_low_confidence_detections_ignored(self):
        params = TrackerParams(n_init=1, confidence_floor=0.5)
        tracker = MultiObjectTracker(params)
        emitted = tracker.step(
            [make_detection(1, 0, 0, 10, 20, confidence=0.3)], emb_rows(0)
        )
        assert emitted == []
        assert tracker.tracks == []

    def test_floor_off_by_default(self):
        tracker = MultiObjectTracker(TrackerParams(n_init=1))
        emitted = tracker.step(
            [make_detection(1, 0, 0, 10, 20, confidence=0.01)], emb_rows(0)
        )
        assert len(emitted) == 1


class TestOcclusionRecovery:
    def run_gap(self, gap, max_age):
        """Track one identity; hide it for `gap - 1` frames after frame 5."""
        params = TrackerParams(n_init=1, max_age=max_age)
        tracker = MultiObjectTracker(params)
        ids_seen = []
        reappear = 5 + gap
        for frame in range(1, reappear + 1):
            visible = frame <= 5 or frame == reappear
            x = 10.0 + 2.0 * (frame - 1)
            dets = [make_detection(frame, x, 50, 20, 40)] if visible else []
            embs = emb_rows(0) if visible else None
            emitted = tracker.step(dets, embs, frame_id=frame)
            ids_seen.extend(row.track_id for row in emitted)
        return ids_seen

    def test_recovers_within_max_age(self):
        ids = self.run_gap(gap=5, max_age=5)
        assert set(ids) == {1}

    def test_new_id_beyond_max_age(self):
        ids = self.run_gap(gap=7, max_age=5)
        assert ids[-1] == 2
        assert set(ids) == {1, 2}


class TestRunSequence:
    def make_stream(self):
        detections = []
        for frame in range(1, 9):
            detections.append(
                make_detection(frame, 10.0 + frame, 10, 20, 40, embedding_ref=len(detections))
            )
        table = EmbeddingTable(dim=8, data=np.tile(basis(8, 0), (len(detections), 1)))
        return detections, table

    def test_emits_after_confirmation(self):
        detections, table = self.make_stream()
        rows = run_sequence(detections, table, TrackerParams(n_init=3))
        assert [r.frame_id for r in rows] == list(range(3, 9))
        assert {r.track_id for r in rows} == {1}

    def test_deterministic(self):
        config = SynthConfig(seed=11, num_identities=4, frames=60, detection_noise=1.0, miss_probability=0.05)
        result = generate(config)
        first = run_sequence(result.detections, result.embeddings)
        second = run_sequence(result.detections, result.embeddings)
        assert first == second

    def test_emitted_rows_bounded_by_detections(self):
        config = SynthConfig(seed=3, num_identities=5, frames=50, miss_probability=0.1)
        result = generate(config)
        rows = run_sequence(result.detections, result.embeddings)
        per_frame_rows = {}
        for row in rows:
            per_frame_rows[row.frame_id] = per_frame_rows.get(row.frame_id, 0) + 1
        per_frame_dets = {}
        for det in result.detections:
            per_frame_dets[det.frame_id] = per_frame_dets.get(det.frame_id, 0) + 1
        for frame, count in per_frame_rows.items():
            assert count <= per_frame_dets.get(frame, 0)

    def test_id_per_frame_unique(self):
        config = SynthConfig(seed=5, num_identities=5, frames=40)
        result = generate(config)
        rows = run_sequence(result.detections, result.embeddings)
        seen = set()
        for row in rows:
            key = (row.frame_id, row.track_id)
            assert key not in seen
            seen.add(key)

    def test_noiseless_synthetic_keeps_five_ids(self):
        config = SynthConfig(seed=7, num_identities=5, frames=100)
        result = generate(config)
        rows = run_sequence(result.detections, result.embeddings)
        assert len({r.track_id for r in rows}) == 5

    def test_embedding_table_misalignment_names_frame(self):
        detections, table = self.make_stream()
        short = EmbeddingTable(dim=8, data=table.data[:5])
        with pytest.raises(ValueError, match="frame 6"):
            run_sequence(detections, short)

    def test_runs_without_embeddings(self):
        detections, _ = self.make_stream()
        rows = run_sequence(detections, None, TrackerParams(n_init=2))
        assert {r.track_id for r in rows} == {1}

    def test_empty_stream(self):
        assert run_sequence([], None) == []
