import dataclasses

import numpy as np
import pytest

from imgcloak.detector import (
    ToyDetector,
    TrainConfig,
    generate_corpus,
    greedy_nms,
    train_toy_detector,
)
from imgcloak.detector.types import BoxGeometry, ImageTensor
from imgcloak.errors import InvalidInputError


class TestGreedyNms:
    def test_keeps_highest_of_overlapping_pair(self):
        boxes = np.array([[0, 0, 10, 10], [1, 1, 11, 11], [30, 30, 40, 40]], dtype=float)
        scores = np.array([0.5, 0.9, 0.7])
        assert greedy_nms(boxes, scores, 0.5) == [1, 2]

    def test_tie_breaks_to_lower_index(self):
        boxes = np.array([[0, 0, 10, 10], [0, 0, 10, 10]], dtype=float)
        scores = np.array([0.8, 0.8])
        assert greedy_nms(boxes, scores, 0.5) == [0]

    def test_empty(self):
        assert greedy_nms(np.zeros((0, 4)), np.zeros(0), 0.5) == []


class TestDetectorContracts:
    def test_classify_rows_sum_to_one(self, detector, held_out_scenes):
        image, _ = held_out_scenes[0]
        proposals = detector.propose(image)
        matrix = detector.classify(image, proposals)
        assert matrix.num_proposals == len(proposals)
        np.testing.assert_allclose(matrix.scores.sum(axis=1), 1.0, atol=1e-9)

    def test_detect_deterministic(self, detector, held_out_scenes):
        image, _ = held_out_scenes[1]
        a = detector.detect(image, 0.3)
        b = detector.detect(image, 0.3)
        assert a == b

    def test_detect_scores_sorted_and_above_threshold(self, detector, held_out_scenes):
        image, _ = held_out_scenes[2]
        dets = detector.detect(image, 0.3)
        scores = [d.score for d in dets]
        assert scores == sorted(scores, reverse=True)
        assert all(s >= 0.3 for s in scores)
        assert all(d.category_index != detector.background_index for d in dets)

    def test_oversized_window_sizes_are_skipped(self, detector):
        """Windows larger than the image contribute no candidates."""
        boxes = detector.candidate_windows(16, 16)
        sizes = {round(b[2] - b[0]) for b in boxes}
        assert sizes and all(s <= 16 for s in sizes)

    def test_full_grid_view_covers_candidates(self, detector, held_out_scenes):
        image, _ = held_out_scenes[3]
        grid = detector.full_grid_view()
        proposals = grid.propose(image)
        assert len(proposals) == len(grid.candidate_windows(image.height, image.width))

    def test_objectness_scores_range(self, detector, held_out_scenes):
        image, _ = held_out_scenes[4]
        boxes = detector.candidate_windows(image.height, image.width)[:20]
        scores = detector.objectness_scores(image, boxes)
        assert scores.shape == (20,)
        assert scores.min() >= 0.0 and scores.max() <= 1.0


class TestDetectionQuality:
    def test_recall_and_precision_on_held_out_scenes(self, detector, held_out_scenes):
        """The bundled model must find nearly every object with the right label."""
        found = 0
        total = 0
        for image, anns in held_out_scenes[:60]:
            dets = detector.detect(image, 0.3)
            for box, cat in anns:
                total += 1
                found += any(d.category_index == cat and d.geometry.iou(box) >= 0.5 for d in dets)
        assert found / total >= 0.95

    def test_empty_background_scene_mostly_clean(self, detector):
        from imgcloak.detector.scenes import _background

        rng = np.random.default_rng(42)
        image = ImageTensor(_background(64, 64, rng))
        assert len(detector.detect(image, 0.3)) <= 1


class TestCheckpointIo:
    def test_roundtrip(self, detector, tmp_path):
        path = str(tmp_path / "det.npz")
        detector.save(path)
        loaded = ToyDetector.load(path)
        np.testing.assert_array_equal(loaded.clf_w1, detector.clf_w1)
        np.testing.assert_array_equal(loaded.obj_w2, detector.obj_w2)
        assert loaded.category_names == detector.category_names
        assert loaded.window_sizes == detector.window_sizes

    def test_version_check(self, detector, tmp_path):
        path = str(tmp_path / "det.npz")
        detector.save(path)
        with np.load(path) as data:
            arrays = dict(data)
        arrays["format_version"] = np.int64(99)
        np.savez(path, **arrays)
        with pytest.raises(InvalidInputError, match="version"):
            ToyDetector.load(path)


class TestTrainingValidation:
    def test_empty_corpus_rejected(self):
        with pytest.raises(InvalidInputError):
            train_toy_detector([])

    def test_single_category_rejected(self):
        corpus = generate_corpus(4, seed=0)
        mono = [(img, [(b, 0) for b, _ in anns]) for img, anns in corpus]
        with pytest.raises(InvalidInputError):
            train_toy_detector(mono)

    def test_out_of_range_category_rejected(self):
        corpus = generate_corpus(2, seed=0)
        bad = [(img, [(b, 7) for b, _ in anns]) for img, anns in corpus]
        with pytest.raises(InvalidInputError):
            train_toy_detector(bad)

    def test_tiny_training_run_is_reproducible(self):
        corpus = generate_corpus(6, seed=20)
        config = TrainConfig(seed=3, epochs=2, hidden=8, obj_hidden=4, jitters_per_box=1, backgrounds_per_scene=1, noise_augmentations=0)
        a = train_toy_detector(corpus, config)
        b = train_toy_detector(corpus, config)
        np.testing.assert_array_equal(a.clf_w1, b.clf_w1)
        np.testing.assert_array_equal(a.obj_w1, b.obj_w1)
