import numpy as np
import pytest

from imgcloak.attack import (
    MAX_EPSILON,
    AttackConfig,
    AttackTrace,
    NonSensitiveSet,
    TraceEntry,
    clamp_step,
    hide_all,
    hide_sensitive,
    select_nonsensitive_set,
)
from imgcloak.detector.types import BoxGeometry, Detection, ImageTensor
from imgcloak.errors import AttackError, InvalidInputError


class TestAttackConfig:
    def test_defaults(self):
        config = AttackConfig()
        assert config.step_size == config.epsilon
        assert config.total_epsilon is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": 0.0},
            {"epsilon": MAX_EPSILON + 1e-6},
            {"threshold": 0.0},
            {"threshold": 1.0},
            {"max_iterations": 0},
            {"mode": "disguise"},
            {"step_size": 0.0},
            {"epsilon": 0.01, "step_size": 0.02},
            {"epsilon": 0.02, "total_epsilon": 0.01},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            AttackConfig(**kwargs)


class TestNonSensitiveSet:
    def test_round_robin_cycles_in_order(self):
        targets = NonSensitiveSet((1, 3))
        assert [targets.target_for_iteration(i) for i in range(1, 6)] == [1, 3, 1, 3, 1]

    def test_empty_rejected(self):
        with pytest.raises(AttackError):
            NonSensitiveSet(())

    def test_duplicates_rejected(self):
        with pytest.raises(InvalidInputError):
            NonSensitiveSet((1, 1))


class TestSelectNonSensitiveSet:
    def _det(self, cat):
        return Detection(BoxGeometry(0, 0, 5, 5), cat, 0.9)

    def test_absent_categories_ascending(self):
        got = select_nonsensitive_set([self._det(0), self._det(2)], 4)
        assert got.labels == (1, 3)

    def test_no_detections_yields_all(self):
        assert select_nonsensitive_set([], 3).labels == (0, 1, 2)

    def test_every_category_detected_raises(self):
        with pytest.raises(AttackError):
            select_nonsensitive_set([self._det(0), self._det(1)], 2)

    def test_category_count_validated(self):
        with pytest.raises(InvalidInputError):
            select_nonsensitive_set([], 1)


class TestClampStep:
    def test_upper_clamp(self):
        prev = ImageTensor(np.full((16, 16, 3), 0.5))
        cand = ImageTensor(np.full((16, 16, 3), 0.9))
        out = clamp_step(cand, prev, 0.1)
        np.testing.assert_allclose(out.pixels, 0.6)

    def test_clamped_into_unit_range(self):
        prev = ImageTensor(np.full((16, 16, 3), 0.005))
        cand = prev.pixels - 0.3  # would leave [0, 1]
        out = np.clip(np.clip(cand, prev.pixels - 0.1, prev.pixels + 0.1), 0.0, 1.0)
        np.testing.assert_allclose(out, 0.0)
        got = clamp_step(ImageTensor(np.clip(cand, 0.0, 1.0)), prev, 0.1)
        np.testing.assert_allclose(got.pixels, 0.0)

    def test_inside_ball_untouched(self, rng):
        prev = ImageTensor(0.4 + 0.2 * rng.random((16, 16, 3)))
        cand = ImageTensor(np.clip(prev.pixels + 0.01, 0.0, 1.0))
        out = clamp_step(cand, prev, 0.05)
        np.testing.assert_array_equal(out.pixels, cand.pixels)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            clamp_step(ImageTensor(np.zeros((16, 16, 3))), ImageTensor(np.zeros((16, 17, 3))), 0.1)


class TestTrace:
    def test_strictly_increasing_enforced(self):
        entries = (TraceEntry(1, 0, 1.0, 0.5), TraceEntry(1, 0, 0.9, 0.4))
        with pytest.raises(InvalidInputError):
            AttackTrace(entries)

    def test_s_max_range_enforced(self):
        with pytest.raises(InvalidInputError):
            AttackTrace((TraceEntry(1, 0, 1.0, 1.5),))


class TestHideAll:
    def test_early_exit_identity(self, detector):
        """A scene with nothing to hide comes back bit-identical in 0 iterations."""
        rng = np.random.default_rng(31)
        image = ImageTensor(np.clip(0.45 + 0.02 * rng.standard_normal((32, 32, 3)), 0, 1))
        assert detector.detect(image, 0.3) == []
        result = hide_all(detector, image, AttackConfig())
        assert result.succeeded
        assert result.iterations_used == 0
        assert result.trace.entries == ()
        np.testing.assert_array_equal(result.adversarial_image.pixels, image.pixels)

    def test_hides_a_scene_and_respects_budget(self, detector, held_out_scenes):
        image, _ = held_out_scenes[10]
        config = AttackConfig(epsilon=8 / 255, record_iterates=True)
        result = hide_all(detector, image, config)
        assert result.succeeded
        assert result.final_detections == ()
        assert detector.detect(result.adversarial_image, 0.3) == []
        # per-step and cumulative L-infinity invariants, exact by construction
        iterates = result.iterates
        assert len(iterates) == result.iterations_used + 1
        for prev, cur in zip(iterates, iterates[1:]):
            # one float ulp of slack: the clamp bound prev + eps is itself rounded
            assert np.abs(cur - prev).max() <= config.epsilon + 1e-15
            assert cur.min() >= 0.0 and cur.max() <= 1.0

    def test_total_budget_clamp_optional(self, detector, held_out_scenes):
        image, _ = held_out_scenes[11]
        config = AttackConfig(epsilon=8 / 255, total_epsilon=8 / 255)
        result = hide_all(detector, image, config)
        delta = np.abs(result.adversarial_image.pixels - image.pixels).max()
        assert delta <= config.total_epsilon + 1e-12

    def test_trace_monotone_iterations(self, detector, held_out_scenes):
        image, _ = held_out_scenes[12]
        result = hide_all(detector, image, AttackConfig(epsilon=8 / 255))
        idxs = [e.iteration for e in result.trace.entries]
        assert idxs == list(range(1, result.iterations_used + 1))

    def test_mode_mismatch_rejected(self, detector, held_out_scenes):
        image, _ = held_out_scenes[0]
        with pytest.raises(InvalidInputError):
            hide_all(detector, image, AttackConfig(mode="sensitive"))


class TestHideSensitive:
    def test_hides_only_sensitive_category(self, detector, held_out_scenes):
        image, _ = held_out_scenes[13]
        config = AttackConfig(epsilon=8 / 255, mode="sensitive")
        result = hide_sensitive(detector, image, {0}, 2, config)
        assert result.succeeded
        cats = {d.category_index for d in detector.detect(result.adversarial_image, 0.3)}
        assert 0 not in cats

    def test_empty_sensitive_set_is_identity(self, detector, held_out_scenes):
        image, _ = held_out_scenes[14]
        config = AttackConfig(mode="sensitive")
        result = hide_sensitive(detector, image, set(), 2, config)
        assert result.iterations_used == 0
        np.testing.assert_array_equal(result.adversarial_image.pixels, image.pixels)
        assert result.final_detections == tuple(detector.detect(image, 0.3))

    def test_absent_sensitive_category_is_identity(self, detector):
        image = ImageTensor(np.full((32, 32, 3), 0.45))
        assert detector.detect(image, 0.3) == []
        result = hide_sensitive(detector, image, {0}, 2, AttackConfig(mode="sensitive"))
        assert result.succeeded and result.iterations_used == 0
        np.testing.assert_array_equal(result.adversarial_image.pixels, image.pixels)

    @pytest.mark.parametrize(
        "sensitive,target",
        [({9}, 2), ({0}, 9), ({0, 2}, 2), ({-1}, 2)],
    )
    def test_validation(self, detector, held_out_scenes, sensitive, target):
        image, _ = held_out_scenes[0]
        with pytest.raises(InvalidInputError):
            hide_sensitive(detector, image, sensitive, target, AttackConfig(mode="sensitive"))

    def test_mode_mismatch_rejected(self, detector, held_out_scenes):
        image, _ = held_out_scenes[0]
        with pytest.raises(InvalidInputError):
            hide_sensitive(detector, image, {0}, 2, AttackConfig())


class TestDeterminism:
    def test_repeat_runs_identical(self, detector, held_out_scenes):
        image, _ = held_out_scenes[15]
        config = AttackConfig(epsilon=8 / 255)
        a = hide_all(detector, image, config)
        b = hide_all(detector, image, config)
        np.testing.assert_array_equal(a.adversarial_image.pixels, b.adversarial_image.pixels)
        assert a.trace == b.trace
