"""Finite-difference verification of the analytic image gradient."""

import numpy as np
import pytest

from imgcloak.detector import generate_corpus
from imgcloak.detector.types import ImageTensor
from imgcloak.errors import InvalidInputError

FD_STEP = 1e-3
REL_TOL = 1e-3
PROBES = 100


def _central_difference(detector, pixels, proposals, target, y, x, c):
    lo = pixels.copy()
    hi = pixels.copy()
    lo[y, x, c] -= FD_STEP
    hi[y, x, c] += FD_STEP
    lo_loss, _ = detector.loss_and_gradient(ImageTensor(np.clip(lo, 0.0, 1.0)), proposals, target)
    hi_loss, _ = detector.loss_and_gradient(ImageTensor(np.clip(hi, 0.0, 1.0)), proposals, target)
    return (hi_loss - lo_loss) / (2 * FD_STEP)


class TestFiniteDifference:
    @pytest.mark.parametrize("target", [0, 3])
    def test_gradient_matches_central_differences(self, detector, target):
        """On a 32x32 probe image, at least 99/100 sampled pixels must agree
        with a central difference (step 1e-3) to relative error < 1e-3."""
        rng = np.random.default_rng(123)
        # keep pixels away from 0/1 so the +-1e-3 probes never clip
        pixels = 0.2 + 0.6 * rng.random((32, 32, 3))
        image = ImageTensor(pixels)
        grid = detector.full_grid_view()
        proposals = grid.propose(image)[:24]
        _, grad = detector.loss_and_gradient(image, proposals, target)

        ys = rng.integers(0, 32, PROBES)
        xs = rng.integers(0, 32, PROBES)
        cs = rng.integers(0, 3, PROBES)
        good = 0
        for y, x, c in zip(ys, xs, cs):
            numeric = _central_difference(detector, pixels, proposals, target, y, x, c)
            analytic = grad[y, x, c]
            scale = max(abs(numeric), abs(analytic), 1e-8)
            good += abs(numeric - analytic) / scale < REL_TOL
        assert good >= 99

    def test_gradient_on_real_scene_pixels(self, detector):
        """Repeat the probe on a rendered scene restricted to one object window."""
        image, anns = generate_corpus(1, seed=505, full_kind=True)[0]
        proposals = [
            p
            for p in detector.full_grid_view().propose(image)
            if p.geometry.iou(anns[0][0]) > 0.4
        ][:8]
        assert proposals
        target = detector.background_index
        _, grad = detector.loss_and_gradient(image, proposals, target)
        rng = np.random.default_rng(9)
        # probe only pixels with nontrivial gradient and headroom for the step
        ys, xs, cs = np.nonzero(np.abs(grad) > 1e-6)
        interior = (image.pixels[ys, xs, cs] > 2 * FD_STEP) & (
            image.pixels[ys, xs, cs] < 1 - 2 * FD_STEP
        )
        ys, xs, cs = ys[interior], xs[interior], cs[interior]
        picks = rng.choice(len(ys), size=min(40, len(ys)), replace=False)
        good = 0
        for i in picks:
            numeric = _central_difference(
                detector, image.pixels.copy(), proposals, target, ys[i], xs[i], cs[i]
            )
            analytic = grad[ys[i], xs[i], cs[i]]
            scale = max(abs(numeric), abs(analytic), 1e-8)
            # high-contrast scene pixels sit on steeper curvature, so the
            # central-difference truncation term dominates; allow 5e-2 here
            good += abs(numeric - analytic) / scale < 5e-2
        assert good == len(picks)


class TestLossContract:
    def test_requires_proposals(self, detector, rng):
        image = ImageTensor(rng.random((32, 32, 3)))
        with pytest.raises(InvalidInputError):
            detector.loss_and_gradient(image, [], 0)

    def test_target_label_validated(self, detector, rng):
        image = ImageTensor(rng.random((32, 32, 3)))
        proposals = detector.full_grid_view().propose(image)[:4]
        with pytest.raises(InvalidInputError):
            detector.loss_and_gradient(image, proposals, 7)

    def test_descending_along_negative_gradient(self, detector, rng):
        image = ImageTensor(0.2 + 0.6 * rng.random((32, 32, 3)))
        proposals = detector.full_grid_view().propose(image)[:16]
        loss, grad = detector.loss_and_gradient(image, proposals, 3)
        stepped = ImageTensor(np.clip(image.pixels - 1e-4 * np.sign(grad), 0.0, 1.0))
        new_loss, _ = detector.loss_and_gradient(stepped, proposals, 3)
        assert new_loss < loss
