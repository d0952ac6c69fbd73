"""Privacy and image-quality metrics.

Privacy metrics summarize batches of per-image outcomes: success rates count
images whose privacy goal held, leakage rates count surviving detections.
Quality metrics (PSNR, SSIM) compare an adversarial or processed image against
its original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detector.types import BoxGeometry, Detection, ImageTensor
from .errors import InvalidInputError, UndefinedMetricError

DEGENERATE_DENOMINATOR = "degenerate_denominator"
MISSING_GROUND_TRUTH = "missing_ground_truth"


@dataclass(frozen=True)
class MatchCriterion:
    """What counts as a correct detection of a ground-truth box."""

    iou_threshold: float = 0.5
    require_category_match: bool = True

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise InvalidInputError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "require_category_match": self.require_category_match,
        }


@dataclass(frozen=True)
class ImageOutcome:
    """Per-image record of original and post-processing detections."""

    image_id: str
    mode: str  # "all" or "sensitive"
    original_detections: tuple[Detection, ...]
    adversarial_detections: tuple[Detection, ...]
    sensitive_categories: frozenset[int] | None = None
    ground_truth: tuple[tuple[BoxGeometry, int], ...] | None = None

    def __post_init__(self):
        if self.mode not in ("all", "sensitive"):
            raise InvalidInputError(f"mode must be 'all' or 'sensitive', got {self.mode!r}")
        if (self.mode == "sensitive") != (self.sensitive_categories is not None):
            raise InvalidInputError("sensitive_categories must be present iff mode is 'sensitive'")
        object.__setattr__(self, "original_detections", tuple(self.original_detections))
        object.__setattr__(self, "adversarial_detections", tuple(self.adversarial_detections))
        if self.sensitive_categories is not None:
            object.__setattr__(self, "sensitive_categories", frozenset(int(c) for c in self.sensitive_categories))
        if self.ground_truth is not None:
            object.__setattr__(self, "ground_truth", tuple((b, int(c)) for b, c in self.ground_truth))


@dataclass(frozen=True)
class MetricValue:
    """A metric together with any degeneracy flags raised while computing it."""

    value: float
    flags: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.value


def psnr(a: ImageTensor, b: ImageTensor, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    if not a.same_shape(b):
        raise InvalidInputError("psnr requires images of equal shape")
    if peak <= 0:
        raise InvalidInputError("peak must be positive")
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class SsimParams:
    window: int = 8
    peak: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.window < 2:
            raise InvalidInputError("ssim window must be >= 2")
        if self.peak <= 0:
            raise InvalidInputError("peak must be positive")

    def to_dict(self) -> dict:
        return {"window": self.window, "peak": self.peak, "k1": self.k1, "k2": self.k2}


def _window_means(plane: np.ndarray, w: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(plane, (w, w))
    return view.mean(axis=(2, 3))


def ssim(a: ImageTensor, b: ImageTensor, params: SsimParams | None = None) -> float:
    """Mean local SSIM over uniform square windows at stride 1, per channel,
    averaged across channels."""
    params = params or SsimParams()
    if not a.same_shape(b):
        raise InvalidInputError("ssim requires images of equal shape")
    w = params.window
    if min(a.height, a.width) < w:
        raise InvalidInputError(f"image {a.height}x{a.width} smaller than SSIM window {w}")
    c1 = (params.k1 * params.peak) ** 2
    c2 = (params.k2 * params.peak) ** 2
    totals = []
    for ch in range(a.pixels.shape[2]):
        x = a.pixels[:, :, ch]
        y = b.pixels[:, :, ch]
        mu_x = _window_means(x, w)
        mu_y = _window_means(y, w)
        mu_xx = _window_means(x * x, w)
        mu_yy = _window_means(y * y, w)
        mu_xy = _window_means(x * y, w)
        var_x = mu_xx - mu_x * mu_x
        var_y = mu_yy - mu_y * mu_y
        cov = mu_xy - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        totals.append(float(np.mean(num / den)))
    return float(np.mean(totals))


def match_boxes(detections, ground_truth, criterion: MatchCriterion) -> list[tuple[int, int]]:
    """Greedy one-to-one matching of detections to ground-truth boxes.

    Detections are consumed in descending score order (ties toward the lower
    index); each ground-truth box matches at most once. Returns
    (detection_index, ground_truth_index) pairs.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    used: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for di in order:
        det = detections[di]
        best_j, best_iou = -1, 0.0
        for j, (box, cat) in enumerate(ground_truth):
            if j in used:
                continue
            if criterion.require_category_match and det.category_index != cat:
                continue
            iou = det.geometry.iou(box)
            if iou >= criterion.iou_threshold and iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0:
            used.add(best_j)
            pairs.append((di, best_j))
    return pairs


def _require(outcomes, mode: str, name: str):
    outcomes = list(outcomes)
    if any(o.mode != mode for o in outcomes):
        raise InvalidInputError(f"{name} requires outcomes in mode {mode!r}")
    return outcomes


def success_rate_all(outcomes) -> MetricValue:
    """Fraction of images whose adversarial pass produced no detections."""
    outcomes = _require(outcomes, "all", "success_rate_all")
    if not outcomes:
        raise UndefinedMetricError("success_rate_all is undefined on an empty outcome set")
    hits = sum(1 for o in outcomes if len(o.adversarial_detections) == 0)
    return MetricValue(hits / len(outcomes))


def _sensitive_gt(outcome):
    return [
        (box, cat)
        for box, cat in (outcome.ground_truth or ())
        if cat in outcome.sensitive_categories
    ]


def _image_protected(outcome, criterion: MatchCriterion) -> tuple[bool, bool]:
    """(protected, used_fallback) for one sensitive-mode outcome.

    Protected means no adversarial detection correctly matches a sensitive
    ground-truth box. Without ground truth the fallback is category presence:
    protected iff no adversarial detection carries a sensitive category.
    """
    if outcome.ground_truth is None:
        bad = any(d.category_index in outcome.sensitive_categories for d in outcome.adversarial_detections)
        return not bad, True
    gt = _sensitive_gt(outcome)
    if not gt:
        return True, False
    sens_dets = [d for d in outcome.adversarial_detections if d.category_index in outcome.sensitive_categories]
    return len(match_boxes(sens_dets, gt, criterion)) == 0, False


def success_rate_sensitive(outcomes, criterion: MatchCriterion | None = None) -> MetricValue:
    """Fraction of images where every sensitive object is absent or mislabeled."""
    criterion = criterion or MatchCriterion()
    outcomes = _require(outcomes, "sensitive", "success_rate_sensitive")
    if not outcomes:
        raise UndefinedMetricError("success_rate_sensitive is undefined on an empty outcome set")
    hits = 0
    fallback = False
    for o in outcomes:
        ok, used_fallback = _image_protected(o, criterion)
        hits += ok
        fallback |= used_fallback
    flags = (MISSING_GROUND_TRUTH,) if fallback else ()
    return MetricValue(hits / len(outcomes), flags)


def leakage_all(outcomes) -> MetricValue:
    """Total adversarial detections over total original detections."""
    outcomes = _require(outcomes, "all", "leakage_all")
    adversarial = sum(len(o.adversarial_detections) for o in outcomes)
    original = sum(len(o.original_detections) for o in outcomes)
    if original == 0:
        return MetricValue(0.0, (DEGENERATE_DENOMINATOR,))
    return MetricValue(adversarial / original)


def leakage_sensitive(outcomes, criterion: MatchCriterion | None = None) -> MetricValue:
    """Correctly-detected sensitive boxes, adversarial over original."""
    criterion = criterion or MatchCriterion()
    outcomes = _require(outcomes, "sensitive", "leakage_sensitive")
    if any(o.ground_truth is None for o in outcomes):
        raise UndefinedMetricError("leakage_sensitive requires ground truth on every outcome")
    matched_adv = 0
    matched_orig = 0
    for o in outcomes:
        gt = _sensitive_gt(o)
        if not gt:
            continue
        sens = frozenset(o.sensitive_categories)
        adv = [d for d in o.adversarial_detections if d.category_index in sens]
        orig = [d for d in o.original_detections if d.category_index in sens]
        matched_adv += len(match_boxes(adv, gt, criterion))
        matched_orig += len(match_boxes(orig, gt, criterion))
    if matched_orig == 0:
        return MetricValue(0.0, (DEGENERATE_DENOMINATOR,))
    return MetricValue(matched_adv / matched_orig)
