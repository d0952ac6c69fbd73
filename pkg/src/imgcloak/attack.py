"""Iterative perturbation that hides or disguises objects.

Two modes over the same loop: `hide_all` suppresses every box below the
detection threshold using round-robin targets drawn from the categories absent
from a pre-detection pass; `hide_sensitive` drives only user-chosen categories
below threshold by pushing every proposal toward a fixed disguise category.
Each step is a signed-gradient descent move clamped to an L-infinity ball of
radius epsilon around the previous iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector.types import Detection, ImageTensor, clip01
from .errors import AttackError, InvalidInputError

MAX_EPSILON = 16.0 / 255.0

# clean-image sensitive score at which a grid window is considered implicated
# and included in the hide_sensitive gradient
IMPLICATED_FLOOR = 0.08


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 3.0 / 255.0
    threshold: float = 0.3
    max_iterations: int = 150
    step_size: float | None = None  # defaults to epsilon
    mode: str = "all"
    total_epsilon: float | None = None  # optional budget against the original
    record_iterates: bool = False

    def __post_init__(self):
        if not 0.0 < self.epsilon <= MAX_EPSILON:
            raise InvalidInputError(f"epsilon must be in (0, {MAX_EPSILON:.4f}], got {self.epsilon}")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidInputError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if self.mode not in ("all", "sensitive"):
            raise InvalidInputError(f"mode must be 'all' or 'sensitive', got {self.mode!r}")
        step = self.epsilon if self.step_size is None else self.step_size
        if not 0.0 < step <= self.epsilon:
            raise InvalidInputError(f"step_size must be in (0, epsilon], got {self.step_size}")
        object.__setattr__(self, "step_size", step)
        if self.total_epsilon is not None and self.total_epsilon < self.epsilon:
            raise InvalidInputError("total_epsilon must be >= epsilon")


@dataclass(frozen=True)
class NonSensitiveSet:
    """Ordered category indices absent from the pre-detection."""

    labels: tuple[int, ...]

    def __post_init__(self):
        if not self.labels:
            raise AttackError("non-sensitive set is empty")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInputError("non-sensitive set contains duplicates")
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    def target_for_iteration(self, iteration: int) -> int:
        """Round-robin target label for 1-based iteration index."""
        return self.labels[(iteration - 1) % len(self.labels)]


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    target_label: int
    loss: float
    s_max: float


@dataclass(frozen=True)
class AttackTrace:
    entries: tuple[TraceEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        idxs = [e.iteration for e in self.entries]
        if any(b <= a for a, b in zip(idxs, idxs[1:])):
            raise InvalidInputError("trace iteration indices must be strictly increasing")
        if any(not 0.0 <= e.s_max <= 1.0 for e in self.entries):
            raise InvalidInputError("trace s_max values must lie in [0, 1]")

    def to_list(self) -> list[dict]:
        return [
            {"i": e.iteration, "target_label": e.target_label, "loss": e.loss, "s_max": e.s_max}
            for e in self.entries
        ]


@dataclass(frozen=True)
class AttackResult:
    adversarial_image: ImageTensor
    succeeded: bool
    iterations_used: int
    trace: AttackTrace
    final_detections: tuple[Detection, ...]
    mode: str
    config: AttackConfig
    target_category_detected: bool | None = None  # sensitive mode only
    iterates: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "final_detections", tuple(self.final_detections))

    def to_json_dict(self, category_names=None) -> dict:
        return {
            "mode": self.mode,
            "epsilon": self.config.epsilon,
            "threshold": self.config.threshold,
            "max_iterations": self.config.max_iterations,
            "iterations_used": self.iterations_used,
            "succeeded": self.succeeded,
            "trace": self.trace.to_list(),
            "detections": [d.to_dict(category_names) for d in self.final_detections],
            "target_category_detected": self.target_category_detected,
        }


def select_nonsensitive_set(pre_detections, category_count: int) -> NonSensitiveSet:
    """Categories not present in the pre-detection, ascending.

    Raises AttackError when every category was detected; the hide-all loop has
    no target left in that case.
    """
    if category_count < 2:
        raise InvalidInputError("category_count must be >= 2")
    detected = {d.category_index for d in pre_detections}
    labels = tuple(k for k in range(category_count) if k not in detected)
    if not labels:
        raise AttackError("every category appears in the pre-detection; no non-sensitive class to target")
    return NonSensitiveSet(labels)


def clamp_step(candidate: ImageTensor, previous: ImageTensor, epsilon: float) -> ImageTensor:
    """Project candidate into the epsilon L-infinity ball around previous,
    intersected with [0, 1]."""
    if not candidate.same_shape(previous):
        raise InvalidInputError("candidate and previous images must share shape")
    prev = previous.pixels
    out = np.clip(candidate.pixels, prev - epsilon, prev + epsilon)
    return ImageTensor(clip01(out))


def _clamp_array(candidate: np.ndarray, previous: np.ndarray, epsilon: float,
                 original: np.ndarray | None = None, total_epsilon: float | None = None) -> np.ndarray:
    out = np.clip(candidate, previous - epsilon, previous + epsilon)
    if total_epsilon is not None and original is not None:
        out = np.clip(out, original - total_epsilon, original + total_epsilon)
    return clip01(out)


def _object_score_max(matrix, background_index: int | None) -> float:
    scores = matrix.scores
    if scores.size == 0:
        return 0.0
    if background_index is not None:
        keep = [k for k in range(scores.shape[1]) if k != background_index]
        scores = scores[:, keep]
    return float(scores.max())


def _identity_result(image: ImageTensor, config: AttackConfig, mode: str, detections=()) -> AttackResult:
    return AttackResult(
        adversarial_image=image,
        succeeded=True,
        iterations_used=0,
        trace=AttackTrace(()),
        final_detections=tuple(detections),
        mode=mode,
        config=config,
        iterates=(image.pixels.copy(),) if config.record_iterates else None,
    )


def _run_loop(grid, image, proposals, config, pick_target, stop_score, certify,
              grad_proposals=None):
    """Shared perturbation loop over a frozen proposal grid.

    pick_target(i) gives the iteration's target label; grad_proposals() gives
    the subset of the grid the gradient is taken over (defaults to all of it);
    stop_score(matrix, image) gives the quantity compared against the
    threshold; certify(ImageTensor) confirms the privacy goal on a fresh
    detector pass before declaring success.
    """
    original = image.pixels
    x_prev = original.copy()
    entries: list[TraceEntry] = []
    iterates = [original.copy()] if config.record_iterates else None
    succeeded = False
    iterations = 0
    final_image = image
    for i in range(1, config.max_iterations + 1):
        target = pick_target(i)
        prev_img = ImageTensor(x_prev)
        subset = proposals if grad_proposals is None else grad_proposals()
        loss, grad = grid.loss_and_gradient(prev_img, subset, target)
        candidate = x_prev - config.step_size * np.sign(grad)
        x_cur = _clamp_array(candidate, x_prev, config.epsilon, original, config.total_epsilon)
        cur_img = ImageTensor(x_cur)
        matrix = grid.classify(cur_img, proposals)
        s_max = stop_score(matrix, cur_img)
        entries.append(TraceEntry(i, target, loss, s_max))
        if iterates is not None:
            iterates.append(x_cur.copy())
        iterations = i
        x_prev = x_cur
        final_image = cur_img
        if s_max < config.threshold and certify(cur_img):
            succeeded = True
            break
    return final_image, succeeded, iterations, entries, iterates


def _grid_view(detector):
    view = getattr(detector, "full_grid_view", None)
    return view() if callable(view) else detector


def hide_all(detector, image: ImageTensor, config: AttackConfig) -> AttackResult:
    """Suppress every detectable box below the threshold.

    Gradients and the stop score run over the detector's full candidate-window
    grid; success additionally requires a fresh detection pass of the original
    detector to come back empty.
    """
    if config.mode != "all":
        raise InvalidInputError("config.mode must be 'all' for hide_all")
    pre = detector.detect(image, config.threshold)
    if not pre:
        return _identity_result(image, config, "all")
    targets = select_nonsensitive_set(pre, detector.category_count)
    grid = _grid_view(detector)
    proposals = grid.propose(image)
    if not proposals:
        raise AttackError("pre-detection found boxes but no proposals were produced")
    background = getattr(detector, "background_index", None)

    final_image, succeeded, iterations, entries, iterates = _run_loop(
        grid,
        image,
        proposals,
        config,
        pick_target=targets.target_for_iteration,
        stop_score=lambda m, img: _object_score_max(m, background),
        certify=lambda img: len(detector.detect(img, config.threshold)) == 0,
    )
    final = detector.detect(final_image, config.threshold)
    return AttackResult(
        adversarial_image=final_image,
        succeeded=succeeded,
        iterations_used=iterations,
        trace=AttackTrace(tuple(entries)),
        final_detections=tuple(final),
        mode="all",
        config=config,
        iterates=tuple(iterates) if iterates is not None else None,
    )


def hide_sensitive(
    detector,
    image: ImageTensor,
    sensitive_categories,
    target_category: int,
    config: AttackConfig,
) -> AttackResult:
    """Drive the chosen sensitive categories below threshold by disguising
    the windows that carry them as target_category.

    No pre-detection pass is used. Gradients run only over grid windows whose
    clean sensitive score reaches IMPLICATED_FLOOR, so uninvolved objects keep
    their appearance; any window that later turns both live (objectness at or
    above the detector's gate) and sensitive-scoring joins that set. The loop
    stops when no live window scores a sensitive category at or above the
    threshold and a fresh detection pass confirms."""
    if config.mode != "sensitive":
        raise InvalidInputError("config.mode must be 'sensitive' for hide_sensitive")
    sensitive = sorted({int(c) for c in sensitive_categories})
    if any(c < 0 or c >= detector.category_count for c in sensitive):
        raise InvalidInputError("sensitive category index out of range")
    if not 0 <= int(target_category) < detector.category_count:
        raise InvalidInputError(f"target_category {target_category} out of range")
    if int(target_category) in sensitive:
        raise InvalidInputError("target_category must not be a sensitive category")
    target_category = int(target_category)

    if not sensitive:
        return _identity_result(image, config, "sensitive", detector.detect(image, config.threshold))

    grid = _grid_view(detector)
    proposals = grid.propose(image)
    if not proposals:
        return _identity_result(image, config, "sensitive", ())

    sens_cols = np.array(sensitive, dtype=np.int64)
    boxes = np.array([p.geometry.as_array() for p in proposals])
    clean_scores = grid.classify(image, proposals).scores
    active = {
        int(j)
        for j in np.flatnonzero(clean_scores[:, sens_cols].max(axis=1) >= IMPLICATED_FLOOR)
    }
    if not active:
        # no grid window carries the sensitive categories even faintly, and
        # detections only ever come from the grid
        return _identity_result(image, config, "sensitive", detector.detect(image, config.threshold))

    min_objectness = getattr(detector, "min_objectness", 0.0)

    def stop_score(matrix, img):
        live = grid.objectness_scores(img, boxes) >= min_objectness
        sens_scores = matrix.scores[:, sens_cols].max(axis=1)
        active.update(int(j) for j in np.flatnonzero(live & (sens_scores >= config.threshold)))
        if not live.any():
            return 0.0
        return float(sens_scores[live].max())

    def certify(img):
        return all(d.category_index not in sensitive for d in detector.detect(img, config.threshold))

    final_image, succeeded, iterations, entries, iterates = _run_loop(
        grid,
        image,
        proposals,
        config,
        pick_target=lambda i: target_category,
        stop_score=stop_score,
        certify=certify,
        grad_proposals=lambda: [proposals[j] for j in sorted(active)],
    )
    final = detector.detect(final_image, config.threshold)
    return AttackResult(
        adversarial_image=final_image,
        succeeded=succeeded,
        iterations_used=iterations,
        trace=AttackTrace(tuple(entries)),
        final_detections=tuple(final),
        mode="sensitive",
        config=config,
        target_category_detected=any(d.category_index == target_category for d in final),
        iterates=tuple(iterates) if iterates is not None else None,
    )
