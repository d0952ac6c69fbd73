"""Two-stage toy detector: sliding-window objectness head plus a softmax
classification head over bilinearly cropped patches.

Both stages run on raw pixels, all in float64 numpy, so classification
gradients with respect to the image are exact (see loss_and_gradient).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .._accel import crop_patches, iou_matrix, scatter_patch_grads
from ..errors import InvalidInputError
from .types import BoxGeometry, Detection, ImageTensor, Proposal, ScoreMatrix

CHECKPOINT_VERSION = 1

DEFAULT_WINDOW_SIZES = (12, 16, 20, 26)


_STD_EPS = 1e-4

CONTEXT_MARGIN = 0.35


def context_boxes(boxes: np.ndarray, width: float, height: float, margin: float = CONTEXT_MARGIN) -> np.ndarray:
    """Expand boxes by a relative margin before cropping.

    Tight boxes on solid shapes would otherwise yield featureless flat crops;
    the margin keeps the object boundary inside the patch.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    hw = (boxes[:, 2] - boxes[:, 0]) / 2
    hh = (boxes[:, 3] - boxes[:, 1]) / 2
    cx = (boxes[:, 0] + boxes[:, 2]) / 2
    cy = (boxes[:, 1] + boxes[:, 3]) / 2
    out = np.stack(
        [
            np.maximum(0.0, cx - hw * (1 + margin)),
            np.maximum(0.0, cy - hh * (1 + margin)),
            np.minimum(float(width), cx + hw * (1 + margin)),
            np.minimum(float(height), cy + hh * (1 + margin)),
        ],
        axis=1,
    )
    return out


def standardize_feats(feats: np.ndarray):
    """Per-crop standardization: (x - mean) / sqrt(var + eps), rowwise.

    Makes crop features invariant to the shape's color and the background
    brightness, which is what lets a small MLP separate shape kinds. Smooth,
    so gradients through it are exact (see standardize_backward).
    """
    mu = feats.mean(axis=1, keepdims=True)
    var = feats.var(axis=1, keepdims=True)
    sigma = np.sqrt(var + _STD_EPS)
    out = (feats - mu) / sigma
    return out, sigma


def standardize_backward(grad_out: np.ndarray, standardized: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    g_mean = grad_out.mean(axis=1, keepdims=True)
    gf_mean = (grad_out * standardized).mean(axis=1, keepdims=True)
    return (grad_out - g_mean - standardized * gf_mean) / sigma


_SIL_EPS = 1e-6


def _border_mask(patch: int) -> np.ndarray:
    mask = np.zeros((patch, patch), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return mask


def silhouette_forward(patches: np.ndarray):
    """Color-invariant silhouette channel: per-pixel distance from the mean
    border color of the crop.

    Encodes the object's shape regardless of its color, which is the signal
    the classification head runs on. Returns (features (m, P*P), cache).
    """
    m, p = patches.shape[0], patches.shape[1]
    border = _border_mask(p)
    mu = patches[:, border, :].mean(axis=1)[:, None, None, :]
    diff = patches - mu
    dist = np.sqrt((diff**2).sum(axis=3) + _SIL_EPS)
    unit = diff / dist[:, :, :, None]
    return dist.reshape(m, -1), (unit, border)


def silhouette_backward(grad_dist: np.ndarray, cache) -> np.ndarray:
    unit, border = cache
    m, p = unit.shape[0], unit.shape[1]
    g = grad_dist.reshape(m, p, p, 1)
    grad_patches = g * unit
    border_corr = (g * unit).sum(axis=(1, 2)) / border.sum()
    grad_patches[:, border, :] -= border_corr[:, None, :]
    return grad_patches


def patch_features(image: np.ndarray, boxes: np.ndarray, patch: int) -> np.ndarray:
    """Standardized silhouette features for context-expanded boxes; the shared
    input of both detector heads."""
    expanded = context_boxes(boxes, image.shape[1], image.shape[0])
    patches = crop_patches(image, expanded, patch)
    sil, _ = silhouette_forward(patches)
    feats, _ = standardize_feats(sil)
    return feats


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def greedy_nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    """Indices kept by greedy non-maximum suppression, highest score first.

    Ties break toward the lower original index so the result is deterministic.
    """
    order = np.lexsort((np.arange(len(scores)), -scores))
    keep: list[int] = []
    if len(order) == 0:
        return keep
    ious = iou_matrix(boxes, boxes)
    suppressed = np.zeros(len(scores), dtype=bool)
    for idx in order:
        if suppressed[idx]:
            continue
        keep.append(int(idx))
        suppressed |= ious[idx] > iou_threshold
    return keep


@dataclass
class ToyDetector:
    """Trained toy detector; immutable after construction."""

    clf_w1: np.ndarray
    clf_b1: np.ndarray
    clf_w2: np.ndarray
    clf_b2: np.ndarray
    obj_w1: np.ndarray
    obj_b1: np.ndarray
    obj_w2: np.ndarray
    obj_b2: float
    category_names: tuple[str, ...] = ()
    patch: int = 16
    window_sizes: tuple[int, ...] = DEFAULT_WINDOW_SIZES
    max_proposals: int = 64
    min_objectness: float = 0.5
    proposal_nms_iou: float = 0.8

    def __post_init__(self):
        self.category_names = tuple(self.category_names)
        self.window_sizes = tuple(int(s) for s in self.window_sizes)

    @property
    def category_count(self) -> int:
        return self.clf_w2.shape[0]

    @property
    def background_index(self) -> int:
        return self.category_count - 1

    # stage 2 forward pieces -------------------------------------------------

    def _patch_features(self, image: np.ndarray, boxes: np.ndarray) -> np.ndarray:
        return patch_features(image, boxes, self.patch)

    def _clf_forward(self, feats: np.ndarray):
        hidden = np.tanh(feats @ self.clf_w1.T + self.clf_b1)
        logits = hidden @ self.clf_w2.T + self.clf_b2
        return hidden, _softmax(logits)

    def _objectness(self, image: np.ndarray, boxes: np.ndarray) -> np.ndarray:
        feats = self._patch_features(image, boxes)
        hidden = np.tanh(feats @ self.obj_w1.T + self.obj_b1)
        logit = hidden @ self.obj_w2 + self.obj_b2
        return 1.0 / (1.0 + np.exp(-logit))

    # public operations ------------------------------------------------------

    def objectness_scores(self, image: ImageTensor, boxes: np.ndarray) -> np.ndarray:
        """Stage-1 objectness for arbitrary boxes, as an (n,) array in [0, 1]."""
        if len(boxes) == 0:
            return np.zeros(0)
        return self._objectness(image.pixels, np.asarray(boxes, dtype=np.float64))

    def full_grid_view(self) -> "ToyDetector":
        """A copy whose propose() returns every candidate window unfiltered.

        Detections always come from the candidate grid, so an attack that
        drives every grid window below threshold is guaranteed to survive a
        fresh propose/classify pass of the original detector.
        """
        return replace(self, min_objectness=0.0, proposal_nms_iou=1.1, max_proposals=10**9)

    def candidate_windows(self, height: int, width: int) -> np.ndarray:
        """All sliding windows scanned by stage 1, as an (n, 4) box array."""
        windows = []
        for size in self.window_sizes:
            if size > min(height, width):
                continue
            stride = max(3, size // 4)
            ys = sorted(set(list(range(0, height - size + 1, stride)) + [height - size]))
            xs = sorted(set(list(range(0, width - size + 1, stride)) + [width - size]))
            for y in ys:
                for x in xs:
                    windows.append((x, y, x + size, y + size))
        return np.array(windows, dtype=np.float64)

    def propose(self, image: ImageTensor) -> list[Proposal]:
        """Stage 1: score sliding windows, dedupe, return top proposals."""
        h, w = image.height, image.width
        if min(h, w) < min(self.window_sizes):
            raise InvalidInputError(f"image {h}x{w} smaller than detector minimum window")
        windows = self.candidate_windows(h, w)
        obj = self._objectness(image.pixels, windows)
        mask = obj >= self.min_objectness
        windows, obj = windows[mask], obj[mask]
        if len(windows) == 0:
            return []
        keep = greedy_nms(windows, obj, self.proposal_nms_iou)
        keep = keep[: self.max_proposals]
        return [
            Proposal(BoxGeometry(*windows[i]), float(np.clip(obj[i], 0.0, 1.0)))
            for i in keep
        ]

    def classify(self, image: ImageTensor, proposals) -> ScoreMatrix:
        """Stage 2: per-proposal category distribution over all K categories."""
        if len(proposals) == 0:
            return ScoreMatrix(np.zeros((0, self.category_count)), self.category_names)
        boxes = np.array([p.geometry.as_array() for p in proposals])
        feats = self._patch_features(image.pixels, boxes)
        _, probs = self._clf_forward(feats)
        return ScoreMatrix(probs, self.category_names)

    def detect(self, image: ImageTensor, threshold: float) -> list[Detection]:
        """propose -> classify -> argmax + threshold -> NMS at IoU 0.5."""
        if not 0.0 < threshold < 1.0:
            raise InvalidInputError(f"threshold must be in (0, 1), got {threshold}")
        proposals = self.propose(image)
        matrix = self.classify(image, proposals)
        return self.detections_from_scores(proposals, matrix, threshold)

    def detections_from_scores(self, proposals, matrix: ScoreMatrix, threshold: float) -> list[Detection]:
        """Turn a frozen (proposals, scores) pair into final detections."""
        if matrix.num_proposals == 0:
            return []
        scores = matrix.scores
        cats = scores.argmax(axis=1)  # ties resolve to the lowest index
        best = scores[np.arange(len(cats)), cats]
        mask = (cats != self.background_index) & (best >= threshold)
        if not mask.any():
            return []
        boxes = np.array([p.geometry.as_array() for p in proposals])[mask]
        cats, best = cats[mask], best[mask]
        keep = greedy_nms(boxes, best, 0.5)
        dets = [Detection(BoxGeometry(*boxes[i]), int(cats[i]), float(best[i])) for i in keep]
        dets.sort(key=lambda d: -d.score)
        return dets

    def loss_and_gradient(self, image: ImageTensor, proposals, target_label: int):
        """Mean cross-entropy toward target_label over the frozen proposals,
        with its exact gradient w.r.t. every image pixel."""
        if len(proposals) == 0:
            raise InvalidInputError("loss_and_gradient requires at least one proposal")
        if not 0 <= target_label < self.category_count:
            raise InvalidInputError(f"target_label {target_label} outside [0, {self.category_count})")
        raw_boxes = np.array([p.geometry.as_array() for p in proposals])
        boxes = context_boxes(raw_boxes, image.width, image.height)
        patches = crop_patches(image.pixels, boxes, self.patch)
        sil, sil_cache = silhouette_forward(patches)
        feats, sigma = standardize_feats(sil)
        hidden, probs = self._clf_forward(feats)
        m = len(proposals)
        p_t = np.clip(probs[:, target_label], 1e-300, None)
        loss = float(-np.log(p_t).mean())

        d_logits = probs.copy()
        d_logits[:, target_label] -= 1.0
        d_logits /= m
        d_hidden = (d_logits @ self.clf_w2) * (1.0 - hidden**2)
        d_feats = d_hidden @ self.clf_w1
        d_sil = standardize_backward(d_feats, feats, sigma)
        d_patches = silhouette_backward(d_sil, sil_cache)
        grad = scatter_patch_grads(d_patches, image.pixels.shape, boxes, self.patch)
        return loss, grad

    # persistence ------------------------------------------------------------

    def save(self, path: str):
        np.savez(
            path,
            format_version=np.int64(CHECKPOINT_VERSION),
            category_names=np.array(self.category_names),
            clf_w1=self.clf_w1,
            clf_b1=self.clf_b1,
            clf_w2=self.clf_w2,
            clf_b2=self.clf_b2,
            obj_w1=self.obj_w1,
            obj_b1=self.obj_b1,
            obj_w2=self.obj_w2,
            obj_b2=np.float64(self.obj_b2),
            patch=np.int64(self.patch),
            window_sizes=np.array(self.window_sizes, dtype=np.int64),
            max_proposals=np.int64(self.max_proposals),
            min_objectness=np.float64(self.min_objectness),
            proposal_nms_iou=np.float64(self.proposal_nms_iou),
        )

    @classmethod
    def load(cls, path: str) -> "ToyDetector":
        with np.load(path, allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != CHECKPOINT_VERSION:
                raise InvalidInputError(
                    f"checkpoint format version {version} unsupported (expected {CHECKPOINT_VERSION})"
                )
            return cls(
                clf_w1=data["clf_w1"],
                clf_b1=data["clf_b1"],
                clf_w2=data["clf_w2"],
                clf_b2=data["clf_b2"],
                obj_w1=data["obj_w1"],
                obj_b1=data["obj_b1"],
                obj_w2=data["obj_w2"],
                obj_b2=float(data["obj_b2"]),
                category_names=tuple(str(n) for n in data["category_names"]),
                patch=int(data["patch"]),
                window_sizes=tuple(int(s) for s in data["window_sizes"]),
                max_proposals=int(data["max_proposals"]),
                min_objectness=float(data["min_objectness"]),
                proposal_nms_iou=float(data["proposal_nms_iou"]),
            )


def load_bundled_detector() -> ToyDetector:
    """The trained toy detector shipped with the package."""
    from importlib.resources import files

    with files("imgcloak.data").joinpath("toy_detector.npz").open("rb") as fh:
        import io

        return ToyDetector.load(io.BytesIO(fh.read()))
