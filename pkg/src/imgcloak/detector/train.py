"""Training for the toy detector: crop-level classification and objectness.

The corpus is a sequence of (ImageTensor, [(BoxGeometry, category_index)]).
Category indices refer to shape classes; the trained model adds one extra
background category as its last column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._accel import iou_matrix
from ..errors import InvalidInputError
from .model import DEFAULT_WINDOW_SIZES, ToyDetector, patch_features
from .scenes import CATEGORY_NAMES


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-3
    hidden: int = 96
    obj_hidden: int = 32
    patch: int = 16
    jitters_per_box: int = 5
    backgrounds_per_scene: int = 6
    noise_augmentations: int = 2
    noise_amplitude: float = 8.0 / 255.0


class _Adam:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + eps)


def _jitter_box(box, rng, width, height):
    x0, y0, x1, y1 = box
    w, h = x1 - x0, y1 - y0
    dx = rng.uniform(-0.15, 0.15) * w
    dy = rng.uniform(-0.15, 0.15) * h
    scale = rng.uniform(0.85, 1.2)
    cx, cy = (x0 + x1) / 2 + dx, (y0 + y1) / 2 + dy
    hw, hh = w * scale / 2, h * scale / 2
    return np.array([
        max(0.0, cx - hw), max(0.0, cy - hh),
        min(float(width), cx + hw), min(float(height), cy + hh),
    ])


def _build_samples(corpus, config: TrainConfig, rng):
    """Crop features with classification labels and objectness labels."""
    clf_feats, clf_labels = [], []
    obj_feats, obj_labels = [], []
    n_shape_cats = len(CATEGORY_NAMES) - 1
    background = n_shape_cats
    for image, anns in corpus:
        px = image.pixels
        h, w = image.height, image.width
        gt_boxes = np.array([b.as_array() for b, _ in anns]).reshape(-1, 4)
        boxes, labels, obj = [], [], []
        for box, cat in anns:
            base = box.as_array()
            boxes.append(base)
            labels.append(cat)
            obj.append(1.0)
            for _ in range(config.jitters_per_box):
                jb = _jitter_box(base, rng, w, h)
                if jb[2] - jb[0] < 4 or jb[3] - jb[1] < 4:
                    continue
                iou = float(iou_matrix(jb[None, :], base[None, :])[0, 0])
                boxes.append(jb)
                labels.append(cat if iou >= 0.5 else background)
                if iou >= 0.5:
                    obj.append(1.0)
                elif iou < 0.25:
                    obj.append(0.0)
                else:
                    obj.append(-1.0)  # ambiguous band, excluded from objectness loss
            # badly-scaled crops of the same object count as background, which
            # is what keeps cross-scale duplicate detections in check
            cx, cy = (base[0] + base[2]) / 2, (base[1] + base[3]) / 2
            half = (base[2] - base[0]) / 2
            for scale in (rng.uniform(1.7, 2.4), rng.uniform(1.7, 2.4), rng.uniform(0.38, 0.55)):
                hw = half * scale
                loose = np.array([
                    max(0.0, cx - hw), max(0.0, cy - hw),
                    min(float(w), cx + hw), min(float(h), cy + hw),
                ])
                if loose[2] - loose[0] < 4 or loose[3] - loose[1] < 4:
                    continue
                boxes.append(loose)
                labels.append(background)
                obj.append(0.0)
            # off-center windows that only clip the object are background too
            for _ in range(3):
                ang = rng.uniform(0, 2 * np.pi)
                shift = rng.uniform(0.5, 0.9) * 2 * half
                ox = cx + shift * np.cos(ang)
                oy = cy + shift * np.sin(ang)
                off = np.array([
                    max(0.0, ox - half), max(0.0, oy - half),
                    min(float(w), ox + half), min(float(h), oy + half),
                ])
                if off[2] - off[0] < 4 or off[3] - off[1] < 4:
                    continue
                iou = float(iou_matrix(off[None, :], base[None, :])[0, 0])
                if iou >= 0.45 or (gt_boxes.size and iou_matrix(off[None, :], gt_boxes).max() >= 0.45):
                    continue
                boxes.append(off)
                labels.append(background)
                obj.append(0.0)
        tries = 0
        placed = 0
        while placed < config.backgrounds_per_scene and tries < 100:
            tries += 1
            size = rng.uniform(10, min(26, min(h, w)))
            x0 = rng.uniform(0, w - size)
            y0 = rng.uniform(0, h - size)
            cand = np.array([x0, y0, x0 + size, y0 + size])
            if gt_boxes.size and iou_matrix(cand[None, :], gt_boxes).max() >= 0.2:
                continue
            boxes.append(cand)
            labels.append(background)
            obj.append(0.0)
            placed += 1
        if not boxes:
            continue
        # pixel-noise augmentation at the attack's perturbation scale keeps
        # small perturbations from conjuring phantom objects in clean windows
        variants = [px]
        for _ in range(config.noise_augmentations):
            noise = rng.uniform(-config.noise_amplitude, config.noise_amplitude, px.shape)
            variants.append(np.clip(px + noise, 0.0, 1.0))
        box_arr = np.array(boxes)
        for variant in variants:
            feats = patch_features(variant, box_arr, config.patch)
            for f, lab, o in zip(feats, labels, obj):
                clf_feats.append(f)
                clf_labels.append(lab)
                if o >= 0.0:
                    obj_feats.append(f)
                    obj_labels.append(o)
    return (
        np.array(clf_feats),
        np.array(clf_labels, dtype=np.int64),
        np.array(obj_feats),
        np.array(obj_labels),
    )


def _train_classifier(feats, labels, k, config, rng):
    dim = feats.shape[1]
    w1 = rng.standard_normal((config.hidden, dim)) * np.sqrt(1.0 / dim)
    b1 = np.zeros(config.hidden)
    w2 = rng.standard_normal((k, config.hidden)) * np.sqrt(1.0 / config.hidden)
    b2 = np.zeros(k)
    opt = _Adam([w1, b1, w2, b2], config.learning_rate)
    n = len(feats)
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x, y = feats[idx], labels[idx]
            h = np.tanh(x @ w1.T + b1)
            logits = h @ w2.T + b2
            z = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(z)
            p = e / e.sum(axis=1, keepdims=True)
            d_logits = p
            d_logits[np.arange(len(y)), y] -= 1.0
            d_logits /= len(y)
            g_w2 = d_logits.T @ h
            g_b2 = d_logits.sum(axis=0)
            d_h = (d_logits @ w2) * (1 - h**2)
            g_w1 = d_h.T @ x
            g_b1 = d_h.sum(axis=0)
            opt.step([g_w1, g_b1, g_w2, g_b2])
    return w1, b1, w2, b2


def _train_objectness(feats, labels, config, rng):
    dim = feats.shape[1]
    w1 = rng.standard_normal((config.obj_hidden, dim)) * np.sqrt(1.0 / dim)
    b1 = np.zeros(config.obj_hidden)
    w2 = rng.standard_normal(config.obj_hidden) * np.sqrt(1.0 / config.obj_hidden)
    b2 = np.zeros(1)
    opt = _Adam([w1, b1, w2, b2], config.learning_rate)
    n = len(feats)
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x, y = feats[idx], labels[idx]
            h = np.tanh(x @ w1.T + b1)
            logit = h @ w2 + b2[0]
            p = 1.0 / (1.0 + np.exp(-logit))
            d_logit = (p - y) / len(y)
            g_w2 = d_logit @ h
            g_b2 = np.array([d_logit.sum()])
            d_h = np.outer(d_logit, w2) * (1 - h**2)
            g_w1 = d_h.T @ x
            g_b1 = d_h.sum(axis=0)
            opt.step([g_w1, g_b1, g_w2, g_b2])
    return w1, b1, w2, float(b2[0])


def train_toy_detector(corpus, config: TrainConfig | None = None) -> ToyDetector:
    """Train both detector heads on an annotated scene corpus.

    Reproducible under a fixed config.seed. Raises if the corpus annotations
    cover fewer than two categories (the attack needs absent categories to
    target).
    """
    config = config or TrainConfig()
    if not corpus:
        raise InvalidInputError("corpus must be non-empty")
    n_shape_cats = len(CATEGORY_NAMES) - 1
    seen = {cat for _, anns in corpus for _, cat in anns}
    if any(c < 0 or c >= n_shape_cats for c in seen):
        raise InvalidInputError(f"annotation category outside [0, {n_shape_cats})")
    if len(seen) < 2:
        raise InvalidInputError("corpus covers a single category; at least two are required")

    rng = np.random.default_rng(config.seed)
    clf_feats, clf_labels, obj_feats, obj_labels = _build_samples(corpus, config, rng)
    k = n_shape_cats + 1
    clf_w1, clf_b1, clf_w2, clf_b2 = _train_classifier(clf_feats, clf_labels, k, config, rng)
    obj_w1, obj_b1, obj_w2, obj_b2 = _train_objectness(obj_feats, obj_labels, config, rng)
    return ToyDetector(
        clf_w1=clf_w1,
        clf_b1=clf_b1,
        clf_w2=clf_w2,
        clf_b2=clf_b2,
        obj_w1=obj_w1,
        obj_b1=obj_b1,
        obj_w2=obj_w2,
        obj_b2=obj_b2,
        category_names=CATEGORY_NAMES,
        patch=config.patch,
        window_sizes=DEFAULT_WINDOW_SIZES,
    )
