"""Core value types: images, boxes, proposals, score matrices, detections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError

MIN_IMAGE_SIDE = 16


@dataclass(frozen=True)
class ImageTensor:
    """H x W x 3 float image with intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidInputError(f"expected (H, W, 3) array, got shape {px.shape}")
        if px.shape[0] < MIN_IMAGE_SIDE or px.shape[1] < MIN_IMAGE_SIDE:
            raise InvalidInputError(
                f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {px.shape[0]}x{px.shape[1]}"
            )
        if px.min() < 0.0 or px.max() > 1.0:
            raise InvalidInputError("pixel intensities must lie in [0, 1]")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def same_shape(self, other: "ImageTensor") -> bool:
        return self.pixels.shape == other.pixels.shape


@dataclass(frozen=True)
class BoxGeometry:
    """Axis-aligned box in pixel coordinates, x_min < x_max and y_min < y_max."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError(f"degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=np.float64)

    def iou(self, other: "BoxGeometry") -> float:
        iw = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        ih = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        return inter / (self.area + other.area - inter)

    def clipped(self, width: float, height: float) -> "BoxGeometry":
        return BoxGeometry(
            max(0.0, min(self.x_min, width - 1.0)),
            max(0.0, min(self.y_min, height - 1.0)),
            min(float(width), max(self.x_max, 1.0)),
            min(float(height), max(self.y_max, 1.0)),
        )


@dataclass(frozen=True)
class Proposal:
    """Candidate region from the first detector stage."""

    geometry: BoxGeometry
    objectness: float

    def __post_init__(self):
        if not 0.0 <= self.objectness <= 1.0:
            raise InvalidInputError(f"objectness {self.objectness} outside [0, 1]")


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-proposal category distributions: m rows, K columns, rows sum to 1."""

    scores: np.ndarray
    category_names: tuple[str, ...]

    ROW_SUM_TOL = 1e-5

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise InvalidInputError(f"score matrix must be 2-D, got shape {scores.shape}")
        if len(self.category_names) != scores.shape[1]:
            raise InvalidInputError("category_names length must equal column count")
        if scores.shape[1] < 2:
            raise InvalidInputError("need at least 2 categories")
        if scores.size:
            if scores.min() < 0.0 or scores.max() > 1.0:
                raise InvalidInputError("scores must lie in [0, 1]")
            if np.abs(scores.sum(axis=1) - 1.0).max() > self.ROW_SUM_TOL:
                raise InvalidInputError("score rows must sum to 1")
        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "category_names", tuple(self.category_names))

    @property
    def num_proposals(self) -> int:
        return self.scores.shape[0]

    @property
    def num_categories(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class Detection:
    """A reported box: geometry, winning category and its score."""

    geometry: BoxGeometry
    category_index: int
    score: float

    def to_dict(self, category_names=None) -> dict:
        d = {
            "box": [self.geometry.x_min, self.geometry.y_min, self.geometry.x_max, self.geometry.y_max],
            "category_index": int(self.category_index),
            "score": float(self.score),
        }
        if category_names is not None:
            d["category_name"] = category_names[self.category_index]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        x0, y0, x1, y1 = d["box"]
        return cls(BoxGeometry(x0, y0, x1, y1), int(d["category_index"]), float(d["score"]))


@dataclass(frozen=True)
class SceneShape:
    """One rendered shape: kind in {circle, square, triangle}."""

    kind: str
    color: tuple[float, float, float]
    center: tuple[float, float]
    size: float

    KINDS = ("circle", "square", "triangle")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInputError(f"unknown shape kind {self.kind!r}")
        if self.size <= 0:
            raise InvalidInputError("shape size must be positive")

    def bounds(self) -> BoxGeometry:
        cx, cy = self.center
        s = self.size
        return BoxGeometry(cx - s, cy - s, cx + s, cy + s)


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of a synthetic scene."""

    height: int = 64
    width: int = 64
    shapes: tuple[SceneShape, ...] = field(default_factory=tuple)
    texture_seed: int = 0
    max_overlap_iou: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))
        if self.height < MIN_IMAGE_SIDE or self.width < MIN_IMAGE_SIDE:
            raise InvalidInputError("scene canvas too small")


def clip01(array: np.ndarray) -> np.ndarray:
    return np.clip(array, 0.0, 1.0)
