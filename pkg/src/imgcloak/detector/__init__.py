from .model import ToyDetector, greedy_nms, load_bundled_detector
from .scenes import (
    BACKGROUND_NAME,
    CATEGORY_NAMES,
    SHAPE_CATEGORIES,
    full_kind_scene_spec,
    generate_corpus,
    generate_scene,
    image_from_png_bytes,
    image_to_png_bytes,
    load_corpus,
    load_image_png,
    random_scene_spec,
    save_corpus,
    save_image_png,
)
from .train import TrainConfig, train_toy_detector
from .types import BoxGeometry, Detection, ImageTensor, Proposal, SceneShape, SceneSpec, ScoreMatrix

__all__ = [
    "ToyDetector",
    "greedy_nms",
    "load_bundled_detector",
    "BACKGROUND_NAME",
    "CATEGORY_NAMES",
    "SHAPE_CATEGORIES",
    "full_kind_scene_spec",
    "generate_corpus",
    "generate_scene",
    "image_from_png_bytes",
    "image_to_png_bytes",
    "load_corpus",
    "load_image_png",
    "random_scene_spec",
    "save_corpus",
    "save_image_png",
    "TrainConfig",
    "train_toy_detector",
    "BoxGeometry",
    "Detection",
    "ImageTensor",
    "Proposal",
    "SceneShape",
    "SceneSpec",
    "ScoreMatrix",
]
