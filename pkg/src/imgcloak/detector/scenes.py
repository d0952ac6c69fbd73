"""Synthetic shape scenes with exact ground-truth boxes, plus corpus I/O.

Scenes are desk-scale stand-ins for photo corpora: a textured background with
1-3 non-overlapping colored shapes (circle / square / triangle). Rendering is
fully deterministic given (spec, seed).
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from ..errors import DatasetError, SceneError
from .types import BoxGeometry, ImageTensor, SceneShape, SceneSpec, clip01

SHAPE_CATEGORIES = ("circle", "square", "triangle")
BACKGROUND_NAME = "background"
CATEGORY_NAMES = SHAPE_CATEGORIES + (BACKGROUND_NAME,)

_SUPERSAMPLE = 4

_PALETTE = np.array(
    [
        [0.85, 0.15, 0.15],
        [0.15, 0.75, 0.20],
        [0.15, 0.25, 0.85],
        [0.90, 0.80, 0.10],
        [0.80, 0.15, 0.80],
        [0.10, 0.75, 0.80],
    ]
)


def _background(height, width, rng):
    """Mid-gray canvas with smooth low-amplitude texture."""
    base = 0.45 + 0.15 * rng.random()
    coarse = rng.standard_normal((height // 8 + 2, width // 8 + 2))
    ys = np.linspace(0, coarse.shape[0] - 1.001, height)
    xs = np.linspace(0, coarse.shape[1] - 1.001, width)
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    smooth = (
        coarse[y0][:, x0] * (1 - wy) * (1 - wx)
        + coarse[y0][:, x0 + 1] * (1 - wy) * wx
        + coarse[y0 + 1][:, x0] * wy * (1 - wx)
        + coarse[y0 + 1][:, x0 + 1] * wy * wx
    )
    canvas = base + 0.05 * smooth
    fine = 0.01 * rng.standard_normal((height, width))
    return clip01((canvas + fine)[:, :, None].repeat(3, axis=2))


def _shape_mask(shape: SceneShape, height: int, width: int) -> np.ndarray:
    """Anti-aliased coverage mask in [0, 1] via supersampling."""
    ss = _SUPERSAMPLE
    ys = (np.arange(height * ss) + 0.5) / ss
    xs = (np.arange(width * ss) + 0.5) / ss
    yy = ys[:, None]
    xx = xs[None, :]
    cx, cy = shape.center
    s = shape.size
    if shape.kind == "circle":
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= s * s
    elif shape.kind == "square":
        inside = (np.abs(xx - cx) <= s) & (np.abs(yy - cy) <= s)
    else:  # triangle, apex up
        ax, ay = cx, cy - s
        bx, by = cx - s, cy + s
        dx, dy = cx + s, cy + s

        def half_plane(px, py, qx, qy):
            return (qx - px) * (yy - py) - (qy - py) * (xx - px)

        # vertices are clockwise in image coordinates (y grows downward)
        inside = (half_plane(ax, ay, bx, by) <= 0) & (half_plane(bx, by, dx, dy) <= 0) & (half_plane(dx, dy, ax, ay) <= 0)
    fine = inside.astype(np.float64)
    return fine.reshape(height, ss, width, ss).mean(axis=(1, 3))


def _check_spec(spec: SceneSpec):
    boxes = [sh.bounds() for sh in spec.shapes]
    for i, sh in enumerate(spec.shapes):
        b = boxes[i]
        if b.x_min < 0 or b.y_min < 0 or b.x_max > spec.width or b.y_max > spec.height:
            raise SceneError(f"shape {i} ({sh.kind}) extends outside the canvas")
        for j in range(i):
            if b.iou(boxes[j]) > spec.max_overlap_iou:
                raise SceneError(f"shapes {j} and {i} overlap beyond IoU {spec.max_overlap_iou}")


def generate_scene(spec: SceneSpec, seed: int):
    """Render a scene; returns (ImageTensor, [(BoxGeometry, category_index), ...])."""
    _check_spec(spec)
    rng = np.random.default_rng([int(spec.texture_seed), int(seed)])
    canvas = _background(spec.height, spec.width, rng)
    annotations = []
    for shape in spec.shapes:
        mask = _shape_mask(shape, spec.height, spec.width)[:, :, None]
        color = np.asarray(shape.color, dtype=np.float64)
        canvas = canvas * (1 - mask) + color[None, None, :] * mask
        annotations.append((shape.bounds().clipped(spec.width, spec.height), SHAPE_CATEGORIES.index(shape.kind)))
    return ImageTensor(clip01(canvas)), annotations


def random_scene_spec(rng: np.random.Generator, height: int = 64, width: int = 64, n_shapes: int | None = None) -> SceneSpec:
    """Draw a random spec honoring the overlap constraint (rejection sampling)."""
    if n_shapes is None:
        n_shapes = int(rng.integers(1, 4))
    shapes: list[SceneShape] = []
    for _ in range(n_shapes):
        for _attempt in range(200):
            kind = SHAPE_CATEGORIES[int(rng.integers(len(SHAPE_CATEGORIES)))]
            size = float(rng.uniform(6.0, 11.0))
            cx = float(rng.uniform(size + 1, width - size - 1))
            cy = float(rng.uniform(size + 1, height - size - 1))
            color = clip01(_PALETTE[int(rng.integers(len(_PALETTE)))] + rng.uniform(-0.08, 0.08, 3))
            cand = SceneShape(kind, tuple(color), (cx, cy), size)
            if all(cand.bounds().iou(s.bounds()) <= 0.2 for s in shapes):
                shapes.append(cand)
                break
        # an unplaceable shape is silently dropped; specs stay valid
    return SceneSpec(height=height, width=width, shapes=tuple(shapes), texture_seed=int(rng.integers(2**31)))


def full_kind_scene_spec(rng: np.random.Generator, height: int = 64, width: int = 64) -> SceneSpec:
    """A spec containing exactly one shape of every kind, in random order.

    Shapes are drawn slightly smaller and with a tighter overlap bound than
    random_scene_spec so all kinds always fit on the canvas.
    """
    for _restart in range(20):
        shapes: list[SceneShape] = []
        kinds = list(SHAPE_CATEGORIES)
        rng.shuffle(kinds)
        for kind in kinds:
            for _attempt in range(300):
                size = float(rng.uniform(6.0, 9.5))
                cx = float(rng.uniform(size + 1, width - size - 1))
                cy = float(rng.uniform(size + 1, height - size - 1))
                color = clip01(_PALETTE[int(rng.integers(len(_PALETTE)))] + rng.uniform(-0.08, 0.08, 3))
                cand = SceneShape(kind, tuple(color), (cx, cy), size)
                if all(cand.bounds().iou(s.bounds()) <= 0.15 for s in shapes):
                    shapes.append(cand)
                    break
        if len(shapes) == len(SHAPE_CATEGORIES):
            return SceneSpec(height=height, width=width, shapes=tuple(shapes), texture_seed=int(rng.integers(2**31)))
    raise SceneError(f"could not place one shape of each kind on a {height}x{width} canvas")


def generate_corpus(count: int, seed: int, height: int = 64, width: int = 64, full_kind: bool = False):
    """Generate `count` random annotated scenes, deterministically.

    With full_kind=True every scene carries exactly one circle, square, and
    triangle; otherwise scenes hold 1-3 shapes of random kinds.
    """
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(count):
        if full_kind:
            spec = full_kind_scene_spec(rng, height=height, width=width)
        else:
            spec = random_scene_spec(rng, height=height, width=width)
        corpus.append(generate_scene(spec, seed=int(rng.integers(2**31))))
    return corpus


def quantize_image(image: ImageTensor) -> ImageTensor:
    """Snap intensities to the 1/255 grid: exactly what 8-bit PNG keeps."""
    return ImageTensor(np.round(image.pixels * 255.0) / 255.0)


def save_image_png(image: ImageTensor, path: str):
    """Write as 8-bit PNG (lossless; intensities quantized to the 1/255 grid)."""
    arr = np.round(image.pixels * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image_png(path: str) -> ImageTensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(arr)


def image_to_png_bytes(image: ImageTensor) -> bytes:
    import io

    buf = io.BytesIO()
    arr = np.round(image.pixels * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> ImageTensor:
    import io

    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(arr)


def save_corpus(directory: str, corpus, category_names=SHAPE_CATEGORIES):
    """Persist scenes as PNGs plus a COCO-style annotation subset.

    `corpus` is a sequence of (ImageTensor, [(BoxGeometry, category_index)]).
    """
    img_dir = os.path.join(directory, "images")
    os.makedirs(img_dir, exist_ok=True)
    images = []
    annotations = []
    ann_id = 1
    for i, (image, anns) in enumerate(corpus):
        image_id = i + 1
        file_name = f"{image_id:05d}.png"
        save_image_png(image, os.path.join(img_dir, file_name))
        images.append({"id": image_id, "file_name": file_name, "width": image.width, "height": image.height})
        for box, cat in anns:
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "bbox": [box.x_min, box.y_min, box.x_max - box.x_min, box.y_max - box.y_min],
                    "category_id": int(cat) + 1,
                }
            )
            ann_id += 1
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": i + 1, "name": name} for i, name in enumerate(category_names)],
    }
    with open(os.path.join(directory, "annotations.json"), "w") as fh:
        json.dump(payload, fh, indent=1)


def load_corpus(directory: str):
    """Load a saved corpus back into memory; inverse of save_corpus."""
    ann_path = os.path.join(directory, "annotations.json")
    if not os.path.exists(ann_path):
        raise DatasetError(f"no annotations.json in {directory}")
    with open(ann_path) as fh:
        payload = json.load(fh)
    id_to_cat = {c["id"]: c["name"] for c in payload["categories"]}
    corpus = []
    for entry in payload["images"]:
        path = os.path.join(directory, "images", entry["file_name"])
        if not os.path.exists(path):
            raise DatasetError(f"image file missing for id {entry['id']}: {entry['file_name']}")
        image = load_image_png(path)
        anns = []
        for ann in payload["annotations"]:
            if ann["image_id"] != entry["id"]:
                continue
            x, y, w, h = ann["bbox"]
            name = id_to_cat.get(ann["category_id"])
            if name is None:
                raise DatasetError(f"annotation {ann['id']} references unknown category {ann['category_id']}")
            anns.append((BoxGeometry(x, y, x + w, y + h), SHAPE_CATEGORIES.index(name)))
        corpus.append((image, anns))
    return corpus
