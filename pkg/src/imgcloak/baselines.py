"""Traditional image-processing privacy baselines.

Five whole-image obfuscations used as comparison points against the
adversarial approach: brightness reduction, Gaussian blur, mosaic
(pixelation), additive Gaussian noise, and JPEG re-encoding.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .detector.types import ImageTensor, clip01
from .errors import InvalidInputError

METHODS = ("low_brightness", "gaussian_blur", "mosaic", "additive_noise", "jpeg_compression")

DEFAULT_PARAMETERS = {
    "low_brightness": 0.1,
    "gaussian_blur": 3.0,
    "mosaic": 16,
    "additive_noise": 0.08,
    "jpeg_compression": 10,
}


@dataclass(frozen=True)
class BaselineSpec:
    method: str
    parameter: float | int | None = None
    seed: int | None = None  # additive_noise only

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown baseline method {self.method!r}; expected one of {METHODS}")
        if self.parameter is None:
            object.__setattr__(self, "parameter", DEFAULT_PARAMETERS[self.method])
        p = self.parameter
        if self.method == "low_brightness" and not 0.0 < p < 1.0:
            raise InvalidInputError(f"brightness factor must be in (0, 1), got {p}")
        if self.method == "gaussian_blur" and not p > 0:
            raise InvalidInputError(f"blur sigma must be positive, got {p}")
        if self.method == "mosaic":
            if int(p) != p or int(p) < 2:
                raise InvalidInputError(f"mosaic block size must be an integer >= 2, got {p}")
            object.__setattr__(self, "parameter", int(p))
        if self.method == "additive_noise":
            if not p > 0:
                raise InvalidInputError(f"noise sigma must be positive, got {p}")
            if self.seed is None:
                object.__setattr__(self, "seed", 0)
        if self.method == "jpeg_compression":
            if int(p) != p or not 1 <= int(p) <= 100:
                raise InvalidInputError(f"jpeg quality must be an integer in [1, 100], got {p}")
            object.__setattr__(self, "parameter", int(p))

    def to_dict(self) -> dict:
        return {"method": self.method, "parameter": self.parameter, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "BaselineSpec":
        return cls(data["method"], data.get("parameter"), data.get("seed"))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(pixels: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    pad = [(0, 0)] * pixels.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(pixels, pad, mode="reflect")
    out = np.zeros_like(pixels)
    for k, weight in enumerate(kernel):
        sl = [slice(None)] * pixels.ndim
        sl[axis] = slice(k, k + pixels.shape[axis])
        out += weight * padded[tuple(sl)]
    return out


def _blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    kernel = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(pixels, kernel, 0), kernel, 1)


def _mosaic(pixels: np.ndarray, block: int) -> np.ndarray:
    h, w, _ = pixels.shape
    out = np.empty_like(pixels)
    for y0 in range(0, h, block):
        for x0 in range(0, w, block):
            tile = pixels[y0 : y0 + block, x0 : x0 + block]
            out[y0 : y0 + block, x0 : x0 + block] = tile.mean(axis=(0, 1))
    return out


def _jpeg_roundtrip(pixels: np.ndarray, quality: int) -> np.ndarray:
    arr = np.round(pixels * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def apply_baseline(image: ImageTensor, spec: BaselineSpec) -> ImageTensor:
    """Apply one baseline obfuscation; output shape equals input shape."""
    px = image.pixels
    if spec.method == "low_brightness":
        out = px * spec.parameter
    elif spec.method == "gaussian_blur":
        out = _blur(px, float(spec.parameter))
    elif spec.method == "mosaic":
        out = _mosaic(px, int(spec.parameter))
    elif spec.method == "additive_noise":
        rng = np.random.default_rng(spec.seed)
        out = px + rng.normal(0.0, float(spec.parameter), px.shape)
    else:  # jpeg_compression
        out = _jpeg_roundtrip(px, int(spec.parameter))
    return ImageTensor(clip01(out))
