"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The numba path is used by default; set IMGCLOAK_NO_NUMBA=1 before import to
force the numpy fallback (useful on platforms where numba is unavailable and
for benchmarking, see benchmarks/bench_kernels.py).
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("IMGCLOAK_NO_NUMBA", "") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _bilinear_weights(boxes, patch, height, width):
    """Sample-grid rows/cols and interpolation weights for a batch of boxes.

    boxes: (m, 4) float64 [x0, y0, x1, y1]. Returns integer corner indices
    (m, P) and fractional weights (m, P) for each axis. Sample centers sit at
    pixel-center coordinates, clipped to the image.
    """
    m = boxes.shape[0]
    steps = (np.arange(patch) + 0.5) / patch
    xs = boxes[:, 0:1] + steps[None, :] * (boxes[:, 2:3] - boxes[:, 0:1])
    ys = boxes[:, 1:2] + steps[None, :] * (boxes[:, 3:4] - boxes[:, 1:2])
    fx = np.clip(xs - 0.5, 0.0, width - 1.0)
    fy = np.clip(ys - 0.5, 0.0, height - 1.0)
    c0 = np.floor(fx).astype(np.int64)
    r0 = np.floor(fy).astype(np.int64)
    c0 = np.minimum(c0, width - 1)
    r0 = np.minimum(r0, height - 1)
    wx = fx - c0
    wy = fy - r0
    c1 = np.minimum(c0 + 1, width - 1)
    r1 = np.minimum(r0 + 1, height - 1)
    return r0, r1, wy, c0, c1, wx


def _crop_patches_np(image, boxes, patch):
    h, w, _ = image.shape
    r0, r1, wy, c0, c1, wx = _bilinear_weights(boxes, patch, h, w)
    # (m, P, P, 3) gather with broadcast indices
    wy = wy[:, :, None, None]
    wx = wx[:, None, :, None]
    top = image[r0[:, :, None], c0[:, None, :]] * (1 - wx) + image[r0[:, :, None], c1[:, None, :]] * wx
    bot = image[r1[:, :, None], c0[:, None, :]] * (1 - wx) + image[r1[:, :, None], c1[:, None, :]] * wx
    return top * (1 - wy) + bot * wy


def _scatter_patch_grads_np(grad_patches, image_shape, boxes, patch):
    h, w, _ = image_shape
    r0, r1, wy, c0, c1, wx = _bilinear_weights(boxes, patch, h, w)
    grad = np.zeros(image_shape, dtype=np.float64)
    wy = wy[:, :, None, None]
    wx = wx[:, None, :, None]
    for j in range(boxes.shape[0]):
        g = grad_patches[j]
        np.add.at(grad, (r0[j][:, None], c0[j][None, :]), g * (1 - wy[j]) * (1 - wx[j]))
        np.add.at(grad, (r0[j][:, None], c1[j][None, :]), g * (1 - wy[j]) * wx[j])
        np.add.at(grad, (r1[j][:, None], c0[j][None, :]), g * wy[j] * (1 - wx[j]))
        np.add.at(grad, (r1[j][:, None], c1[j][None, :]), g * wy[j] * wx[j])
    return grad


def _iou_matrix_np(boxes_a, boxes_b):
    ax0, ay0, ax1, ay1 = (boxes_a[:, i][:, None] for i in range(4))
    bx0, by0, bx1, by1 = (boxes_b[:, i][None, :] for i in range(4))
    iw = np.maximum(0.0, np.minimum(ax1, bx1) - np.maximum(ax0, bx0))
    ih = np.maximum(0.0, np.minimum(ay1, by1) - np.maximum(ay0, by0))
    inter = iw * ih
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    union = area_a + area_b - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


if USE_NUMBA:

    @njit(cache=True)
    def _crop_patches_nb(image, boxes, patch):
        m = boxes.shape[0]
        h, w, ch = image.shape
        out = np.empty((m, patch, patch, ch), dtype=np.float64)
        for j in range(m):
            x0, y0, x1, y1 = boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]
            for a in range(patch):
                fy = y0 + (a + 0.5) / patch * (y1 - y0) - 0.5
                if fy < 0.0:
                    fy = 0.0
                if fy > h - 1.0:
                    fy = h - 1.0
                r0 = int(np.floor(fy))
                if r0 > h - 1:
                    r0 = h - 1
                r1 = min(r0 + 1, h - 1)
                wy = fy - r0
                for b in range(patch):
                    fx = x0 + (b + 0.5) / patch * (x1 - x0) - 0.5
                    if fx < 0.0:
                        fx = 0.0
                    if fx > w - 1.0:
                        fx = w - 1.0
                    c0 = int(np.floor(fx))
                    if c0 > w - 1:
                        c0 = w - 1
                    c1 = min(c0 + 1, w - 1)
                    wx = fx - c0
                    for c in range(ch):
                        top = image[r0, c0, c] * (1 - wx) + image[r0, c1, c] * wx
                        bot = image[r1, c0, c] * (1 - wx) + image[r1, c1, c] * wx
                        out[j, a, b, c] = top * (1 - wy) + bot * wy
        return out

    @njit(cache=True)
    def _scatter_patch_grads_nb(grad_patches, height, width, channels, boxes, patch):
        m = boxes.shape[0]
        grad = np.zeros((height, width, channels), dtype=np.float64)
        for j in range(m):
            x0, y0, x1, y1 = boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]
            for a in range(patch):
                fy = y0 + (a + 0.5) / patch * (y1 - y0) - 0.5
                if fy < 0.0:
                    fy = 0.0
                if fy > height - 1.0:
                    fy = height - 1.0
                r0 = int(np.floor(fy))
                if r0 > height - 1:
                    r0 = height - 1
                r1 = min(r0 + 1, height - 1)
                wy = fy - r0
                for b in range(patch):
                    fx = x0 + (b + 0.5) / patch * (x1 - x0) - 0.5
                    if fx < 0.0:
                        fx = 0.0
                    if fx > width - 1.0:
                        fx = width - 1.0
                    c0 = int(np.floor(fx))
                    if c0 > width - 1:
                        c0 = width - 1
                    c1 = min(c0 + 1, width - 1)
                    wx = fx - c0
                    for c in range(channels):
                        g = grad_patches[j, a, b, c]
                        grad[r0, c0, c] += g * (1 - wy) * (1 - wx)
                        grad[r0, c1, c] += g * (1 - wy) * wx
                        grad[r1, c0, c] += g * wy * (1 - wx)
                        grad[r1, c1, c] += g * wy * wx
        return grad

    def crop_patches(image, boxes, patch):
        if boxes.shape[0] == 0:
            return np.empty((0, patch, patch, image.shape[2]), dtype=np.float64)
        return _crop_patches_nb(
            np.ascontiguousarray(image, dtype=np.float64),
            np.ascontiguousarray(boxes, dtype=np.float64),
            patch,
        )

    def scatter_patch_grads(grad_patches, image_shape, boxes, patch):
        if boxes.shape[0] == 0:
            return np.zeros(image_shape, dtype=np.float64)
        h, w, ch = image_shape
        return _scatter_patch_grads_nb(
            np.ascontiguousarray(grad_patches, dtype=np.float64),
            h, w, ch,
            np.ascontiguousarray(boxes, dtype=np.float64),
            patch,
        )

else:

    def crop_patches(image, boxes, patch):
        if boxes.shape[0] == 0:
            return np.empty((0, patch, patch, image.shape[2]), dtype=np.float64)
        return _crop_patches_np(np.asarray(image, dtype=np.float64), np.asarray(boxes, dtype=np.float64), patch)

    def scatter_patch_grads(grad_patches, image_shape, boxes, patch):
        if boxes.shape[0] == 0:
            return np.zeros(image_shape, dtype=np.float64)
        return _scatter_patch_grads_np(
            np.asarray(grad_patches, dtype=np.float64), image_shape, np.asarray(boxes, dtype=np.float64), patch
        )


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU between two (n,4)/(m,4) arrays of [x0,y0,x1,y1] boxes."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if boxes_a.shape[0] == 0 or boxes_b.shape[0] == 0:
        return np.zeros((boxes_a.shape[0], boxes_b.shape[0]))
    return _iou_matrix_np(boxes_a, boxes_b)


crop_patches.__doc__ = """Bilinearly sample a (P, P, 3) patch from each box of an image.

Patch values are linear in the image pixels, so gradients flow back exactly
through scatter_patch_grads with the same geometry."""
scatter_patch_grads.__doc__ = """Adjoint of crop_patches: accumulate patch gradients into image space."""
