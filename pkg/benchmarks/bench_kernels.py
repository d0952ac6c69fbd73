"""Benchmark the hot kernels on both implementation paths.

Run directly; the script re-invokes itself once with IMGCLOAK_NO_NUMBA=1 so
the numba-compiled and pure-numpy paths are timed in separate processes
(kernel selection happens at import time).

    python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeats=50):
    fn()  # warm-up (includes JIT compilation on the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def run_benchmarks():
    from imgcloak._accel import USE_NUMBA, crop_patches, iou_matrix, scatter_patch_grads

    rng = np.random.default_rng(0)
    image = rng.random((64, 64, 3))
    boxes = np.empty((256, 4))
    boxes[:, 0] = rng.uniform(0, 40, 256)
    boxes[:, 1] = rng.uniform(0, 40, 256)
    boxes[:, 2] = boxes[:, 0] + rng.uniform(8, 24, 256)
    boxes[:, 3] = boxes[:, 1] + rng.uniform(8, 24, 256)
    patch = 16
    grads = rng.standard_normal((256, patch, patch, 3))

    label = "numba" if USE_NUMBA else "numpy"
    rows = [
        ("crop_patches 256x16x16", _time(lambda: crop_patches(image, boxes, patch))),
        ("scatter_patch_grads 256x16x16", _time(lambda: scatter_patch_grads(grads, image.shape, boxes, patch))),
        ("iou_matrix 256x256", _time(lambda: iou_matrix(boxes, boxes))),
    ]
    for name, seconds in rows:
        print(f"{label:6s} {name:32s} {seconds * 1e3:8.3f} ms")


def main():
    if os.environ.get("_BENCH_CHILD"):
        run_benchmarks()
        return
    print(f"numpy {np.__version__}; per-call mean over 50 repeats after warm-up\n", flush=True)
    for extra in ({}, {"IMGCLOAK_NO_NUMBA": "1"}):
        env = {**os.environ, "_BENCH_CHILD": "1", **extra}
        subprocess.run([sys.executable, os.path.abspath(__file__)], env=env, check=True)


if __name__ == "__main__":
    main()
