"""Deterministic natural-looking synthetic test images.

Mixes a smooth low-frequency background, a handful of soft-edged shapes, and
oriented texture bands, normalized into [0.06, 0.94].  Gives patch-based
solvers realistic material (edges, flats, texture) without external data.
"""

import numpy as np


def bsd_style_image(height: int, width: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yn, xn = np.mgrid[0:height, 0:width].astype(np.float64)
    yn /= height
    xn /= width
    img = np.zeros((height, width))

    for _ in range(5):
        fy, fx = rng.uniform(0.5, 3.0, 2)
        py, px = rng.uniform(0, 2 * np.pi, 2)
        img += rng.uniform(0.05, 0.25) * np.sin(2 * np.pi * fy * yn + py) * np.sin(
            2 * np.pi * fx * xn + px
        )

    last_region = np.zeros_like(img)
    for _ in range(7):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        a, b = rng.uniform(0.08, 0.4, 2)
        theta = rng.uniform(0, np.pi)
        dy, dx = yn - cy, xn - cx
        ry = np.cos(theta) * dy + np.sin(theta) * dx
        rx = -np.sin(theta) * dy + np.cos(theta) * dx
        r2 = (ry / a) ** 2 + (rx / b) ** 2
        region = 1.0 / (1.0 + np.exp((r2 - 1.0) * 40.0))
        img += rng.uniform(-0.5, 0.5) * region
        last_region = region

    # oriented texture inside the last shape
    fy, fx = rng.uniform(5, 13, 2)
    img += 0.08 * np.sin(2 * np.pi * (fy * yn + fx * xn)) * last_region

    lo, hi = img.min(), img.max()
    img = (img - lo) / max(hi - lo, 1e-12)
    return 0.06 + 0.88 * img
