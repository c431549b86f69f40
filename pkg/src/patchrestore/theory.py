"""Locality diagnostics: the patch-correlation constant q, correlation maps,
and closed-form constraint-set diameter ratios for specific degradations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import KernelModel, image_patch_features
from .image import PatchGrid

__all__ = [
    "Denoising",
    "Inpainting",
    "Downsampling",
    "c_bound",
    "unit_cube_diameter",
    "QEstimate",
    "estimate_q",
    "correlation_map",
]


@dataclass(frozen=True)
class Denoising:
    sigma: float
    diam: float  # diameter of the sharp-image space


@dataclass(frozen=True)
class Inpainting:
    missing_fraction: float


@dataclass(frozen=True)
class Downsampling:
    factor: int


def unit_cube_diameter(num_pixels: int) -> float:
    """Diagonal of the unit intensity cube: sqrt(pixel count)."""
    if num_pixels < 1:
        raise ValueError("pixel count must be positive")
    return math.sqrt(num_pixels)


def c_bound(problem) -> float:
    """Closed-form bound on the constraint-set diameter ratio.

    Denoising: min(sigma/diam, 1); inpainting with missing fraction s:
    sqrt(s); downsampling by k: 1/sqrt(k).
    """
    if isinstance(problem, Denoising):
        if problem.sigma < 0 or problem.diam <= 0:
            raise ValueError("need sigma >= 0 and a positive diameter")
        return min(problem.sigma / problem.diam, 1.0)
    if isinstance(problem, Inpainting):
        s = problem.missing_fraction
        if not 0.0 <= s <= 1.0:
            raise ValueError("missing fraction must lie in [0, 1]")
        return math.sqrt(s)
    if isinstance(problem, Downsampling):
        k = problem.factor
        if k < 1 or int(k) != k:
            raise ValueError("downsampling factor must be a positive integer")
        return 1.0 / math.sqrt(k)
    raise TypeError(f"unknown problem kind {type(problem).__name__}")


@dataclass(frozen=True)
class QEstimate:
    q: float
    stderr: float
    pairs: int
    seed: int

    def csv_row(self) -> str:
        return f"{self.q:.10g},{self.stderr:.10g},{self.pairs},{self.seed}"


def _corpus_features(images, grid: PatchGrid, kernel: KernelModel):
    feats = []
    for img in images:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != (grid.height, grid.width):
            raise ValueError(
                f"image shape {img.shape} does not match grid "
                f"{grid.height}x{grid.width}"
            )
        feats.append(image_patch_features(img, grid))
    return feats


def _sq_kernel(f1, f2, bandwidth):
    d2 = np.sum((f1 - f2) ** 2, axis=-1)
    return np.exp(-d2 / (bandwidth * bandwidth))  # squared Gaussian kernel


def estimate_q(
    images,
    kernel: KernelModel,
    grid: PatchGrid,
    mc_pairs: int = 10_000,
    seed: int = 0,
    exhaustive: bool = False,
) -> QEstimate:
    """Total patch correlation, Monte-Carlo estimated with a standard error.

    A draw samples two corpus images and a patch-index pair (p, p'), then
    scores the squared-kernel difference between the within-image and
    across-image similarities; symmetrizing over the image roles halves the
    variance.  The sum over all patch pairs is |P|^2 times the pair mean, so
    q = |P| * mean / r^2.  The exhaustive mode (small images only) averages
    every patch pair over every ordered image pair.
    """
    if len(images) < 2 and not exhaustive:
        raise ValueError("need at least two images to estimate q")
    feats = _corpus_features(images, grid, kernel)
    n = len(feats)
    P = grid.num_patches
    bw = kernel.bandwidth
    if exhaustive:
        if grid.height > 32 or grid.width > 32:
            raise ValueError("exhaustive mode is limited to images up to 32x32")
        within = 0.0
        across = 0.0
        for a in range(n):
            fa = feats[a]
            d2 = (
                np.sum(fa * fa, axis=1)[:, None]
                + np.sum(fa * fa, axis=1)[None, :]
                - 2.0 * fa @ fa.T
            )
            within += float(np.exp(-np.maximum(d2, 0) / (bw * bw)).sum())
            for b in range(n):
                fb = feats[b]
                d2 = (
                    np.sum(fa * fa, axis=1)[:, None]
                    + np.sum(fb * fb, axis=1)[None, :]
                    - 2.0 * fa @ fb.T
                )
                across += float(np.exp(-np.maximum(d2, 0) / (bw * bw)).sum())
        total = within / n - across / (n * n)
        return QEstimate(total / (P * kernel.r_squared), 0.0, P * P * n * n, seed)

    if mc_pairs < 1:
        raise ValueError("need at least one Monte-Carlo pair")
    rng = np.random.default_rng(seed)
    a_idx = rng.integers(0, n, size=mc_pairs)
    b_idx = rng.integers(0, n, size=mc_pairs)
    p = rng.integers(0, P, size=mc_pairs)
    pp = rng.integers(0, P, size=mc_pairs)
    fa_p = np.stack([feats[a][i] for a, i in zip(a_idx, p)])
    fa_pp = np.stack([feats[a][i] for a, i in zip(a_idx, pp)])
    fb_p = np.stack([feats[b][i] for b, i in zip(b_idx, p)])
    fb_pp = np.stack([feats[b][i] for b, i in zip(b_idx, pp)])
    forward = _sq_kernel(fa_p, fa_pp, bw) - _sq_kernel(fa_p, fb_pp, bw)
    backward = _sq_kernel(fb_p, fb_pp, bw) - _sq_kernel(fb_p, fa_pp, bw)
    draws = 0.5 * (forward + backward)
    scale = P / kernel.r_squared
    q = scale * float(draws.mean())
    if mc_pairs > 1:
        stderr = scale * float(draws.std(ddof=1)) / math.sqrt(mc_pairs)
    else:
        stderr = math.inf
    return QEstimate(q, stderr, mc_pairs, seed)


def correlation_map(
    image: np.ndarray,
    kernel: KernelModel,
    grid: PatchGrid,
    reference: int,
) -> np.ndarray:
    """Similarity of one reference patch against every patch, shaped (rows, cols).

    Gaussian-kernel values lie in (0, 1] with exactly 1 at the reference
    position (raw, unsquared similarities).
    """
    if not 0 <= reference < grid.num_patches:
        raise IndexError(f"reference patch {reference} out of range")
    feats = image_patch_features(np.asarray(image, dtype=np.float64), grid)
    d2 = np.sum((feats - feats[reference][None, :]) ** 2, axis=1)
    values = np.exp(-d2 / (2.0 * kernel.bandwidth**2))
    return values.reshape(grid.rows, grid.cols)
