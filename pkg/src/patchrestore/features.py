"""DCT patch features, the Gaussian similarity kernel, and its bandwidth heuristic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as spfft

from .image import PatchGrid, extract_all_patches

__all__ = [
    "KernelModel",
    "dct_features",
    "dct_feature_matrix",
    "image_patch_features",
    "bandwidth_from_features",
    "kernel_eval",
    "kernel_vector",
    "kernel_matrix",
    "pairwise_sq_dists",
]


def dct_features(patch: np.ndarray, drop_dc: bool = False) -> np.ndarray:
    """Orthonormal 2-D DCT-II coefficients of a square patch, flattened row-major.

    Orthonormality gives Parseval: the feature norm equals the patch norm.
    With drop_dc the constant coefficient is removed (length d^2 - 1).
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ValueError(f"expected a square patch, got shape {patch.shape}")
    coeffs = spfft.dctn(patch, type=2, norm="ortho").ravel()
    return coeffs[1:] if drop_dc else coeffs


def dct_feature_matrix(patches: np.ndarray, drop_dc: bool = False) -> np.ndarray:
    """DCT features for a stack of patches shaped (m, d, d); returns (m, D)."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3 or patches.shape[1] != patches.shape[2]:
        raise ValueError(f"expected (m, d, d) patch stack, got {patches.shape}")
    coeffs = spfft.dctn(patches, type=2, norm="ortho", axes=(1, 2))
    feats = coeffs.reshape(patches.shape[0], -1)
    return feats[:, 1:] if drop_dc else feats


def image_patch_features(
    image: np.ndarray, grid: PatchGrid, drop_dc: bool = False
) -> np.ndarray:
    """Features of every overlapping patch of an image, shaped (|P|, D)."""
    windows = extract_all_patches(image, grid)
    d = grid.patch_size
    stack = np.ascontiguousarray(windows.reshape(-1, d, d))
    return dct_feature_matrix(stack, drop_dc=drop_dc)


@dataclass(frozen=True)
class KernelModel:
    """Gaussian similarity kernel exp(-||f1 - f2||^2 / (2 bandwidth^2)).

    The diagonal is identically 1, so the sup of the kernel diagonal
    (r^2 in the locality constants) is 1.
    """

    bandwidth: float
    scale: float = 0.2

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("kernel bandwidth must be positive")

    @property
    def r_squared(self) -> float:
        return 1.0


def bandwidth_from_features(features: np.ndarray, scale: float = 0.2) -> float:
    """Bandwidth heuristic: scale times the norm of per-dimension population stds."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("bandwidth heuristic needs at least 2 feature vectors")
    stds = features.std(axis=0)  # population (ddof=0)
    norm = float(np.linalg.norm(stds))
    if norm == 0.0:
        raise ValueError("bandwidth heuristic degenerate: zero variance everywhere")
    return scale * norm


def kernel_eval(f1: np.ndarray, f2: np.ndarray, model: KernelModel) -> float:
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape:
        raise ValueError(f"feature length mismatch: {f1.shape} vs {f2.shape}")
    d2 = float(np.sum((f1 - f2) ** 2))
    return float(np.exp(-d2 / (2.0 * model.bandwidth**2)))


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of a (n, D) and b (m, D)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d2, 0.0)


def kernel_vector(
    query: np.ndarray, features: np.ndarray, model: KernelModel
) -> np.ndarray:
    """Similarities of one query against every dataset feature row."""
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        return np.zeros(0)
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (features.shape[1],):
        raise ValueError("query length does not match dataset features")
    d2 = np.sum((features - query[None, :]) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * model.bandwidth**2))


def kernel_matrix(features: np.ndarray, model: KernelModel) -> np.ndarray:
    """Symmetric PSD similarity matrix with unit diagonal."""
    features = np.asarray(features, dtype=np.float64)
    d2 = pairwise_sq_dists(features, features)
    np.fill_diagonal(d2, 0.0)
    k = np.exp(-d2 / (2.0 * model.bandwidth**2))
    return 0.5 * (k + k.T)
