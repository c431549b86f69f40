"""Linear degradation operators with exact adjoints, plus noisy forward simulation.

All convolutions use circular (periodic) boundaries, which keeps apply/adjoint
an exact transpose pair and B^T B well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

__all__ = [
    "DegradationOperator",
    "Identity",
    "Blur",
    "Downsample",
    "Mask",
    "NoiseModel",
    "degrade",
    "gaussian_kernel",
    "load_kernel",
    "save_kernel",
    "builtin_kernel",
]


class DegradationOperator:
    """Common interface: apply maps in_shape images to out_shape images."""

    in_shape: tuple[int, int]
    out_shape: tuple[int, int]

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_in(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.in_shape:
            raise ValueError(f"input shape {x.shape} != operator input {self.in_shape}")
        return x

    def _check_out(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.out_shape:
            raise ValueError(
                f"input shape {v.shape} != operator output {self.out_shape}"
            )
        return v


class Identity(DegradationOperator):
    def __init__(self, shape: tuple[int, int]):
        self.in_shape = tuple(shape)
        self.out_shape = tuple(shape)

    def apply(self, x):
        return self._check_in(x).copy()

    def adjoint(self, v):
        return self._check_out(v).copy()


def _normalize_kernel(kernel: np.ndarray) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise ValueError("blur kernel must be 2-D")
    if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"blur kernel sides must be odd, got {kernel.shape}")
    total = kernel.sum()
    if total <= 0:
        raise ValueError("blur kernel must have positive mass")
    return kernel / total


class Blur(DegradationOperator):
    """Circular 2-D convolution with a normalized odd-sized kernel."""

    def __init__(self, kernel: np.ndarray, shape: tuple[int, int]):
        self.kernel = _normalize_kernel(kernel)
        if self.kernel.shape[0] > shape[0] or self.kernel.shape[1] > shape[1]:
            raise ValueError("blur kernel larger than the image")
        self.in_shape = tuple(shape)
        self.out_shape = tuple(shape)

    def apply(self, x):
        return ndimage.convolve(self._check_in(x), self.kernel, mode="wrap")

    def adjoint(self, v):
        # correlation = convolution with the flipped kernel
        return ndimage.correlate(self._check_out(v), self.kernel, mode="wrap")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian truncated at +-3 sigma; sigma <= 0 gives a delta."""
    if sigma <= 0:
        return np.ones((1, 1))
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(t**2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


class Downsample(DegradationOperator):
    """Circular Gaussian anti-alias blur followed by keeping every k-th pixel."""

    def __init__(
        self, factor: int, shape: tuple[int, int], antialias_sigma: float = 0.8
    ):
        if factor < 1 or int(factor) != factor:
            raise ValueError("downsampling factor must be a positive integer")
        self.factor = int(factor)
        self.antialias_sigma = float(antialias_sigma)
        self.kernel = gaussian_kernel(self.antialias_sigma)
        self.in_shape = tuple(shape)
        k = self.factor
        self.out_shape = ((shape[0] + k - 1) // k, (shape[1] + k - 1) // k)

    def apply(self, x):
        x = self._check_in(x)
        blurred = ndimage.convolve(x, self.kernel, mode="wrap")
        k = self.factor
        return blurred[::k, ::k].copy()

    def adjoint(self, v):
        v = self._check_out(v)
        k = self.factor
        up = np.zeros(self.in_shape)
        up[::k, ::k] = v
        return ndimage.correlate(up, self.kernel, mode="wrap")


class Mask(DegradationOperator):
    """Elementwise multiplication by a keep bitmap (self-adjoint)."""

    def __init__(self, keep: np.ndarray):
        keep = np.asarray(keep)
        if keep.ndim != 2:
            raise ValueError("mask bitmap must be 2-D")
        self.keep = keep.astype(np.float64) != 0
        self.in_shape = tuple(keep.shape)
        self.out_shape = tuple(keep.shape)

    def apply(self, x):
        return self._check_in(x) * self.keep

    def adjoint(self, v):
        return self._check_out(v) * self.keep


@dataclass(frozen=True)
class NoiseModel:
    """Additive i.i.d. Gaussian pixel noise on the [0, 1] intensity scale."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be nonnegative")


def degrade(
    op: DegradationOperator, x: np.ndarray, noise: NoiseModel | None = None
) -> np.ndarray:
    """Forward model: apply the operator, then add seeded Gaussian noise."""
    out = op.apply(x)
    if noise is not None and noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        out = out + rng.normal(0.0, noise.sigma, size=out.shape)
    return out


# ---------------------------------------------------------------------------
# Blur kernel files: first line "h w", then h*w coefficients (auto-normalized).


def load_kernel(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ValueError(f"malformed kernel file {path}")
    try:
        h, w = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2 : 2 + h * w]]
    except ValueError as exc:
        raise ValueError(f"malformed kernel file {path}") from exc
    if len(values) != h * w:
        raise ValueError(f"kernel file {path} has {len(values)} values, need {h * w}")
    return _normalize_kernel(np.array(values).reshape(h, w))


def save_kernel(kernel: np.ndarray, path) -> None:
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w = kernel.shape
    lines = [f"{h} {w}"]
    for row in kernel:
        lines.append(" ".join(f"{v:.12e}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def builtin_kernel(name: str) -> np.ndarray:
    """Load one of the shipped test blur kernels ('kernel1' 17x17, 'kernel2' 19x19)."""
    from importlib import resources

    files = {"kernel1": "kernel1_17x17.txt", "kernel2": "kernel2_19x19.txt"}
    if name not in files:
        raise ValueError(f"unknown builtin kernel {name!r}; choose from {sorted(files)}")
    ref = resources.files("patchrestore") / "kernels" / files[name]
    with resources.as_file(ref) as path:
        return load_kernel(path)
