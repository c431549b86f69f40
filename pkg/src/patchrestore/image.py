"""Grayscale images, overlapping patch access with exact adjoints, image I/O, PSNR.

Images are plain 2-D float64 numpy arrays in row-major layout, intensities on
the unit scale [0, 1].  Values are only clamped when writing to disk, never
inside solvers, so linear operators stay linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "PatchGrid",
    "as_image",
    "extract_patch",
    "scatter_patch_add",
    "extract_all_patches",
    "scatter_all_patches",
    "scatter_patch_scalars",
    "coverage_counts",
    "psnr",
    "load_image",
    "save_image",
]


def as_image(a) -> np.ndarray:
    """Validate `a` as a 2-D finite float image and return it as float64."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    return a


@dataclass(frozen=True)
class PatchGrid:
    """Indexing for all overlapping d x d windows of an image, stride 1.

    Patches lie fully inside the image (no padding), so extraction and
    scatter are exact adjoints of each other.  Patch index p maps row-major
    to the window offset (p // cols, p % cols).
    """

    patch_size: int
    height: int
    width: int

    def __post_init__(self):
        d = self.patch_size
        if d < 1:
            raise ValueError("patch size must be positive")
        if d > self.height or d > self.width:
            raise ValueError(
                f"patch size {d} exceeds image dims {self.height}x{self.width}"
            )

    @property
    def rows(self) -> int:
        return self.height - self.patch_size + 1

    @property
    def cols(self) -> int:
        return self.width - self.patch_size + 1

    @property
    def num_patches(self) -> int:
        return self.rows * self.cols

    def offset(self, p: int) -> tuple[int, int]:
        """Top-left (row, col) of patch p."""
        if not 0 <= p < self.num_patches:
            raise IndexError(f"patch index {p} out of range [0, {self.num_patches})")
        return divmod(p, self.cols)


def extract_patch(image: np.ndarray, grid: PatchGrid, p: int) -> np.ndarray:
    """Return a copy of the d x d window of patch p (the action of R_p)."""
    i, j = grid.offset(p)
    d = grid.patch_size
    return np.array(image[i : i + d, j : j + d], dtype=np.float64)


def scatter_patch_add(
    accum: np.ndarray, grid: PatchGrid, p: int, patch: np.ndarray
) -> np.ndarray:
    """Accumulate a patch back into its window (the action of R_p^T).

    Mutates `accum` in place and returns it.  Concurrent scatters into one
    accumulator are invalid; use per-worker accumulators and reduce.
    """
    d = grid.patch_size
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (d, d):
        raise ValueError(f"patch shape {patch.shape} does not match grid size {d}")
    i, j = grid.offset(p)
    accum[i : i + d, j : j + d] += patch
    return accum


def extract_all_patches(image: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """All patches as a (rows, cols, d, d) read-only view of the image."""
    d = grid.patch_size
    if image.shape != (grid.height, grid.width):
        raise ValueError(f"image shape {image.shape} does not match grid")
    return sliding_window_view(image, (d, d))


def scatter_all_patches(patches: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Sum of R_p^T z_p over all patches; patches shaped (rows, cols, d, d)."""
    d = grid.patch_size
    ny, nx = grid.rows, grid.cols
    if patches.shape != (ny, nx, d, d):
        raise ValueError(f"patch stack shape {patches.shape} does not match grid")
    out = np.zeros((grid.height, grid.width))
    for u in range(d):
        for v in range(d):
            out[u : u + ny, v : v + nx] += patches[:, :, u, v]
    return out


def scatter_patch_scalars(values: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Per-pixel sum of a per-patch scalar field over the covering windows.

    Equivalent to sum_p a_p R_p^T R_p applied to the all-ones image; with
    a_p = 1 this is coverage_counts.
    """
    ny, nx = grid.rows, grid.cols
    values = np.asarray(values, dtype=np.float64).reshape(ny, nx)
    d = grid.patch_size
    out = np.zeros((grid.height, grid.width))
    for u in range(d):
        for v in range(d):
            out[u : u + ny, v : v + nx] += values
    return out


def coverage_counts(grid: PatchGrid) -> np.ndarray:
    """Number of patches covering each pixel (d^2 interior, 1 at corners)."""

    def axis_counts(n: int, d: int) -> np.ndarray:
        idx = np.arange(n)
        return np.minimum(idx, n - d) - np.maximum(idx - d + 1, 0) + 1

    rows = axis_counts(grid.height, grid.patch_size)
    cols = axis_counts(grid.width, grid.patch_size)
    return np.outer(rows, cols).astype(np.float64)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


# ---------------------------------------------------------------------------
# File I/O: 8-bit PGM (P2/P5) and 8-bit grayscale PNG.


def _quantize(image: np.ndarray) -> np.ndarray:
    # clamp to [0,1], then round half-up to 8 bits
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


class _PGMScanner:
    """Tokenizer for PGM headers: whitespace-separated, '#' comments to EOL."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def token(self) -> bytes:
        d, n = self.data, len(self.data)
        while self.pos < n:
            c = d[self.pos : self.pos + 1]
            if c == b"#":
                while self.pos < n and d[self.pos : self.pos + 1] != b"\n":
                    self.pos += 1
            elif c.isspace():
                self.pos += 1
            else:
                break
        start = self.pos
        while self.pos < n and not d[self.pos : self.pos + 1].isspace():
            self.pos += 1
        if start == self.pos:
            raise ValueError("malformed PGM: truncated header")
        return d[start : self.pos]


def _load_pgm(data: bytes) -> np.ndarray:
    scan = _PGMScanner(data)
    magic = scan.token()
    try:
        width = int(scan.token())
        height = int(scan.token())
        maxval = int(scan.token())
    except ValueError as exc:
        raise ValueError("malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise ValueError("malformed PGM: bad dimensions")
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval} (only 8-bit supported)")
    if magic == b"P5":
        start = scan.pos + 1  # single whitespace byte after maxval
        raster = data[start : start + width * height]
        if len(raster) != width * height:
            raise ValueError("malformed PGM: truncated raster")
        values = np.frombuffer(raster, dtype=np.uint8)
    elif magic == b"P2":
        raster = b"\n".join(
            line.split(b"#", 1)[0] for line in data[scan.pos :].splitlines()
        )
        tokens = raster.split()
        if len(tokens) < width * height:
            raise ValueError("malformed PGM: truncated raster")
        try:
            values = np.array(
                [int(t) for t in tokens[: width * height]], dtype=np.int64
            )
        except ValueError as exc:
            raise ValueError("malformed PGM: non-numeric sample") from exc
        if values.min() < 0 or values.max() > 255:
            raise ValueError("malformed PGM: sample out of range")
        values = values.astype(np.uint8)
    else:
        raise ValueError(f"unsupported format magic {magic!r}")
    return values.reshape(height, width).astype(np.float64) / 255.0


def load_image(path) -> np.ndarray:
    """Load an 8-bit PGM (P2/P5) or grayscale PNG, mapped to [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] in (b"P2", b"P5"):
        return _load_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image as PILImage

        with PILImage.open(path) as img:
            if img.mode != "L":
                raise ValueError(
                    f"unsupported PNG mode {img.mode!r} (8-bit grayscale only)"
                )
            return np.asarray(img, dtype=np.float64) / 255.0
    raise ValueError(f"unsupported image format in {path}")


def save_image(image: np.ndarray, path, ascii_pgm: bool = False) -> None:
    """Write an image as PGM (.pgm) or PNG (.png), clamping then rounding half-up."""
    image = as_image(image)
    path = Path(path)
    values = _quantize(image)
    h, w = values.shape
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        if ascii_pgm:
            lines = [f"P2\n{w} {h}\n255\n"]
            for row in values:
                lines.append(" ".join(str(int(v)) for v in row) + "\n")
            path.write_text("".join(lines))
        else:
            path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + values.tobytes())
    elif suffix == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(values, mode="L").save(path)
    else:
        raise ValueError(f"unsupported output format {suffix!r} (use .pgm or .png)")
