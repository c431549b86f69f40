"""Training patch pairs: sampling from image corpora and the PRD1 file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degrade import DegradationOperator, Downsample, NoiseModel, degrade
from .features import bandwidth_from_features, dct_feature_matrix

__all__ = ["PatchDataset", "sample_patch_dataset"]

_MAGIC = b"PRD1"


@dataclass
class PatchDataset:
    """Aligned clean/degraded training patches with cached transform features.

    clean is (m, d, d); degraded is (m, dd, dd) where dd = d except for
    downsampling datasets, which pair a low-resolution patch of side d/k
    with its full-resolution counterpart.  Features and bandwidths are
    recomputed lazily, never stored on disk.
    """

    clean: np.ndarray
    degraded: np.ndarray
    seed: int = 0
    image_ids: np.ndarray | None = None
    positions: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.clean = np.asarray(self.clean, dtype=np.float64)
        self.degraded = np.asarray(self.degraded, dtype=np.float64)
        if self.clean.ndim != 3 or self.clean.shape[1] != self.clean.shape[2]:
            raise ValueError("clean patches must be shaped (m, d, d)")
        if self.degraded.ndim != 3 or self.degraded.shape[1] != self.degraded.shape[2]:
            raise ValueError("degraded patches must be shaped (m, dd, dd)")
        if self.clean.shape[0] != self.degraded.shape[0]:
            raise ValueError("clean/degraded patch counts differ")
        if self.clean.shape[0] < 1:
            raise ValueError("dataset needs at least one patch pair")

    @property
    def size(self) -> int:
        return self.clean.shape[0]

    @property
    def patch_size(self) -> int:
        return self.clean.shape[1]

    @property
    def degraded_patch_size(self) -> int:
        return self.degraded.shape[1]

    @property
    def clean_matrix(self) -> np.ndarray:
        return self.clean.reshape(self.size, -1)

    @property
    def degraded_matrix(self) -> np.ndarray:
        return self.degraded.reshape(self.size, -1)

    def clean_features(self, drop_dc: bool = False) -> np.ndarray:
        key = ("cf", drop_dc)
        if key not in self._cache:
            self._cache[key] = dct_feature_matrix(self.clean, drop_dc=drop_dc)
        return self._cache[key]

    def degraded_features(self, drop_dc: bool = False) -> np.ndarray:
        key = ("df", drop_dc)
        if key not in self._cache:
            self._cache[key] = dct_feature_matrix(self.degraded, drop_dc=drop_dc)
        return self._cache[key]

    def clean_bandwidth(self, scale: float = 0.2, drop_dc: bool = False) -> float:
        key = ("cb", scale, drop_dc)
        if key not in self._cache:
            self._cache[key] = bandwidth_from_features(
                self.clean_features(drop_dc), scale
            )
        return self._cache[key]

    def degraded_bandwidth(self, scale: float = 0.2, drop_dc: bool = False) -> float:
        key = ("db", scale, drop_dc)
        if key not in self._cache:
            self._cache[key] = bandwidth_from_features(
                self.degraded_features(drop_dc), scale
            )
        return self._cache[key]

    def save(self, path) -> None:
        """Write the PRD1 binary layout (little-endian, float32 patch data)."""
        m = self.size
        header = _MAGIC + struct.pack(
            "<III", m, self.patch_size, self.degraded_patch_size
        )
        body = (
            self.clean.astype("<f4").tobytes()
            + self.degraded.astype("<f4").tobytes()
            + struct.pack("<Q", self.seed & 0xFFFFFFFFFFFFFFFF)
        )
        Path(path).write_bytes(header + body)

    @classmethod
    def load(cls, path) -> "PatchDataset":
        data = Path(path).read_bytes()
        if data[:4] != _MAGIC:
            raise ValueError(f"{path}: not a PRD1 dataset file")
        if len(data) < 16:
            raise ValueError(f"{path}: truncated header")
        m, dc, dd = struct.unpack("<III", data[4:16])
        nclean = m * dc * dc
        ndeg = m * dd * dd
        expected = 16 + 4 * (nclean + ndeg) + 8
        if len(data) != expected:
            raise ValueError(f"{path}: size {len(data)} != expected {expected}")
        off = 16
        clean = np.frombuffer(data, dtype="<f4", count=nclean, offset=off)
        off += 4 * nclean
        degraded = np.frombuffer(data, dtype="<f4", count=ndeg, offset=off)
        off += 4 * ndeg
        (seed,) = struct.unpack("<Q", data[off : off + 8])
        return cls(
            clean=clean.astype(np.float64).reshape(m, dc, dc),
            degraded=degraded.astype(np.float64).reshape(m, dd, dd),
            seed=int(seed),
        )


def sample_patch_dataset(
    images: list[np.ndarray],
    op: DegradationOperator,
    noise: NoiseModel | None,
    m: int,
    patch_size: int,
    seed: int = 0,
) -> PatchDataset:
    """Draw m aligned clean/degraded patch pairs uniformly across a corpus.

    Each training image is degraded once (operator plus seeded noise), then
    patch locations are drawn uniformly with replacement over all images.
    For downsampling operators the clean position is a multiple of the factor
    and pairs with a (d/k)-sided patch at the matching low-resolution spot.
    """
    if m < 1:
        raise ValueError("need at least one patch pair")
    if not images:
        raise ValueError("need at least one training image")
    d = patch_size
    factor = op.factor if isinstance(op, Downsample) else 1
    if d % factor != 0:
        raise ValueError(f"patch size {d} not divisible by downsampling factor {factor}")
    d_lo = d // factor

    seq = np.random.SeedSequence(seed)
    noise_seeds = seq.spawn(len(images))
    rng = np.random.default_rng(seq.spawn(1)[0])

    degraded_images = []
    for img, sub in zip(images, noise_seeds):
        img = np.asarray(img, dtype=np.float64)
        if img.shape != op.in_shape:
            raise ValueError(
                f"training image shape {img.shape} != operator input {op.in_shape}"
            )
        if img.shape[0] < d or img.shape[1] < d:
            raise ValueError(f"image {img.shape} smaller than patch size {d}")
        sub_noise = (
            NoiseModel(noise.sigma, int(sub.generate_state(1)[0]))
            if noise is not None and noise.sigma > 0
            else None
        )
        degraded_images.append(degrade(op, img, sub_noise))

    h, w = op.in_shape
    max_i = (h - d) // factor
    max_j = (w - d) // factor
    clean = np.empty((m, d, d))
    deg = np.empty((m, d_lo, d_lo))
    ids = rng.integers(0, len(images), size=m)
    gi = rng.integers(0, max_i + 1, size=m)
    gj = rng.integers(0, max_j + 1, size=m)
    positions = np.stack([gi * factor, gj * factor], axis=1)
    for t in range(m):
        a = int(ids[t])
        i, j = int(positions[t, 0]), int(positions[t, 1])
        clean[t] = np.asarray(images[a])[i : i + d, j : j + d]
        il, jl = i // factor, j // factor
        deg[t] = degraded_images[a][il : il + d_lo, jl : jl + d_lo]
    return PatchDataset(
        clean=clean, degraded=deg, seed=seed, image_ids=ids, positions=positions
    )
