"""Similarity-weight estimators: Nadaraya-Watson normalization and kernel ridge."""

from __future__ import annotations

import logging
import math

import numpy as np

from .linsolve import CGConfig, SymmetricLinearOperator, conjugate_gradient

__all__ = ["nw_weights", "krr_weights", "krr_regularization"]

log = logging.getLogger(__name__)

# below this, a similarity vector is treated as numerically vanished
_UNDERFLOW = 1e-300


def nw_weights(v: np.ndarray) -> np.ndarray:
    """Normalize a similarity vector to nonnegative weights summing to one.

    When every similarity has underflowed to ~0 the result falls back to
    uniform weights 1/m (the infinite-bandwidth limit), with a logged warning.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("similarity vector must be 1-D and non-empty")
    if np.any(v < 0):
        raise ValueError("similarities must be nonnegative")
    total = float(v.sum())
    if total <= _UNDERFLOW:
        log.warning(
            "all %d similarities vanished; falling back to uniform weights", v.size
        )
        return np.full(v.size, 1.0 / v.size)
    return v / total


def krr_weights(
    kernel: np.ndarray,
    v: np.ndarray,
    reg: float,
    cg: CGConfig | None = None,
) -> np.ndarray:
    """Solve (K + m*reg*I) alpha = v matrix-free by conjugate gradient.

    Entries may be negative.  The system matrix is SPD for reg > 0, so no
    O(m^3) factorization is needed; the default relative tolerance is 1e-8.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError("kernel matrix must be square")
    m = kernel.shape[0]
    if v.shape != (m,):
        raise ValueError("similarity vector length does not match kernel matrix")
    if reg <= 0:
        raise ValueError("regularization must be positive")
    shift = m * reg
    op = SymmetricLinearOperator(m, lambda a: kernel @ a + shift * a)
    cfg = cg or CGConfig(rel_tolerance=1e-8, max_iterations=10 * m + 50)
    return conjugate_gradient(op, v, cfg).x


def krr_regularization(
    r: float, m: int, q: float = 0.0, num_patches: int = 1, n: int = 1
) -> float:
    """Regularization rule r * sqrt(1/m + q/(num_patches*n)).

    q defaults to 0 (patch correlations empirically much smaller than the
    patch count); supply a measured estimate to tighten the rule.
    """
    if m < 1 or num_patches < 1 or n < 1:
        raise ValueError("sample counts must be at least 1")
    if q < 0 or r <= 0:
        raise ValueError("need q >= 0 and r > 0")
    return r * math.sqrt(1.0 / m + q / (num_patches * n))
