"""Matrix-free conjugate gradient for symmetric positive definite systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "LinSolveError",
    "NonConvergenceError",
    "IndefiniteOperatorError",
    "SymmetricLinearOperator",
    "CGConfig",
    "CGResult",
    "conjugate_gradient",
]


class LinSolveError(Exception):
    pass


class NonConvergenceError(LinSolveError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class IndefiniteOperatorError(LinSolveError):
    """Negative curvature p^T A p <= 0 found; the operator is not SPD."""


class SymmetricLinearOperator:
    """A matrix-free symmetric operator: a dimension plus an apply callback."""

    def __init__(self, dim: int, matvec: Callable[[np.ndarray], np.ndarray]):
        self.dim = int(dim)
        self.matvec = matvec

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.matvec(v)

    def check_symmetry(self, rng=None, probes: int = 3, tol: float = 1e-8) -> None:
        """Assert <Au, v> == <u, Av> on random probes (debug/test helper)."""
        rng = rng or np.random.default_rng(0)
        for _ in range(probes):
            u = rng.standard_normal(self.dim)
            v = rng.standard_normal(self.dim)
            a = float(self.matvec(u) @ v)
            b = float(u @ self.matvec(v))
            if abs(a - b) > tol * max(1.0, abs(a), abs(b)):
                raise AssertionError(f"operator not symmetric: {a} vs {b}")


@dataclass
class CGConfig:
    rel_tolerance: float = 1e-6
    max_iterations: int = 500
    x0: np.ndarray | None = None  # zero start when None, warm start otherwise
    preconditioner: Callable[[np.ndarray], np.ndarray] | None = None  # Jacobi hook

    def __post_init__(self):
        if self.rel_tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float


def conjugate_gradient(
    op,
    b: np.ndarray,
    cfg: CGConfig | None = None,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> CGResult:
    """Solve A x = b for symmetric positive definite A to a relative residual.

    `op` is a SymmetricLinearOperator or a bare callable.  Raises
    IndefiniteOperatorError on negative curvature and NonConvergenceError when
    the iteration budget runs out or the residual diverges.
    """
    cfg = cfg or CGConfig()
    apply_op = op.matvec if isinstance(op, SymmetricLinearOperator) else op
    b = np.asarray(b, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        # for SPD A the solution of A x = 0 is x = 0
        return CGResult(np.zeros_like(b), 0, 0.0)

    if cfg.x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(cfg.x0, dtype=np.float64)
        r = b - apply_op(x)
    rnorm = float(np.linalg.norm(r))
    target = cfg.rel_tolerance * bnorm
    if rnorm <= target:
        return CGResult(x, 0, rnorm)

    precond = cfg.preconditioner
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, cfg.max_iterations + 1):
        ap = apply_op(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise IndefiniteOperatorError(
                f"negative curvature p^T A p = {pap:g} at iteration {it}"
            )
        step = rz / pap
        x = x + step * p
        r = r - step * ap
        rnorm = float(np.linalg.norm(r))
        if callback is not None:
            callback(it, x, rnorm)
        if rnorm <= target:
            return CGResult(x, it, rnorm)
        if not np.isfinite(rnorm) or rnorm > 1e8 * bnorm:
            raise NonConvergenceError(
                f"residual diverged to {rnorm:g}", it, rnorm
            )
        z = precond(r) if precond is not None else r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise NonConvergenceError(
        f"no convergence in {cfg.max_iterations} iterations (residual {rnorm:g}, "
        f"target {target:g})",
        cfg.max_iterations,
        rnorm,
    )
