"""Stochastic dual coordinate ascent for weighted Euclidean-distance sums.

Solves, per anchor patch x and nonnegative weights a_i,

    min_z  sum_i a_i ||z - t_i||_2  +  (beta/2) ||z - x||_2^2

by maximizing its dual over per-sample variables mu_i constrained to the ball
||mu_i|| <= a_i.  The primal iterate is linked to the duals by
z = x + sum_i mu_i / beta, maintained exactly after every step.  The duality
gap decomposes into per-sample gaps

    g_i = a_i ||z - t_i|| + mu_i^T (z - t_i)  >=  0,

which drive both termination and non-uniform coordinate sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SDCAConfig",
    "row_distances",
    "primal_values",
    "DualState",
    "InfeasibleDualStateError",
    "dual_gap",
    "gap_sample",
    "sdca_minimize",
    "z_update_sdca",
]


class InfeasibleDualStateError(ValueError):
    pass


@dataclass
class SDCAConfig:
    max_steps: int = 500
    gap_tolerance: float | None = None  # None -> 1e-4 * m
    gap_recompute_period: int = 25
    sampling: str = "proportional"  # "proportional" | "greedy" | "uniform"
    validate: bool = False  # per-step feasibility/link checks (slow, for tests)

    def __post_init__(self):
        if self.gap_tolerance is not None and self.gap_tolerance <= 0:
            raise ValueError("gap tolerance must be positive")
        if self.gap_recompute_period < 1:
            raise ValueError("gap recompute period must be >= 1")
        if self.sampling not in ("proportional", "greedy", "uniform"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")

    def resolved_tolerance(self, m: int) -> float:
        return self.gap_tolerance if self.gap_tolerance is not None else 1e-4 * m


@dataclass
class DualState:
    """Per-sample dual vectors, their gaps, and the linked primal iterate."""

    mu: np.ndarray  # (m, D)
    gaps: np.ndarray  # (m,)
    z: np.ndarray  # (D,)


@dataclass
class SDCAInfo:
    steps: int = 0
    gap_recomputes: int = 0
    max_link_violation: float = 0.0
    max_feasibility_violation: float = 0.0
    min_gap_entry: float = 0.0
    gap_history: list = field(default_factory=list)  # totals at recompute points


def dual_gap(
    state: DualState,
    anchor: np.ndarray,
    alphas: np.ndarray,
    train: np.ndarray,
    beta: float,
    check_tol: float = 1e-9,
) -> tuple[float, np.ndarray]:
    """Total and per-sample duality gaps of a feasible, linked dual state.

    Raises InfeasibleDualStateError when some ||mu_i|| exceeds its radius a_i
    or the primal-dual link z = anchor + sum_i mu_i / beta is broken.
    """
    train = np.asarray(train, dtype=np.float64).reshape(len(alphas), -1)
    alphas = np.asarray(alphas, dtype=np.float64)
    mu = np.asarray(state.mu, dtype=np.float64)
    z = np.asarray(state.z, dtype=np.float64)
    norms = np.linalg.norm(mu, axis=1)
    excess = float(np.max(norms - alphas, initial=0.0))
    if excess > check_tol:
        raise InfeasibleDualStateError(f"dual radius exceeded by {excess:g}")
    linked = np.asarray(anchor, dtype=np.float64) + mu.sum(axis=0) / beta
    drift = float(np.max(np.abs(linked - z)))
    if drift > check_tol * max(1.0, float(np.max(np.abs(z)))):
        raise InfeasibleDualStateError(f"primal-dual link broken by {drift:g}")
    diff = z[None, :] - train
    gaps = alphas * np.linalg.norm(diff, axis=1) + np.sum(mu * diff, axis=1)
    return float(gaps.sum()), gaps


def gap_sample(gaps: np.ndarray, rng=None, greedy: bool = False) -> int:
    """Draw a coordinate with probability proportional to its gap.

    The greedy variant returns argmax with ties broken toward the lowest
    index; it is deterministic and intended for tests.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if greedy:
        return int(np.argmax(gaps))
    total = float(gaps.sum())
    if total <= 0.0:
        raise ValueError("all gaps are zero; the solve already converged")
    rng = rng or np.random.default_rng()
    target = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(gaps), target, side="left"))
    return min(idx, gaps.size - 1)


def primal_values(
    zs: np.ndarray, anchors: np.ndarray, alphas: np.ndarray, train: np.ndarray,
    beta: float,
) -> np.ndarray:
    """Primal objective per row of zs, shaped (C,)."""
    dists = row_distances(zs, train)
    couple = 0.5 * beta * np.sum((zs - anchors) ** 2, axis=1)
    return np.sum(alphas * dists, axis=1) + couple


def row_distances(zs: np.ndarray, train: np.ndarray) -> np.ndarray:
    """(C, m) Euclidean distances between rows of zs and rows of train."""
    d2 = (
        np.sum(zs * zs, axis=1)[:, None]
        + np.sum(train * train, axis=1)[None, :]
        - 2.0 * (zs @ train.T)
    )
    return np.sqrt(np.maximum(d2, 0.0))


def sdca_minimize(
    anchors: np.ndarray,
    alphas: np.ndarray,
    train: np.ndarray,
    beta: float,
    cfg: SDCAConfig | None = None,
    rng=None,
    mu0: np.ndarray | None = None,
    return_state: bool = False,
):
    """Run SDCA jointly over a batch of independent anchor problems.

    anchors: (C, D) anchor patches; alphas: (C, m) nonnegative weights;
    train: (m, D) training patches.  Each step picks one coordinate per
    batch row (gap sampling by default), performs the closed-form ball
    projection mu_i <- -b_i min(a_i/||b_i||, beta) with
    b_i = z - mu_i/beta - t_i, and moves z to keep the primal-dual link.

    Full gap recomputation happens every `gap_recompute_period` steps; in
    between, sampling reuses the stale gaps.  Returns (z, total_gaps, info)
    and additionally the dual vectors when return_state is set.
    """
    cfg = cfg or SDCAConfig()
    rng = rng or np.random.default_rng()
    anchors = np.asarray(anchors, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    train = np.asarray(train, dtype=np.float64)
    C, D = anchors.shape
    m = train.shape[0]
    if alphas.shape != (C, m):
        raise ValueError(f"weights shape {alphas.shape} != ({C}, {m})")
    if np.any(alphas < 0):
        raise ValueError("negative weight: the dual ball radii must be nonnegative")
    if beta <= 0:
        raise ValueError("quadratic coupling beta must be positive")
    tol = cfg.resolved_tolerance(m)

    if mu0 is None:
        mu = np.zeros((C, m, D))
        dot_mu_train = np.zeros((C, m))  # running mu_i^T t_i per sample
        z = anchors.copy()
    else:
        mu = np.array(mu0, dtype=np.float64)
        dot_mu_train = np.einsum("cmd,md->cm", mu, train)
        z = anchors + mu.sum(axis=1) / beta

    info = SDCAInfo()
    rows = np.arange(C)

    def recompute_gaps():
        dists = row_distances(z, train)
        mu_dot_z = np.matmul(mu, z[:, :, None])[:, :, 0]
        gaps = alphas * dists + mu_dot_z - dot_mu_train
        info.gap_recomputes += 1
        if cfg.validate:
            info.min_gap_entry = min(info.min_gap_entry, float(gaps.min()))
        return np.maximum(gaps, 0.0)

    def validate_step():
        norms = np.linalg.norm(mu, axis=2)
        info.max_feasibility_violation = max(
            info.max_feasibility_violation, float(np.max(norms - alphas, initial=0.0))
        )
        linked = anchors + mu.sum(axis=1) / beta
        info.max_link_violation = max(
            info.max_link_violation, float(np.max(np.abs(linked - z)))
        )

    gaps = recompute_gaps()
    totals = gaps.sum(axis=1)
    info.gap_history.append(totals.copy())
    steps = 0
    while steps < cfg.max_steps and bool(np.any(totals > tol)):
        active = totals > tol
        if cfg.sampling == "proportional":
            cums = np.cumsum(gaps, axis=1)
            stale_totals = cums[:, -1]
        for _ in range(cfg.gap_recompute_period):
            if steps >= cfg.max_steps:
                break
            if cfg.sampling == "proportional":
                targets = rng.random(C) * stale_totals
                idx = np.minimum(np.sum(cums < targets[:, None], axis=1), m - 1)
            elif cfg.sampling == "greedy":
                idx = np.argmax(gaps, axis=1)
            else:
                idx = rng.integers(0, m, size=C)
            mu_old = mu[rows, idx]
            b = z - mu_old / beta - train[idx]
            nb = np.linalg.norm(b, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(
                    nb > 0.0, np.minimum(alphas[rows, idx] / nb, beta), 0.0
                )
            mu_new = -b * scale[:, None]
            gate = active[:, None]
            delta = np.where(gate, mu_new - mu_old, 0.0)
            z += delta / beta
            mu[rows, idx] = np.where(gate, mu_new, mu_old)
            dot_mu_train[rows, idx] = np.where(
                active, np.sum(mu[rows, idx] * train[idx], axis=1),
                dot_mu_train[rows, idx],
            )
            if cfg.sampling == "greedy":
                # refresh only the touched entries so argmax moves on
                diff = z - train[idx]
                fresh = alphas[rows, idx] * np.linalg.norm(diff, axis=1) + np.sum(
                    mu[rows, idx] * diff, axis=1
                )
                gaps[rows, idx] = np.where(active, np.maximum(fresh, 0.0), gaps[rows, idx])
            steps += 1
            if cfg.validate:
                validate_step()
        gaps = recompute_gaps()
        totals = gaps.sum(axis=1)
        info.gap_history.append(totals.copy())
    info.steps = steps
    if return_state:
        return z, totals, info, mu
    return z, totals, info


def z_update_sdca(
    anchor: np.ndarray,
    alphas: np.ndarray,
    train,
    beta: float,
    cfg: SDCAConfig | None = None,
    rng=None,
    center: bool = True,
):
    """Solve one patch subproblem; returns (z, achieved total gap).

    The anchor and training patches are mean-centered on entry and the anchor
    mean is added back to z on exit.  `train` may be a PatchDataset or a raw
    (m, d, d) / (m, D) array of training patches.
    """
    train = getattr(train, "clean_matrix", train)
    train = np.asarray(train, dtype=np.float64)
    if train.ndim == 3:
        train = train.reshape(train.shape[0], -1)
    anchor = np.asarray(anchor, dtype=np.float64)
    shape = anchor.shape
    flat = anchor.ravel()
    if center:
        mean = float(flat.mean())
        flat = flat - mean
        train = train - train.mean(axis=1, keepdims=True)
    else:
        mean = 0.0
    z, totals, _ = sdca_minimize(
        flat[None, :], np.asarray(alphas, dtype=np.float64)[None, :], train,
        beta, cfg, rng,
    )
    return (z[0] + mean).reshape(shape), float(totals[0])
