"""Patch-regularized restoration solvers.

Two routes minimize the patch-weighted energy with a quadratic data term:

* ``solve_mse`` -- with squared patch losses the minimizer solves one linear
  system, handled matrix-free by conjugate gradient.
* ``hqs_restore`` -- with Euclidean (non-squared) patch losses, half-quadratic
  splitting alternates SDCA patch updates against a quadratic coupling with a
  geometrically growing weight, and a CG image update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dataset import PatchDataset
from .degrade import DegradationOperator, Downsample
from .features import KernelModel, image_patch_features, kernel_matrix, pairwise_sq_dists
from .image import (
    PatchGrid,
    coverage_counts,
    extract_all_patches,
    psnr,
    scatter_all_patches,
    scatter_patch_scalars,
)
from .linsolve import CGConfig, SymmetricLinearOperator, conjugate_gradient
from .sdca import SDCAConfig, primal_values, row_distances, sdca_minimize
from .weights import krr_regularization, krr_weights

__all__ = [
    "SolverConfig",
    "HQSIterationStats",
    "HQSResult",
    "patch_weight_matrix",
    "solve_mse",
    "mse_restore",
    "x_update",
    "hqs_restore",
    "energy_l2",
    "bicubic_upsample",
    "write_trace_csv",
]

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Settings for the restoration drivers.

    gamma is the fidelity weight with the patch-count rescaling already
    applied (so published operating points like 3200 plug in directly);
    beta0/growth/iterations control the quadratic-coupling schedule.
    """

    gamma: float = 3200.0
    beta0: float = 3.0
    growth: float = 2.0
    iterations: int = 8
    sdca_steps: int = 500
    gap_tolerance: float | None = None  # None -> 1e-4 * m
    gap_recompute_period: int = 25
    sampling: str = "proportional"
    weight_kind: str = "nw"  # "nw" | "krr"
    krr_reg: float | None = None  # None -> rule sqrt(1/m) via krr_regularization
    alpha_schedule: str = "switch-to-clean"  # | "always-degraded"
    recompute_alpha: bool = True
    center_patches: bool = True
    bandwidth_scale: float = 0.2
    bandwidth_source: str = "matched"  # | "clean"
    drop_dc: bool = False
    warm_start_dual: bool = False
    seed: int = 0
    chunk_size: int | None = None  # SDCA batch width; None picks from memory budget

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if self.growth <= 1:
            raise ValueError("coupling growth factor must exceed 1")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.gap_tolerance is not None and self.gap_tolerance <= 0:
            raise ValueError("gap tolerance must be positive")
        if self.weight_kind not in ("nw", "krr"):
            raise ValueError(f"unknown weight kind {self.weight_kind!r}")
        if self.alpha_schedule not in ("switch-to-clean", "always-degraded"):
            raise ValueError(f"unknown alpha schedule {self.alpha_schedule!r}")
        if self.bandwidth_source not in ("matched", "clean"):
            raise ValueError(f"unknown bandwidth source {self.bandwidth_source!r}")

    def sdca_config(self) -> SDCAConfig:
        return SDCAConfig(
            max_steps=self.sdca_steps,
            gap_tolerance=self.gap_tolerance,
            gap_recompute_period=self.gap_recompute_period,
            sampling=self.sampling,
        )


@dataclass
class HQSIterationStats:
    iteration: int
    beta: float
    energy_start: float
    energy_after_z: float
    energy: float  # after the image update; the value reported per iteration
    psnr: float  # vs the reference image, nan when absent


@dataclass
class HQSResult:
    image: np.ndarray
    trace: list[HQSIterationStats] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Weight computation for a batch of query patches.


def patch_weight_matrix(
    query_features: np.ndarray,
    train_features: np.ndarray,
    model: KernelModel,
    kind: str = "nw",
    krr_reg: float | None = None,
) -> np.ndarray:
    """Weight vectors for many query patches at once, shaped (P, m)."""
    d2 = pairwise_sq_dists(query_features, train_features)
    similarities = np.exp(-d2 / (2.0 * model.bandwidth**2))
    m = train_features.shape[0]
    if kind == "nw":
        sums = similarities.sum(axis=1)
        vanished = sums <= 1e-300
        if np.any(vanished):
            log.warning(
                "similarities vanished for %d of %d patches; using uniform weights",
                int(vanished.sum()),
                similarities.shape[0],
            )
            similarities[vanished] = 1.0
            sums[vanished] = float(m)
        return similarities / sums[:, None]
    if kind == "krr":
        reg = krr_reg if krr_reg is not None else krr_regularization(1.0, m)
        gram = kernel_matrix(train_features, model)
        out = np.empty_like(similarities)
        for p in range(similarities.shape[0]):
            out[p] = krr_weights(gram, similarities[p], reg)
        return out
    raise ValueError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------------------
# Quadratic solves shared by the MSE route and the HQS image update.


def _solve_quadratic(
    y: np.ndarray,
    op: DegradationOperator,
    pixel_weights: np.ndarray,
    prior_rhs: np.ndarray,
    gamma: float,
    cg: CGConfig | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Solve (gamma B^T B + diag(pixel_weights)) x = gamma B^T y + prior_rhs."""
    shape = op.in_shape
    n = shape[0] * shape[1]
    rhs = prior_rhs.copy()
    if gamma > 0:
        rhs += gamma * op.adjoint(y)

    def matvec(v):
        x = v.reshape(shape)
        out = pixel_weights * x
        if gamma > 0:
            out = out + gamma * op.adjoint(op.apply(x))
        return out.ravel()

    cfg = cg or CGConfig(rel_tolerance=1e-6, max_iterations=2000)
    if x0 is not None:
        cfg = CGConfig(
            rel_tolerance=cfg.rel_tolerance,
            max_iterations=cfg.max_iterations,
            x0=np.asarray(x0, dtype=np.float64).ravel(),
            preconditioner=cfg.preconditioner,
        )
    result = conjugate_gradient(SymmetricLinearOperator(n, matvec), rhs.ravel(), cfg)
    return result.x.reshape(shape)


def solve_mse(
    y: np.ndarray,
    op: DegradationOperator,
    data: PatchDataset,
    alphas: np.ndarray,
    gamma: float,
    cg: CGConfig | None = None,
) -> np.ndarray:
    """Closed-form route for squared patch losses.

    alphas holds one weight vector per patch, shaped (|P|, m).  The per-patch
    weight totals act as a pixelwise diagonal and the weighted mean patches
    are scattered once into the right-hand side, so each CG application costs
    one forward/adjoint operator pair plus an elementwise product.
    """
    grid = PatchGrid(data.patch_size, *op.in_shape)
    m = data.size
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.shape != (grid.num_patches, m):
        raise ValueError(
            f"weights shape {alphas.shape} != ({grid.num_patches}, {m})"
        )
    d = grid.patch_size
    totals = alphas.sum(axis=1)
    weighted_means = alphas @ data.clean_matrix  # (|P|, d^2)
    pixel_weights = scatter_patch_scalars(totals, grid)
    prior_rhs = scatter_all_patches(
        weighted_means.reshape(grid.rows, grid.cols, d, d), grid
    )
    return _solve_quadratic(y, op, pixel_weights, prior_rhs, gamma, cg)


def x_update(
    zs: np.ndarray,
    y: np.ndarray,
    op: DegradationOperator,
    beta: float,
    gamma: float,
    grid: PatchGrid | None = None,
    x0: np.ndarray | None = None,
    cg: CGConfig | None = None,
) -> np.ndarray:
    """Image update: solve (beta sum R_p^T R_p + gamma B^T B) x = beta sum R_p^T z_p + gamma B^T y."""
    zs = np.asarray(zs, dtype=np.float64)
    if grid is None:
        d = zs.shape[-1]
        grid = PatchGrid(d, *op.in_shape)
    zs = zs.reshape(grid.rows, grid.cols, grid.patch_size, grid.patch_size)
    pixel_weights = beta * coverage_counts(grid)
    prior_rhs = beta * scatter_all_patches(zs, grid)
    return _solve_quadratic(y, op, pixel_weights, prior_rhs, gamma, cg, x0=x0)


def mse_restore(
    y: np.ndarray,
    op: DegradationOperator,
    data: PatchDataset,
    cfg: SolverConfig,
) -> np.ndarray:
    """Convenience MSE route: weights from degraded-patch features, one solve."""
    grid = PatchGrid(data.patch_size, *op.in_shape)
    alphas = _degraded_phase_weights(y, op, data, grid, cfg)
    return solve_mse(y, op, data, alphas, cfg.gamma)


# ---------------------------------------------------------------------------
# HQS driver.


def bicubic_upsample(image: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Cubic-spline upsampling onto an exact output shape."""
    image = np.asarray(image, dtype=np.float64)
    factors = (out_shape[0] / image.shape[0], out_shape[1] / image.shape[1])
    out = ndimage.zoom(image, factors, order=3, mode="grid-mirror", grid_mode=True)
    if out.shape != tuple(out_shape):
        raise ValueError(f"upsample produced {out.shape}, wanted {out_shape}")
    return out


def _bandwidth(data: PatchDataset, phase: str, cfg: SolverConfig) -> float:
    if cfg.bandwidth_source == "clean" or phase == "clean":
        return data.clean_bandwidth(cfg.bandwidth_scale, cfg.drop_dc)
    return data.degraded_bandwidth(cfg.bandwidth_scale, cfg.drop_dc)


def _degraded_phase_weights(
    y: np.ndarray,
    op: DegradationOperator,
    data: PatchDataset,
    grid: PatchGrid,
    cfg: SolverConfig,
) -> np.ndarray:
    """Weights from the degraded observation against degraded training features."""
    if isinstance(op, Downsample):
        k = op.factor
        lo_grid = PatchGrid(data.degraded_patch_size, *op.out_shape)
        lo_feats = image_patch_features(y, lo_grid, cfg.drop_dc)
        # nearest low-resolution window for each full-resolution patch offset
        ii = np.minimum(
            np.rint(np.arange(grid.rows) / k).astype(int), lo_grid.rows - 1
        )
        jj = np.minimum(
            np.rint(np.arange(grid.cols) / k).astype(int), lo_grid.cols - 1
        )
        flat = (ii[:, None] * lo_grid.cols + jj[None, :]).ravel()
        query = lo_feats[flat]
    else:
        query = image_patch_features(y, grid, cfg.drop_dc)
    model = KernelModel(_bandwidth(data, "degraded", cfg), cfg.bandwidth_scale)
    return patch_weight_matrix(
        query, data.degraded_features(cfg.drop_dc), model, cfg.weight_kind, cfg.krr_reg
    )


def _clean_phase_weights(
    x: np.ndarray, data: PatchDataset, grid: PatchGrid, cfg: SolverConfig
) -> np.ndarray:
    """Weights from the current estimate against clean training features."""
    query = image_patch_features(x, grid, cfg.drop_dc)
    model = KernelModel(_bandwidth(data, "clean", cfg), cfg.bandwidth_scale)
    return patch_weight_matrix(
        query, data.clean_features(cfg.drop_dc), model, cfg.weight_kind, cfg.krr_reg
    )


def _auto_chunk(m: int, dim: int, budget_bytes: int = 192 * 1024 * 1024) -> int:
    per_row = max(1, m * dim * 8)
    return int(np.clip(budget_bytes // per_row, 16, 2048))


def _weighted_patch_term(
    zs: np.ndarray,
    alphas: np.ndarray,
    train_c: np.ndarray,
    anchor_means: np.ndarray,
    chunk: int = 1024,
) -> float:
    """sum_p sum_i alpha_pi ||z_p - t_i - shift_p|| with frozen centering shifts."""
    total = 0.0
    for start in range(0, zs.shape[0], chunk):
        sl = slice(start, min(start + chunk, zs.shape[0]))
        u = zs[sl] - anchor_means[sl, None]
        total += float(np.sum(alphas[sl] * row_distances(u, train_c)))
    return total


def _splitting_energy(
    x: np.ndarray,
    zs: np.ndarray,
    y: np.ndarray,
    op: DegradationOperator,
    alphas: np.ndarray,
    train_c: np.ndarray,
    anchor_means: np.ndarray,
    beta: float,
    gamma: float,
    grid: PatchGrid,
) -> float:
    """Coupled objective: patch term + fidelity + quadratic coupling."""
    resid = np.asarray(y, dtype=np.float64) - op.apply(x)
    fidelity = 0.5 * gamma * float(np.sum(resid**2))
    patches = extract_all_patches(x, grid).reshape(grid.num_patches, -1)
    couple = 0.5 * beta * float(np.sum((patches - zs) ** 2))
    return _weighted_patch_term(zs, alphas, train_c, anchor_means) + fidelity + couple


def _z_step(
    x: np.ndarray,
    grid: PatchGrid,
    alphas: np.ndarray,
    train_c: np.ndarray,
    anchor_means: np.ndarray,
    beta: float,
    cfg: SolverConfig,
    rng,
    mu_store: list | None = None,
) -> np.ndarray:
    """All patch updates for one iteration, batched over patch chunks.

    SDCA runs in the mean-centered frame; a monotone safeguard keeps the
    anchor whenever the inexact solve would not improve its subproblem, so
    the coupled objective never increases across the z step.
    """
    d = grid.patch_size
    P = grid.num_patches
    anchors = np.ascontiguousarray(
        extract_all_patches(x, grid).reshape(P, d * d)
    )
    anchors_c = anchors - anchor_means[:, None]
    m = train_c.shape[0]
    chunk = cfg.chunk_size or _auto_chunk(m, d * d)
    sdca_cfg = cfg.sdca_config()
    zs = np.empty_like(anchors)
    warm = cfg.warm_start_dual and mu_store is not None
    for ci, start in enumerate(range(0, P, chunk)):
        sl = slice(start, min(start + chunk, P))
        mu0 = mu_store[ci] if warm and ci < len(mu_store) else None
        out = sdca_minimize(
            anchors_c[sl],
            alphas[sl],
            train_c,
            beta,
            sdca_cfg,
            rng,
            mu0=mu0,
            return_state=cfg.warm_start_dual,
        )
        z = out[0]
        if cfg.warm_start_dual and mu_store is not None:
            mu = out[3]
            if ci < len(mu_store):
                mu_store[ci] = mu
            else:
                mu_store.append(mu)
        candidate = primal_values(z, anchors_c[sl], alphas[sl], train_c, beta)
        incumbent = primal_values(
            anchors_c[sl], anchors_c[sl], alphas[sl], train_c, beta
        )
        keep_anchor = candidate > incumbent
        if np.any(keep_anchor):
            z[keep_anchor] = anchors_c[sl][keep_anchor]
        zs[sl] = z + anchor_means[sl, None]
    return zs


def hqs_restore(
    y: np.ndarray,
    op: DegradationOperator,
    data: PatchDataset,
    cfg: SolverConfig,
    reference: np.ndarray | None = None,
    rng=None,
) -> HQSResult:
    """Half-quadratic splitting with SDCA patch updates (nonnegative weights only).

    Starts from the observation itself (or its cubic upsample when the
    operator changes dimensions), then iterates weight recomputation, the
    patch updates, the CG image update, and the coupling growth beta <- growth*beta.
    Per-iteration energies are measured at fixed beta with the iteration's
    weights and centering shifts frozen, so the z and x checkpoints certify
    block-coordinate descent.
    """
    if cfg.weight_kind != "nw":
        raise ValueError("the splitting route needs nonnegative (nw) weights")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != op.out_shape:
        raise ValueError(f"observation shape {y.shape} != operator output {op.out_shape}")
    grid = PatchGrid(data.patch_size, *op.in_shape)
    if op.in_shape == op.out_shape:
        x = y.copy()
    else:
        x = bicubic_upsample(y, op.in_shape)
    rng = rng or np.random.default_rng(cfg.seed)

    train = data.clean_matrix
    if cfg.center_patches:
        train_c = train - train.mean(axis=1, keepdims=True)
    else:
        train_c = train

    beta = cfg.beta0
    alphas = None
    mu_store: list | None = [] if cfg.warm_start_dual else None
    trace: list[HQSIterationStats] = []
    P = grid.num_patches
    for t in range(1, cfg.iterations + 1):
        if alphas is None or cfg.recompute_alpha:
            if t == 1 or cfg.alpha_schedule == "always-degraded":
                alphas = _degraded_phase_weights(y, op, data, grid, cfg)
            else:
                alphas = _clean_phase_weights(x, data, grid, cfg)
        anchors = extract_all_patches(x, grid).reshape(P, -1)
        if cfg.center_patches:
            anchor_means = anchors.mean(axis=1)
        else:
            anchor_means = np.zeros(P)
        e_start = _splitting_energy(
            x, anchors, y, op, alphas, train_c, anchor_means, beta, cfg.gamma, grid
        )
        zs = _z_step(x, grid, alphas, train_c, anchor_means, beta, cfg, rng, mu_store)
        e_after_z = _splitting_energy(
            x, zs, y, op, alphas, train_c, anchor_means, beta, cfg.gamma, grid
        )
        x = x_update(zs, y, op, beta, cfg.gamma, grid, x0=x)
        e_after_x = _splitting_energy(
            x, zs, y, op, alphas, train_c, anchor_means, beta, cfg.gamma, grid
        )
        quality = psnr(x, reference) if reference is not None else math.nan
        trace.append(
            HQSIterationStats(t, beta, e_start, e_after_z, e_after_x, quality)
        )
        beta *= cfg.growth
    return HQSResult(x, trace)


def energy_l2(
    x: np.ndarray,
    y: np.ndarray,
    op: DegradationOperator,
    data: PatchDataset,
    alphas: np.ndarray,
    gamma: float,
) -> float:
    """Euclidean-loss energy: sum_p sum_i alpha_pi ||x_p - t_i|| + gamma/2 ||y - Bx||^2."""
    grid = PatchGrid(data.patch_size, *op.in_shape)
    patches = extract_all_patches(x, grid).reshape(grid.num_patches, -1)
    alphas = np.asarray(alphas, dtype=np.float64)
    patch_term = 0.0
    train = data.clean_matrix
    chunk = 1024
    for start in range(0, patches.shape[0], chunk):
        sl = slice(start, min(start + chunk, patches.shape[0]))
        patch_term += float(
            np.sum(alphas[sl] * row_distances(patches[sl], train))
        )
    resid = np.asarray(y, dtype=np.float64) - op.apply(np.asarray(x, dtype=np.float64))
    return patch_term + 0.5 * gamma * float(np.sum(resid**2))


def write_trace_csv(trace: list[HQSIterationStats], path) -> None:
    """Energy trace as CSV with columns iter,beta,energy,psnr."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "beta", "energy", "psnr"])
        for row in trace:
            writer.writerow(
                [row.iteration, f"{row.beta:.10g}", f"{row.energy:.10g}", f"{row.psnr:.6f}"]
            )
