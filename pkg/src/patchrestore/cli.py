"""Batch command-line front end: dataset sampling, degradation, restoration,
metrics, theory runs, and benchmark orchestration.

Configuration is a flat key=value text file; every key can be overridden on
the command line with --set key=value.  Reports embed the config hash and
library version so identical runs are bitwise reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import PatchDataset, sample_patch_dataset
from .degrade import (
    Blur,
    DegradationOperator,
    Downsample,
    Identity,
    Mask,
    NoiseModel,
    builtin_kernel,
    degrade,
    load_kernel,
)
from .features import KernelModel, bandwidth_from_features, image_patch_features
from .image import PatchGrid, load_image, psnr, save_image
from .restore import (
    SolverConfig,
    bicubic_upsample,
    hqs_restore,
    mse_restore,
    write_trace_csv,
)
from .theory import (
    Denoising,
    Downsampling,
    Inpainting,
    c_bound,
    correlation_map,
    estimate_q,
    unit_cube_diameter,
)

TASKS = ("deblur", "upsample", "inpaint", "denoise")
SOLVERS = ("mse", "l2-hqs")


@dataclasses.dataclass
class ExperimentConfig:
    task: str = "deblur"
    solver: str = "l2-hqs"
    kernel: str = "kernel1"  # path or builtin name for deblurring
    factor: int = 2
    antialias_sigma: float = 0.8
    mask_fraction: float = 0.5
    noise_sigma: float = 0.01
    gamma: float = 3200.0
    beta0: float = 3.0
    delta: float = 2.0
    iterations: int = 8
    patch_size: int = 8
    samples: int = 10000
    sdca_steps: int = 500
    gap_tolerance: float = 0.0  # 0 means the automatic 1e-4*m default
    gap_period: int = 25
    sampling: str = "proportional"
    weight_kind: str = "nw"
    alpha_schedule: str = "switch-to-clean"
    center_patches: bool = True
    dataset: str = ""
    seed: int = 0
    output: str = "out"

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            gamma=self.gamma,
            beta0=self.beta0,
            growth=self.delta,
            iterations=self.iterations,
            sdca_steps=self.sdca_steps,
            gap_tolerance=self.gap_tolerance if self.gap_tolerance > 0 else None,
            gap_recompute_period=self.gap_period,
            sampling=self.sampling,
            weight_kind=self.weight_kind,
            alpha_schedule=self.alpha_schedule,
            center_patches=self.center_patches,
            seed=self.seed,
        )

    def canonical_text(self) -> str:
        items = sorted(dataclasses.asdict(self).items())
        return "".join(f"{k}={v}\n" for k, v in items)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]


def _coerce(field_type, raw: str):
    if field_type is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return field_type(raw)


def load_config(path: str | None, overrides: list[str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    fields = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    types = {
        name: (bool if t in (bool, "bool") else float if t in (float, "float") else
               int if t in (int, "int") else str)
        for name, t in fields.items()
    }

    def assign(key: str, value: str, where: str):
        key = key.strip()
        if key not in types:
            raise ValueError(f"{where}: unknown config key {key!r}")
        setattr(cfg, key, _coerce(types[key], value.strip()))

    if path:
        for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            assign(key, value, f"{path}:{ln}")
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set needs key=value, got {item!r}")
        key, value = item.split("=", 1)
        assign(key, value, "--set")
    cfg.validate()
    return cfg


def _resolve_kernel(spec: str) -> np.ndarray:
    if spec in ("kernel1", "kernel2"):
        return builtin_kernel(spec)
    return load_kernel(spec)


def build_operator(
    cfg: ExperimentConfig, shape: tuple[int, int], rng=None
) -> DegradationOperator:
    """Operator for the configured task, acting on sharp images of `shape`."""
    if cfg.task == "deblur":
        return Blur(_resolve_kernel(cfg.kernel), shape)
    if cfg.task == "upsample":
        return Downsample(cfg.factor, shape, cfg.antialias_sigma)
    if cfg.task == "inpaint":
        rng = rng or np.random.default_rng(cfg.seed)
        keep = rng.random(shape) >= cfg.mask_fraction
        return Mask(keep)
    return Identity(shape)


def _image_streams(seed: int, index: int):
    """Independent noise/mask streams per benchmark image, stable in the seed."""
    root = np.random.SeedSequence([seed, index])
    noise_seed, mask_seed = root.spawn(2)
    return int(noise_seed.generate_state(1)[0]), np.random.default_rng(mask_seed)


def _threads() -> int:
    env = os.environ.get("PATCHRESTORE_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_sample(args) -> int:
    cfg = load_config(args.config, args.set)
    images = [load_image(p) for p in args.images]
    if not images:
        raise ValueError("no training images given")
    shape = images[0].shape
    for p, img in zip(args.images, images):
        if img.shape != shape:
            raise ValueError(f"{p}: shape {img.shape} differs from {shape}")
    op = build_operator(cfg, shape, np.random.default_rng(cfg.seed))
    noise = NoiseModel(cfg.noise_sigma, cfg.seed) if cfg.noise_sigma > 0 else None
    data = sample_patch_dataset(
        images, op, noise, cfg.samples, cfg.patch_size, seed=cfg.seed
    )
    data.save(args.out)
    print(f"wrote {data.size} patch pairs to {args.out}")
    return 0


def cmd_degrade(args) -> int:
    cfg = load_config(args.config, args.set)
    image = load_image(args.input)
    op = build_operator(cfg, image.shape, np.random.default_rng(cfg.seed))
    noise = NoiseModel(cfg.noise_sigma, cfg.seed)
    save_image(degrade(op, image, noise), args.output)
    return 0


def _restore_one(
    cfg: ExperimentConfig,
    degraded: np.ndarray,
    op: DegradationOperator,
    data: PatchDataset,
    reference: np.ndarray | None = None,
):
    solver_cfg = cfg.solver_config()
    if cfg.solver == "mse":
        return mse_restore(degraded, op, data, solver_cfg), None
    result = hqs_restore(degraded, op, data, solver_cfg, reference=reference)
    return result.image, result.trace


def cmd_restore(args) -> int:
    cfg = load_config(args.config, args.set)
    if not cfg.dataset:
        raise ValueError("config needs dataset=<path to .prd file>")
    data = PatchDataset.load(cfg.dataset)
    degraded = load_image(args.input)
    if cfg.task == "upsample":
        shape = (degraded.shape[0] * cfg.factor, degraded.shape[1] * cfg.factor)
    else:
        shape = degraded.shape
    op = build_operator(cfg, shape, np.random.default_rng(cfg.seed))
    restored, trace = _restore_one(cfg, degraded, op, data)
    save_image(restored, args.output)
    if trace is not None:
        write_trace_csv(trace, Path(args.output).with_suffix(".trace.csv"))
    return 0


def cmd_psnr(args) -> int:
    value = psnr(load_image(args.a), load_image(args.b))
    print("inf" if math.isinf(value) else f"{value:.2f}")
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args.set)
    if not cfg.dataset:
        raise ValueError("config needs dataset=<path to .prd file>")
    data = PatchDataset.load(cfg.dataset)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)

    def run_one(index: int, path: str):
        clean = load_image(path)
        noise_seed, mask_rng = _image_streams(cfg.seed, index)
        op = build_operator(cfg, clean.shape, mask_rng)
        noise = NoiseModel(cfg.noise_sigma, noise_seed)
        observed = degrade(op, clean, noise)
        restored, trace = _restore_one(cfg, observed, op, data, reference=clean)
        if cfg.task == "upsample":
            degraded_quality = psnr(bicubic_upsample(observed, clean.shape), clean)
        else:
            degraded_quality = psnr(observed, clean)
        name = Path(path).stem
        save_image(restored, outdir / f"{name}_restored.png")
        if trace is not None:
            write_trace_csv(trace, outdir / f"{name}_trace.csv")
        return name, degraded_quality, psnr(restored, clean)

    workers = _threads()
    if workers > 1 and len(args.images) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_one, range(len(args.images)), args.images))
    else:
        rows = [run_one(i, p) for i, p in enumerate(args.images)]

    report = outdir / "report.csv"
    lines = [
        f"# patchrestore {__version__}\n",
        f"# config_hash={cfg.digest()}\n",
        f"# seed={cfg.seed}\n",
        "image,psnr_degraded,psnr_restored\n",
    ]
    for name, before, after in rows:
        lines.append(f"{name},{before:.2f},{after:.2f}\n")
    mean_before = sum(r[1] for r in rows) / len(rows)
    mean_after = sum(r[2] for r in rows) / len(rows)
    lines.append(f"mean,{mean_before:.2f},{mean_after:.2f}\n")
    report.write_text("".join(lines))
    print(f"wrote {report} (mean restored PSNR {mean_after:.2f} dB)")
    return 0


def cmd_theory(args) -> int:
    if args.theory_command == "c-bound":
        if args.inpaint is not None:
            value = c_bound(Inpainting(args.inpaint))
        elif args.downsample is not None:
            value = c_bound(Downsampling(args.downsample))
        elif args.denoise is not None:
            diam = args.diam if args.diam else unit_cube_diameter(args.pixels)
            value = c_bound(Denoising(args.denoise, diam))
        else:
            raise ValueError("choose one of --inpaint / --downsample / --denoise")
        print(f"{value:.2f}")
        return 0
    if args.theory_command == "estimate-q":
        images = [load_image(p) for p in args.images]
        grid = PatchGrid(args.patch_size, *images[0].shape)
        if args.bandwidth:
            model = KernelModel(args.bandwidth)
        else:
            feats = np.concatenate(
                [image_patch_features(img, grid) for img in images], axis=0
            )
            model = KernelModel(bandwidth_from_features(feats, 0.2))
        est = estimate_q(images, model, grid, args.pairs, args.seed)
        print("q,stderr,mc_pairs,seed")
        print(est.csv_row())
        return 0
    if args.theory_command == "correlation-map":
        image = load_image(args.image)
        grid = PatchGrid(args.patch_size, *image.shape)
        if args.bandwidth:
            model = KernelModel(args.bandwidth)
        else:
            model = KernelModel(
                bandwidth_from_features(image_patch_features(image, grid), 0.2)
            )
        ref = args.reference if args.reference >= 0 else (
            (grid.rows // 2) * grid.cols + grid.cols // 2
        )
        save_image(correlation_map(image, model, grid, ref), args.out)
        return 0
    raise ValueError(f"unknown theory command {args.theory_command!r}")


def _add_config_args(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchrestore",
        description="Patch-regularized grayscale image restoration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="build a training patch dataset")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output .prd dataset file")
    p.add_argument("images", nargs="+", help="clean training images")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("degrade", help="apply the configured degradation")
    _add_config_args(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", help="restore one degraded image")
    _add_config_args(p)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("psnr", help="PSNR between two images")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("bench", help="degrade-restore-score a set of clean images")
    _add_config_args(p)
    p.add_argument("images", nargs="+", help="clean evaluation images")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("theory", help="locality constants and correlation maps")
    tsub = p.add_subparsers(dest="theory_command", required=True)

    t = tsub.add_parser("c-bound")
    t.add_argument("--inpaint", type=float, help="missing pixel fraction")
    t.add_argument("--downsample", type=int, help="decimation factor")
    t.add_argument("--denoise", type=float, help="noise standard deviation")
    t.add_argument("--diam", type=float, default=0.0, help="image-space diameter")
    t.add_argument(
        "--pixels", type=int, default=65536,
        help="pixel count for the unit-cube diameter (denoising)",
    )
    t.set_defaults(func=cmd_theory)

    t = tsub.add_parser("estimate-q")
    t.add_argument("images", nargs="+")
    t.add_argument("--patch-size", type=int, default=8)
    t.add_argument("--pairs", type=int, default=10000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--bandwidth", type=float, default=0.0)
    t.set_defaults(func=cmd_theory)

    t = tsub.add_parser("correlation-map")
    t.add_argument("image")
    t.add_argument("--out", required=True)
    t.add_argument("--patch-size", type=int, default=8)
    t.add_argument("--reference", type=int, default=-1, help="-1 means central patch")
    t.add_argument("--bandwidth", type=float, default=0.0)
    t.set_defaults(func=cmd_theory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a structured one-line error
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
