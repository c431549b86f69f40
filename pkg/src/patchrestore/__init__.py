"""Patch-regularized grayscale image restoration.

Restores degraded images by minimizing an energy whose regularizer measures
Euclidean (or squared) distances between overlapping patches of the estimate
and clean patches from an external dataset, weighted by kernel similarities
in DCT feature space, with the linear formation model as its data term.
"""

__version__ = "0.1.0"

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
from .features import (
    KernelModel,
    bandwidth_from_features,
    dct_features,
    kernel_eval,
    kernel_matrix,
    kernel_vector,
)
from .image import (
    PatchGrid,
    coverage_counts,
    extract_patch,
    load_image,
    psnr,
    save_image,
    scatter_patch_add,
)
from .linsolve import (
    CGConfig,
    CGResult,
    IndefiniteOperatorError,
    NonConvergenceError,
    SymmetricLinearOperator,
    conjugate_gradient,
)
from .restore import (
    HQSResult,
    SolverConfig,
    energy_l2,
    hqs_restore,
    mse_restore,
    solve_mse,
    x_update,
)
from .sdca import DualState, SDCAConfig, dual_gap, gap_sample, z_update_sdca
from .theory import (
    Denoising,
    Downsampling,
    Inpainting,
    c_bound,
    correlation_map,
    estimate_q,
)
from .weights import krr_regularization, krr_weights, nw_weights
