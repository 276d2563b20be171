"""Plug-and-play image reconstruction with viscosity stabilization.

The package solves linear inverse problems (deblurring, superresolution)
by fixed-point iteration of denoiser-based operators, and tames divergent
iterations by adaptively damping them toward the fixed point of a
contractive smoother.
"""

from .analysis import (
    ContractionReport,
    NormEstimate,
    contraction_ratio,
    eta_stability_probe,
    linear_operator_norm,
    sample_image_pairs,
)
from .bridge import (
    BridgeClient,
    BridgeDimsError,
    BridgeError,
    BridgeProtocolError,
    BridgeRemoteError,
    BridgeTimeoutError,
    bridge_denoiser,
)
from .denoisers import (
    Denoiser,
    DsgNlmWeights,
    build_dsg_weights,
    dsg_nlm_denoiser,
    equivariant_wrap,
    estimate_lipschitz,
    gaussian_smoother,
    nlm_denoise,
    nlm_denoise_naive,
    nlm_denoiser,
    scaled_identity,
    unsharp_expansive,
)
from .forward import (
    CircularConvolution,
    DownsampledConvolution,
    ForwardModel,
    Identity,
    Kernel,
    Problem,
    ProxSolveError,
    circular_convolve,
    gaussian_kernel,
    grad_f,
    load_kernel,
    motion_kernel,
    prox_f,
)
from .image import (
    PSNR_CAP_DB,
    add_gaussian_noise,
    as_image,
    bicubic_upsample,
    clip01,
    load_image,
    psnr,
    save_image,
)
from .operators import (
    DEFAULT_GUARD,
    PnPOperator,
    admm_operator,
    hqs_operator,
    pgd_operator,
    vanilla_iterate,
)
from .phantoms import PHANTOM_NAMES, phantom
from .trace import IterationTrace, TraceRow, TraceSummary, summarize, write_trace_csv
from .vista import (
    FixedPointResult,
    ViscosityConfig,
    ViscosityIndex,
    fixed_point,
    nlm_viscosity_operator,
    vista_iterate,
    viscosity_index,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeClient",
    "BridgeDimsError",
    "BridgeError",
    "BridgeProtocolError",
    "BridgeRemoteError",
    "BridgeTimeoutError",
    "CircularConvolution",
    "ContractionReport",
    "DEFAULT_GUARD",
    "Denoiser",
    "DownsampledConvolution",
    "DsgNlmWeights",
    "FixedPointResult",
    "ForwardModel",
    "Identity",
    "IterationTrace",
    "Kernel",
    "NormEstimate",
    "PHANTOM_NAMES",
    "PSNR_CAP_DB",
    "PnPOperator",
    "Problem",
    "ProxSolveError",
    "TraceRow",
    "TraceSummary",
    "ViscosityConfig",
    "ViscosityIndex",
    "add_gaussian_noise",
    "admm_operator",
    "as_image",
    "bicubic_upsample",
    "bridge_denoiser",
    "build_dsg_weights",
    "circular_convolve",
    "clip01",
    "contraction_ratio",
    "dsg_nlm_denoiser",
    "equivariant_wrap",
    "estimate_lipschitz",
    "eta_stability_probe",
    "fixed_point",
    "gaussian_kernel",
    "gaussian_smoother",
    "grad_f",
    "hqs_operator",
    "linear_operator_norm",
    "load_image",
    "load_kernel",
    "motion_kernel",
    "nlm_denoise",
    "nlm_denoise_naive",
    "nlm_denoiser",
    "nlm_viscosity_operator",
    "pgd_operator",
    "phantom",
    "prox_f",
    "psnr",
    "sample_image_pairs",
    "save_image",
    "scaled_identity",
    "summarize",
    "unsharp_expansive",
    "vanilla_iterate",
    "vista_iterate",
    "viscosity_index",
    "write_trace_csv",
]
