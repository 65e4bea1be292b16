"""Probabilistic single-image optical flow via latent nearby sampling.

Given one source image, the pipeline perturbs its (noised) latent state on a
high-dimensional spherical shell, denoises each perturbation into a plausible
successor frame, estimates per-pair dense flow, and aggregates the results
into a per-pixel flow distribution with accuracy and diversity metrics.
"""

from .core import (
    ConditioningVector,
    LatentState,
    NoiseSchedule,
    RngStream,
    standard_normal_vector,
)
from .diffusion import (
    GaussianOraclePredictor,
    InversionConfig,
    build_schedule,
    ddim_invert,
    ddim_reverse_chain,
    dpm_loss,
    forward_sample,
    invert_conditioning,
    strided_timesteps,
)
from .errors import (
    EmptyDomainError,
    FlowDistError,
    FormatError,
    InvalidArgumentError,
    NumericFailureError,
    RangeError,
)
from .estimation import (
    BlockMatchingEstimator,
    BlockMatchParams,
    FlowField,
    block_matching_flow,
    estimate_distribution,
)
from .flowio import (
    decode_flo,
    decode_kitti_png,
    encode_flo,
    encode_kitti_png,
    flow_to_color,
    render_polar_svg,
)
from .images import (
    BlockAverageCodec,
    IdentityCodec,
    ImagePlane,
    decode_latent,
    encode_latent,
    read_png,
    synth_scene,
    warp_image,
    write_png,
)
from .metrics import (
    EntropyConfig,
    FlowDistribution,
    MetricReport,
    PolarHistogram,
    angular_error,
    best_per_pixel,
    epe_avg,
    epe_map,
    f1_outliers,
    flow_entropy,
    polar_histogram,
)
from .pipeline import PipelineConfig, PipelineReport, run_ablation_grid, run_pipeline
from .sampler import (
    NearbyConfig,
    perturb_on_shell,
    project_to_tangent,
    sample_neighbors,
    shell_chord,
)

__version__ = "0.1.0"
