"""Loss-adaptive SNR schedules for diffusion samplers.

Exact denoiser/MMSE oracles for tractable targets under the Brownian forward
process, discretization/approximation error functionals with a pathwise KL
Monte-Carlo cross-check, schedule optimization (baseline grids and the
loss-adaptive dynamic programs), and an exact-transition reverse sampler.
"""

from .channel import (
    ChannelPoint,
    MmseCurve,
    PosteriorSummary,
    mmse,
    mmse_derivative,
    posterior,
    posterior_fourth_moment,
    posterior_mean,
    derivative_ratio_constant,
)
from .functionals import (
    ErrorReport,
    LossProfile,
    SnrGrid,
    apx_error,
    combined_objective,
    disc_error,
    eps_to_x0,
    error_report,
    final_bounds,
    pathwise_kl_mc,
)
from .sampler import SamplerConfig, SampleReport, reverse_step, sample, second_order_sample
from .schedules import (
    CandidateSet,
    InfeasibleError,
    LasConfig,
    Schedule,
    eta_axis,
    format_timestep_list,
    grid_edm,
    grid_geometric,
    grid_time_uniform,
    las_beam,
    las_exact,
    parse_timestep_list,
    schedule_objective,
)
from .targets import (
    FiniteDiscrete,
    GaussianMixture,
    InfoProfile,
    TargetDistribution,
    fit_subexponential,
    renyi_half_entropy,
    shannon_entropy,
    surprisal,
    target_from_json,
    target_to_json,
)

__version__ = "0.1.0"
