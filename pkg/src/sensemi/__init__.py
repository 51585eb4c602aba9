"""Sensing mutual information toolkit.

Closed-form large-frame metrics for Gaussian-probed MIMO sensing (mutual
information, linear-MMSE, Bayesian bounds, information dimension), exact
per-realization counterparts with deterministic Monte-Carlo averaging,
matrix gradients, and power/rate-constrained precoder design.
"""

from .asymptotic import (
    EbcrbResult,
    FixedPointSolution,
    MetricReport,
    asymptotic_report,
    ebcrb,
    elmmse_asymptotic,
    elmmse_lower_bound,
    elmmse_ns_derivative,
    rx_load_eigs,
    sensing_dof,
    smi_asymptotic,
    smi_lower_bound,
    smi_ns_derivative,
    smi_upper_bound,
    solve_fixed_point,
    support_logdet,
    t_of_phi,
)
from .config import ExperimentSpec, dbm_to_watts, parse_config
from .errors import (
    ConfigError,
    ConventionError,
    ConvergenceError,
    DomainError,
    InfeasibleError,
    NumericalError,
    StallError,
)
from .experiments import run
from .gradients import (
    GradientReport,
    fd_check,
    grad_delta,
    grad_elmmse,
    grad_smi,
    grad_smi_upper,
    wirtinger_scale,
)
from .linalg import (
    HERMITIAN_RTOL,
    PSD_RTOL,
    RANK_RTOL,
    hermitian_eig,
    hermitian_part,
    logdet_plus,
    numerical_rank,
    psd_clip,
    psd_sqrt,
    require_hermitian,
)
from .montecarlo import (
    McEstimate,
    PerRealization,
    bcrb_matrix,
    lmmse_matrix,
    lmmse_trace,
    mc_estimate,
    smi_exact,
    verify_prop4,
)
from .optimize import (
    AdmmSettings,
    GpSettings,
    OptTrajectory,
    RateProjectionReport,
    optimize_isac,
    optimize_sensing,
    project_feasible,
    project_rate_constrained,
    rate_projection_report,
    trace_capped_projection,
)
from .scene import (
    STREAM_ANGLES,
    STREAM_COMM,
    STREAM_SIGNAL,
    STREAM_TARGET,
    CommChannel,
    CorrelationPair,
    SceneConfig,
    build_comm_channel,
    build_correlations,
    comm_mi,
    sample_signal,
    sample_target_channel,
    steering_vector,
    stream_rng,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmSettings",
    "CommChannel",
    "ConfigError",
    "ConventionError",
    "ConvergenceError",
    "CorrelationPair",
    "DomainError",
    "EbcrbResult",
    "ExperimentSpec",
    "FixedPointSolution",
    "GpSettings",
    "GradientReport",
    "HERMITIAN_RTOL",
    "InfeasibleError",
    "McEstimate",
    "MetricReport",
    "NumericalError",
    "OptTrajectory",
    "PSD_RTOL",
    "PerRealization",
    "RANK_RTOL",
    "RateProjectionReport",
    "STREAM_ANGLES",
    "STREAM_COMM",
    "STREAM_SIGNAL",
    "STREAM_TARGET",
    "SceneConfig",
    "StallError",
    "asymptotic_report",
    "bcrb_matrix",
    "build_comm_channel",
    "build_correlations",
    "comm_mi",
    "dbm_to_watts",
    "ebcrb",
    "elmmse_asymptotic",
    "elmmse_lower_bound",
    "elmmse_ns_derivative",
    "fd_check",
    "grad_delta",
    "grad_elmmse",
    "grad_smi",
    "grad_smi_upper",
    "hermitian_eig",
    "hermitian_part",
    "lmmse_matrix",
    "lmmse_trace",
    "logdet_plus",
    "mc_estimate",
    "numerical_rank",
    "optimize_isac",
    "optimize_sensing",
    "parse_config",
    "project_feasible",
    "project_rate_constrained",
    "psd_clip",
    "psd_sqrt",
    "rate_projection_report",
    "require_hermitian",
    "run",
    "rx_load_eigs",
    "sample_signal",
    "sample_target_channel",
    "sensing_dof",
    "smi_asymptotic",
    "smi_exact",
    "smi_lower_bound",
    "smi_ns_derivative",
    "smi_upper_bound",
    "solve_fixed_point",
    "steering_vector",
    "stream_rng",
    "support_logdet",
    "t_of_phi",
    "trace_capped_projection",
    "verify_prop4",
    "wirtinger_scale",
]
