"""Adaptive principal component regression for error-in-variables data.

Online PCR with explicit-constant, time-uniform error bounds, a noisy-context
bandit simulator driven by a PCR-based UCB policy, and a synthetic
interventions estimator for adaptively assigned panel data.
"""
from .bandit import BanditEnv, BanditTrace, gen_environment, regret_bound_trace, regrets, run_episode, select_action
from .concentration import (
    BoundConfig,
    det_trace_log_bound,
    ell_delta,
    ellipsoid_radius_sq,
    noise_opnorm_bound_U,
    projection_convergence_bound,
    response_sq_norm_bound,
    stitched_subgamma_bound,
)
from .errors import *  # noqa: F401,F403
from .linalg import ProjectorPair, TruncatedSvd, condition_number_r, projector_distance, truncated_svd, weyl_gap
from .panel import (
    PanelDataset,
    SiEstimate,
    export_panel,
    fit_and_estimate,
    gen_panel,
    ingest_panel,
    prediction_error_bound,
    theta_from_factors,
)
from .pcr import PcrState, SnrReport, estimate, empirical_error_bound, observe, oracle_ridge_in_subspace, rate_diagnostic, snr_report

__version__ = "0.1.0"
