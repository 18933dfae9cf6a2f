"""Simulation and persistence analysis for stochastic Kolmogorov systems
with delay.

Build a model from the catalog, simulate it, estimate invasion rates on its
boundary faces, and assemble a persistence certificate:

    >>> import sfkolmo as sk
    >>> spec = sk.build(sk.LVCompetitive(a=[3, 2], b=[[2, 1], [1, 2]]))
    >>> cfg = sk.SimConfig(dt=1e-3, T=100.0, burn_in=10.0, seed=7)
    >>> res = sk.simulate(spec, [1.0, 1.0], cfg)
"""

from ._core import BACKEND_NAME
from .engine import (
    CoupledConfig,
    CoupledResult,
    SimConfig,
    SimResult,
    simulate,
    simulate_coupled,
    step,
    write_path_csv,
)
from .ergodic import (
    ObservableStats,
    OccupationHistogram,
    default_face_initial,
    embedded_observer,
    estimate_lambda,
    exact_stats,
    face_run,
    frequency_in_band,
    lambda_pointwise,
    merge_stats,
    occupation_histogram,
    replicate_stats,
    stats_from_series,
    time_average,
)
from .lyapunov import (
    AssumptionAudit,
    LyapunovParams,
    SegmentSampler,
    check_assumption_1_3,
    check_assumption_2,
    check_assumption_4,
    eval_Q0,
    eval_Q_rho_star,
    eval_U,
    eval_V,
    q0_observer,
    q_rho_observer,
    suggest_params_lv,
)
from .model import (
    Chemostat,
    LVCompetitive,
    ModelSpec,
    PredatorPrey3,
    Replicator,
    SIR,
    build,
    custom_model,
    eval_diffusion,
    eval_drift,
    restrict_to_face,
)
from .noise import NoiseSpec, RngStream, sample_increments, validate_noise
from .persistence import (
    EmpiricalCheck,
    FaceMeasureEstimate,
    PersistenceReport,
    ThresholdEntry,
    analytic_threshold,
    boundary_scan,
    candidate_faces,
    classify,
    empirical_persistence_check,
    face_equilibrium,
    find_rho_star,
    grid_kappa,
    measure_face,
    simplex_maximize,
)
from .segment import DelayMeasure, SegmentBuffer, integrate_measure, kernel_integral

__version__ = "0.1.0"

__all__ = [
    "AssumptionAudit",
    "BACKEND_NAME",
    "Chemostat",
    "CoupledConfig",
    "CoupledResult",
    "DelayMeasure",
    "EmpiricalCheck",
    "FaceMeasureEstimate",
    "LVCompetitive",
    "LyapunovParams",
    "ModelSpec",
    "NoiseSpec",
    "ObservableStats",
    "OccupationHistogram",
    "PersistenceReport",
    "PredatorPrey3",
    "Replicator",
    "RngStream",
    "SIR",
    "SegmentBuffer",
    "SegmentSampler",
    "SimConfig",
    "SimResult",
    "ThresholdEntry",
    "analytic_threshold",
    "boundary_scan",
    "build",
    "candidate_faces",
    "check_assumption_1_3",
    "check_assumption_2",
    "check_assumption_4",
    "classify",
    "custom_model",
    "default_face_initial",
    "embedded_observer",
    "empirical_persistence_check",
    "estimate_lambda",
    "eval_Q0",
    "eval_Q_rho_star",
    "eval_U",
    "eval_V",
    "eval_diffusion",
    "eval_drift",
    "exact_stats",
    "face_equilibrium",
    "face_run",
    "find_rho_star",
    "frequency_in_band",
    "grid_kappa",
    "integrate_measure",
    "kernel_integral",
    "lambda_pointwise",
    "measure_face",
    "merge_stats",
    "occupation_histogram",
    "q0_observer",
    "q_rho_observer",
    "replicate_stats",
    "restrict_to_face",
    "sample_increments",
    "simplex_maximize",
    "simulate",
    "simulate_coupled",
    "stats_from_series",
    "step",
    "suggest_params_lv",
    "time_average",
    "validate_noise",
    "write_path_csv",
]
