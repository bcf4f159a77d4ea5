"""Reconfiguration capacity toolkit.

Rank diagnostics for learned transport maps, forgetting predicates for task
sequences, and dissipation accounting for Gaussian relaxation, all on
quadratic tasks where the dynamics stay closed-form.
"""

__version__ = "0.1.0"

from .capacity import (
    DEFAULT_TAU_SIGMA,
    CapacityReport,
    ForgettingResult,
    compatible_effective_rank,
    effective_rank,
    measure_forgetting,
    participation_ratio,
    predict_incompatibility,
    reconfiguration_dimension,
    singular_profile,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    PairConfig,
    ProbeConfig,
    RuleConfig,
    RunManifest,
    SweepConfig,
    ThermoConfig,
    ThresholdConfig,
    default_config,
    load_config,
    save_config,
)
from .gaussian import COVARIANCE_FLOOR, GaussianState, clamped_state, sample_batch, sample_point
from .rng import (
    STREAM_INIT,
    STREAM_ORACLE,
    STREAM_PROBE,
    STREAM_STEP_NOISE,
    STREAM_TASK,
    normal_draw,
    stream,
)
from .spectral import (
    SpectralDecomposition,
    SubspaceBasis,
    log_gram_volume,
    null_space_basis,
    numerical_rank,
    singular_values,
    stable_rank,
)
from .tasks import (
    QuadraticTask,
    TaskPair,
    combine,
    gradient,
    make_task_pair,
    random_rotation,
    restricted_hessian,
    value,
)
from .thermo import (
    DissipationLedger,
    entropy,
    entropy_production_step,
    esl_slack,
    evolve_gaussian,
    free_energy,
    geodesic_action_ledger,
    gibbs_state,
    ot_geodesic,
    simulate_relaxation,
    w2_gaussian,
)
from .scenarios import SCENARIOS, run_scenario
from .transport import (
    DivergenceError,
    StepKind,
    StepRule,
    Trajectory,
    compose,
    ensemble_propagate,
    propagate,
    step,
    step_jacobian,
    verify_replay,
)

__all__ = [
    "CapacityReport",
    "ConfigError",
    "COVARIANCE_FLOOR",
    "DEFAULT_TAU_SIGMA",
    "DissipationLedger",
    "DivergenceError",
    "ExperimentConfig",
    "ForgettingResult",
    "GaussianState",
    "PairConfig",
    "ProbeConfig",
    "QuadraticTask",
    "RuleConfig",
    "RunManifest",
    "SCENARIOS",
    "SpectralDecomposition",
    "StepKind",
    "StepRule",
    "STREAM_INIT",
    "STREAM_ORACLE",
    "STREAM_PROBE",
    "STREAM_STEP_NOISE",
    "STREAM_TASK",
    "SubspaceBasis",
    "SweepConfig",
    "TaskPair",
    "ThermoConfig",
    "ThresholdConfig",
    "Trajectory",
    "clamped_state",
    "combine",
    "default_config",
    "compatible_effective_rank",
    "compose",
    "effective_rank",
    "ensemble_propagate",
    "entropy",
    "entropy_production_step",
    "esl_slack",
    "evolve_gaussian",
    "free_energy",
    "geodesic_action_ledger",
    "gibbs_state",
    "gradient",
    "load_config",
    "log_gram_volume",
    "make_task_pair",
    "measure_forgetting",
    "normal_draw",
    "null_space_basis",
    "numerical_rank",
    "ot_geodesic",
    "participation_ratio",
    "predict_incompatibility",
    "propagate",
    "random_rotation",
    "reconfiguration_dimension",
    "restricted_hessian",
    "run_scenario",
    "sample_batch",
    "sample_point",
    "save_config",
    "simulate_relaxation",
    "singular_profile",
    "singular_values",
    "stable_rank",
    "step",
    "step_jacobian",
    "stream",
    "value",
    "verify_replay",
    "w2_gaussian",
]
