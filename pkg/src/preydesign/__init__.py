"""Sequential Bayesian design workbench for predator-prey feeding trials."""

from .errors import (
    DegenerateUpdateError,
    DegenerateUpdateWarning,
    FitFailureError,
    InvalidParameterError,
    NumericalError,
    PreyDesignError,
    UnreliableEstimateError,
)
from .designer import ExperimentRecord, Session, SessionConfig, run_simulation
from .models import (
    MechanisticType,
    ModelSpec,
    NormalPrior,
    Observation,
    ObservationFamily,
    Params,
    PriorSpec,
    candidate_models,
    expected_proportion,
    log_likelihood,
    prior_log_density,
    prior_sample,
    sample_observation,
    solve_prey_remaining,
)
from .smc import (
    DesignState,
    MoveConfig,
    ParticleSet,
    effective_sample_size,
    move_count,
    new_design_state,
    posterior_model_probs,
)
from .static_design import (
    LaplaceFit,
    StaticDesign,
    coordinate_exchange,
    expected_static_utility,
    kld_mvn,
    laplace_fit,
)
from .study import StudyManifest, TruthSpec, default_truths, run_study, summarize
from .utilities import UtilityKind, UtilitySurface, expected_utility, utility_surface

__version__ = "0.1.0"

__all__ = [
    "MechanisticType",
    "ModelSpec",
    "NormalPrior",
    "Observation",
    "ObservationFamily",
    "Params",
    "PriorSpec",
    "candidate_models",
    "expected_proportion",
    "log_likelihood",
    "prior_log_density",
    "prior_sample",
    "sample_observation",
    "solve_prey_remaining",
    "DesignState",
    "MoveConfig",
    "ParticleSet",
    "effective_sample_size",
    "move_count",
    "new_design_state",
    "posterior_model_probs",
    "UtilityKind",
    "UtilitySurface",
    "expected_utility",
    "utility_surface",
    "ExperimentRecord",
    "Session",
    "SessionConfig",
    "run_simulation",
    "LaplaceFit",
    "StaticDesign",
    "coordinate_exchange",
    "expected_static_utility",
    "kld_mvn",
    "laplace_fit",
    "StudyManifest",
    "TruthSpec",
    "default_truths",
    "run_study",
    "summarize",
    "PreyDesignError",
    "InvalidParameterError",
    "NumericalError",
    "DegenerateUpdateError",
    "DegenerateUpdateWarning",
    "FitFailureError",
    "UnreliableEstimateError",
]
