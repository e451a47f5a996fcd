"""Bounds and sensitivity analysis for treatment effects under informative censoring."""

from .data import DataValidationError, Dataset, FoldAssignment, Observation, load_dataset, save_dataset, split_folds
from .estimators import (
    BoundEstimate,
    SeedAggregate,
    SensitivityParams,
    aggregate_seeds,
    bounds_bounded_risk,
    bounds_general,
    bounds_monotone,
    bounds_psi1,
    bounds_psi2_smooth,
    bounds_unconfounded,
    estimate_functional,
    point_ate,
    point_psi1,
    point_psi2,
)
from .influence import COLUMNS, InfluenceMatrix, SmoothingSpec, influence_matrix, influence_row, phi_smooth_sde
from .nuisance import (
    EstimationError,
    LearnerSpec,
    LogisticIRLS,
    NadarayaWatson,
    NuisanceValues,
    PerturbationSpec,
    clip_probability,
    cross_fit_nuisances,
    perturb_nuisance,
)
from .pipeline import ASSUMPTION_SETS, CensoredBoundsEstimator, run_bounds

__version__ = "0.1.0"
