"""Event-study regression with latent unit types estimated by K-means.

Units are jointly classified into K latent types and regressed on
type-specific time effects plus type-specific dynamic treatment effects,
which relaxes the common-trend assumption to hold only within type and
lets treatment-effect heterogeneity be documented alongside trend
heterogeneity.
"""

from .api import TypedEventStudy
from .design import DesignSpec, build_design, column_population
from .errors import ConfigError, EstimationError
from .estimator import FitConfig, FitResult, assign_types, canonicalize, fit, fit_once, objective
from .inference import (
    balancedness_test,
    cluster_robust_vcov,
    cumulative_effects,
    het_effect_r0,
)
from .lsq import solve
from .oracle import exhaustive_fit
from .panel import Panel, TypeAssignment, make_panel, panel_from_long, panel_to_long, reindex_times, validate
from .segregation import segregation_index
from .simulate import DgpSpec, generate, make_preset, misclassification_rate
from .transform import first_difference, mean_difference

__version__ = "0.1.0"

__all__ = [
    "TypedEventStudy",
    "DesignSpec",
    "FitConfig",
    "FitResult",
    "Panel",
    "TypeAssignment",
    "DgpSpec",
    "ConfigError",
    "EstimationError",
    "assign_types",
    "balancedness_test",
    "build_design",
    "canonicalize",
    "cluster_robust_vcov",
    "column_population",
    "cumulative_effects",
    "exhaustive_fit",
    "first_difference",
    "fit",
    "fit_once",
    "generate",
    "het_effect_r0",
    "make_panel",
    "make_preset",
    "mean_difference",
    "misclassification_rate",
    "objective",
    "panel_from_long",
    "panel_to_long",
    "reindex_times",
    "segregation_index",
    "solve",
    "validate",
]
