"""Contrast effects for continuous exposures.

Tools to build and validate contrast functions, map an exposure density to
its intervention image, compute true effect values for the benchmark
scenarios, and estimate the effects from data with cross-fitted nuisances.
"""

from .contrast import (
    ContrastFunction,
    MomentProfile,
    ade_contrast_fn,
    contrast_for,
    contrast_from_v,
    expectation,
    intervention_from_contrast,
    moment_residuals,
    optimal_contrast,
    v_moments,
    verify_duality,
)
from .density import (
    AsymmetricLaplace,
    Beta,
    BetaPrime,
    ChiSquared,
    DensityCurve,
    DistributionFamily,
    Empirical,
    Gamma,
    Normal,
    ls_intervention_curve,
    ls_intervention_family,
)
from .errors import (
    ConstraintError,
    ContrastFxError,
    DegenerateError,
    DomainError,
    FoldError,
    NoClosedFormError,
    NotADensityError,
    SingularFitError,
    UnsupportedDistributionError,
    ValidationError,
)
from .estimate import (
    EstimateReport,
    confidence_interval,
    estimate_cov_weighted,
    estimate_unit_weight,
    gcm_numerator,
)
from .model import (
    Dataset,
    ScenarioSpec,
    VFunction,
    VKind,
    WeightScheme,
    simulate_scenario,
    v_eval,
)
from .nuisance import (
    CrossFits,
    FoldPlan,
    KNearest,
    PolynomialRidge,
    fit_conditional_mean,
    fit_nuisances,
)
from .oracle import (
    EstimandId,
    EstimandKind,
    TableCell,
    TransformCurves,
    TrueValue,
    conditional_effect,
    transform_curves,
    true_estimand,
    true_table,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetricLaplace",
    "Beta",
    "BetaPrime",
    "ChiSquared",
    "ConstraintError",
    "ContrastFunction",
    "ContrastFxError",
    "CrossFits",
    "Dataset",
    "DegenerateError",
    "DensityCurve",
    "DistributionFamily",
    "DomainError",
    "Empirical",
    "EstimandId",
    "EstimandKind",
    "EstimateReport",
    "FoldError",
    "FoldPlan",
    "Gamma",
    "KNearest",
    "MomentProfile",
    "NoClosedFormError",
    "Normal",
    "NotADensityError",
    "PolynomialRidge",
    "ScenarioSpec",
    "SingularFitError",
    "TableCell",
    "TransformCurves",
    "TrueValue",
    "UnsupportedDistributionError",
    "VFunction",
    "VKind",
    "ValidationError",
    "WeightScheme",
    "ade_contrast_fn",
    "conditional_effect",
    "confidence_interval",
    "contrast_for",
    "contrast_from_v",
    "estimate_cov_weighted",
    "estimate_unit_weight",
    "expectation",
    "fit_conditional_mean",
    "fit_nuisances",
    "gcm_numerator",
    "intervention_from_contrast",
    "ls_intervention_curve",
    "ls_intervention_family",
    "moment_residuals",
    "optimal_contrast",
    "simulate_scenario",
    "transform_curves",
    "true_estimand",
    "true_table",
    "v_eval",
    "v_moments",
]
