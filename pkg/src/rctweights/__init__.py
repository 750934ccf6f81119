"""Propensity score weighting for covariate adjustment in two-arm
randomized trials: overlap weighting and the wider balancing-weights family,
closed-form sandwich variances, balance diagnostics, comparison estimators,
and a Monte Carlo harness.
"""

from ._backend import available_backends, backend_name
from .dataset import (
    ColumnSchema,
    TrialDataset,
    ValidationReport,
    load_csv,
    validate,
    write_csv,
)
from .errors import (
    BoundaryMean,
    DatasetError,
    DegenerateWeights,
    MaxIterationsExceeded,
    ModelFitError,
    RankDeficientDesign,
    SeparationDetected,
    SingularMatrixError,
)
from .estimators import (
    AncovaFit,
    ArmLogisticFit,
    EffectEstimate,
    Estimand,
    estimate_aipw,
    estimate_outcome_regression,
    estimate_unadjusted,
    estimate_weighted,
    fit_ancova,
    fit_arm_logistic,
    unadjusted_effect,
)
from .propensity import PropensityFit, fit_logistic, score_contributions
from .simulation import (
    Scenario,
    SimulationSummary,
    binary_dgp,
    generate_replicate,
    load_scenario,
    run_monte_carlo,
)
from .variance import (
    confidence_interval,
    delta_ratio,
    huber_white_ancova,
    ow_sandwich_variance,
    stacked_sandwich,
)
from .weighting import (
    ATT,
    IPW,
    MATCHING,
    OVERLAP,
    BalanceTable,
    WeightingScheme,
    asd,
    check_exact_balance,
    custom_scheme,
    hajek_means,
    tilt,
    unit_weights,
)

__version__ = "0.1.0"

__all__ = [
    "ATT",
    "AncovaFit",
    "ArmLogisticFit",
    "BalanceTable",
    "BoundaryMean",
    "ColumnSchema",
    "DatasetError",
    "DegenerateWeights",
    "EffectEstimate",
    "Estimand",
    "IPW",
    "MATCHING",
    "MaxIterationsExceeded",
    "ModelFitError",
    "OVERLAP",
    "PropensityFit",
    "RankDeficientDesign",
    "Scenario",
    "SeparationDetected",
    "SimulationSummary",
    "SingularMatrixError",
    "TrialDataset",
    "ValidationReport",
    "WeightingScheme",
    "asd",
    "available_backends",
    "backend_name",
    "binary_dgp",
    "check_exact_balance",
    "confidence_interval",
    "custom_scheme",
    "delta_ratio",
    "estimate_aipw",
    "estimate_outcome_regression",
    "estimate_unadjusted",
    "estimate_weighted",
    "fit_ancova",
    "fit_arm_logistic",
    "fit_logistic",
    "generate_replicate",
    "hajek_means",
    "huber_white_ancova",
    "load_csv",
    "load_scenario",
    "ow_sandwich_variance",
    "run_monte_carlo",
    "score_contributions",
    "stacked_sandwich",
    "tilt",
    "unadjusted_effect",
    "unit_weights",
    "validate",
    "write_csv",
]
