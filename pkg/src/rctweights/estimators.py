"""Point estimators for additive and ratio treatment effects.

Implements the methods compared throughout: unadjusted difference in means,
Hajek weighted estimators for any balancing-weights scheme, ANCOVA with and
without treatment-by-covariate interactions (continuous outcomes), logistic
regression with standardization (binary outcomes), and the augmented
weighting estimator.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

from . import _backend, variance
from .errors import BoundaryMean, ModelFitError, RankDeficientDesign, SingularMatrixError
from .weighting import hajek_means, unit_weights

PIVOT_RTOL = 1e-10


class Estimand(str, Enum):
    """Effect scale: mean/risk difference, log risk ratio, log odds ratio."""

    RD = "rd"
    LOG_RR = "logrr"
    LOG_OR = "logor"

    @property
    def label(self):
        return {"rd": "RD", "logrr": "logRR", "logor": "logOR"}[self.value]

    @classmethod
    def parse(cls, token):
        token = token.strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == token:
                return member
        raise ValueError(f"unknown estimand {token!r}")


@dataclass(frozen=True)
class EffectEstimate:
    method: str
    estimand: Estimand
    point: float
    variance: float
    ci: tuple
    level: float
    p_value: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def se(self):
        return math.sqrt(self.variance)


def transform_means(mu1, mu0, estimand):
    """Map arm means to the requested effect scale.

    Ratio estimands with an arm mean at or outside (0, 1) raise BoundaryMean
    carrying the signed-infinite point so callers can flag the row.
    """
    estimand = Estimand(estimand)
    if estimand is Estimand.RD:
        return mu1 - mu0
    if not (0.0 < mu1 < 1.0 and 0.0 < mu0 < 1.0):
        if mu1 < 0.0 or mu0 < 0.0 or mu1 > 1.0 or mu0 > 1.0:
            point = float("nan")
        elif estimand is Estimand.LOG_RR:
            point = float("-inf") if mu1 == 0.0 else float("inf")
        else:
            point = float("-inf") if (mu1 == 0.0 or mu0 == 1.0) else float("inf")
        raise BoundaryMean(
            f"{estimand.label} undefined at mu1={mu1!r}, mu0={mu0!r}", point=point
        )
    if estimand is Estimand.LOG_RR:
        return math.log(mu1 / mu0)
    return math.log(mu1 / (1.0 - mu1)) - math.log(mu0 / (1.0 - mu0))


def _package(method, estimand, point, var, level, diagnostics=None):
    if not np.isfinite(var) or var < 0.0:
        # the closed forms subtract a correction and can go negative in
        # tiny samples; surface that as a method failure, not a bad interval
        raise SingularMatrixError(
            f"{method} variance estimate {var!r} is not a valid variance"
        )
    ci = variance.confidence_interval(point, var, level)
    return EffectEstimate(
        method=method,
        estimand=Estimand(estimand),
        point=float(point),
        variance=float(var),
        ci=ci,
        level=level,
        p_value=variance.normal_p_value(point, var),
        diagnostics=diagnostics or {},
    )


# ---------------------------------------------------------------------------
# unadjusted


def estimate_unadjusted(ds):
    """Arm means and their difference (no adjustment)."""
    treated = ds.z == 1
    mu1 = float(np.mean(ds.y[treated]))
    mu0 = float(np.mean(ds.y[~treated]))
    return mu1, mu0, mu1 - mu0


def unadjusted_effect(ds, estimand=Estimand.RD, level=0.95):
    mu1, mu0, _ = estimate_unadjusted(ds)
    point = transform_means(mu1, mu0, estimand)
    sigma = variance.unadjusted_mu_covariance(ds)
    var = variance.delta_ratio(mu1, mu0, sigma, estimand)
    return _package("UNADJ", estimand, point, var, level)


# ---------------------------------------------------------------------------
# weighted


def estimate_weighted(ds, scheme, estimand, fit, level=0.95):
    """Hajek weighted effect with its stacked sandwich variance.

    Overlap weighting uses the closed-form covariance; other schemes go
    through the generic tilted stack.
    """
    w = unit_weights(scheme, fit.propensities, ds.z)
    mu1, mu0 = hajek_means(ds.y, ds.z, w)
    point = transform_means(mu1, mu0, estimand)
    if scheme.kind == "ow":
        var = variance.ow_sandwich_variance(ds, fit, mu1, mu0, estimand)
    else:
        comp = variance.tilted_stack_components(ds, fit, scheme, mu1, mu0)
        var = variance.delta_ratio(mu1, mu0, comp.mu_covariance, estimand)
    diagnostics = {"mu1": mu1, "mu0": mu0, "propensity_iterations": fit.iterations}
    return _package(scheme.label, estimand, point, var, level, diagnostics)


# ---------------------------------------------------------------------------
# outcome regression: ANCOVA (continuous) and standardization (binary)


@dataclass(frozen=True)
class AncovaFit:
    """Least-squares fit of outcome on treatment and covariates.

    With interactions the covariates are centered at their full-sample means
    before interacting, so the treatment coefficient targets the average
    effect; per-arm conditional means are exposed for augmentation.
    """

    coef: np.ndarray
    names: tuple
    design: np.ndarray
    residuals: np.ndarray
    z_index: int
    mu1_fitted: np.ndarray
    mu0_fitted: np.ndarray
    with_interactions: bool
    coef_treated: np.ndarray
    coef_control: np.ndarray

    @property
    def treatment_coef(self):
        return float(self.coef[self.z_index])


def _ols(design, y):
    gram = design.T @ design
    max_diag = float(np.max(np.diagonal(gram)))
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise RankDeficientDesign("regression design is rank deficient") from None
    if float(np.min(np.diagonal(chol)) ** 2) < PIVOT_RTOL * max_diag:
        raise RankDeficientDesign("regression design is rank deficient")
    return cho_solve((chol, True), design.T @ y, check_finite=False)


def fit_ancova(ds, with_interactions):
    """Regression of outcome on treatment, centered covariates, and
    (optionally) their interactions."""
    z = ds.z.astype(np.float64)
    x_centered = ds.x - np.mean(ds.x, axis=0) if ds.p else ds.x
    columns = [np.ones(ds.n), z]
    names = ["(intercept)", "z"]
    for j, name in enumerate(ds.covariate_names):
        columns.append(x_centered[:, j])
        names.append(name)
    if with_interactions:
        for j, name in enumerate(ds.covariate_names):
            columns.append(z * x_centered[:, j])
            names.append(f"z:{name}")
    design = np.column_stack(columns)
    coef = _ols(design, ds.y)
    fitted = design @ coef
    residuals = ds.y - fitted

    p = ds.p
    x_bar = np.mean(ds.x, axis=0) if p else np.zeros(0)
    slopes = coef[2 : 2 + p]
    inter = coef[2 + p :] if with_interactions else np.zeros(p)
    coef_control = np.concatenate([[coef[0] - x_bar @ slopes], slopes])
    coef_treated = np.concatenate(
        [[coef[0] + coef[1] - x_bar @ (slopes + inter)], slopes + inter]
    )
    raw_design = np.column_stack([np.ones(ds.n), ds.x]) if p else np.ones((ds.n, 1))
    mu1_fitted = raw_design @ coef_treated
    mu0_fitted = raw_design @ coef_control
    return AncovaFit(
        coef=coef,
        names=tuple(names),
        design=design,
        residuals=residuals,
        z_index=1,
        mu1_fitted=mu1_fitted,
        mu0_fitted=mu0_fitted,
        with_interactions=with_interactions,
        coef_treated=coef_treated,
        coef_control=coef_control,
    )


@dataclass(frozen=True)
class ArmLogisticFit:
    """Per-arm logistic outcome models (equivalent to a fully interacted
    logistic regression) with predictions for every unit under both arms."""

    coef_treated: np.ndarray
    coef_control: np.ndarray
    design: np.ndarray
    mu1_fitted: np.ndarray
    mu0_fitted: np.ndarray


def fit_arm_logistic(ds, tol=1e-8, max_iter=100):
    design = np.column_stack([np.ones(ds.n), ds.x])
    coefs = {}
    for arm, mask in ((1, ds.z == 1), (0, ds.z == 0)):
        sub_design = np.ascontiguousarray(design[mask])
        sub_y = np.ascontiguousarray(ds.y[mask], dtype=np.float64)
        coef, probs, _, _, status = _backend.irls_logistic(
            sub_design, sub_y, tol, max_iter, 1e-12, 10
        )
        if status == _backend.STATUS_RANK_DEFICIENT:
            raise RankDeficientDesign(f"arm {arm} outcome design is rank deficient")
        pinned = bool(np.any(probs <= 1e-12) or np.any(probs >= 1.0 - 1e-12))
        if status != _backend.STATUS_OK or pinned:
            raise ModelFitError(f"arm {arm} outcome logistic model did not converge")
        coefs[arm] = coef
    return ArmLogisticFit(
        coef_treated=coefs[1],
        coef_control=coefs[0],
        design=design,
        mu1_fitted=expit(design @ coefs[1]),
        mu0_fitted=expit(design @ coefs[0]),
    )


def standardized_means(arm_fit):
    """Average each arm's fitted conditional means over the full sample."""
    return float(np.mean(arm_fit.mu1_fitted)), float(np.mean(arm_fit.mu0_fitted))


def estimate_outcome_regression(ds, estimand=Estimand.RD, level=0.95):
    """Regression-adjusted effect (the LR method).

    Continuous outcomes: interacted ANCOVA treatment coefficient with the
    Huber-White (HC0) variance. Binary outcomes: per-arm logistic models,
    marginal means by standardization, stacked sandwich variance.
    """
    estimand = Estimand(estimand)
    if ds.outcome_kind == "continuous":
        if estimand is not Estimand.RD:
            raise ValueError("ratio estimands require a binary outcome")
        fit = fit_ancova(ds, with_interactions=True)
        var = variance.huber_white_ancova(fit)
        return _package("LR", estimand, fit.treatment_coef, var, level)
    arm_fit = fit_arm_logistic(ds)
    mu1, mu0 = standardized_means(arm_fit)
    point = transform_means(mu1, mu0, estimand)
    comp = variance.standardization_components(ds, arm_fit, mu1, mu0)
    var = variance.delta_ratio(mu1, mu0, comp.mu_covariance, estimand)
    return _package("LR", estimand, point, var, level, {"mu1": mu1, "mu0": mu0})


# ---------------------------------------------------------------------------
# augmented weighting


def aipw_means(ds, fit, outcome_fit):
    """Weighting means augmented by outcome-model predictions."""
    z = ds.z.astype(np.float64)
    e = fit.propensities
    m1 = outcome_fit.mu1_fitted
    m0 = outcome_fit.mu0_fitted
    mu1 = float(np.mean(z * ds.y / e - (z - e) * m1 / e))
    mu0 = float(np.mean((1.0 - z) * ds.y / (1.0 - e) + (z - e) * m0 / (1.0 - e)))
    return mu1, mu0


def estimate_aipw(ds, fit, outcome_fit, estimand=Estimand.RD, level=0.95):
    """Augmented weighting estimate with its stacked sandwich variance.

    ``outcome_fit`` supplies the per-unit conditional-mean predictions (an
    AncovaFit for continuous outcomes, ArmLogisticFit for binary).
    """
    mu1, mu0 = aipw_means(ds, fit, outcome_fit)
    point = transform_means(mu1, mu0, estimand)
    comp = variance.aipw_stack_components(
        ds, fit, mu1, mu0, outcome_kind=ds.outcome_kind
    )
    var = variance.delta_ratio(mu1, mu0, comp.mu_covariance, estimand)
    return _package("AIPW", estimand, point, var, level, {"mu1": mu1, "mu0": mu0})
