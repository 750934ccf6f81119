"""Sandwich variances: closed-form overlap-weighting covariance, generic
stacked M-estimation for the weighting and augmented estimators, Huber-White
for the regression estimator, and delta-method transforms.

Every weighting variance here propagates the uncertainty from estimating the
propensity model by stacking its score rows with the mean-estimating rows and
extracting the (mu1, mu0) block of A^-1 B A^-T.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, ndtr, ndtri

from .errors import BoundaryMean, RankDeficientDesign, SingularMatrixError
from .weighting import tilt, tilt_derivative

CONDITION_WARNING = 1e12
PIVOT_RTOL = 1e-10


# ---------------------------------------------------------------------------
# normal-theory helpers


def confidence_interval(point, variance, level=0.95):
    """Normality-based interval point +/- z * sqrt(variance)."""
    if variance < 0.0:
        raise ValueError(f"negative variance {variance!r}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level!r}")
    half = float(ndtri(0.5 + level / 2.0)) * float(np.sqrt(variance))
    return point - half, point + half


def normal_p_value(point, variance):
    """Two-sided Wald p-value against zero."""
    if variance < 0.0:
        raise ValueError(f"negative variance {variance!r}")
    if variance == 0.0:
        return 1.0 if point == 0.0 else 0.0
    return float(2.0 * ndtr(-abs(point) / np.sqrt(variance)))


def delta_ratio(mu1, mu0, sigma, estimand):
    """Delta-method variance of the estimand transform of (mu1, mu0).

    ``sigma`` is the 2x2 covariance of the estimated arm means; ``estimand``
    is an Estimand value or its string token.
    """
    kind = getattr(estimand, "value", estimand)
    sigma = np.asarray(sigma, dtype=np.float64)
    if kind == "rd":
        grad = np.array([1.0, -1.0])
    elif kind == "logrr":
        _require_interior(mu1, mu0, kind)
        grad = np.array([1.0 / mu1, -1.0 / mu0])
    elif kind == "logor":
        _require_interior(mu1, mu0, kind)
        grad = np.array([1.0 / (mu1 * (1.0 - mu1)), -1.0 / (mu0 * (1.0 - mu0))])
    else:
        raise ValueError(f"unknown estimand {estimand!r}")
    return float(grad @ sigma @ grad)


def _require_interior(mu1, mu0, kind):
    if not (0.0 < mu1 < 1.0 and 0.0 < mu0 < 1.0):
        raise BoundaryMean(
            f"{kind} requires arm means inside (0, 1); got mu1={mu1!r}, mu0={mu0!r}"
        )


# ---------------------------------------------------------------------------
# shared linear algebra


def _solve_spd(mat, rhs, what):
    try:
        factor = cho_factor(mat, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{what} is not positive definite") from None
    return cho_solve(factor, rhs, check_finite=False)


def _solve_bread(bread, meat, what="sandwich bread matrix"):
    cond = np.linalg.cond(bread)
    if not np.isfinite(cond):
        raise SingularMatrixError(f"{what} is singular")
    if cond > CONDITION_WARNING:
        warnings.warn(
            f"{what} condition number {cond:.2e} exceeds {CONDITION_WARNING:.0e}",
            RuntimeWarning,
            stacklevel=3,
        )
    try:
        inv_b = np.linalg.solve(bread, meat)
        return np.linalg.solve(bread, inv_b.T).T
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{what} is singular") from None


@dataclass(frozen=True)
class SandwichComponents:
    """Stacked-equation pieces: bread A, meat B, solved parameters, and the
    extracted covariance of the two arm means."""

    bread: np.ndarray
    meat: np.ndarray
    params: np.ndarray
    mu_covariance: np.ndarray


@dataclass(frozen=True)
class OwVarianceParts:
    """Pieces of the closed-form overlap-weighting covariance: the
    no-adjustment term, the two cross-moment vectors that couple the means to
    the propensity score block, the propensity information matrix, and the
    estimand scale factors."""

    unadjusted: float
    mean_weight_cross: np.ndarray
    score_cross: np.ndarray
    information: np.ndarray
    scale_treated: float
    scale_control: float
    mu_covariance: np.ndarray


def _estimand_scales(mu1, mu0, estimand):
    """Per-arm residual scale factors: 1 for differences, 1/mu for log risk
    ratios, 1/{mu(1-mu)} for log odds ratios."""
    kind = getattr(estimand, "value", estimand)
    if kind == "rd":
        return 1.0, 1.0
    _require_interior(mu1, mu0, kind)
    if kind == "logrr":
        return 1.0 / mu1, 1.0 / mu0
    if kind == "logor":
        return 1.0 / (mu1 * (1.0 - mu1)), 1.0 / (mu0 * (1.0 - mu0))
    raise ValueError(f"unknown estimand {estimand!r}")


def _ow_blocks(ds, fit, mu1, mu0):
    """Moment blocks of the OW estimating-equation sandwich.

    Each block estimates the corresponding expectation after taking the
    conditional expectation over the treatment indicator given covariates
    (so the treatment-arm sums carry the propensity factors and per-arm
    normalizers); the score-row outer product uses the information equality.
    """
    n = ds.n
    z = ds.z.astype(np.float64)
    e = fit.propensities
    design = fit.design
    n1 = ds.n_treated
    n0 = n - n1
    resid = ds.y - np.where(ds.z == 1, mu1, mu0)

    w1 = z * e * (1.0 - e) ** 2 * resid
    w0 = (1.0 - z) * e**2 * (1.0 - e) * resid
    m = float(np.mean(e * (1.0 - e)))
    b_mu = np.array(
        [
            [float(np.sum(w1 * resid) / n1), 0.0],
            [0.0, float(np.sum(w0 * resid) / n0)],
        ]
    )
    b_mu_theta = np.vstack([(w1 @ design) / n1, -(w0 @ design) / n0])
    cross = np.vstack(
        [
            ((z * e**2 * (1.0 - e) * resid) @ design) / n1,
            -(((1.0 - z) * e * (1.0 - e) ** 2 * resid) @ design) / n0,
        ]
    )
    info = (design * (e * (1.0 - e))[:, None]).T @ design / n
    return m, b_mu, b_mu_theta, cross, info


def ow_mu_covariance(ds, fit, mu1, mu0):
    """Closed-form covariance of the OW arm means with estimated propensities.

    Block extraction of A^-1 B A^-T for the stack whose mean rows are
    z*(y-mu1)*(1-e) and (1-z)*(y-mu0)*e and whose remaining rows are the
    logistic score; only the propensity information block is factorized.
    """
    n = ds.n
    m, b_mu, b_mu_theta, cross, info = _ow_blocks(ds, fit, mu1, mu0)
    g = _solve_spd(info, b_mu_theta.T, "propensity information (meat) matrix")
    h = _solve_spd(info, cross.T, "propensity information (meat) matrix")
    core = b_mu - cross @ g - (cross @ g).T + h.T @ info @ h
    sigma = core / (m * m) / n
    return sigma, (m, b_mu, b_mu_theta, cross, info)


def ow_variance_parts(ds, fit, mu1, mu0, estimand):
    """Closed-form OW variance pieces on the requested estimand scale."""
    scale1, scale0 = _estimand_scales(mu1, mu0, estimand)
    sigma, (m, b_mu, b_mu_theta, cross, info) = ow_mu_covariance(ds, fit, mu1, mu0)
    grad = np.array([scale1, -scale0])
    return OwVarianceParts(
        unadjusted=float(grad @ b_mu @ grad) / (m * m),
        mean_weight_cross=grad @ cross,
        score_cross=grad @ b_mu_theta,
        information=info,
        scale_treated=scale1,
        scale_control=scale0,
        mu_covariance=sigma,
    )


def ow_sandwich_variance(ds, fit, mu1, mu0, estimand, df_correction=False):
    """Closed-form sandwich variance of the OW estimate for the estimand.

    ``df_correction`` rescales by n/(n - dim(stack)); off by default and
    excluded from all calibration checks.
    """
    sigma, _ = ow_mu_covariance(ds, fit, mu1, mu0)
    value = delta_ratio(mu1, mu0, sigma, estimand)
    if df_correction:
        dim = fit.design.shape[1] + 2
        value *= ds.n / max(ds.n - dim, 1)
    return value


def ow_stack_components(ds, fit, mu1, mu0):
    """The OW sandwich assembled as a full stacked system and inverted whole.

    Same moment blocks as the closed form, but A and B are built out as
    (p+3) x (p+3) matrices and the covariance comes from solving the full
    system; serves as the independent algebraic route to the closed form.
    """
    m, b_mu, b_mu_theta, cross, info = _ow_blocks(ds, fit, mu1, mu0)
    k = info.shape[0]
    dim = 2 + k
    bread = np.zeros((dim, dim))
    bread[0, 0] = m
    bread[1, 1] = m
    bread[0, 2:] = cross[0]
    bread[1, 2:] = cross[1]
    bread[2:, 2:] = info

    meat = np.zeros((dim, dim))
    meat[:2, :2] = b_mu
    meat[:2, 2:] = b_mu_theta
    meat[2:, :2] = b_mu_theta.T
    meat[2:, 2:] = info
    sigma = _solve_bread(bread, meat, "overlap stack bread matrix")[:2, :2] / ds.n
    params = np.concatenate([[mu1, mu0], fit.coef])
    return SandwichComponents(bread=bread, meat=meat, params=params, mu_covariance=sigma)


# ---------------------------------------------------------------------------
# generic tilted-weighting stack (covers IPW, OW, ATT, matching, custom)


def tilted_stack_components(ds, fit, scheme, mu1, mu0):
    """Full stacked sandwich for a Hajek weighted estimator under ``scheme``.

    Parameters are (mu1, mu0, propensity coefficients); the mean rows use the
    per-arm balancing weights and the propensity rows are the logistic score.
    """
    n = ds.n
    z = ds.z.astype(np.float64)
    y = ds.y
    e = fit.propensities
    design = fit.design
    k = design.shape[1]

    h = tilt(scheme, e)
    h_prime = tilt_derivative(scheme, e)
    w1 = h / e
    w0 = h / (1.0 - e)
    # d/de of the arm weights, chain-ruled through e's logistic jacobian later
    w1_prime = (h_prime * e - h) / (e * e)
    w0_prime = (h_prime * (1.0 - e) + h) / ((1.0 - e) * (1.0 - e))

    r1 = z * (y - mu1)
    r0 = (1.0 - z) * (y - mu0)
    u = np.empty((n, 2 + k))
    u[:, 0] = r1 * w1
    u[:, 1] = r0 * w0
    u[:, 2:] = design * (z - e)[:, None]

    bread = np.zeros((2 + k, 2 + k))
    bread[0, 0] = float(np.mean(z * w1))
    bread[1, 1] = float(np.mean((1.0 - z) * w0))
    de = e * (1.0 - e)
    bread[0, 2:] = -(r1 * w1_prime * de) @ design / n
    bread[1, 2:] = -(r0 * w0_prime * de) @ design / n
    bread[2:, 2:] = (design * de[:, None]).T @ design / n

    meat = u.T @ u / n
    sigma = _solve_bread(bread, meat, "weighting stack bread matrix")[:2, :2] / n
    params = np.concatenate([[mu1, mu0], fit.coef])
    return SandwichComponents(bread=bread, meat=meat, params=params, mu_covariance=sigma)


# ---------------------------------------------------------------------------
# AIPW stack


def aipw_stack_components(ds, fit, mu1, mu0, outcome_kind="continuous", arm_coefs=None):
    """Stacked sandwich for the augmented estimator.

    With ``arm_coefs=None`` the per-arm outcome models (least squares for a
    continuous outcome, logistic otherwise) are refit here and their score
    rows are appended, so the stack propagates outcome-model uncertainty.
    Passing fixed ``(coef_treated, coef_control)`` treats the augmentation
    functions as known and omits the outcome rows.
    """
    n = ds.n
    z = ds.z.astype(np.float64)
    y = ds.y
    e = fit.propensities
    design = fit.design
    k = design.shape[1]
    odesign = np.column_stack([np.ones(n), ds.x])
    q = odesign.shape[1]
    logistic_outcome = outcome_kind == "binary"

    if arm_coefs is None:
        coef1 = _fit_arm_outcome(odesign, y, ds.z == 1, logistic_outcome)
        coef0 = _fit_arm_outcome(odesign, y, ds.z == 0, logistic_outcome)
        with_outcome_rows = True
    else:
        coef1, coef0 = (np.asarray(c, dtype=np.float64) for c in arm_coefs)
        with_outcome_rows = False

    m1 = odesign @ coef1
    m0 = odesign @ coef0
    if logistic_outcome:
        m1 = expit(m1)
        m0 = expit(m0)

    dim = 2 + k + (2 * q if with_outcome_rows else 0)
    u = np.empty((n, dim))
    u[:, 0] = m1 + z * (y - m1) / e - mu1
    u[:, 1] = m0 + (1.0 - z) * (y - m0) / (1.0 - e) - mu0
    u[:, 2 : 2 + k] = design * (z - e)[:, None]

    bread = np.zeros((dim, dim))
    bread[0, 0] = 1.0
    bread[1, 1] = 1.0
    de = e * (1.0 - e)
    # mean rows against the propensity coefficients
    bread[0, 2 : 2 + k] = (z * (y - m1) * (1.0 - e) / e) @ design / n
    bread[1, 2 : 2 + k] = -((1.0 - z) * (y - m0) * e / (1.0 - e)) @ design / n
    bread[2 : 2 + k, 2 : 2 + k] = (design * de[:, None]).T @ design / n

    if with_outcome_rows:
        s1 = 2 + k
        s0 = s1 + q
        u[:, s1:s0] = odesign * (z * (y - m1))[:, None]
        u[:, s0:] = odesign * ((1.0 - z) * (y - m0))[:, None]
        dm1 = m1 * (1.0 - m1) if logistic_outcome else np.ones(n)
        dm0 = m0 * (1.0 - m0) if logistic_outcome else np.ones(n)
        bread[0, s1:s0] = (dm1 * (z / e - 1.0)) @ odesign / n
        bread[1, s0:] = (dm0 * ((1.0 - z) / (1.0 - e) - 1.0)) @ odesign / n
        bread[s1:s0, s1:s0] = (odesign * (z * dm1)[:, None]).T @ odesign / n
        bread[s0:, s0:] = (odesign * ((1.0 - z) * dm0)[:, None]).T @ odesign / n

    meat = u.T @ u / n
    sigma = _solve_bread(bread, meat, "augmented stack bread matrix")[:2, :2] / n
    params = np.concatenate([[mu1, mu0], fit.coef])
    if with_outcome_rows:
        params = np.concatenate([params, coef1, coef0])
    return SandwichComponents(bread=bread, meat=meat, params=params, mu_covariance=sigma)


def _fit_arm_outcome(design, y, mask, logistic):
    from . import _backend

    sub_design = np.ascontiguousarray(design[mask])
    sub_y = np.ascontiguousarray(y[mask], dtype=np.float64)
    if logistic:
        coef, _, _, _, status = _backend.irls_logistic(
            sub_design, sub_y, 1e-8, 100, 1e-12, 10
        )
        if status != _backend.STATUS_OK:
            raise SingularMatrixError("arm outcome logistic model did not converge")
        return coef
    gram = sub_design.T @ sub_design
    max_diag = float(np.max(np.diagonal(gram)))
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise RankDeficientDesign("arm outcome design is rank deficient") from None
    if float(np.min(np.diagonal(chol)) ** 2) < PIVOT_RTOL * max_diag:
        raise RankDeficientDesign("arm outcome design is rank deficient")
    return cho_solve((chol, True), sub_design.T @ sub_y, check_finite=False)


# ---------------------------------------------------------------------------
# standardization (outcome-regression) stack for binary outcomes


def standardization_components(ds, arm_fit, mu1, mu0):
    """Stacked sandwich for the per-arm logistic standardization estimator."""
    n = ds.n
    z = ds.z.astype(np.float64)
    y = ds.y
    design = arm_fit.design
    k = design.shape[1]
    m1 = arm_fit.mu1_fitted
    m0 = arm_fit.mu0_fitted

    dim = 2 + 2 * k
    u = np.empty((n, dim))
    u[:, 0] = m1 - mu1
    u[:, 1] = m0 - mu0
    u[:, 2 : 2 + k] = design * (z * (y - m1))[:, None]
    u[:, 2 + k :] = design * ((1.0 - z) * (y - m0))[:, None]

    dm1 = m1 * (1.0 - m1)
    dm0 = m0 * (1.0 - m0)
    bread = np.zeros((dim, dim))
    bread[0, 0] = 1.0
    bread[1, 1] = 1.0
    bread[0, 2 : 2 + k] = -dm1 @ design / n
    bread[1, 2 + k :] = -dm0 @ design / n
    bread[2 : 2 + k, 2 : 2 + k] = (design * (z * dm1)[:, None]).T @ design / n
    bread[2 + k :, 2 + k :] = (design * ((1.0 - z) * dm0)[:, None]).T @ design / n

    meat = u.T @ u / n
    sigma = _solve_bread(bread, meat, "standardization bread matrix")[:2, :2] / n
    params = np.concatenate([[mu1, mu0], arm_fit.coef_treated, arm_fit.coef_control])
    return SandwichComponents(bread=bread, meat=meat, params=params, mu_covariance=sigma)


# ---------------------------------------------------------------------------
# unadjusted arm means


def unadjusted_mu_covariance(ds):
    """Covariance of the raw arm means (sample variances over arm sizes)."""
    treated = ds.z == 1
    y1 = ds.y[treated]
    y0 = ds.y[~treated]
    v1 = float(np.mean((y1 - np.mean(y1)) ** 2)) / len(y1)
    v0 = float(np.mean((y0 - np.mean(y0)) ** 2)) / len(y0)
    return np.diag([v1, v0])


# ---------------------------------------------------------------------------
# method-level dispatcher


def stacked_sandwich(ds, fits, method, estimand, df_correction=False):
    """Variance of the estimand via the stacked M-estimation sandwich.

    ``method`` is "ipw", "ow", or "aipw". For the weighting methods ``fits``
    is the propensity fit (mu's recomputed from the Hajek means); for "aipw"
    it is (propensity_fit, outcome_fit). The "ow" stack uses the same moment
    blocks as the closed form but inverts the full system. ``df_correction``
    rescales by n/(n - dim(stack)); off by default.
    """
    from .estimators import aipw_means
    from .weighting import IPW, OVERLAP, hajek_means, unit_weights

    method = method.lower()
    if method in ("ipw", "ow"):
        fit = fits[0] if isinstance(fits, (tuple, list)) else fits
        scheme = IPW if method == "ipw" else OVERLAP
        w = unit_weights(scheme, fit.propensities, ds.z)
        mu1, mu0 = hajek_means(ds.y, ds.z, w)
        if method == "ow":
            comp = ow_stack_components(ds, fit, mu1, mu0)
        else:
            comp = tilted_stack_components(ds, fit, scheme, mu1, mu0)
    elif method == "aipw":
        pfit, outcome_fit = fits
        mu1, mu0 = aipw_means(ds, pfit, outcome_fit)
        comp = aipw_stack_components(
            ds, pfit, mu1, mu0, outcome_kind=ds.outcome_kind
        )
    else:
        raise ValueError(f"unknown stacked sandwich method {method!r}")
    value = delta_ratio(mu1, mu0, comp.mu_covariance, estimand)
    if df_correction:
        dim = comp.bread.shape[0]
        value *= ds.n / max(ds.n - dim, 1)
    return value


# ---------------------------------------------------------------------------
# Huber-White (HC0) for the regression estimator


def huber_white_ancova(fit, df_correction=False):
    """HC0 sandwich variance of the treatment coefficient of an ANCOVA fit.

    ``df_correction`` applies the HC1-style n/(n - k) rescale; off by default,
    the plain HC0 estimator is the reference behavior.
    """
    design = fit.design
    resid = fit.residuals
    gram = design.T @ design
    max_diag = float(np.max(np.diagonal(gram)))
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise RankDeficientDesign("ANCOVA design is rank deficient") from None
    if float(np.min(np.diagonal(chol)) ** 2) < PIVOT_RTOL * max_diag:
        raise RankDeficientDesign("ANCOVA design is rank deficient")
    meat = (design * (resid ** 2)[:, None]).T @ design
    half = cho_solve((chol, True), meat, check_finite=False)
    cov = cho_solve((chol, True), half.T, check_finite=False)
    value = float(cov[fit.z_index, fit.z_index])
    if df_correction:
        n, k = design.shape
        value *= n / max(n - k, 1)
    return value
