"""Working logistic propensity model fit by unpenalized maximum likelihood.

The fit is deliberately unpenalized: the exact-balance property of overlap
weights and the downstream sandwich variances both rely on the raw score
equations holding at the estimate.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import MaxIterationsExceeded, RankDeficientDesign, SeparationDetected

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
PROB_CLAMP = 1e-12
MAX_HALVINGS = 10
COEF_DIVERGENCE = 30.0


@dataclass(frozen=True)
class PropensityFit:
    """Fitted logistic model: intercept-first coefficients and per-unit scores."""

    coef: np.ndarray
    propensities: np.ndarray
    design: np.ndarray
    covariate_names: tuple
    converged: bool
    iterations: int
    max_score: float

    def __post_init__(self):
        for arr in (self.coef, self.propensities, self.design):
            np.asarray(arr).setflags(write=False)


def _augmented_design(ds, covariates):
    if covariates is None:
        names = ds.covariate_names
        x = ds.x
    else:
        names = tuple(covariates)
        cols = [ds.column(name) for name in names]
        x = np.column_stack(cols) if cols else np.empty((ds.n, 0))
    design = np.empty((ds.n, x.shape[1] + 1))
    design[:, 0] = 1.0
    design[:, 1:] = x
    return np.ascontiguousarray(design), names


def fit_logistic(ds, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, covariates=None):
    """Fit treatment ~ intercept + covariates by Newton/IRLS.

    ``covariates`` restricts the model to a subset of the dataset's columns
    (default: all). Raises SeparationDetected, RankDeficientDesign, or
    MaxIterationsExceeded on failure.
    """
    z = ds.z.astype(np.float64)
    if ds.n_treated == 0 or ds.n_control == 0:
        raise SeparationDetected("all units in one arm; propensity model undefined")
    design, names = _augmented_design(ds, covariates)

    coef, probs, iterations, max_score, status = _backend.irls_logistic(
        design, z, tol, max_iter, PROB_CLAMP, MAX_HALVINGS
    )

    # divergence is judged on the per-SD scale so the rule is invariant to
    # rescaling a covariate column; separation takes precedence over the
    # pivot-based rank flag, which tiny clamp-era weights can also trip
    col_sd = np.ones_like(coef)
    if design.shape[1] > 1:
        col_sd[1:] = np.std(design[:, 1:], axis=0)
    per_sd = np.abs(coef) * np.where(col_sd > 0.0, col_sd, 1.0)
    oversized = np.flatnonzero(per_sd[1:] > COEF_DIVERGENCE) + 1
    pinned = bool(
        np.any(probs <= PROB_CLAMP) or np.any(probs >= 1.0 - PROB_CLAMP)
    )
    if oversized.size or pinned:
        labels = tuple(names[j - 1] for j in oversized)
        detail = f" implicated: {', '.join(labels)}" if labels else ""
        raise SeparationDetected(
            "separation detected: fitted probabilities pinned at the clamp or "
            f"per-SD coefficients beyond |{COEF_DIVERGENCE:g}|.{detail}",
            covariates=labels,
        )
    if status == _backend.STATUS_RANK_DEFICIENT:
        raise RankDeficientDesign(
            "propensity design matrix is numerically rank deficient"
        )
    if status == _backend.STATUS_MAX_ITER:
        raise MaxIterationsExceeded(
            f"logistic fit did not reach tol={tol:g} in {max_iter} iterations "
            f"(score norm {max_score:.3e})"
        )
    return PropensityFit(
        coef=coef,
        propensities=probs,
        design=design,
        covariate_names=names,
        converged=True,
        iterations=iterations,
        max_score=max_score,
    )


def score_contributions(fit, ds):
    """Per-unit logistic score rows: design row scaled by (z - propensity).

    Column sums vanish at the maximum likelihood estimate; these rows are the
    propensity block of the stacked estimating equations used for variance.
    """
    resid = ds.z.astype(np.float64) - fit.propensities
    return fit.design * resid[:, None]
