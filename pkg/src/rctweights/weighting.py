"""Balancing-weights family: tilting functions, Hájek means, balance tables."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWeights

SCHEME_KINDS = ("ipw", "ow", "att", "matching", "custom")


@dataclass(frozen=True)
class WeightingScheme:
    """A member of the balancing-weights family, identified by its tilting
    function h(e): 1 for IPW, e(1-e) for overlap, e for ATT, min(e, 1-e)
    for matching, or a user-supplied nonnegative function of the propensity.
    """

    kind: str
    tilt_fn: object = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown weighting scheme {self.kind!r}")
        if self.kind == "custom" and not callable(self.tilt_fn):
            raise ValueError("custom scheme requires a callable tilt function")

    @property
    def label(self):
        return {"ipw": "IPW", "ow": "OW", "att": "ATT", "matching": "Matching"}.get(
            self.kind, "Custom"
        )


IPW = WeightingScheme("ipw")
OVERLAP = WeightingScheme("ow")
ATT = WeightingScheme("att")
MATCHING = WeightingScheme("matching")


def custom_scheme(fn):
    """Wrap a user tilt function e -> h(e); must be finite and >= 0 on (0,1)."""
    return WeightingScheme("custom", tilt_fn=fn)


def scheme_from_name(name):
    name = name.lower()
    if name in ("ipw", "ow", "att", "matching"):
        return WeightingScheme(name)
    raise ValueError(f"unknown weighting scheme {name!r}")


def tilt(scheme, e):
    """Evaluate the scheme's tilting function elementwise on propensities."""
    e = np.asarray(e, dtype=np.float64)
    if np.any(e <= 0.0) or np.any(e >= 1.0):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    if scheme.kind == "ipw":
        return np.ones_like(e)
    if scheme.kind == "ow":
        return e * (1.0 - e)
    if scheme.kind == "att":
        return e.copy()
    if scheme.kind == "matching":
        return np.minimum(e, 1.0 - e)
    h = np.asarray(scheme.tilt_fn(e), dtype=np.float64)
    if h.shape != e.shape:
        raise ValueError("custom tilt must return one value per propensity")
    if np.any(~np.isfinite(h)) or np.any(h < 0.0):
        raise ValueError("custom tilt must be finite and nonnegative on (0, 1)")
    return h


def tilt_derivative(scheme, e, fd_step=1e-6):
    """dh/de, used by sandwich variances to propagate propensity estimation.

    Matching uses the almost-everywhere derivative of min(e, 1-e); custom
    tilts fall back to a central finite difference.
    """
    e = np.asarray(e, dtype=np.float64)
    if scheme.kind == "ipw":
        return np.zeros_like(e)
    if scheme.kind == "ow":
        return 1.0 - 2.0 * e
    if scheme.kind == "att":
        return np.ones_like(e)
    if scheme.kind == "matching":
        return np.where(e < 0.5, 1.0, -1.0)
    lo = np.clip(e - fd_step, 1e-12, 1.0 - 1e-12)
    hi = np.clip(e + fd_step, 1e-12, 1.0 - 1e-12)
    return (tilt(scheme, hi) - tilt(scheme, lo)) / (hi - lo)


def unit_weights(scheme, e, z):
    """Per-unit balancing weights: h(e)/e for treated, h(e)/(1-e) for controls."""
    e = np.asarray(e, dtype=np.float64)
    z = np.asarray(z)
    h = tilt(scheme, e)
    return np.where(z == 1, h / e, h / (1.0 - e))


def hajek_means(y, z, w):
    """Weighted arm means normalized by the arm's weight total."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z)
    w = np.asarray(w, dtype=np.float64)
    treated = z == 1
    denom1 = float(np.sum(w[treated]))
    denom0 = float(np.sum(w[~treated]))
    if not (np.isfinite(denom1) and denom1 > 0.0):
        raise DegenerateWeights(f"treated-arm weight total {denom1!r}")
    if not (np.isfinite(denom0) and denom0 > 0.0):
        raise DegenerateWeights(f"control-arm weight total {denom0!r}")
    mu1 = float(np.sum(w[treated] * y[treated]) / denom1)
    mu0 = float(np.sum(w[~treated] * y[~treated]) / denom0)
    return mu1, mu0


@dataclass(frozen=True)
class BalanceRow:
    name: str
    mean_treated: float
    mean_control: float
    scale: float
    asd: float
    flag: str = ""


@dataclass(frozen=True)
class BalanceTable:
    """Per-covariate weighted means and absolute standardized differences."""

    label: str
    rows: tuple = field(default_factory=tuple)

    def max_asd(self):
        finite = [r.asd for r in self.rows if np.isfinite(r.asd)]
        return max(finite) if finite else 0.0

    def to_json_dict(self):
        return {
            "weights": self.label,
            "rows": [
                {
                    "covariate": r.name,
                    "mean_treated": r.mean_treated,
                    "mean_control": r.mean_control,
                    "scale": r.scale,
                    "asd": r.asd,
                    "flag": r.flag,
                }
                for r in self.rows
            ],
        }

    def to_tsv(self):
        lines = ["covariate\tmean_treated\tmean_control\tscale\tasd\tflag"]
        for r in self.rows:
            lines.append(
                f"{r.name}\t{r.mean_treated:.6g}\t{r.mean_control:.6g}"
                f"\t{r.scale:.6g}\t{r.asd:.3f}\t{r.flag}"
            )
        return "\n".join(lines) + "\n"


def _pooled_scales(ds):
    """Unweighted per-arm variances averaged, per covariate (N-1 denominator).

    The scale stays unweighted even for weighted ASDs so that weighting moves
    only the numerator and the columns of a before/after table are comparable.
    """
    treated = ds.z == 1
    scales = np.empty(ds.p)
    for j in range(ds.p):
        v1 = float(np.var(ds.x[treated, j], ddof=1)) if treated.sum() > 1 else 0.0
        v0 = float(np.var(ds.x[~treated, j], ddof=1)) if (~treated).sum() > 1 else 0.0
        scales[j] = np.sqrt((v1 + v0) / 2.0)
    return scales


def asd(ds, w, label="weighted"):
    """Balance table of absolute standardized differences under weights ``w``."""
    w = np.asarray(w, dtype=np.float64)
    treated = ds.z == 1
    denom1 = float(np.sum(w[treated]))
    denom0 = float(np.sum(w[~treated]))
    if denom1 <= 0.0 or denom0 <= 0.0:
        raise DegenerateWeights("nonpositive weight total in an arm")
    scales = _pooled_scales(ds)
    rows = []
    for j, name in enumerate(ds.covariate_names):
        col = ds.x[:, j]
        mean1 = float(np.sum(w[treated] * col[treated]) / denom1)
        mean0 = float(np.sum(w[~treated] * col[~treated]) / denom0)
        diff = abs(mean1 - mean0)
        if scales[j] == 0.0:
            value = 0.0 if diff == 0.0 else np.inf
            flag = "" if diff == 0.0 else "degenerate scale"
        else:
            value = diff / scales[j]
            flag = ""
        rows.append(BalanceRow(name, mean1, mean0, float(scales[j]), value, flag))
    return BalanceTable(label=label, rows=tuple(rows))


def check_exact_balance(ds, fit):
    """Max absolute OW-weighted covariate mean difference over modeled columns.

    At a converged unpenalized logistic fit this is zero up to solver
    tolerance for every covariate included in the model.
    """
    e = fit.propensities
    w = unit_weights(OVERLAP, e, ds.z)
    treated = ds.z == 1
    denom1 = float(np.sum(w[treated]))
    denom0 = float(np.sum(w[~treated]))
    worst = 0.0
    for name in fit.covariate_names:
        col = ds.column(name)
        mean1 = float(np.sum(w[treated] * col[treated]) / denom1)
        mean0 = float(np.sum(w[~treated] * col[~treated]) / denom0)
        worst = max(worst, abs(mean1 - mean0))
    return worst


def balance_tables(ds, fit, unadjusted_label="UNADJ"):
    """Unadjusted, IPW, and OW balance tables from one propensity fit."""
    ones = np.ones(ds.n)
    tables = [asd(ds, ones, label=unadjusted_label)]
    for scheme in (IPW, OVERLAP):
        w = unit_weights(scheme, fit.propensities, ds.z)
        tables.append(asd(ds, w, label=scheme.label))
    return tables
