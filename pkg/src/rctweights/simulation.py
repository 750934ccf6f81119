"""Monte Carlo engine: data-generating processes, replicate execution,
and the summary metrics used to compare estimators.

Replicate randomness comes from counter-based Philox substreams keyed by
(base seed, replicate index), so serial and parallel runs produce
bit-identical results.
"""

import functools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit, ndtri

from . import estimators as est
from . import variance
from .dataset import TrialDataset
from .errors import BoundaryMean, DegenerateWeights, ModelFitError, SingularMatrixError
from .estimators import Estimand
from .propensity import fit_logistic
from .weighting import IPW, OVERLAP, hajek_means, unit_weights

N_COVARIATES = 10
PROGNOSTIC_PROFILE = np.array([1, 1, 2, 2, 4, 4, 8, 8, 16, 16], dtype=np.float64)
# Sum of squared profile entries; the b0 normalization divides by its root.
_PROFILE_SS = float(np.sum(PROGNOSTIC_PROFILE**2))
# Default ratio of summed squared main effects to residual variance.
SIGNAL_TO_NOISE = 2.25

DGPS = ("model1", "model2", "binary_logistic")
METHODS = ("unadj", "ipw", "lr", "aipw", "ow")

MAX_EMPTY_ARM_REDRAWS = 1000


@dataclass(frozen=True)
class Scenario:
    """One simulation configuration.

    ``b0`` defaults to the value setting the summed squared prognostic main
    effects to 2.25x the residual variance, so the covariates explain just
    over two thirds of the outcome variance. ``b1`` scales a constant
    treatment-by-covariate interaction vector. Binary scenarios control the
    marginal control-arm prevalence via root-finding for the intercept.
    """

    n: int
    r: float = 0.5
    b1: float = 0.0
    sigma_y2: float = 2.0
    dgp: str = "model1"
    replicates: int = 2000
    seed: int = 12345
    b0: float = None
    prevalence: float = 0.5
    binary_effect: float = 0.0
    binary_signal_sd: float = 1.0

    def __post_init__(self):
        if self.dgp not in DGPS:
            raise ValueError(f"unknown dgp {self.dgp!r}")
        if not 0.0 < self.r < 1.0:
            raise ValueError("randomization probability must be in (0, 1)")
        if self.n < 2:
            raise ValueError("need n >= 2")
        if self.sigma_y2 < 0.0:
            raise ValueError("sigma_y2 must be nonnegative")
        if self.dgp == "binary_logistic" and not 0.0 < self.prevalence < 1.0:
            raise ValueError("prevalence must be in (0, 1)")

    @property
    def outcome_kind(self):
        return "binary" if self.dgp == "binary_logistic" else "continuous"

    @property
    def p(self):
        return N_COVARIATES

    def beta0(self):
        b0 = self.b0
        if b0 is None:
            b0 = float(np.sqrt(SIGNAL_TO_NOISE * self.sigma_y2 / _PROFILE_SS))
        return b0 * PROGNOSTIC_PROFILE

    def beta1(self):
        return self.b1 * np.ones(N_COVARIATES)

    def gamma(self):
        return np.sqrt(self.sigma_y2 / N_COVARIATES) * np.ones(N_COVARIATES - 1)

    def beta0_binary(self):
        # prognostic signal on the logit scale, SD binary_signal_sd (default 1)
        return self.binary_signal_sd * PROGNOSTIC_PROFILE / np.sqrt(_PROFILE_SS)

    def beta1_binary(self):
        return self.b1 * np.ones(N_COVARIATES)

    @functools.lru_cache(maxsize=None)
    def eta0(self):
        """Intercept hit by root-finding so E[expit(eta0 + X'b0)] = prevalence."""
        sd = float(np.linalg.norm(self.beta0_binary()))
        if sd == 0.0:
            return float(logit(self.prevalence))
        nodes, weights = np.polynomial.hermite_e.hermegauss(96)
        weights = weights / np.sqrt(2.0 * np.pi)

        def gap(eta):
            return float(weights @ expit(eta + sd * nodes)) - self.prevalence

        center = float(logit(self.prevalence))
        return float(brentq(gap, center - 8.0, center + 8.0, xtol=1e-12))

    def estimands(self):
        if self.outcome_kind == "binary":
            return (Estimand.RD, Estimand.LOG_RR, Estimand.LOG_OR)
        return (Estimand.RD,)

    def true_effects(self, n_draws=1_000_000):
        """True estimand values under this data-generating process.

        Continuous models fix the average effect at zero. Binary scenarios
        integrate the outcome model over a large Monte Carlo draw of
        covariates (exact zeros when the arms share one outcome model).
        """
        if self.outcome_kind == "continuous":
            return {Estimand.RD: 0.0}
        if self.binary_effect == 0.0 and self.b1 == 0.0:
            return {e: 0.0 for e in self.estimands()}
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((self.seed, 987654321)))
        )
        x = rng.standard_normal((n_draws, N_COVARIATES))
        eta0 = self.eta0()
        mu0 = float(np.mean(expit(eta0 + x @ self.beta0_binary())))
        mu1 = float(
            np.mean(
                expit(
                    eta0
                    + self.binary_effect
                    + x @ (self.beta0_binary() + self.beta1_binary())
                )
            )
        )
        return {
            Estimand.RD: mu1 - mu0,
            Estimand.LOG_RR: float(np.log(mu1 / mu0)),
            Estimand.LOG_OR: float(
                np.log(mu1 / (1 - mu1)) - np.log(mu0 / (1 - mu0))
            ),
        }


def replicate_rng(scenario, replicate):
    """Counter-based substream for one replicate."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((scenario.seed, replicate)))
    )


def _draw_replicate(scenario, rng):
    n = scenario.n
    x = rng.standard_normal((n, N_COVARIATES))
    z = (rng.random(n) < scenario.r).astype(np.int64)
    redraws = 0
    while z.sum() in (0, n):
        if redraws >= MAX_EMPTY_ARM_REDRAWS:
            raise RuntimeError("could not draw a two-arm allocation")
        z = (rng.random(n) < scenario.r).astype(np.int64)
        redraws += 1

    if scenario.outcome_kind == "binary":
        eta0 = scenario.eta0()
        lin0 = eta0 + x @ scenario.beta0_binary()
        lin1 = lin0 + scenario.binary_effect + x @ scenario.beta1_binary()
        y0 = (rng.random(n) < expit(lin0)).astype(np.float64)
        y1 = (rng.random(n) < expit(lin1)).astype(np.float64)
    else:
        mean0 = x @ scenario.beta0()
        mean1 = mean0 + x @ scenario.beta1()
        if scenario.dgp == "model2":
            pair_products = x[:, :-1] * x[:, 1:]
            shift = pair_products @ scenario.gamma()
            mean0 = mean0 + shift
            mean1 = mean1 + shift
        sigma = np.sqrt(scenario.sigma_y2)
        y0 = mean0 + sigma * rng.standard_normal(n)
        y1 = mean1 + sigma * rng.standard_normal(n)

    y = np.where(z == 1, y1, y0)
    ds = TrialDataset(
        y=y, z=z, x=x, outcome_kind=scenario.outcome_kind
    )
    return ds, redraws


def generate_replicate(scenario, replicate):
    """Deterministic dataset for one replicate index."""
    ds, _ = _draw_replicate(scenario, replicate_rng(scenario, replicate))
    return ds


def binary_dgp(scenario, replicate):
    """Binary-outcome replicate (scenario must use the logistic DGP)."""
    if scenario.outcome_kind != "binary":
        raise ValueError("scenario does not use the binary logistic DGP")
    return generate_replicate(scenario, replicate)


# ---------------------------------------------------------------------------
# replicate-level estimation

_FAILURE_EXCEPTIONS = (
    ModelFitError,
    BoundaryMean,
    DegenerateWeights,
    SingularMatrixError,
)


def _replicate_estimates(scenario, replicate, methods, estimands):
    """(point, variance) per requested (method, estimand); None marks failure."""
    ds, redraws = _draw_replicate(scenario, replicate_rng(scenario, replicate))
    out = {}
    binary = ds.outcome_kind == "binary"

    def record(method, estimand, mu1, mu0, sigma):
        try:
            point = est.transform_means(mu1, mu0, estimand)
            var = variance.delta_ratio(mu1, mu0, sigma, estimand)
        except _FAILURE_EXCEPTIONS:
            out[(method, estimand)] = None
            return
        out[(method, estimand)] = (point, var)

    if "unadj" in methods:
        mu1, mu0, _ = est.estimate_unadjusted(ds)
        sigma = variance.unadjusted_mu_covariance(ds)
        for estimand in estimands:
            record("unadj", estimand, mu1, mu0, sigma)

    pfit = None
    weighting_requested = [m for m in ("ipw", "ow", "aipw") if m in methods]
    if weighting_requested:
        try:
            pfit = fit_logistic(ds)
        except _FAILURE_EXCEPTIONS:
            for m in weighting_requested:
                for estimand in estimands:
                    out[(m, estimand)] = None

    for method, scheme in (("ipw", IPW), ("ow", OVERLAP)):
        if method not in methods or pfit is None:
            continue
        try:
            w = unit_weights(scheme, pfit.propensities, ds.z)
            mu1, mu0 = hajek_means(ds.y, ds.z, w)
            if method == "ow":
                sigma, _ = variance.ow_mu_covariance(ds, pfit, mu1, mu0)
            else:
                sigma = variance.tilted_stack_components(
                    ds, pfit, scheme, mu1, mu0
                ).mu_covariance
        except _FAILURE_EXCEPTIONS:
            for estimand in estimands:
                out[(method, estimand)] = None
            continue
        for estimand in estimands:
            record(method, estimand, mu1, mu0, sigma)

    outcome_fit = None
    if "lr" in methods or "aipw" in methods:
        try:
            if binary:
                outcome_fit = est.fit_arm_logistic(ds)
            else:
                outcome_fit = est.fit_ancova(ds, with_interactions=True)
        except _FAILURE_EXCEPTIONS:
            outcome_fit = None

    if "lr" in methods:
        if outcome_fit is None:
            for estimand in estimands:
                out[("lr", estimand)] = None
        elif binary:
            mu1, mu0 = est.standardized_means(outcome_fit)
            try:
                sigma = variance.standardization_components(
                    ds, outcome_fit, mu1, mu0
                ).mu_covariance
            except _FAILURE_EXCEPTIONS:
                sigma = None
            for estimand in estimands:
                if sigma is None:
                    out[("lr", estimand)] = None
                else:
                    record("lr", estimand, mu1, mu0, sigma)
        else:
            try:
                var = variance.huber_white_ancova(outcome_fit)
                out[("lr", Estimand.RD)] = (outcome_fit.treatment_coef, var)
            except _FAILURE_EXCEPTIONS:
                out[("lr", Estimand.RD)] = None

    if "aipw" in methods:
        if pfit is None or outcome_fit is None:
            for estimand in estimands:
                out[("aipw", estimand)] = None
        else:
            try:
                mu1, mu0 = est.aipw_means(ds, pfit, outcome_fit)
                sigma = variance.aipw_stack_components(
                    ds, pfit, mu1, mu0, outcome_kind=ds.outcome_kind
                ).mu_covariance
            except _FAILURE_EXCEPTIONS:
                for estimand in estimands:
                    out[("aipw", estimand)] = None
            else:
                for estimand in estimands:
                    record("aipw", estimand, mu1, mu0, sigma)

    return out, redraws


def _run_chunk(args):
    scenario, indices, methods, estimands = args
    return [_replicate_estimates(scenario, i, methods, estimands) for i in indices]


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class MethodSummary:
    method: str
    estimand: Estimand
    n_used: int
    n_failed: int
    bias: float
    mc_variance: float
    mse: float
    relative_efficiency: float
    est_var_ratio: float
    coverage: float


@dataclass(frozen=True)
class SimulationSummary:
    scenario: Scenario
    methods: tuple
    replicates: int
    level: float
    true_effects: dict
    rows: tuple
    empty_arm_redraws: int
    raw: dict = field(repr=False, default_factory=dict)

    def row(self, method, estimand):
        estimand = Estimand(estimand)
        for r in self.rows:
            if r.method == method and r.estimand is estimand:
                return r
        raise KeyError((method, estimand))

    def to_json(self):
        payload = {
            "scenario": _scenario_dict(self.scenario),
            "replicates": self.replicates,
            "level": self.level,
            "empty_arm_redraws": self.empty_arm_redraws,
            "true_effects": {e.label: v for e, v in self.true_effects.items()},
            "rows": [
                {
                    "method": r.method,
                    "estimand": r.estimand.label,
                    "n_used": r.n_used,
                    "n_failed": r.n_failed,
                    "bias": r.bias,
                    "mc_variance": r.mc_variance,
                    "mse": r.mse,
                    "relative_efficiency": r.relative_efficiency,
                    "est_var_ratio": r.est_var_ratio,
                    "coverage": r.coverage,
                }
                for r in self.rows
            ],
        }
        return json.dumps(payload, indent=2, allow_nan=True)

    def to_tsv(self):
        header = (
            "method\testimand\tn_used\tn_failed\tbias\tmc_variance\tmse"
            "\trelative_efficiency\test_var_ratio\tcoverage"
        )
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.method}\t{r.estimand.label}\t{r.n_used}\t{r.n_failed}"
                f"\t{r.bias:.6g}\t{r.mc_variance:.6g}\t{r.mse:.6g}"
                f"\t{r.relative_efficiency:.6g}\t{r.est_var_ratio:.6g}"
                f"\t{r.coverage:.6g}"
            )
        return "\n".join(lines) + "\n"


def _scenario_dict(sc):
    return {
        "n": sc.n,
        "r": sc.r,
        "b1": sc.b1,
        "sigma_y2": sc.sigma_y2,
        "dgp": sc.dgp,
        "replicates": sc.replicates,
        "seed": sc.seed,
        "b0": sc.b0,
        "prevalence": sc.prevalence,
        "binary_effect": sc.binary_effect,
        "binary_signal_sd": sc.binary_signal_sd,
    }


def run_monte_carlo(scenario, methods=METHODS, level=0.95, n_jobs=1, replicates=None):
    """Execute the scenario and summarize bias, efficiency, variance
    calibration, and interval coverage per method and estimand.

    Replicates where a method fails (non-convergence, separation, boundary
    means, singular designs) are excluded for that method and counted.
    """
    methods = tuple(m.lower() for m in methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}")
    estimands = scenario.estimands()
    total = scenario.replicates if replicates is None else int(replicates)
    indices = list(range(total))

    if n_jobs and n_jobs > 1:
        chunks = [
            (scenario, indices[i::n_jobs], methods, estimands)
            for i in range(n_jobs)
        ]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunk_results = list(pool.map(_run_chunk, chunks))
        results = [None] * total
        for (_, chunk_indices, _, _), chunk in zip(chunks, chunk_results):
            for idx, value in zip(chunk_indices, chunk):
                results[idx] = value
    else:
        results = [
            _replicate_estimates(scenario, i, methods, estimands) for i in indices
        ]

    redraws = sum(r for _, r in results)
    truths = scenario.true_effects()

    raw = {}
    for method in methods:
        for estimand in estimands:
            points = np.full(total, np.nan)
            variances = np.full(total, np.nan)
            ok = np.zeros(total, dtype=bool)
            for i, (reps, _) in enumerate(results):
                value = reps.get((method, estimand))
                if (
                    value is not None
                    and np.isfinite(value[0])
                    and np.isfinite(value[1])
                    and value[1] >= 0.0
                ):
                    points[i], variances[i] = value
                    ok[i] = True
            raw[(method, estimand)] = (points, variances, ok)

    rows = []
    half_z = None
    for method in methods:
        for estimand in estimands:
            points, variances, ok = raw[(method, estimand)]
            used = points[ok]
            used_var = variances[ok]
            truth = truths[estimand]
            n_used = int(ok.sum())
            if n_used >= 2:
                mc_var = float(np.var(used, ddof=1))
                bias = float(np.mean(used) - truth)
                mse = float(np.mean((used - truth) ** 2))
                est_ratio = float(np.mean(used_var) / mc_var) if mc_var > 0 else np.nan
                if half_z is None:
                    half_z = float(ndtri(0.5 + level / 2.0))
                half = half_z * np.sqrt(used_var)
                covered = (used - half <= truth) & (truth <= used + half)
                coverage = float(np.mean(covered))
            else:
                mc_var = bias = mse = est_ratio = coverage = float("nan")
            rows.append(
                MethodSummary(
                    method=method,
                    estimand=estimand,
                    n_used=n_used,
                    n_failed=total - n_used,
                    bias=bias,
                    mc_variance=mc_var,
                    mse=mse,
                    relative_efficiency=np.nan,
                    est_var_ratio=est_ratio,
                    coverage=coverage,
                )
            )

    # relative efficiency against the unadjusted estimator, same estimand
    final_rows = []
    for row in rows:
        rel = np.nan
        if "unadj" in methods and np.isfinite(row.mc_variance) and row.mc_variance > 0:
            base = next(
                (
                    r.mc_variance
                    for r in rows
                    if r.method == "unadj" and r.estimand is row.estimand
                ),
                np.nan,
            )
            rel = float(base / row.mc_variance) if np.isfinite(base) else np.nan
        final_rows.append(replace(row, relative_efficiency=rel))

    return SimulationSummary(
        scenario=scenario,
        methods=methods,
        replicates=total,
        level=level,
        true_effects=truths,
        rows=tuple(final_rows),
        empty_arm_redraws=redraws,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# scenario files


_SCENARIO_FIELDS = {
    "n": int,
    "r": float,
    "b1": float,
    "sigma_y2": float,
    "dgp": str,
    "replicates": int,
    "seed": int,
    "b0": float,
    "prevalence": float,
    "binary_effect": float,
    "binary_signal_sd": float,
}


def parse_scenario_text(text):
    """Scenario from JSON or flat `key = value` lines (# comments allowed)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        data = json.loads(stripped)
    else:
        data = {}
        for line_number, line in enumerate(stripped.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"scenario line {line_number} is not `key = value`")
            key, value = (part.strip() for part in line.split("=", 1))
            data[key] = value
    kwargs = {}
    for key, value in data.items():
        if key not in _SCENARIO_FIELDS:
            raise ValueError(f"unknown scenario key {key!r}")
        caster = _SCENARIO_FIELDS[key]
        if value is None or (isinstance(value, str) and value.lower() == "none"):
            kwargs[key] = None
        else:
            kwargs[key] = caster(value)
    if "n" not in kwargs:
        raise ValueError("scenario must set n")
    return Scenario(**kwargs)


def load_scenario(path):
    with open(path, encoding="utf-8") as handle:
        return parse_scenario_text(handle.read())
