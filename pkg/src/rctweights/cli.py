"""Command-line front end: estimation, balance diagnostics, simulation.

Exit codes: 0 success, 1 usage/data error, 2 partial estimation failure
(the table is still printed with failure flags).
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from .dataset import ColumnSchema, load_csv
from .errors import BoundaryMean, DatasetError, DegenerateWeights, ModelFitError, SingularMatrixError
from .estimators import Estimand
from .propensity import fit_logistic
from .simulation import load_scenario, run_monte_carlo
from .weighting import balance_tables, scheme_from_name

ESTIMATE_METHODS = ("unadj", "ipw", "ow", "att", "matching", "lr", "aipw")

_FAILURES = (ModelFitError, BoundaryMean, DegenerateWeights, SingularMatrixError)


def _fmt(value):
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return "" if value is None else str(value)
    return f"{value:.6g}"


def _comma_list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _add_dataset_args(parser):
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--outcome", required=True, help="outcome column name")
    parser.add_argument("--treatment", required=True, help="treatment column name")
    parser.add_argument(
        "--covariates",
        default="",
        help="comma-separated covariate column names",
    )
    parser.add_argument(
        "--outcome-kind",
        choices=("auto", "continuous", "binary"),
        default="auto",
    )


def _load(args):
    schema = ColumnSchema(
        outcome=args.outcome,
        treatment=args.treatment,
        covariates=_comma_list(args.covariates),
        outcome_kind=args.outcome_kind,
    )
    return load_csv(args.data, schema)


def cmd_estimate(args):
    ds = _load(args)
    methods = _comma_list(args.methods.lower()) or ("unadj",)
    unknown = [m for m in methods if m not in ESTIMATE_METHODS]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}")
    estimands = tuple(Estimand.parse(e) for e in _comma_list(args.estimands))
    if ds.outcome_kind == "continuous" and any(
        e is not Estimand.RD for e in estimands
    ):
        raise ValueError("estimand requires binary outcome")

    pfit = None
    pfit_error = None
    if any(m in ("ipw", "ow", "att", "matching", "aipw") for m in methods):
        try:
            pfit = fit_logistic(ds)
        except (ModelFitError, DatasetError) as exc:
            pfit_error = exc

    outcome_fit = None
    outcome_error = None
    if "aipw" in methods:
        try:
            if ds.outcome_kind == "binary":
                outcome_fit = est.fit_arm_logistic(ds)
            else:
                outcome_fit = est.fit_ancova(ds, with_interactions=True)
        except _FAILURES as exc:
            outcome_error = exc

    rows = []
    any_failed = False
    for method in methods:
        for estimand in estimands:
            try:
                if method == "unadj":
                    effect = est.unadjusted_effect(ds, estimand, args.level)
                elif method == "lr":
                    effect = est.estimate_outcome_regression(ds, estimand, args.level)
                elif method == "aipw":
                    if pfit_error is not None:
                        raise pfit_error
                    if outcome_error is not None:
                        raise outcome_error
                    effect = est.estimate_aipw(
                        ds, pfit, outcome_fit, estimand, args.level
                    )
                else:
                    if pfit_error is not None:
                        raise pfit_error
                    effect = est.estimate_weighted(
                        ds, scheme_from_name(method), estimand, pfit, args.level
                    )
            except _FAILURES as exc:
                any_failed = True
                point = getattr(exc, "point", float("nan"))
                rows.append(
                    {
                        "method": method.upper() if method != "matching" else "Matching",
                        "estimand": estimand.label,
                        "estimate": point,
                        "se": float("nan"),
                        "ci_low": float("nan"),
                        "ci_high": float("nan"),
                        "p_value": float("nan"),
                        "flag": f"failed: {exc}",
                    }
                )
                continue
            rows.append(
                {
                    "method": effect.method,
                    "estimand": effect.estimand.label,
                    "estimate": effect.point,
                    "se": effect.se,
                    "ci_low": effect.ci[0],
                    "ci_high": effect.ci[1],
                    "p_value": effect.p_value,
                    "flag": "",
                }
            )

    if args.format == "json":
        print(json.dumps({"level": args.level, "rows": rows}, indent=2))
    else:
        print("method\testimand\testimate\tse\tci_low\tci_high\tp_value\tflag")
        for row in rows:
            print(
                "\t".join(
                    [
                        row["method"],
                        row["estimand"],
                        _fmt(row["estimate"]),
                        _fmt(row["se"]),
                        _fmt(row["ci_low"]),
                        _fmt(row["ci_high"]),
                        _fmt(row["p_value"]),
                        row["flag"],
                    ]
                )
            )
    return 2 if any_failed else 0


def cmd_balance(args):
    ds = _load(args)
    modeled = _comma_list(args.propensity_covariates) or ds.covariate_names
    unknown = [c for c in modeled if c not in ds.covariate_names]
    if unknown:
        raise ValueError(f"unknown covariate(s): {', '.join(unknown)}")
    pfit = fit_logistic(ds, covariates=modeled)
    unadj, ipw, ow = balance_tables(ds, pfit)

    entries = []
    for i, name in enumerate(ds.covariate_names):
        entries.append(
            {
                "covariate": name,
                "mean_treated": unadj.rows[i].mean_treated,
                "mean_control": unadj.rows[i].mean_control,
                "asd_unadj": unadj.rows[i].asd,
                "asd_ipw": ipw.rows[i].asd,
                "asd_ow": ow.rows[i].asd,
                "flag": "" if name in modeled else "not in propensity model",
            }
        )
    if args.format == "json":
        print(json.dumps({"rows": entries}, indent=2))
    else:
        print(
            "covariate\tmean_treated\tmean_control\tasd_unadj\tasd_ipw\tasd_ow\tflag"
        )
        for e in entries:
            print(
                "\t".join(
                    [
                        e["covariate"],
                        _fmt(e["mean_treated"]),
                        _fmt(e["mean_control"]),
                        f"{e['asd_unadj']:.3f}",
                        f"{e['asd_ipw']:.3f}",
                        f"{e['asd_ow']:.3f}",
                        e["flag"],
                    ]
                )
            )
    return 0


def cmd_simulate(args):
    scenario = load_scenario(args.scenario)
    if args.replicates is not None:
        scenario = dataclasses.replace(scenario, replicates=args.replicates)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    methods = _comma_list(args.methods.lower())
    summary = run_monte_carlo(
        scenario, methods=methods, level=args.level, n_jobs=args.jobs
    )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.tsv").write_text(summary.to_tsv(), encoding="utf-8")
    (out_dir / "summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    with open(out_dir / "estimates.csv", "w", encoding="utf-8") as handle:
        handle.write("replicate,method,estimand,estimate,variance,ok\n")
        for (method, estimand), (points, variances, ok) in summary.raw.items():
            for i in range(summary.replicates):
                p = repr(float(points[i])) if ok[i] else ""
                v = repr(float(variances[i])) if ok[i] else ""
                handle.write(
                    f"{i},{method},{estimand.label},{p},{v},{int(ok[i])}\n"
                )
    print(f"wrote {out_dir / 'summary.tsv'}")
    print(f"wrote {out_dir / 'summary.json'}")
    print(f"wrote {out_dir / 'estimates.csv'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rctweights",
        description=(
            "Propensity score weighting for covariate adjustment in "
            "two-arm randomized trials"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="treatment effect estimates")
    _add_dataset_args(p_est)
    p_est.add_argument("--methods", default="unadj,ipw,lr,aipw,ow")
    p_est.add_argument("--estimands", default="rd")
    p_est.add_argument("--level", type=float, default=0.95)
    p_est.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p_est.set_defaults(func=cmd_estimate)

    p_bal = sub.add_parser("balance", help="covariate balance diagnostics")
    _add_dataset_args(p_bal)
    p_bal.add_argument(
        "--propensity-covariates",
        default="",
        help="covariates entering the propensity model (default: all)",
    )
    p_bal.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p_bal.set_defaults(func=cmd_balance)

    p_sim = sub.add_parser("simulate", help="Monte Carlo study")
    p_sim.add_argument("--scenario", required=True, help="scenario file (JSON or key = value)")
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--methods", default="unadj,ipw,lr,aipw,ow")
    p_sim.add_argument("--level", type=float, default=0.95)
    p_sim.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("RCTWEIGHTS_JOBS", "1")),
        help="worker processes for replicates (env RCTWEIGHTS_JOBS)",
    )
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except SystemExit:
        raise
    except (DatasetError, ModelFitError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
