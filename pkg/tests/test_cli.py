import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rctweights.cli import main

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "rctweights" / "data"
SYNTHETIC = DATA_DIR / "synthetic_trial.csv"
COVARIATES = "male,race_white,site_1,site_2,age,bmi,sbp_baseline,ahi_baseline,ess_baseline"


def write_toy(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("y,z,x1\n1,1,0.5\n3,1,-0.5\n2,0,1.5\n4,0,0.0\n", encoding="utf-8")
    return path


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestEstimate:
    def test_unadjusted_toy(self, tmp_path, capsys):
        path = write_toy(tmp_path)
        code, out, _ = run_cli(
            ["estimate", "--data", str(path), "--outcome", "y", "--treatment", "z",
             "--methods", "unadj"],
            capsys,
        )
        assert code == 0
        row = out.splitlines()[1].split("\t")
        assert row[0] == "UNADJ"
        assert float(row[2]) == -1.0

    def test_ratio_estimand_requires_binary(self, tmp_path, capsys):
        path = write_toy(tmp_path)
        code, _, err = run_cli(
            ["estimate", "--data", str(path), "--outcome", "y", "--treatment", "z",
             "--methods", "unadj", "--estimands", "logrr"],
            capsys,
        )
        assert code == 1
        assert "estimand requires binary outcome" in err

    def test_json_matches_tsv(self, capsys):
        args = ["estimate", "--data", str(SYNTHETIC), "--outcome", "sbp_6m",
                "--treatment", "cpap", "--covariates", COVARIATES,
                "--methods", "unadj,ow,lr"]
        code, tsv_out, _ = run_cli(args, capsys)
        assert code == 0
        code, json_out, _ = run_cli(args + ["--format", "json"], capsys)
        assert code == 0
        parsed = json.loads(json_out)
        tsv_rows = [line.split("\t") for line in tsv_out.splitlines()[1:]]
        assert len(parsed["rows"]) == len(tsv_rows)
        for jrow, trow in zip(parsed["rows"], tsv_rows):
            assert jrow["method"] == trow[0]
            # TSV prints 6 significant digits of the full-precision values
            assert float(trow[2]) == pytest.approx(jrow["estimate"], rel=1e-5)
            assert float(trow[3]) == pytest.approx(jrow["se"], rel=1e-5)

    def test_partial_failure_exit_code(self, tmp_path, capsys):
        # no events in the control arm: ratio estimands are boundary-flagged
        rows = ["y,z,x1"]
        rng = np.random.default_rng(0)
        for i in range(30):
            z = i % 2
            y = int(z == 1 and i < 8)
            rows.append(f"{y},{z},{rng.normal():.4f}")
        path = tmp_path / "rare.csv"
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        code, out, _ = run_cli(
            ["estimate", "--data", str(path), "--outcome", "y", "--treatment", "z",
             "--covariates", "x1", "--methods", "unadj", "--estimands", "rd,logrr",
             "--outcome-kind", "binary"],
            capsys,
        )
        assert code == 2
        lines = out.splitlines()
        assert any("failed" in line for line in lines)
        assert any(line.split("\t")[1] == "RD" and "failed" not in line for line in lines[1:])

    def test_unknown_method_is_usage_error(self, tmp_path, capsys):
        path = write_toy(tmp_path)
        code, _, err = run_cli(
            ["estimate", "--data", str(path), "--outcome", "y",
             "--treatment", "z", "--methods", "bogus"],
            capsys,
        )
        assert code == 1
        assert "unknown method" in err

    def test_tsv_has_fixed_column_count(self, capsys):
        code, out, _ = run_cli(
            ["estimate", "--data", str(SYNTHETIC), "--outcome", "high_sbp_6m",
             "--treatment", "cpap", "--covariates", COVARIATES,
             "--methods", "unadj,ipw,lr,aipw,ow", "--estimands", "rd,logrr,logor",
             "--outcome-kind", "binary"],
            capsys,
        )
        assert code == 0
        widths = {len(line.split("\t")) for line in out.splitlines()}
        assert widths == {8}


class TestBalance:
    def test_overlap_column_prints_zero(self, capsys):
        code, out, _ = run_cli(
            ["balance", "--data", str(SYNTHETIC), "--outcome", "sbp_6m",
             "--treatment", "cpap", "--covariates", COVARIATES],
            capsys,
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0].split("\t")[:3] == ["covariate", "mean_treated", "mean_control"]
        for line in lines[1:]:
            assert line.split("\t")[5] == "0.000"

    def test_excluded_covariate_flagged(self, capsys):
        code, out, _ = run_cli(
            ["balance", "--data", str(SYNTHETIC), "--outcome", "sbp_6m",
             "--treatment", "cpap", "--covariates", COVARIATES,
             "--propensity-covariates", "age,bmi"],
            capsys,
        )
        assert code == 0
        flagged = [l for l in out.splitlines()[1:] if "not in propensity model" in l]
        assert len(flagged) == 7

    def test_unit_weight_column_matches_unweighted(self, capsys):
        code, out, _ = run_cli(
            ["balance", "--data", str(SYNTHETIC), "--outcome", "sbp_6m",
             "--treatment", "cpap", "--covariates", COVARIATES, "--format", "json"],
            capsys,
        )
        parsed = json.loads(out)
        from rctweights import ColumnSchema, asd, load_csv

        ds = load_csv(SYNTHETIC, ColumnSchema("sbp_6m", "cpap", COVARIATES.split(",")))
        table = asd(ds, np.ones(ds.n))
        for row, ref in zip(parsed["rows"], table.rows):
            assert row["asd_unadj"] == pytest.approx(ref.asd, rel=1e-9)


class TestSimulate:
    def scenario_file(self, tmp_path, replicates=10):
        path = tmp_path / "scenario.txt"
        path.write_text(
            f"n = 30\nr = 0.5\ndgp = model1\nreplicates = {replicates}\nseed = 3\n",
            encoding="utf-8",
        )
        return path

    def test_writes_outputs(self, tmp_path, capsys):
        scenario = self.scenario_file(tmp_path)
        out_dir = tmp_path / "out"
        code, _, _ = run_cli(
            ["simulate", "--scenario", str(scenario), "--out", str(out_dir),
             "--methods", "unadj,ow"],
            capsys,
        )
        assert code == 0
        tsv = (out_dir / "summary.tsv").read_text(encoding="utf-8")
        assert tsv.startswith("method\testimand")
        summary = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
        assert summary["replicates"] == 10
        estimates = (out_dir / "estimates.csv").read_text(encoding="utf-8").splitlines()
        assert estimates[0] == "replicate,method,estimand,estimate,variance,ok"
        assert len(estimates) == 1 + 2 * 10

    def test_same_seed_byte_identical(self, tmp_path, capsys):
        scenario = self.scenario_file(tmp_path)
        outs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            run_cli(
                ["simulate", "--scenario", str(scenario), "--out", str(out_dir),
                 "--methods", "unadj,ow", "--seed", "77"],
                capsys,
            )
            outs.append(
                tuple(
                    (out_dir / f).read_bytes()
                    for f in ("summary.tsv", "summary.json", "estimates.csv")
                )
            )
        assert outs[0] == outs[1]

    def test_single_replicate_flags_undefined_ratios(self, tmp_path, capsys):
        scenario = self.scenario_file(tmp_path, replicates=1)
        out_dir = tmp_path / "one"
        code, _, _ = run_cli(
            ["simulate", "--scenario", str(scenario), "--out", str(out_dir),
             "--methods", "unadj"],
            capsys,
        )
        assert code == 0
        tsv = (out_dir / "summary.tsv").read_text(encoding="utf-8")
        assert "nan" in tsv

    def test_bad_scenario_exits_one(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("nonsense without equals\n", encoding="utf-8")
        code, _, err = run_cli(
            ["simulate", "--scenario", str(path), "--out", str(tmp_path / "x")],
            capsys,
        )
        assert code == 1
        assert "error" in err


def test_console_entry_point_runs():
    result = subprocess.run(
        [sys.executable, "-m", "rctweights.cli", "estimate", "--data", str(SYNTHETIC),
         "--outcome", "ess_6m", "--treatment", "cpap", "--covariates", COVARIATES,
         "--methods", "unadj,ow"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert result.returncode == 0
    assert result.stdout.startswith("method\testimand")
