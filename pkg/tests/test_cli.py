import csv
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from horseshoe.cli import cli, main
from horseshoe.experiments import SeparableConfig, separable_data

FAST = ["--chains", "2", "--warmup", "300", "--samples", "300"]
# one predictor, so no p0 guess below D exists; regularized horseshoe (default slab)
ONE_PREDICTOR = ["--tau-prior", "half_cauchy", "--tau-scale", "1"]


def invoke(*args, env=None):
    return CliRunner().invoke(cli, [str(a) for a in args], env=env, catch_exceptions=False)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture(scope="module")
def linear_csv(tmp_path_factory):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(60)
    y = 2 * x + 0.1 * rng.standard_normal(60)
    return write_csv(tmp_path_factory.mktemp("data") / "linear.csv", ["x", "y"],
                     [[repr(float(a)), repr(float(b))] for a, b in zip(x, y)])


@pytest.fixture(scope="module")
def linear_fit(linear_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    res = invoke("fit", "--data", linear_csv, *ONE_PREDICTOR, "--seed", 3, "--out", out, *FAST)
    assert res.exit_code == 0, res.output
    return out


class TestElicit:
    def test_reference_tau(self, tmp_path):
        res = invoke("elicit", "--p0", 5, "--D", 1000, "--n", 200, "--sigma", 1,
                     "--draws", 100, "--out", tmp_path)
        assert res.exit_code == 0
        line = next(ln for ln in res.output.splitlines() if ln.startswith("tau0 = "))
        assert float(line.split("=")[1]) == pytest.approx(3.6e-4, rel=0.02)
        assert {p.name for p in tmp_path.iterdir()} == {
            "meff_draws.csv", "meff_summary.json", "manifest.json"}

    def test_fixed_tau_mean(self, tmp_path):
        tau0 = 5 / 5 / 10  # p0 / (D - p0) / sqrt(n) for p0 = 5, D = 10, n = 100
        res = invoke("elicit", "--tau-prior", "fixed", "--tau-scale", tau0, "--D", 10,
                     "--n", 100, "--draws", 20000, "--seed", 1, "--out", tmp_path)
        assert res.exit_code == 0
        summary = json.loads((tmp_path / "meff_summary.json").read_text())
        assert summary["mean"] == pytest.approx(5.0, abs=0.05)
        assert summary["run_config"]["seed"] == 1

    def test_missing_dimension(self, tmp_path):
        assert invoke("elicit", "--p0", 5, "--out", tmp_path).exit_code == 2

    def test_guess_not_below_dimension(self, tmp_path):
        res = invoke("elicit", "--p0", 10, "--D", 10, "--out", tmp_path)
        assert res.exit_code == 2
        assert "below dimensionality" in res.output

    def test_malformed_flag(self, tmp_path):
        assert invoke("elicit", "--D", "ten", "--p0", 1, "--out", tmp_path).exit_code == 2

    def test_no_tau_prior(self, tmp_path):
        assert invoke("elicit", "--D", 10, "--out", tmp_path).exit_code == 2

    def test_config_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        invoke("elicit", "--tau-prior", "half_cauchy", "--tau-scale", 0.1, "--D", 20,
               "--n", 50, "--draws", 500, "--seed", 4, "--out", a)
        res = invoke("elicit", "--config", a / "manifest.json", "--out", b)
        assert res.exit_code == 0
        for name in ("meff_draws.csv", "meff_summary.json"):
            assert (a / name).read_bytes().replace(str(a).encode(), b"") == \
                (b / name).read_bytes().replace(str(b).encode(), b"")

    def test_env_output_dir(self, tmp_path):
        res = invoke("elicit", "--p0", 1, "--D", 5, "--draws", 10,
                     env={"HORSESHOE_OUTPUT_DIR": str(tmp_path / "env")})
        assert res.exit_code == 0
        assert (tmp_path / "env" / "meff_draws.csv").exists()

    @pytest.mark.skipif(os.geteuid() == 0, reason="permissions are not enforced for root")
    def test_unwritable_output(self, tmp_path):
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(0o500)
        assert invoke("elicit", "--p0", 1, "--D", 5, "--out", locked / "x").exit_code == 1

    def test_output_is_a_file(self, tmp_path):
        f = tmp_path / "file"
        f.write_text("")
        assert invoke("elicit", "--p0", 1, "--D", 5, "--out", f / "sub").exit_code == 1


class TestFit:
    def test_recovers_slope(self, linear_fit):
        summary = json.loads((linear_fit / "summary.json").read_text())
        assert 1.8 <= summary["coefficients"]["x"]["mean"] <= 2.2
        st = summary["standardization"]
        assert st["columns"] == ["x"] and st["standardized"]
        assert len(st["means"]) == len(st["sds"]) == 1

    def test_draws_table(self, linear_fit):
        with open(linear_fit / "draws.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["chain", "draw", "intercept", "x", "std:x", "tau", "c", "sigma",
                           "meff", "divergent"]
        assert len(rows) == 1 + 2 * 300
        meff = np.array([float(r[8]) for r in rows[1:]])
        assert np.all((meff >= 0) & (meff <= 1))

    def test_diagnostics(self, linear_fit):
        diag = json.loads((linear_fit / "diagnostics.json").read_text())
        assert 0 <= diag["divergence_fraction"] <= 1
        assert "beta" in diag["rhat"] and "beta" in diag["ess_bulk"]

    def test_byte_identical_rerun(self, linear_csv, linear_fit, tmp_path):
        res = invoke("fit", "--data", linear_csv, *ONE_PREDICTOR, "--seed", 3, "--out", tmp_path, *FAST)
        assert res.exit_code == 0
        assert (tmp_path / "draws.csv").read_bytes() == (linear_fit / "draws.csv").read_bytes()

    def test_predictive_metrics(self, linear_csv, tmp_path):
        res = invoke("fit", "--data", linear_csv, "--test", linear_csv, *ONE_PREDICTOR,
                     "--out", tmp_path, "--chains", 1, "--warmup", 100, "--samples", 100)
        assert res.exit_code == 0
        pred = json.loads((tmp_path / "summary.json").read_text())["predictive"]
        assert pred["mlpd"] > 0

    def test_non_numeric_cell(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["x", "y"], [["1", "2"], ["abc", "3"]])
        res = invoke("fit", "--data", bad, "--p0", 1, "--out", tmp_path)
        assert res.exit_code == 2
        assert "line 3" in res.output and "'x'" in res.output

    def test_bernoulli_target_values(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["x", "y"], [["1", "0"], ["2", "2"]])
        res = invoke("fit", "--data", bad, "--family", "bernoulli", "--p0", 1,
                     "--out", tmp_path)
        assert res.exit_code == 2

    def test_missing_target_column(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["a", "b"], [["1", "0"]])
        assert invoke("fit", "--data", bad, "--p0", 1, "--out", tmp_path).exit_code == 2

    def test_missing_file(self, tmp_path):
        res = invoke("fit", "--data", tmp_path / "nope.csv", "--p0", 1, "--out", tmp_path)
        assert res.exit_code == 2

    def test_invalid_sampler_flag(self, linear_csv, tmp_path):
        res = invoke("fit", "--data", linear_csv, *ONE_PREDICTOR, "--chains", 0, "--out", tmp_path)
        assert res.exit_code == 2

    def test_separable_bernoulli_few_divergences(self, tmp_path):
        d = separable_data(SeparableConfig(), seed=0)
        header = [f"x{j}" for j in range(d.D)] + ["y"]
        rows = [[repr(float(v)) for v in row] + [repr(float(t))] for row, t in zip(d.X, d.y)]
        data = write_csv(tmp_path / "sep.csv", header, rows)
        res = invoke("fit", "--data", data, "--family", "bernoulli", "--p0", 2,
                     "--tau-prior", "half_t", "--tau-dof", 3, "--seed", 1,
                     "--chains", 2, "--warmup", 500, "--samples", 500, "--out", tmp_path)
        assert res.exit_code == 0
        diag = json.loads((tmp_path / "diagnostics.json").read_text())
        assert diag["divergence_fraction"] < 0.01


class TestExperiment:
    def test_toy_table(self, tmp_path):
        res = invoke("experiment", "toy", "--A", 6, "--reps", 5, "--chains", 1,
                     "--warmup", 100, "--samples", 100, "--out", tmp_path)
        assert res.exit_code == 0
        with open(tmp_path / "toy_mse.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["A", "tau0_mse", "tau0_se", "half_cauchy_tau0_mse",
                           "half_cauchy_tau0_se", "half_cauchy_1_mse", "half_cauchy_1_se"]
        assert len(rows) == 2 and float(rows[1][0]) == 6.0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["params"]["reps"] == 5 and manifest["seed"] == 0
        assert manifest["experiment_config"]["replications"] == 5

    def test_unknown_experiment(self, tmp_path):
        assert invoke("experiment", "microarray", "--out", tmp_path).exit_code == 2

    def test_bad_signal_list(self, tmp_path):
        assert invoke("experiment", "toy", "--A", "1,x", "--out", tmp_path).exit_code == 2
        assert invoke("experiment", "toy", "--A", "-1", "--out", tmp_path).exit_code == 2


def test_main_entry_point(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["elicit", "--p0", "1", "--D", "5", "--draws", "10", "--out", str(tmp_path)])
    assert exc.value.code == 0
