"""End-to-end tests of the command-line interface, run in process."""

import csv
import json

import numpy as np
import pytest
from scipy import stats

from contrastfx.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from contrastfx.estimate import estimate_cov_weighted
from contrastfx.model import Dataset, VFunction, VKind
from contrastfx.nuisance import FoldPlan, fit_nuisances


def run(*argv):
    return main(list(argv))


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSimulate:
    def test_writes_requested_rows(self, tmp_path, capsys):
        out = tmp_path / "data.csv"
        code = run("simulate", "--scenario", "2,1", "--n", "50", "--seed", "7", "--out", str(out))
        assert code == EXIT_OK
        rows = read_rows(out)
        assert rows[0] == ["y", "x", "z1"]
        assert len(rows) == 51
        assert f"wrote 50 rows to {out}" in capsys.readouterr().out

    def test_byte_identical_across_runs(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run("simulate", "--scenario", "1,2", "--n", "40", "--seed", "3", "--out", str(out)) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_missing_flags_are_usage_errors(self, tmp_path, capsys):
        assert run("simulate", "--out", str(tmp_path / "x.csv")) == EXIT_USAGE
        assert "usage error" in capsys.readouterr().err
        assert run("simulate", "--scenario", "2,1") == EXIT_USAGE
        assert run("simulate", "--scenario", "4,1", "--out", str(tmp_path / "x.csv")) == EXIT_USAGE
        assert run("simulate", "--scenario", "2", "--out", str(tmp_path / "x.csv")) == EXIT_USAGE
        assert run("simulate", "--scenario", "2,1", "--n", "0", "--out", str(tmp_path / "x.csv")) == EXIT_USAGE


class TestOracle:
    def test_single_cell_to_csv(self, tmp_path, capsys):
        out = tmp_path / "oracle.csv"
        code = run(
            "oracle", "--scenario", "2,1", "--estimand", "covw:identity",
            "--draws", "10000", "--seed", "5", "--out", str(out),
        )
        assert code == EXIT_OK
        rows = read_rows(out)
        assert rows[0] == ["outcome", "exposure", "estimand", "value", "mc_se", "draws"]
        assert len(rows) == 2
        assert rows[1][:3] == ["2", "1", "covw:identity"]
        value, mc_se = float(rows[1][3]), float(rows[1][4])
        assert rows[1][5] == "10000"
        # long-run value for this cell is 0.85024
        assert abs(value - 0.85024) <= 4.0 * mc_se + 1e-3
        term = capsys.readouterr().out
        assert "(Y2,X1) covw:identity:" in term

    def test_threads_do_not_change_values(self, tmp_path):
        a, b = tmp_path / "t1.csv", tmp_path / "t2.csv"
        base = ["oracle", "--scenario", "1,2", "--estimand", "unit:identity", "--draws", "10000"]
        assert run(*base, "--threads", "1", "--out", str(a)) == EXIT_OK
        assert run(*base, "--threads", "3", "--out", str(b)) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_single_derivative_cell_near_reference(self, capsys):
        code = run("oracle", "--scenario", "1,1", "--estimand", "ade", "--draws", "200000")
        assert code == EXIT_OK
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("(Y1,X1)")]
        assert len(lines) == 1
        value = float(lines[0].split()[2])
        assert value == pytest.approx(0.14, abs=0.015)

    def test_small_draw_count_warns_then_proceeds(self, capsys):
        code = run("oracle", "--scenario", "1,1", "--estimand", "ade", "--draws", "100")
        assert code == EXIT_OK
        captured = capsys.readouterr()
        assert "below the smoke-test floor" in captured.err
        assert "(Y1,X1) ade:" in captured.out

    def test_estimand_list_expands_and_dedupes(self, capsys):
        code = run(
            "oracle", "--scenario", "1,1", "--estimand", "ade,unit,ade",
            "--draws", "10000", "--x0", "2.5",
        )
        assert code == EXIT_OK
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln]
        labels = [ln.split()[1].rstrip(":") for ln in lines]
        assert labels == ["ade", "unit:identity", "unit:reciprocal", "unit:threshold@2.5"]

    def test_default_scenario_set_is_all_six(self, capsys):
        code = run("oracle", "--estimand", "ade", "--draws", "10000")
        assert code == EXIT_OK
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("(Y")]
        assert len(lines) == 6

    def test_unknown_estimand_token(self, capsys):
        assert run("oracle", "--scenario", "1,1", "--estimand", "blah") == EXIT_USAGE
        assert "unknown estimand token" in capsys.readouterr().err


class TestTransform:
    def test_gamma_image_matches_shifted_shape(self, tmp_path):
        out = tmp_path / "gamma.csv"
        assert run("transform", "--family", "gamma", "--params", "2.5,1", "--out", str(out)) == EXIT_OK
        rows = read_rows(out)
        assert rows[0] == ["kind", "x", "true_pdf", "intervention_pdf"]
        grid_rows = [r for r in rows[1:] if r[0] == "grid"]
        x = np.array([float(r[1]) for r in grid_rows])
        truth = np.array([float(r[2]) for r in grid_rows])
        image = np.array([float(r[3]) for r in grid_rows])
        np.testing.assert_allclose(truth, stats.gamma.pdf(x, 2.5), atol=1e-12)
        # the intervention image of a gamma bumps the shape by one
        np.testing.assert_allclose(image, stats.gamma.pdf(x, 3.5), atol=1e-6)
        median_rows = [r for r in rows[1:] if r[0] == "median"]
        assert len(median_rows) == 1
        assert float(median_rows[0][1]) == pytest.approx(stats.gamma.ppf(0.5, 2.5), abs=1e-10)

    def test_normal_maps_to_itself(self, tmp_path, capsys):
        out = tmp_path / "norm.csv"
        assert run("transform", "--family", "normal", "--params", "0.5,2", "--out", str(out)) == EXIT_OK
        rows = [r for r in read_rows(out)[1:] if r[0] == "grid"]
        x = np.array([float(r[1]) for r in rows])
        truth = np.array([float(r[2]) for r in rows])
        image = np.array([float(r[3]) for r in rows])
        np.testing.assert_allclose(truth, stats.norm.pdf(x, 0.5, np.sqrt(2.0)), atol=1e-12)
        # a normal maps to itself, so the two pdf columns coincide
        np.testing.assert_allclose(image, truth, atol=1e-12)
        assert "true median 0.5" in capsys.readouterr().out

    def test_unsupported_parameter_range_is_a_data_error(self, capsys):
        assert run("transform", "--family", "betaprime", "--params", "1,2") == EXIT_DATA
        assert "data error" in capsys.readouterr().err

    def test_bad_family_and_params(self, capsys):
        assert run("transform", "--family", "cauchy", "--params", "0,1") == EXIT_USAGE
        assert run("transform", "--family", "gamma", "--params", "2.5") == EXIT_USAGE
        assert run("transform", "--family", "gamma", "--params", "a,b") == EXIT_USAGE
        assert run("transform", "--params", "1,2") == EXIT_USAGE


@pytest.fixture()
def scenario_csv(tmp_path):
    path = tmp_path / "bench.csv"
    assert run("simulate", "--scenario", "2,1", "--n", "400", "--seed", "1", "--out", str(path)) == EXIT_OK
    return path


class TestEstimate:
    def test_json_document(self, scenario_csv, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = run(
            "estimate", "--data", str(scenario_csv), "--seed", "2",
            "--ci-level", "0.9", "--out", str(out),
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["schema_version"] == 1
        assert doc["n"] == 400
        labels = [r["estimand"]["label"] for r in doc["reports"]]
        assert labels == ["covw:identity", "unit:identity"]
        for rep in doc["reports"]:
            assert rep["level"] == 0.9
            assert rep["ci"][0] < rep["point"] < rep["ci"][1]
            assert rep["std_error"] > 0.0
            assert rep["diagnostics"]["folds"] == 5
            assert rep["diagnostics"]["learner"] == "poly_ridge(degree=2)"
            assert "influence_values" not in rep
        term = capsys.readouterr().out
        assert "covw:identity:" in term and "unit:identity:" in term
        assert "90% ci" in term

    def test_single_estimand_and_learner_choice(self, scenario_csv, tmp_path):
        out = tmp_path / "knn.json"
        code = run(
            "estimate", "--data", str(scenario_csv), "--estimand", "covw",
            "--learner", "k_nearest:10", "--out", str(out),
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert len(doc["reports"]) == 1
        assert doc["reports"][0]["diagnostics"]["learner"] == "k_nearest(k=10)"

    def test_benchmark_point_near_reference(self, tmp_path):
        data_path = tmp_path / "bench2000.csv"
        assert run("simulate", "--scenario", "2,1", "--n", "2000", "--seed", "2", "--out", str(data_path)) == EXIT_OK
        out = tmp_path / "bench2000.json"
        code = run("estimate", "--data", str(data_path), "--estimand", "covw", "--out", str(out))
        assert code == EXIT_OK
        rep = json.loads(out.read_text())["reports"][0]
        # reference value for this scenario and weighting, rounded: 0.85
        assert abs(rep["point"] - 0.85) <= 3.0 * rep["std_error"] + 0.015

    def test_binary_exposure_matches_recoded_augmented_estimator(self, tmp_path):
        # with a binary exposure the unit-weight terms are exactly augmented
        # two-arm contributions: AIPW with weights (1 - pi-hat)/beta-hat and
        # pi-hat/beta-hat, which reduce to 1/pi-hat and 1/(1 - pi-hat) when
        # beta-hat is pi-hat (1 - pi-hat); recode that from the same fits
        rng = np.random.default_rng(99)
        n = 500
        z = rng.normal(size=n)
        x = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-0.5 * z))).astype(float)
        y = 0.6 * x + np.sin(z) + rng.normal(size=n)
        path = tmp_path / "binary.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["y", "x", "z1"])
            for i in range(n):
                writer.writerow([repr(float(y[i])), repr(float(x[i])), repr(float(z[i]))])
        out = tmp_path / "binary.json"
        code = run("estimate", "--data", str(path), "--estimand", "unit", "--seed", "4", "--out", str(out))
        assert code == EXIT_OK
        rep = json.loads(out.read_text())["reports"][0]

        data = Dataset(y=y, x=x, z=z)
        plan = FoldPlan.from_seed(n, 5, seed=4)
        fits = fit_nuisances(data, VFunction(VKind.IDENTITY), plan, need_lambda=True)
        oof = fits.out_of_fold(data)
        m1 = oof["m"] + (1.0 - oof["pi"]) * oof["lam"]
        m0 = oof["m"] - oof["pi"] * oof["lam"]
        aipw = (
            oof["lam"]
            + x * (1.0 - oof["pi"]) / oof["beta"] * (y - m1)
            - (1.0 - x) * oof["pi"] / oof["beta"] * (y - m0)
        )
        assert rep["point"] == pytest.approx(float(np.mean(aipw)), abs=1e-12)

        covw = estimate_cov_weighted(data, VFunction(VKind.IDENTITY), fits)
        rx = x - oof["pi"]
        overlap = float(np.mean(rx * (y - oof["m"]))) / float(np.mean(rx * rx))
        assert covw.point == pytest.approx(overlap, abs=1e-12)

    def test_config_file_defaults_lose_to_flags(self, scenario_csv, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"data": str(scenario_csv), "folds": 4, "ci_level": 0.8}))
        out = tmp_path / "cfg_report.json"
        code = run("estimate", "--config", str(cfg), "--ci-level", "0.99", "--out", str(out))
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["reports"][0]["diagnostics"]["folds"] == 4  # from config
        assert doc["reports"][0]["level"] == 0.99  # flag wins

    def test_config_file_validation(self, scenario_csv, tmp_path, capsys):
        bad_key = tmp_path / "bad.json"
        bad_key.write_text(json.dumps({"nope": 1}))
        assert run("estimate", "--data", str(scenario_csv), "--config", str(bad_key)) == EXIT_USAGE
        assert "unknown config key" in capsys.readouterr().err
        not_obj = tmp_path / "arr.json"
        not_obj.write_text("[1, 2]")
        assert run("estimate", "--data", str(scenario_csv), "--config", str(not_obj)) == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--config", str(tmp_path / "missing.json")) == EXIT_USAGE
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        assert run("estimate", "--data", str(scenario_csv), "--config", str(broken)) == EXIT_USAGE

    def test_reciprocal_with_zero_exposure_is_a_data_error(self, tmp_path, capsys):
        path = tmp_path / "zeros.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["y", "x", "z1"])
            for i in range(40):
                writer.writerow([repr(0.1 * i), repr(0.0 if i == 3 else 1.0 + i), repr(0.01 * i)])
        code = run("estimate", "--data", str(path), "--v", "reciprocal")
        assert code == EXIT_DATA
        message = capsys.readouterr().err
        assert "reciprocal v undefined" in message
        assert "rows 3" in message

    def test_constant_exposure_is_a_numerical_error(self, tmp_path, capsys):
        path = tmp_path / "const.csv"
        rng = np.random.default_rng(0)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["y", "x", "z1"])
            for i in range(40):
                writer.writerow([repr(float(rng.normal())), "1.0", repr(float(rng.normal()))])
        code = run("estimate", "--data", str(path), "--estimand", "unit")
        assert code == EXIT_NUMERIC
        assert "numerical error" in capsys.readouterr().err

    def test_option_validation(self, scenario_csv, capsys):
        assert run("estimate", "--data", str(scenario_csv), "--estimand", "ade") == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--v", "cubic") == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--folds", "1") == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--ci-level", "1.5") == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--learner", "poly_ridge") == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--learner", "k_nearest:0") == EXIT_USAGE
        assert run("estimate", "--data", str(scenario_csv), "--learner", "forest:5") == EXIT_USAGE
        assert run("estimate") == EXIT_USAGE
        capsys.readouterr()

    def test_missing_data_file_is_io_error(self, tmp_path, capsys):
        assert run("estimate", "--data", str(tmp_path / "nope.csv")) == EXIT_DATA
        assert "i/o error" in capsys.readouterr().err

    def test_malformed_csv_is_a_data_error(self, tmp_path, capsys):
        path = tmp_path / "badheader.csv"
        path.write_text("a,b,c\n1,2,3\n")
        assert run("estimate", "--data", str(path)) == EXIT_DATA
        assert "expected header" in capsys.readouterr().err


class TestParser:
    def test_unknown_subcommand_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_no_subcommand_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_unknown_flag_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--bogus", "1"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_help_mentions_every_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for name in ("simulate", "oracle", "transform", "estimate"):
            assert name in text
