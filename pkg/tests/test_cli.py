import json
import subprocess
import sys

import numpy as np
import pytest

from plradial.cli import (
    EXIT_DOMAIN,
    EXIT_EXPRESSION,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_SCHEMA,
    ProblemFileError,
    format_json,
    load_problem,
    main,
)

LINEAR = {
    "m": 1,
    "p": 2,
    "N": 3,
    "beta": 1.0,
    "coefficients": ["1"],
    "nonlinearities": ["u1"],
    "grid": {"r_max": 10.0, "points": 4001, "grading": "uniform"},
    "iteration": {"abs_tol": 1e-10},
}

REPORT_KEYS = {"version", "problem", "solve", "criteria", "criteria_scan", "residuals", "growth"}


def write_problem(tmp_path, doc, name="problem.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_report(out_dir):
    report = json.loads((out_dir / "report.json").read_text())
    assert set(report) <= REPORT_KEYS
    assert report["version"] == "0.1.0"
    return report


class TestLoadProblem:
    def test_minimal_file_gets_defaults(self, tmp_path):
        doc = {
            "m": 1,
            "p": 2,
            "N": 3,
            "coefficients": ["1"],
            "nonlinearities": ["u1"],
            "grid": {"r_max": 10.0, "points": 101},
        }
        loaded = load_problem(write_problem(tmp_path, doc))
        assert loaded.problem.beta == 1.0
        assert loaded.epsilon == 0.5
        assert loaded.config.max_iterations == 500
        assert loaded.config.abs_tol == 1e-10
        assert loaded.config.value_cap == 1e12
        assert loaded.grid.grading == "uniform"
        assert not loaded.warnings

    def test_default_beta_is_one_over_m(self, tmp_path):
        doc = {
            "m": 2,
            "p": 2,
            "N": 3,
            "coefficients": ["1", "1"],
            "nonlinearities": ["u1", "u2"],
            "grid": {"r_max": 5.0, "points": 65},
        }
        loaded = load_problem(write_problem(tmp_path, doc))
        assert loaded.problem.beta == 0.5

    def test_dimension_constraint_rejected(self, tmp_path):
        doc = dict(LINEAR, N=2)
        with pytest.raises(ProblemFileError) as exc:
            load_problem(write_problem(tmp_path, doc))
        assert "N" in str(exc.value)

    def test_origin_violation_is_a_warning_not_an_error(self, tmp_path):
        doc = dict(LINEAR, nonlinearities=["u1 - 1"])
        loaded = load_problem(write_problem(tmp_path, doc))
        assert any("origin" in w for w in loaded.warnings)

    def test_geometric_grading(self, tmp_path):
        doc = dict(LINEAR, grid={"r_max": 10.0, "points": 101, "grading": {"geometric": 1.05}})
        loaded = load_problem(write_problem(tmp_path, doc))
        assert loaded.grid.grading == "geometric"
        assert loaded.grid.ratio == 1.05

    def test_unknown_key_rejected(self, tmp_path):
        doc = dict(LINEAR, extra=1)
        with pytest.raises(ProblemFileError) as exc:
            load_problem(write_problem(tmp_path, doc))
        assert "extra" in str(exc.value)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ProblemFileError):
            load_problem(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ProblemFileError):
            load_problem(tmp_path / "absent.json")

    def test_crossing_envelopes_rejected(self, tmp_path):
        doc = dict(LINEAR, coefficients_lower=["2"])
        with pytest.raises(ProblemFileError) as exc:
            load_problem(write_problem(tmp_path, doc))
        assert "coefficients_lower" in str(exc.value)

    def test_schema_paths_in_errors(self, tmp_path):
        doc = dict(LINEAR, grid={"r_max": 10.0})
        with pytest.raises(ProblemFileError) as exc:
            load_problem(write_problem(tmp_path, doc))
        assert "grid.points" in str(exc.value)


class TestSolveCommand:
    def test_linear_oracle_csv(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out = tmp_path / "out"
        assert main(["solve", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        table = np.loadtxt(out / "profiles.csv", delimiter=",", skiprows=1)
        header = (out / "profiles.csv").read_text().splitlines()[0]
        assert header == "r,u1"
        r, u = table[:, 0], table[:, 1]
        exact = np.where(r > 0, np.sinh(np.maximum(r, 1e-300)) / np.maximum(r, 1e-300), 1.0)
        assert np.max(np.abs(u - exact) / exact) <= 1e-4
        report = read_report(out)
        assert report["solve"]["converged"] is True
        assert report["solve"]["monotone_in_k_violation"] is None
        assert report["residuals"]["sup_fixed_point_residual"] <= 1e-6

    def test_zero_coefficients_zero_column(self, tmp_path):
        doc = dict(LINEAR, coefficients=["0"], beta=0.25,
                   grid={"r_max": 5.0, "points": 65})
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["solve", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        table = np.loadtxt(out / "profiles.csv", delimiter=",", skiprows=1)
        assert np.all(table[:, 1] == 0.25)

    def test_bounded_nonlinearity_tail(self, tmp_path):
        # with beta=1 the forcing is exactly 1, so u = 1 + r^2/6
        doc = dict(LINEAR, nonlinearities=["min(u1, 1)"],
                   grid={"r_max": 40.0, "points": 2001})
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["solve", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        table = np.loadtxt(out / "profiles.csv", delimiter=",", skiprows=1)
        expected = 1.0 + 40.0 ** 2 / 6.0
        assert table[-1, 1] == pytest.approx(expected, rel=1e-8)

    def test_capped_solve_exits_4_but_writes_files(self, tmp_path):
        doc = dict(LINEAR, grid={"r_max": 40.0, "points": 2001})
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["solve", "--problem", str(problem), "--out", str(out)]) == EXIT_NOT_CONVERGED
        assert (out / "profiles.csv").exists()
        report = read_report(out)
        assert report["solve"]["capped"] is True
        assert report["solve"]["final_residual"] is None

    def test_domain_error_exits_5(self, tmp_path):
        doc = dict(LINEAR, coefficients=["log(r)"], grid={"r_max": 10.0, "points": 101})
        problem = write_problem(tmp_path, doc)
        code = main(["solve", "--problem", str(problem), "--out", str(tmp_path / "x")])
        assert code == EXIT_DOMAIN

    def test_schema_error_exits_2(self, tmp_path):
        problem = write_problem(tmp_path, dict(LINEAR, N=2))
        assert main(["solve", "--problem", str(problem), "--out", str(tmp_path)]) == EXIT_SCHEMA

    def test_expression_error_exits_3(self, tmp_path):
        problem = write_problem(tmp_path, dict(LINEAR, coefficients=["1+"]))
        assert main(["solve", "--problem", str(problem), "--out", str(tmp_path)]) == EXIT_EXPRESSION

    def test_overrides(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out = tmp_path / "out"
        code = main([
            "solve", "--problem", str(problem), "--out", str(out),
            "--grid-points", "101", "--r-max", "5.0",
        ])
        assert code == EXIT_OK
        table = np.loadtxt(out / "profiles.csv", delimiter=",", skiprows=1)
        assert table.shape[0] == 101
        assert table[-1, 0] == 5.0

    def test_max_iter_override_forces_exit_4(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out = tmp_path / "out"
        code = main([
            "solve", "--problem", str(problem), "--out", str(out), "--max-iter", "3",
        ])
        assert code == EXIT_NOT_CONVERGED
        report = read_report(out)
        assert report["solve"]["iterations_used"] == 3
        assert report["solve"]["capped"] is False

    def test_tol_override_loosens_stopping(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        tight, loose = tmp_path / "tight", tmp_path / "loose"
        assert main(["solve", "--problem", str(problem), "--out", str(tight)]) == EXIT_OK
        assert main([
            "solve", "--problem", str(problem), "--out", str(loose), "--tol", "1.0",
        ]) == EXIT_OK
        tight_iters = read_report(tight)["solve"]["iterations_used"]
        loose_iters = read_report(loose)["solve"]["iterations_used"]
        assert loose_iters < tight_iters

    def test_determinism_byte_identical(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--problem", str(problem), "--out", str(out1)]) == EXIT_OK
        assert main(["solve", "--problem", str(problem), "--out", str(out2)]) == EXIT_OK
        assert (out1 / "profiles.csv").read_bytes() == (out2 / "profiles.csv").read_bytes()
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


class TestPredictCommand:
    def test_bounded_prediction(self, tmp_path):
        doc = dict(LINEAR, coefficients=["(1+r)^(-4)"], nonlinearities=["u1^0.5"])
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["predict", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        report = read_report(out)
        assert report["criteria"]["prediction"] == "BoundedExists"

    def test_large_prediction(self, tmp_path):
        doc = dict(LINEAR, nonlinearities=["u1^0.5"])
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["predict", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        report = read_report(out)
        assert report["criteria"]["prediction"] == "AllSolutionsLarge"

    def test_degenerate_prediction(self, tmp_path):
        doc = dict(LINEAR, coefficients=["0"])
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["predict", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        report = read_report(out)
        assert report["criteria"]["prediction"] == "Inconclusive"
        assert report["criteria"]["degenerate_coefficients"] is True

    def test_epsilon_scan_blocks(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out = tmp_path / "out"
        code = main(["predict", "--problem", str(problem), "--out", str(out), "--epsilon-scan"])
        assert code == EXIT_OK
        report = read_report(out)
        scanned = [block["epsilon"] for block in report["criteria_scan"]]
        assert scanned == [0.01, 0.1, 0.5, 1.0]

    def test_warning_on_stderr(self, tmp_path, capsys):
        doc = dict(LINEAR, nonlinearities=["u1 - 1"], grid={"r_max": 10.0, "points": 101})
        problem = write_problem(tmp_path, doc)
        assert main(["predict", "--problem", str(problem), "--out", str(tmp_path / "o")]) == EXIT_OK
        captured = capsys.readouterr()
        assert "warning:" in captured.err
        assert "origin" in captured.err


class TestSweepCommand:
    def test_growing_sweep(self, tmp_path):
        doc = dict(LINEAR, nonlinearities=["u1^0.5"])
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        code = main([
            "sweep", "--problem", str(problem), "--out", str(out),
            "--base-r", "5", "--doublings", "4", "--grid-points", "501",
        ])
        assert code == EXIT_OK
        report = read_report(out)
        growth = report["growth"]
        assert growth["classification"] == "Growing"
        assert 3.5 <= growth["exponent_estimate"] <= 4.5
        assert growth["domain_radii"] == [5.0, 10.0, 20.0, 40.0, 80.0]

    def test_saturating_sweep(self, tmp_path):
        doc = dict(LINEAR, coefficients=["(1+r)^(-4)"], nonlinearities=["u1^0.5"])
        problem = write_problem(tmp_path, doc)
        out = tmp_path / "out"
        code = main([
            "sweep", "--problem", str(problem), "--out", str(out),
            "--base-r", "40", "--doublings", "3", "--grid-points", "501",
        ])
        assert code == EXIT_OK
        assert read_report(out)["growth"]["classification"] == "Saturating"

    def test_capped_sweep_serializes_inf_exponent(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out = tmp_path / "out"
        code = main([
            "sweep", "--problem", str(problem), "--out", str(out),
            "--base-r", "5", "--doublings", "4", "--grid-points", "501",
        ])
        assert code == EXIT_OK
        growth = read_report(out)["growth"]
        assert growth["classification"] == "Growing"
        assert growth["exponent_estimate"] == "inf"


class TestVerifyCommand:
    def test_round_trip_residual(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        out = tmp_path / "out"
        assert main(["solve", "--problem", str(problem), "--out", str(out)]) == EXIT_OK
        vout = tmp_path / "verify"
        code = main([
            "verify", "--problem", str(problem), "--out", str(vout),
            "--profiles", str(out / "profiles.csv"),
        ])
        assert code == EXIT_OK
        report = read_report(vout)
        assert report["residuals"]["sup_fixed_point_residual"] <= 1e-6

    def test_column_mismatch_rejected(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        csv = tmp_path / "bad.csv"
        csv.write_text("r,u1,u2\n0,1,1\n1,1,1\n")
        code = main([
            "verify", "--problem", str(problem), "--out", str(tmp_path / "v"),
            "--profiles", str(csv),
        ])
        assert code == EXIT_SCHEMA

    def test_malformed_grid_rejected(self, tmp_path):
        problem = write_problem(tmp_path, LINEAR)
        csv = tmp_path / "bad.csv"
        rows = ["r,u1"] + [f"{0.5 + 0.1 * k},1.0" for k in range(20)]
        csv.write_text("\n".join(rows) + "\n")
        code = main([
            "verify", "--problem", str(problem), "--out", str(tmp_path / "v"),
            "--profiles", str(csv),
        ])
        assert code == EXIT_SCHEMA


class TestFormatJson:
    def test_seventeen_significant_digits(self):
        text = format_json({"x": 0.1})
        assert "0.10000000000000001" in text

    def test_non_finite_floats_become_strings(self):
        text = format_json({"a": float("inf"), "b": float("-inf"), "c": float("nan")})
        assert '"inf"' in text and '"-inf"' in text and '"nan"' in text
        json.loads(text)

    def test_nested_structures_parse_back(self):
        doc = {"a": [1, 2.5, {"b": None, "c": True}], "d": "text"}
        assert json.loads(format_json(doc)) == doc


def test_console_entry_point_runs(tmp_path):
    problem = tmp_path / "p.json"
    problem.write_text(json.dumps(dict(LINEAR, grid={"r_max": 5.0, "points": 101})))
    result = subprocess.run(
        [sys.executable, "-m", "plradial", "solve", "--problem", str(problem),
         "--out", str(tmp_path / "out")],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert "converged" in result.stdout
