"""CLI subcommands, CSV ingestion, exit codes, and artifact determinism."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from driftwatch import cli
from driftwatch import critvals as cv
from driftwatch.errors import NonUniformGrid, ParseError
from driftwatch.model import ObservationSeries
from driftwatch.simulate import SimulationPlan, simulate_path

from .conftest import no_change


class TestSeriesCsv:
    def test_write_read_round_trip_is_exact(self, ou, tmp_path):
        plan = SimulationPlan(
            model=ou, n=50, step=cli.default_step(50), x0=[1.0],
            scenario=no_change(), substeps=3, seed=99,
        )
        series = simulate_path(plan)
        path = tmp_path / "series.csv"
        cli.write_series(series, path)
        back = cli.read_series(path)
        assert np.array_equal(back.values, series.values)
        assert back.step == series.step

    def test_three_row_file(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("t,x1\n0.0,1.0\n0.1,1.5\n0.2,0.5\n")
        series = cli.read_series(path)
        assert series.n == 2
        assert series.step == pytest.approx(0.1)

    def test_non_uniform_grid_reports_row(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("t,x1\n0.0,1.0\n0.1,1.5\n0.25,0.5\n")
        with pytest.raises(NonUniformGrid) as err:
            cli.read_series(path)
        assert err.value.row == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("time,value\n0.0,1.0\n0.1,1.5\n")
        with pytest.raises(ParseError):
            cli.read_series(path)

    def test_malformed_float_reports_row(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("t,x1\n0.0,1.0\n0.1,oops\n0.2,0.5\n")
        with pytest.raises(ParseError) as err:
            cli.read_series(path)
        assert err.value.row == 2

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("t,x1\n0.0,1.0\n0.1\n")
        with pytest.raises(ParseError) as err:
            cli.read_series(path)
        assert err.value.row == 2

    def test_multidimensional_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("t,x1,x2\n0.0,1.0,2.0\n0.5,1.5,2.5\n")
        series = cli.read_series(path)
        assert series.state_dim == 2


class TestSimulateCommand:
    def test_writes_deterministic_csv(self, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        argv = [
            "simulate", "--model", "ou", "--alpha", "1", "--beta", "1",
            "--gamma", "1", "--n", "100", "--hn", "auto", "--seed", "42",
        ]
        assert cli.main(argv + ["--out", str(out1)]) == 0
        assert cli.main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_change_flags(self, tmp_path):
        out = tmp_path / "c.csv"
        argv = [
            "simulate", "--alpha", "1", "--beta", "1", "--gamma", "1",
            "--n", "200", "--hn", "0.01", "--seed", "7",
            "--change-at", "0.5", "--post-alpha", "3",
            "--out", str(out),
        ]
        assert cli.main(argv) == 0
        series = cli.read_series(out)
        dx = series.increments()[:, 0]
        assert np.sum(dx[100:] ** 2) > 3.0 * np.sum(dx[:100] ** 2)

    def test_env_seed_default(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(cli.SEED_ENV, "123")
        argv = [
            "simulate", "--alpha", "1", "--beta", "1", "--gamma", "0",
            "--n", "20", "--hn", "0.05",
        ]
        assert cli.main(argv) == 0
        first = capsys.readouterr().out
        assert cli.main(argv) == 0
        assert capsys.readouterr().out == first
        monkeypatch.setenv(cli.SEED_ENV, "124")
        assert cli.main(argv) == 0
        assert capsys.readouterr().out != first


@pytest.fixture()
def h0_csv(tmp_path, ou):
    plan = SimulationPlan(
        model=ou, n=2000, step=cli.default_step(2000), x0=[1.0],
        scenario=no_change(), substeps=5, seed=11,
    )
    path = tmp_path / "h0.csv"
    cli.write_series(simulate_path(plan), path)
    return path


@pytest.fixture()
def change_csv(tmp_path, ou):
    from driftwatch.model import ChangeScenario

    scen = ChangeScenario([1.0], [1.0, 1.0], [3.0], [1.0, 1.0], 0.5)
    plan = SimulationPlan(
        model=ou, n=2000, step=cli.default_step(2000), x0=[1.0],
        scenario=scen, substeps=5, seed=12,
    )
    path = tmp_path / "change.csv"
    cli.write_series(simulate_path(plan), path)
    return path


@pytest.fixture()
def seeded_beta2_critvals(monkeypatch, small_table):
    # avoid building the full default Monte Carlo table inside CLI tests
    monkeypatch.setitem(cv._default_cache, (2, 0.1), small_table.value(2, 0.1))


class TestEstimateCommand:
    def test_json_output(self, h0_csv, capsys):
        assert cli.main(["estimate", "--model", "ou", "--in", str(h0_csv)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) >= {"alpha_hat", "beta_hat", "u1", "u2", "trace"}
        assert abs(payload["alpha_hat"][0] - 1.0) < 0.2
        assert payload["u1"] >= payload["u1"]  # finite
        assert payload["trace"]["converged"]

    def test_hn_override(self, h0_csv, capsys):
        assert cli.main(["estimate", "--in", str(h0_csv), "--hn", "0.01"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["hn"] == 0.01


class TestTestCommand:
    def test_h0_accepts_with_adaptive_flow(self, h0_csv, capsys, seeded_beta2_critvals):
        code = cli.main(
            ["test", "--in", str(h0_csv), "--level", "0.1", "--adaptive"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload["reports"]) == {"alpha", "beta2"}
        assert payload["reports"]["alpha"]["reject"] is False

    def test_variant_both_reports_three_tests(self, h0_csv, capsys, seeded_beta2_critvals):
        assert cli.main(["test", "--in", str(h0_csv), "--variant", "both"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload["reports"]) == {"alpha", "beta1", "beta2"}

    def test_exit_on_reject(self, change_csv, capsys):
        code = cli.main(
            ["test", "--in", str(change_csv), "--variant", "1", "--exit-on-reject"]
        )
        assert code == 2
        payload = json.loads(capsys.readouterr().out)
        assert payload["any_reject"] is True

    def test_profile_dump(self, h0_csv, tmp_path, capsys):
        profile = tmp_path / "profile.csv"
        code = cli.main(
            ["test", "--in", str(h0_csv), "--variant", "1", "--profile", str(profile)]
        )
        assert code == 0
        lines = profile.read_text().strip().split("\n")
        assert lines[0] == "k,alpha,beta1"
        assert len(lines) == 1 + 2000

    def test_critvals_table_file(self, h0_csv, tmp_path, capsys):
        table_path = tmp_path / "table.json"
        table = cv.estimate_quantiles((1, 2), (0.1,), grid_points=400, replications=400, seed=3)
        cv.save_table(table, table_path)
        code = cli.main(
            ["test", "--in", str(h0_csv), "--variant", "both", "--critvals", str(table_path)]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["reports"]["beta2"]["critical_value"] == table.value(2, 0.1)


class TestCritvalsCommand:
    def test_prints_table_json(self, capsys):
        code = cli.main(
            ["critvals", "--k", "1", "--levels", "0.5", "--grid", "300",
             "--reps", "300", "--seed", "3"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["k"] == [1]
        assert abs(payload["values"][0][0] - 0.83) < 0.1

    def test_out_file(self, tmp_path, capsys):
        out = tmp_path / "t.json"
        code = cli.main(
            ["critvals", "--k", "1", "2", "--levels", "0.1", "--grid", "300",
             "--reps", "300", "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        capsys.readouterr()
        table = cv.load_table(out)
        assert table.dims == (1, 2)


class TestExperimentCommand:
    def test_end_to_end_outputs(self, tmp_path, capsys):
        config = {
            "model": "ou",
            "cases": [
                {
                    "name": "null",
                    "scenarios": [
                        {"label": "(1,1,1)", "pre": {"alpha": [1.0], "beta": [1.0, 1.0]}}
                    ],
                }
            ],
            "n_list": [200],
            "replications": 120,
            "level": 0.1,
            "master_seed": 99,
            "tests": ["alpha", "beta1"],
            "substeps": 2,
        }
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(config))
        out_dir = tmp_path / "results"
        code = cli.main(["experiment", "--config", str(cfg_path), "--out-dir", str(out_dir)])
        assert code == 0
        assert (out_dir / "campaign.json").exists()
        assert (out_dir / "table_null.csv").exists()
        assert (out_dir / "MANIFEST.json").exists()
        dist_files = list(out_dir.glob("dist_*.csv"))
        assert len(dist_files) == 2  # one per test
        campaign = json.loads((out_dir / "campaign.json").read_text())
        assert campaign["cells"][0]["replications"] == 120

        # identical rerun produces byte-identical primary artifacts
        out_dir2 = tmp_path / "results2"
        assert cli.main(["experiment", "--config", str(cfg_path), "--out-dir", str(out_dir2)]) == 0
        assert (out_dir / "campaign.json").read_bytes() == (out_dir2 / "campaign.json").read_bytes()
        assert (out_dir / "table_null.csv").read_bytes() == (out_dir2 / "table_null.csv").read_bytes()


class TestExitCodes:
    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as err:
            cli.main(["simulate", "--bogus"])
        assert err.value.code == 1

    def test_missing_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as err:
            cli.main([])
        assert err.value.code == 1

    def test_unknown_model_returns_one(self, h0_csv):
        assert cli.main(["estimate", "--model", "cir", "--in", str(h0_csv)]) == 1

    def test_missing_file_returns_one(self):
        assert cli.main(["estimate", "--in", "/nonexistent.csv"]) == 1


class TestConsoleScript:
    def test_module_invocation_round_trip(self, tmp_path):
        argv = [
            sys.executable, "-m", "driftwatch.cli", "simulate",
            "--alpha", "1", "--beta", "1", "--gamma", "1",
            "--n", "50", "--hn", "auto", "--seed", "5",
        ]
        first = subprocess.run(argv, capture_output=True, text=True)
        second = subprocess.run(argv, capture_output=True, text=True)
        assert first.returncode == 0
        assert first.stdout == second.stdout
        header = first.stdout.split("\n", 1)[0]
        assert header == "t,x1"

    def test_installed_entry_point(self):
        result = subprocess.run(
            ["driftwatch", "--version"], capture_output=True, text=True
        )
        assert result.returncode == 0
        assert "driftwatch" in result.stdout
