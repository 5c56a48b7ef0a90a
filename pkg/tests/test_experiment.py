"""Campaign orchestration: determinism, splitting, tables, distributions."""

from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from driftwatch.errors import DomainError, InsufficientSample
from driftwatch.experiment import (
    CampaignResult,
    CaseSpec,
    CellResult,
    ExperimentConfig,
    ScenarioSpec,
    _run_cell,
    emit_distribution,
    emit_table,
    run_campaign,
)
from driftwatch.model import ChangeScenario, ModelSpec, ParamBox, ParamSpace, ou_model

from .conftest import no_change


def _scenario(label, pre_alpha, pre_beta, post_alpha=None, post_beta=None, change_at=None):
    return ScenarioSpec(
        label=label,
        scenario=ChangeScenario(
            pre_alpha,
            pre_beta,
            post_alpha if post_alpha is not None else pre_alpha,
            post_beta if post_beta is not None else pre_beta,
            change_at,
        ),
    )


def _tiny_config(**overrides) -> ExperimentConfig:
    defaults = dict(
        cases=(
            CaseSpec(
                name="null",
                scenarios=(_scenario("(1,1,1)", [1.0], [1.0, 1.0]),),
            ),
        ),
        n_list=(200,),
        replications=12,
        master_seed=321,
        level=0.1,
        tests=("alpha", "beta1"),
        substeps=2,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestConfig:
    def test_json_round_trip(self):
        config = _tiny_config()
        parsed = ExperimentConfig.from_json(config.to_json())
        assert parsed.to_json() == config.to_json()

    def test_validation(self):
        with pytest.raises(DomainError):
            _tiny_config(replications=0)
        with pytest.raises(DomainError):
            _tiny_config(tests=("alpha", "nope"))
        with pytest.raises(DomainError):
            _tiny_config(level=1.5)

    def test_post_defaults_to_pre_in_json(self):
        raw = {
            "cases": [
                {
                    "name": "c",
                    "scenarios": [
                        {"label": "s", "pre": {"alpha": [1.0], "beta": [1.0, 0.0]}}
                    ],
                }
            ],
            "n_list": [100],
            "replications": 5,
            "master_seed": 1,
        }
        config = ExperimentConfig.from_dict(raw)
        scen = config.cases[0].scenarios[0].scenario
        assert np.array_equal(scen.pre_alpha, scen.post_alpha)
        assert scen.change_fraction is None


class TestRunCampaign:
    def test_byte_identical_repeat_runs(self, small_table):
        config = _tiny_config(tests=("alpha", "beta1", "beta2"))
        first = run_campaign(config, critvals=small_table)
        second = run_campaign(config, critvals=small_table)
        assert first.to_json() == second.to_json()

    def test_threading_does_not_change_results(self, small_table):
        config = _tiny_config(
            n_list=(150, 200),
            cases=(
                CaseSpec(
                    name="null",
                    scenarios=(
                        _scenario("a", [1.0], [1.0, 1.0]),
                        _scenario("b", [0.5], [1.0, 0.0]),
                    ),
                ),
            ),
        )
        serial = run_campaign(config, critvals=small_table)
        threaded = run_campaign(config, critvals=small_table, threads=4)
        assert serial.to_json() == threaded.to_json()

    def test_rate_identity_and_sample_sizes(self, small_table):
        config = _tiny_config()
        result = run_campaign(config, critvals=small_table)
        for cell in result.cells.values():
            assert cell.rate == cell.rejections / cell.replications
            assert 0.0 <= cell.rate <= 1.0
            assert cell.statistics.size == cell.replications - cell.failures
        assert result.cell("null", "(1,1,1)", 200, "beta1").bridge_dim == 1

    def test_beta2_uses_drift_dimension(self, small_table):
        config = _tiny_config(tests=("beta2",))
        result = run_campaign(config, critvals=small_table)
        assert result.cell("null", "(1,1,1)", 200, "beta2").bridge_dim == 2

    def test_out_of_box_scenario_rejected(self, small_table):
        config = _tiny_config(
            cases=(
                CaseSpec(
                    name="bad",
                    scenarios=(_scenario("neg", [1.0], [-5.0, 0.0]),),
                ),
            )
        )
        with pytest.raises(DomainError):
            run_campaign(config, critvals=small_table)

    def test_adaptive_records_skips(self, small_table):
        # strong diffusion change: the first-stage test rejects and the drift
        # stage is skipped for those replications
        config = _tiny_config(
            cases=(
                CaseSpec(
                    name="shift",
                    scenarios=(
                        _scenario("a13", [1.0], [1.0, 1.0], [3.0], [1.0, 1.0], 0.5),
                    ),
                ),
            ),
            n_list=(2000,),
            replications=10,
            tests=("alpha", "beta2"),
            adaptive=True,
        )
        result = run_campaign(config, critvals=small_table)
        alpha_cell = result.cell("shift", "a13", 2000, "alpha")
        beta_cell = result.cell("shift", "a13", 2000, "beta2")
        assert alpha_cell.rejections == 10
        assert beta_cell.skipped == 10
        assert beta_cell.statistics.size == 0

    def test_failure_budget_aborts_cell(self, small_table):
        explosive = ModelSpec(
            state_dim=1,
            alpha_dim=1,
            beta_dim=1,
            drift=lambda x, b: np.array([b[0] * x[0]]),
            diffusion=lambda x, a: np.array([[a[0]]]),
            param_space=ParamSpace(
                alpha=ParamBox([0.0], [10.0]), beta=ParamBox([0.0], [10.0])
            ),
            name="explosive",
        )
        config = ExperimentConfig(
            cases=(
                CaseSpec(
                    name="boom",
                    scenarios=(
                        ScenarioSpec(
                            label="up",
                            scenario=ChangeScenario.no_change([0.1], [5.0]),
                        ),
                    ),
                ),
            ),
            n_list=(60,),
            replications=8,
            master_seed=5,
            tests=("alpha",),
            substeps=1,
            step=1.0,
        )
        result = run_campaign(config, model=explosive, critvals=small_table)
        assert result.cells == {}
        assert len(result.aborted) == 1
        assert result.aborted[0]["case"] == "boom"


class TestReplicationSplitting:
    def test_split_cell_reproduces_whole_cell(self, ou, small_table):
        kwargs = dict(
            model=ou,
            scenario=no_change(),
            n=300,
            step=0.01,
            substeps=2,
            x0=np.array([1.0]),
            tests=("alpha", "beta1"),
            level=0.1,
            critvals=small_table,
            cell_seed=777,
        )
        whole, _ = _run_cell(replications=30, rep_offset=0, **kwargs)
        first, _ = _run_cell(replications=15, rep_offset=0, **kwargs)
        second, _ = _run_cell(replications=15, rep_offset=15, **kwargs)
        for t in ("alpha", "beta1"):
            assert (
                first[t]["rejections"] + second[t]["rejections"]
                == whole[t]["rejections"]
            )
            merged = np.concatenate([first[t]["statistics"], second[t]["statistics"]])
            assert np.array_equal(merged, whole[t]["statistics"])


def _fake_result(n_list, tests, labels, case="case1") -> CampaignResult:
    cases = (
        CaseSpec(
            name=case,
            scenarios=tuple(_scenario(lab, [1.0], [1.0, 1.0]) for lab in labels),
        ),
    )
    config = ExperimentConfig(
        cases=cases,
        n_list=tuple(n_list),
        replications=1000,
        master_seed=0,
        tests=tuple(tests),
    )
    cells = {}
    rng = np.random.default_rng(0)
    for label in labels:
        for n in n_list:
            for t in tests:
                rejections = int(rng.integers(50, 150))
                cells[(case, label, n, t)] = CellResult(
                    case=case,
                    label=label,
                    n=n,
                    test_name=t,
                    rejections=rejections,
                    replications=1000,
                    failures=0,
                    skipped=0,
                    statistics=rng.uniform(0.2, 2.0, size=1000),
                    bridge_dim=2 if t == "beta2" else 1,
                )
    return CampaignResult(config=config, cells=cells)


class TestEmitTable:
    def test_single_cell_table(self):
        result = _fake_result([100], ["alpha"], ["only"])
        text = emit_table(result, "case1")
        lines = text.strip().split("\n")
        assert lines[0] == "n,test,only"
        assert len(lines) == 2

    def test_full_grid_shape(self):
        labels = ["(1,1,1)", "(0.5,1,0)", "(1.5,1.5,-1)", "(2,3,0.5)"]
        result = _fake_result(
            [8000, 125000, 1000000], ["alpha", "beta1", "beta2"], labels
        )
        rows = list(csv.reader(io.StringIO(emit_table(result, "case1"))))
        assert len(rows) == 1 + 9  # header + 3 sizes x 3 tests
        assert all(len(row) == 2 + 4 for row in rows)
        assert rows[0][2:] == labels

    def test_csv_round_trips_rates_exactly(self):
        result = _fake_result([100, 200], ["alpha", "beta1"], ["s1", "s2"])
        rows = list(csv.reader(io.StringIO(emit_table(result, "case1"))))
        labels = rows[0][2:]
        for parts in rows[1:]:
            n, test = int(parts[0]), parts[1]
            for label, raw in zip(labels, parts[2:]):
                assert float(raw) == result.cell("case1", label, n, test).rate

    def test_text_rendering_aligns(self):
        result = _fake_result([100], ["alpha"], ["s1", "s2"])
        text = emit_table(result, "case1", fmt="text")
        lines = text.strip().split("\n")
        assert len({len(line) for line in lines}) == 1

    def test_unknown_case(self):
        result = _fake_result([100], ["alpha"], ["s1"])
        with pytest.raises(DomainError):
            emit_table(result, "nope")


class TestEmitDistribution:
    def test_histogram_and_ecdf_shapes(self):
        result = _fake_result([100], ["alpha"], ["s1"])
        data = emit_distribution(result, ("case1", "s1", 100, "alpha"))
        assert data.hist_counts.size == 40
        assert data.hist_edges.size == 41
        assert data.hist_counts.sum() == 1000
        assert data.sorted_statistics.size == 1000
        assert np.all(np.diff(data.reference_cdf) >= 0)
        assert 0.0 <= data.reference_cdf[0] <= data.reference_cdf[-1] <= 1.0

    def test_degenerate_statistics_yield_step_ecdf(self):
        result = _fake_result([100], ["alpha"], ["s1"])
        cell = result.cells[("case1", "s1", 100, "alpha")]
        cell.statistics = np.full(150, 0.7)
        data = emit_distribution(result, ("case1", "s1", 100, "alpha"))
        assert np.all(data.sorted_statistics == 0.7)
        assert data.ecdf[-1] == 1.0

    def test_vector_test_uses_monte_carlo_reference(self):
        result = _fake_result([100], ["beta2"], ["s1"])
        reference = np.linspace(0.1, 3.0, 500)
        data = emit_distribution(
            result, ("case1", "s1", 100, "beta2"), reference_sample=reference
        )
        assert np.all((0.0 <= data.reference_cdf) & (data.reference_cdf <= 1.0))

    def test_insufficient_sample(self):
        result = _fake_result([100], ["alpha"], ["s1"])
        cell = result.cells[("case1", "s1", 100, "alpha")]
        cell.statistics = cell.statistics[:99]
        with pytest.raises(InsufficientSample):
            emit_distribution(result, ("case1", "s1", 100, "alpha"))

    def test_csv_rendering_parses(self):
        result = _fake_result([100], ["alpha"], ["s1"])
        data = emit_distribution(result, ("case1", "s1", 100, "alpha"))
        lines = data.to_csv().strip().split("\n")
        assert lines[0] == "bin_left,bin_right,bin_count,statistic,ecdf,reference_cdf"
        assert len(lines) == 1 + 1000
        total = sum(int(line.split(",")[2]) for line in lines[1:] if line.split(",")[2])
        assert total == 1000


class TestCampaignJson:
    def test_campaign_json_is_valid_and_ordered(self, small_table):
        config = _tiny_config()
        result = run_campaign(config, critvals=small_table)
        data = json.loads(result.to_json())
        assert set(data) == {"config", "cells", "aborted"}
        assert [c["test"] for c in data["cells"]] == ["alpha", "beta1"]
        assert data["cells"][0]["replications"] == 12
