"""Replication campaigns: empirical size/power tables and distribution dumps.

A campaign runs a grid of (case, scenario, n) cells.  Every cell simulates
``replications`` independent paths, applies the configured tests to each, and
tallies rejections.  All randomness is derived from the master seed, so a
campaign result is a pure function of its configuration.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import critvals as _critvals
from ._rng import derive_seed
from .changepoint import TEST_NAMES, run_tests
from .errors import (
    BoundaryHitWarning,
    CellAborted,
    DomainError,
    DriftwatchError,
    InsufficientSample,
)
from .model import ChangeScenario, ModelSpec, ObservationSeries, ou_model
from .simulate import (
    SimulationPlan,
    _simulate_batch,
    default_step,
    derive_replication_seed,
)

Array = np.ndarray

_BATCH_PATHS = 128

#: a cell aborts once more than this fraction of its replications fail
FAILURE_BUDGET = 0.10


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    label: str
    scenario: ChangeScenario

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "pre": {
                "alpha": self.scenario.pre_alpha.tolist(),
                "beta": self.scenario.pre_beta.tolist(),
            },
            "post": {
                "alpha": self.scenario.post_alpha.tolist(),
                "beta": self.scenario.post_beta.tolist(),
            },
            "change_at": self.scenario.change_fraction,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        pre = data["pre"]
        post = data.get("post") or pre
        return cls(
            label=str(data["label"]),
            scenario=ChangeScenario(
                pre_alpha=pre["alpha"],
                pre_beta=pre["beta"],
                post_alpha=post["alpha"],
                post_beta=post["beta"],
                change_fraction=data.get("change_at"),
            ),
        )


@dataclass(frozen=True, eq=False)
class CaseSpec:
    name: str
    scenarios: tuple[ScenarioSpec, ...]

    def to_dict(self) -> dict:
        return {"name": self.name, "scenarios": [s.to_dict() for s in self.scenarios]}

    @classmethod
    def from_dict(cls, data: dict) -> "CaseSpec":
        return cls(
            name=str(data["name"]),
            scenarios=tuple(ScenarioSpec.from_dict(s) for s in data["scenarios"]),
        )


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Mirror of the campaign config JSON."""

    cases: tuple[CaseSpec, ...]
    n_list: tuple[int, ...]
    replications: int
    master_seed: int
    model: str = "ou"
    level: float = 0.1
    tests: tuple[str, ...] = TEST_NAMES
    adaptive: bool = False
    substeps: int = 10
    x0: tuple[float, ...] = (1.0,)
    step: float | None = None  # None: n**(-2/3) per cell

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise DomainError("level must lie strictly in (0, 1)")
        unknown = set(self.tests) - set(TEST_NAMES)
        if unknown:
            raise DomainError(f"unknown tests: {sorted(unknown)}")
        if len(self.cases) == 0 or len(self.n_list) == 0:
            raise DomainError("cases and n_list must be non-empty")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "cases": [c.to_dict() for c in self.cases],
            "n_list": list(self.n_list),
            "replications": self.replications,
            "level": self.level,
            "master_seed": self.master_seed,
            "tests": list(self.tests),
            "adaptive": self.adaptive,
            "substeps": self.substeps,
            "x0": list(self.x0),
            "step": self.step,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(
            cases=tuple(CaseSpec.from_dict(c) for c in data["cases"]),
            n_list=tuple(int(n) for n in data["n_list"]),
            replications=int(data["replications"]),
            master_seed=int(data["master_seed"]),
            model=str(data.get("model", "ou")),
            level=float(data.get("level", 0.1)),
            tests=tuple(data.get("tests", list(TEST_NAMES))),
            adaptive=bool(data.get("adaptive", False)),
            substeps=int(data.get("substeps", 10)),
            x0=tuple(float(v) for v in data.get("x0", [1.0])),
            step=None if data.get("step") is None else float(data["step"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass(eq=False)
class CellResult:
    """Tally for one (case, scenario, n, test) cell."""

    case: str
    label: str
    n: int
    test_name: str
    rejections: int
    replications: int
    failures: int
    skipped: int
    statistics: Array
    bridge_dim: int

    @property
    def rate(self) -> float:
        return self.rejections / self.replications

    @property
    def mean_statistic(self) -> float | None:
        if self.statistics.size == 0:
            return None
        return float(np.mean(self.statistics))

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "label": self.label,
            "n": self.n,
            "test": self.test_name,
            "rejections": self.rejections,
            "replications": self.replications,
            "failures": self.failures,
            "skipped": self.skipped,
            "rate": self.rate,
            "mean_statistic": self.mean_statistic,
            "statistics": self.statistics.tolist(),
        }


@dataclass(eq=False)
class CampaignResult:
    config: ExperimentConfig
    cells: dict[tuple[str, str, int, str], CellResult]
    aborted: list[dict] = field(default_factory=list)

    def cell(self, case: str, label: str, n: int, test: str) -> CellResult:
        return self.cells[(case, label, n, test)]

    def to_dict(self) -> dict:
        ordered = []
        for case in self.config.cases:
            for scen in case.scenarios:
                for n in self.config.n_list:
                    for test in self.config.tests:
                        key = (case.name, scen.label, n, test)
                        if key in self.cells:
                            ordered.append(self.cells[key].to_dict())
        return {
            "config": self.config.to_dict(),
            "cells": ordered,
            "aborted": self.aborted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _cell_seed(master_seed: int, case_index: int, scenario_index: int, n_index: int) -> int:
    seed = derive_seed(master_seed, case_index)
    seed = derive_seed(seed, scenario_index)
    return derive_seed(seed, n_index)


def _run_cell(
    model: ModelSpec,
    scenario: ChangeScenario,
    n: int,
    step: float,
    substeps: int,
    x0,
    tests,
    level: float,
    critvals,
    replications: int,
    cell_seed: int,
    adaptive: bool = False,
    rep_offset: int = 0,
) -> tuple[dict[str, dict], list[dict]]:
    """Run one cell; returns per-test tallies and the failure log.

    Replication ``r`` always uses seed ``derive_replication_seed(cell_seed,
    rep_offset + r)``, so splitting a cell into consecutive ranges and summing
    the tallies reproduces the unsplit cell exactly.
    """
    plan = SimulationPlan(
        model=model, n=n, step=step, x0=x0, scenario=scenario, substeps=substeps
    )
    stats: dict[str, list[float]] = {t: [] for t in tests}
    rejections = {t: 0 for t in tests}
    skipped = {t: 0 for t in tests}
    failures: list[dict] = []

    seeds = [derive_replication_seed(cell_seed, rep_offset + r) for r in range(replications)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryHitWarning)
        for start in range(0, replications, _BATCH_PATHS):
            batch = seeds[start : start + _BATCH_PATHS]
            values, blown = _simulate_batch(plan, batch)
            for b in range(len(batch)):
                rep_index = rep_offset + start + b
                if blown[b] >= 0:
                    failures.append(
                        {"replication": rep_index, "reason": f"blowup at observation {int(blown[b])}"}
                    )
                    continue
                series = ObservationSeries(values[b], step)
                try:
                    reports = run_tests(
                        series, model, tests=tests, level=level,
                        critvals=critvals, adaptive=adaptive,
                    )
                except DriftwatchError as exc:
                    failures.append(
                        {"replication": rep_index, "reason": f"{type(exc).__name__}: {exc}"}
                    )
                    continue
                for t in tests:
                    report = reports[t]
                    if report is None:
                        skipped[t] += 1
                        continue
                    stats[t].append(report.statistic)
                    if report.reject:
                        rejections[t] += 1
            if len(failures) > FAILURE_BUDGET * replications:
                raise CellAborted((n, tests), len(failures), replications)

    tallies = {
        t: {
            "rejections": rejections[t],
            "skipped": skipped[t],
            "statistics": np.asarray(stats[t]),
            "failures": len(failures),
        }
        for t in tests
    }
    return tallies, failures


def _resolve_model(config: ExperimentConfig, model: ModelSpec | None) -> ModelSpec:
    if model is not None:
        return model
    if config.model == "ou":
        return ou_model()
    raise DomainError(
        f"unknown model name {config.model!r}; custom models must be passed in"
    )


def run_campaign(
    config: ExperimentConfig,
    model: ModelSpec | None = None,
    critvals=None,
    threads: int = 1,
) -> CampaignResult:
    """Execute every cell of the campaign.

    ``critvals`` may be a precomputed :class:`CriticalValueTable`; otherwise
    the default critical-value source is used.  ``threads`` caps concurrent
    cell execution and never affects the result.
    """
    model = _resolve_model(config, model)
    for case in config.cases:
        for scen in case.scenarios:
            s = scen.scenario
            if not (
                model.param_space.contains(s.pre_alpha, s.pre_beta)
                and model.param_space.contains(s.post_alpha, s.post_beta)
            ):
                raise DomainError(
                    f"scenario {case.name}/{scen.label} lies outside the parameter box"
                )

    jobs = []
    for ci, case in enumerate(config.cases):
        for si, scen in enumerate(case.scenarios):
            for ni, n in enumerate(config.n_list):
                step = config.step if config.step is not None else default_step(n)
                seed = _cell_seed(config.master_seed, ci, si, ni)
                jobs.append((case, scen, n, step, seed))

    def execute(job):
        case, scen, n, step, seed = job
        try:
            tallies, failures = _run_cell(
                model=model,
                scenario=scen.scenario,
                n=n,
                step=step,
                substeps=config.substeps,
                x0=np.asarray(config.x0),
                tests=config.tests,
                level=config.level,
                critvals=critvals,
                replications=config.replications,
                cell_seed=seed,
                adaptive=config.adaptive,
            )
            return job, tallies, failures, None
        except CellAborted as exc:
            return job, None, None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(execute, jobs))
    else:
        outcomes = [execute(job) for job in jobs]

    cells: dict[tuple[str, str, int, str], CellResult] = {}
    aborted: list[dict] = []
    for (case, scen, n, step, seed), tallies, failures, error in outcomes:
        if error is not None:
            aborted.append(
                {
                    "case": case.name,
                    "label": scen.label,
                    "n": n,
                    "failures": error.failures,
                    "replications": error.replications,
                }
            )
            continue
        for t in config.tests:
            tally = tallies[t]
            cells[(case.name, scen.label, n, t)] = CellResult(
                case=case.name,
                label=scen.label,
                n=n,
                test_name=t,
                rejections=tally["rejections"],
                replications=config.replications,
                failures=tally["failures"],
                skipped=tally["skipped"],
                statistics=tally["statistics"],
                bridge_dim=model.beta_dim if t == "beta2" else 1,
            )
    return CampaignResult(config=config, cells=cells, aborted=aborted)


def emit_table(result: CampaignResult, case_name: str, fmt: str = "csv") -> str:
    """Render one case as a table: rows are (n, test), columns scenarios."""
    config = result.config
    case = next((c for c in config.cases if c.name == case_name), None)
    if case is None:
        raise DomainError(f"unknown case {case_name!r}")
    labels = [s.label for s in case.scenarios]
    rows = []
    for n in config.n_list:
        for t in config.tests:
            values = []
            for label in labels:
                cell = result.cells.get((case_name, label, n, t))
                values.append("" if cell is None else repr(cell.rate))
            rows.append((n, t, values))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "test"] + labels)
        for n, t, values in rows:
            writer.writerow([str(n), t] + values)
        return buf.getvalue()
    if fmt == "text":
        header = ["n", "test"] + labels
        body = [[str(n), t] + values for n, t, values in rows]
        widths = [
            max(len(header[j]), *(len(r[j]) for r in body)) if body else len(header[j])
            for j in range(len(header))
        ]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for r in body:
            lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
        return "\n".join(lines) + "\n"
    raise DomainError("fmt must be 'csv' or 'text'")


@dataclass(eq=False)
class DistributionData:
    """Histogram and ECDF of a cell's statistics with a reference CDF."""

    hist_edges: Array
    hist_counts: Array
    sorted_statistics: Array
    ecdf: Array
    reference_cdf: Array

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_left,bin_right,bin_count,statistic,ecdf,reference_cdf\n")
        rows = max(self.hist_counts.size, self.sorted_statistics.size)
        for i in range(rows):
            if i < self.hist_counts.size:
                left = repr(float(self.hist_edges[i]))
                right = repr(float(self.hist_edges[i + 1]))
                count = str(int(self.hist_counts[i]))
            else:
                left = right = count = ""
            if i < self.sorted_statistics.size:
                stat = repr(float(self.sorted_statistics[i]))
                ec = repr(float(self.ecdf[i]))
                ref = repr(float(self.reference_cdf[i]))
            else:
                stat = ec = ref = ""
            buf.write(f"{left},{right},{count},{stat},{ec},{ref}\n")
        return buf.getvalue()


def emit_distribution(
    result: CampaignResult,
    cell_key: tuple[str, str, int, str],
    bins: int = 40,
    reference_sample: Array | None = None,
    reference_replications: int = 2000,
) -> DistributionData:
    """Histogram + ECDF data for one cell, with a limit-law reference CDF.

    The reference is the analytic 1-d law for scalar tests; for the whitened
    vector test it is the ECDF of a Monte Carlo sample of the q-dimensional
    bridge sup (``reference_sample`` overrides the built-in draw).
    """
    cell = result.cells[cell_key]
    stats = cell.statistics
    if stats.size < 100:
        raise InsufficientSample(f"cell has only {stats.size} statistics")
    top = float(np.max(stats))
    counts, edges = np.histogram(stats, bins=bins, range=(0.0, top))
    order = np.sort(stats)
    ecdf = np.arange(1, order.size + 1) / order.size
    if cell.bridge_dim == 1:
        reference = np.asarray(_critvals.kolmogorov_cdf(order))
    else:
        if reference_sample is None:
            reference_sample = _critvals._sup_sample(
                cell.bridge_dim,
                _critvals.DEFAULT_GRID_POINTS,
                reference_replications,
                _critvals.DEFAULT_SEED,
            )
        ref_sorted = np.sort(np.asarray(reference_sample, dtype=float))
        reference = np.searchsorted(ref_sorted, order, side="right") / ref_sorted.size
    return DistributionData(
        hist_edges=edges,
        hist_counts=counts,
        sorted_statistics=order,
        ecdf=ecdf,
        reference_cdf=reference,
    )
