"""Command-line front end: simulate / estimate / test / critvals / experiment.

Structured results go to stdout as JSON; observation series travel as CSV
with full float precision so write -> read round-trips are exact.  Exit codes:
0 success, 1 error, 2 when ``--exit-on-reject`` is set and a test rejects.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import critvals as critvals_mod
from .changepoint import run_tests
from .errors import (
    DimensionMismatch,
    DomainError,
    DriftwatchError,
    NonUniformGrid,
    ParseError,
)
from .estimate import fit
from .experiment import ExperimentConfig, emit_distribution, emit_table, run_campaign
from .model import ChangeScenario, ModelSpec, ObservationSeries, ou_model
from .simulate import SimulationPlan, default_step, simulate_path

SEED_ENV = "DRIFTWATCH_SEED"


def _fmt(value: float) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(value))


def write_series(series: ObservationSeries, target) -> None:
    """Write a series as ``t,x1[,...,xd]`` rows with round-trip precision."""
    d = series.state_dim
    header = ",".join(["t"] + [f"x{j + 1}" for j in range(d)])
    lines = [header]
    for i in range(series.n + 1):
        row = [_fmt(i * series.step)] + [_fmt(v) for v in series.values[i]]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text)


def read_series(path) -> ObservationSeries:
    """Parse a series CSV; the step is taken from the time column.

    Raises :class:`ParseError` with the 1-based data row on malformed input,
    :class:`NonUniformGrid` when the time spacing deviates from uniform by
    more than a relative 1e-9.
    """
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(0, "empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "t" or header[1:] != [
            f"x{j + 1}" for j in range(len(header) - 1)
        ]:
            raise ParseError(0, "header must be t,x1[,...,xd]")
        d = len(header) - 1
        times: list[float] = []
        rows: list[list[float]] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != d + 1:
                raise ParseError(row_no, f"expected {d + 1} columns, got {len(row)}")
            try:
                parsed = [float(v) for v in row]
            except ValueError:
                raise ParseError(row_no, "malformed float") from None
            times.append(parsed[0])
            rows.append(parsed[1:])
    if len(rows) < 2:
        raise ParseError(len(rows), "need at least two observations")
    step = times[1] - times[0]
    if step <= 0:
        raise NonUniformGrid(2)
    for i in range(2, len(times)):
        if abs((times[i] - times[i - 1]) - step) > 1e-9 * abs(step):
            raise NonUniformGrid(i + 1)
    return ObservationSeries(np.asarray(rows), step)


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 (exit code 2 is reserved for --exit-on-reject)
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _default_seed(fallback: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise DomainError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _model_from_name(name: str) -> ModelSpec:
    if name == "ou":
        return ou_model()
    raise DomainError(
        f"unknown model {name!r}; custom models are available via the library only"
    )


def _resolve_hn(value: str | None, series: ObservationSeries) -> ObservationSeries:
    if value is None:
        return series
    if value == "auto":
        return ObservationSeries(series.values, default_step(series.n))
    return ObservationSeries(series.values, float(value))


def _check_dimension(series: ObservationSeries, model: ModelSpec) -> None:
    if series.state_dim != model.state_dim:
        raise DimensionMismatch(
            f"series has dimension {series.state_dim}, model expects {model.state_dim}"
        )


def _build_parser() -> _Parser:
    parser = _Parser(prog="driftwatch", description=__doc__)
    parser.add_argument("--version", action="version", version=f"driftwatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="simulate an observed path to CSV")
    sim.add_argument("--model", default="ou")
    sim.add_argument("--alpha", type=float, required=True)
    sim.add_argument("--beta", type=float, required=True)
    sim.add_argument("--gamma", type=float, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--hn", default="auto", help="sampling interval or 'auto' (n**(-2/3))")
    sim.add_argument("--x0", type=float, default=1.0)
    sim.add_argument("--substeps", type=int, default=10)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--change-at", type=float, default=None, dest="change_at")
    sim.add_argument("--post-alpha", type=float, default=None)
    sim.add_argument("--post-beta", type=float, default=None)
    sim.add_argument("--post-gamma", type=float, default=None)
    sim.add_argument("--out", default=None, help="output CSV (default: stdout)")

    est = sub.add_parser("estimate", help="fit diffusion and drift parameters")
    est.add_argument("--model", default="ou")
    est.add_argument("--in", dest="infile", required=True)
    est.add_argument("--hn", default=None, help="override the step from the file")

    tst = sub.add_parser("test", help="run change-point tests on a series")
    tst.add_argument("--model", default="ou")
    tst.add_argument("--in", dest="infile", required=True)
    tst.add_argument("--hn", default=None)
    tst.add_argument("--level", type=float, default=0.1)
    tst.add_argument("--variant", choices=["1", "2", "both"], default="2")
    tst.add_argument("--adaptive", action="store_true")
    tst.add_argument("--profile", default=None, help="dump centered cusum paths to CSV")
    tst.add_argument("--exit-on-reject", action="store_true", dest="exit_on_reject")
    tst.add_argument("--critvals", default=None, help="critical value table JSON")

    cv = sub.add_parser("critvals", help="Monte Carlo bridge sup quantiles")
    cv.add_argument("--k", type=int, nargs="+", default=[1])
    cv.add_argument("--levels", type=float, nargs="+", default=[0.1])
    cv.add_argument("--grid", type=int, default=critvals_mod.DEFAULT_GRID_POINTS)
    cv.add_argument("--reps", type=int, default=critvals_mod.DEFAULT_REPLICATIONS)
    cv.add_argument("--seed", type=int, default=None)
    cv.add_argument("--out", default=None)

    expr = sub.add_parser("experiment", help="run a size/power campaign")
    expr.add_argument("--config", required=True)
    expr.add_argument("--out-dir", required=True, dest="out_dir")
    expr.add_argument("--threads", type=int, default=1)

    return parser


def _cmd_simulate(args) -> int:
    model = _model_from_name(args.model)
    pre_alpha = [args.alpha]
    pre_beta = [args.beta, args.gamma]
    post_alpha = [args.post_alpha if args.post_alpha is not None else args.alpha]
    post_beta = [
        args.post_beta if args.post_beta is not None else args.beta,
        args.post_gamma if args.post_gamma is not None else args.gamma,
    ]
    scenario = ChangeScenario(
        pre_alpha, pre_beta, post_alpha, post_beta, change_fraction=args.change_at
    )
    step = default_step(args.n) if args.hn == "auto" else float(args.hn)
    seed = args.seed if args.seed is not None else _default_seed(0)
    plan = SimulationPlan(
        model=model,
        n=args.n,
        step=step,
        x0=[args.x0],
        scenario=scenario,
        substeps=args.substeps,
        seed=seed,
    )
    series = simulate_path(plan)
    if args.out is None:
        write_series(series, sys.stdout)
    else:
        write_series(series, args.out)
    return 0


def _cmd_estimate(args) -> int:
    model = _model_from_name(args.model)
    series = _resolve_hn(args.hn, read_series(args.infile))
    _check_dimension(series, model)
    result = fit(series, model)
    payload = {"model": args.model, "n": series.n, "hn": series.step}
    payload.update(result.to_dict())
    print(json.dumps(payload, indent=2))
    return 0


def _load_critvals(path: str | None, model: ModelSpec, level: float):
    # an existing file is used as-is; otherwise a default table is computed
    # and cached there
    if path is None:
        return None
    if Path(path).exists():
        return critvals_mod.load_table(path)
    return critvals_mod.load_or_compute(path, (1, model.beta_dim), (level,))


def _cmd_test(args) -> int:
    model = _model_from_name(args.model)
    series = _resolve_hn(args.hn, read_series(args.infile))
    _check_dimension(series, model)
    table = _load_critvals(args.critvals, model, args.level)
    if args.variant == "both":
        tests = ("alpha", "beta1", "beta2")
    elif args.variant == "1":
        tests = ("alpha", "beta1")
    else:
        tests = ("alpha", "beta2")
    reports = run_tests(
        series, model, tests=tests, level=args.level,
        critvals=table, adaptive=args.adaptive,
    )
    payload = {
        "model": args.model,
        "n": series.n,
        "hn": series.step,
        "level": args.level,
        "adaptive": args.adaptive,
        "reports": {
            name: (None if report is None else report.to_dict())
            for name, report in reports.items()
        },
    }
    computed = [r for r in reports.values() if r is not None]
    payload["any_reject"] = any(r.reject for r in computed)
    print(json.dumps(payload, indent=2))
    if args.profile:
        names = [r.test_name for r in computed]
        columns = [r.profile.centered_partial_sums for r in computed]
        with open(args.profile, "w") as handle:
            handle.write(",".join(["k"] + names) + "\n")
            for i in range(series.n):
                row = [str(i + 1)]
                for col in columns:
                    value = col[i] if col.ndim == 1 else float(np.linalg.norm(col[i]))
                    row.append(_fmt(value))
                handle.write(",".join(row) + "\n")
    if args.exit_on_reject and payload["any_reject"]:
        return 2
    return 0


def _cmd_critvals(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed(critvals_mod.DEFAULT_SEED)
    table = critvals_mod.estimate_quantiles(
        args.k, args.levels, grid_points=args.grid, replications=args.reps, seed=seed
    )
    text = table.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-") or "cell"


def _cmd_experiment(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    if "master_seed" not in raw:
        raw["master_seed"] = _default_seed(0)
    config = ExperimentConfig.from_dict(raw)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.time()
    result = run_campaign(config, threads=args.threads)
    runtime = time.time() - started

    (out_dir / "campaign.json").write_text(result.to_json() + "\n")
    for case in config.cases:
        (out_dir / f"table_{_slug(case.name)}.csv").write_text(
            emit_table(result, case.name, fmt="csv")
        )
    reference_cache: dict[int, np.ndarray] = {}
    written = ["campaign.json"] + [f"table_{_slug(c.name)}.csv" for c in config.cases]
    for key, cell in result.cells.items():
        if cell.statistics.size < 100:
            continue
        dim = cell.bridge_dim
        if dim != 1 and dim not in reference_cache:
            reference_cache[dim] = critvals_mod._sup_sample(
                dim, critvals_mod.DEFAULT_GRID_POINTS, 2000, critvals_mod.DEFAULT_SEED
            )
        data = emit_distribution(
            result, key, reference_sample=reference_cache.get(dim)
        )
        name = f"dist_{_slug(cell.case)}_{_slug(cell.label)}_n{cell.n}_{cell.test_name}.csv"
        (out_dir / name).write_text(data.to_csv())
        written.append(name)

    manifest = {
        "driftwatch": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "master_seed": config.master_seed,
        "replications": config.replications,
        "level": config.level,
        "runtime_seconds": runtime,
        "outputs": written,
        "aborted_cells": result.aborted,
    }
    (out_dir / "MANIFEST.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "test": _cmd_test,
    "critvals": _cmd_critvals,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DriftwatchError, OSError, ValueError) as exc:
        print(f"driftwatch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
