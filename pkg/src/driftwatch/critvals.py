"""Critical values of the sup-norm of a k-dimensional Brownian bridge.

Upper quantiles are estimated by Monte Carlo: each bridge is realized on a
uniform grid as ``B(s_j) = W(s_j) - s_j W(1)`` from cumulative Gaussian
increments and the grid maximum of its norm is recorded.  For ``k = 1`` the
classical alternating exponential series gives an analytic oracle that the
Monte Carlo table is checked against.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import NormalStream, derive_seed
from .errors import DomainError

Array = np.ndarray

DEFAULT_GRID_POINTS = 10_000
DEFAULT_REPLICATIONS = 10_000
DEFAULT_SEED = 7

_REPLICATION_CHUNK = 256

#: environment variable naming the on-disk table cache
CACHE_ENV = "DRIFTWATCH_CRITVALS"


def kolmogorov_cdf(x) -> np.ndarray | float:
    """CDF of the sup of the absolute value of a 1-d Brownian bridge.

    ``P(sup |B| <= x) = 1 - 2 sum_{j>=1} (-1)**(j+1) exp(-2 j**2 x**2)``,
    with terms accumulated until they drop below 1e-15.
    """
    arr = np.asarray(x, dtype=float)
    out = np.zeros_like(arr)
    positive = arr > 0
    xs = arr[positive]
    total = np.zeros_like(xs)
    sign = 1.0
    for j in range(1, 200):
        term = sign * np.exp(-2.0 * j * j * xs * xs)
        total += term
        sign = -sign
        if np.all(np.abs(term) < 1e-15):
            break
    out[positive] = 1.0 - 2.0 * total
    result = np.clip(out, 0.0, 1.0)
    return float(result) if np.isscalar(x) or arr.ndim == 0 else result


def kolmogorov_upper_point(epsilon: float) -> float:
    """Upper-``epsilon`` point of the 1-d bridge sup law, by bisection.

    Solves ``2 sum_{j>=1} (-1)**(j+1) exp(-2 j**2 x**2) = epsilon`` on
    [0.2, 3] to an interval width of 1e-12.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie strictly in (0, 1)")
    lo, hi = 0.2, 3.0

    def survival(x: float) -> float:
        total = 0.0
        sign = 1.0
        for j in range(1, 200):
            term = sign * math.exp(-2.0 * j * j * x * x)
            total += term
            sign = -sign
            if abs(term) < 1e-15:
                break
        return 2.0 * total

    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if survival(mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_bridge_sup(k: int, grid_points: int, rng: NormalStream) -> float:
    """One draw of the grid maximum of ``||B(s)||`` for a k-dim bridge.

    Consumes ``k * grid_points`` normals from ``rng`` (k rows of the grid).
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    if grid_points < 2:
        raise DomainError("grid_points must be >= 2")
    z = rng.normals((k, grid_points))
    w = np.cumsum(z, axis=1) * math.sqrt(1.0 / grid_points)
    s = np.arange(1, grid_points + 1) / grid_points
    bridge = w - s * w[:, -1:]
    return float(np.max(np.linalg.norm(bridge, axis=0)))


def _sup_sample(k: int, grid_points: int, replications: int, seed: int) -> Array:
    """All replicated bridge sups for one dimension, replication order."""
    dim_seed = derive_seed(seed, k)
    sups = np.empty(replications)
    s = np.arange(1, grid_points + 1) / grid_points
    start = 0
    while start < replications:
        stop = min(start + _REPLICATION_CHUNK, replications)
        block = np.empty((stop - start, k, grid_points))
        for offset in range(stop - start):
            stream = NormalStream(derive_seed(dim_seed, start + offset))
            block[offset] = stream.normals((k, grid_points))
        walks = np.cumsum(block, axis=2) * math.sqrt(1.0 / grid_points)
        bridges = walks - s * walks[:, :, -1:]
        sups[start:stop] = np.sqrt((bridges * bridges).sum(axis=1)).max(axis=1)
        start = stop
    return sups


def _quantile_index(level: float, replications: int) -> int:
    # type-1 empirical quantile: 1-based order statistic ceil((1 - eps) * R);
    # the 1e-9 guard absorbs float representation of (1 - eps).
    return int(math.ceil((1.0 - level) * replications - 1e-9))


@dataclass(frozen=True, eq=False)
class CriticalValueTable:
    """Monte Carlo upper quantiles ``w_k(eps)`` by dimension and level."""

    dims: tuple[int, ...]
    levels: tuple[float, ...]
    values: Array  # shape (len(dims), len(levels))
    grid_points: int
    replications: int
    seed: int

    def value(self, k: int, level: float) -> float:
        try:
            i = self.dims.index(int(k))
        except ValueError:
            raise DomainError(f"dimension {k} not in table {self.dims}") from None
        for j, lev in enumerate(self.levels):
            if abs(lev - level) <= 1e-12:
                return float(self.values[i, j])
        raise DomainError(f"level {level} not in table {self.levels}")

    def to_dict(self) -> dict:
        return {
            "k": list(self.dims),
            "levels": list(self.levels),
            "values": self.values.tolist(),
            "meta": {
                "grid": self.grid_points,
                "reps": self.replications,
                "seed": self.seed,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "CriticalValueTable":
        meta = data["meta"]
        return cls(
            dims=tuple(int(k) for k in data["k"]),
            levels=tuple(float(v) for v in data["levels"]),
            values=np.asarray(data["values"], dtype=float),
            grid_points=int(meta["grid"]),
            replications=int(meta["reps"]),
            seed=int(meta["seed"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "CriticalValueTable":
        return cls.from_dict(json.loads(text))


def estimate_quantiles(
    k,
    levels,
    grid_points: int = DEFAULT_GRID_POINTS,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = DEFAULT_SEED,
) -> CriticalValueTable:
    """Monte Carlo table of upper quantiles of the bridge sup-norm law.

    ``k`` may be a single dimension or a sequence.  Each replication draws an
    independent bridge from a seed derived from ``(seed, k, replication)``, so
    results do not depend on chunking or aggregation order.
    """
    dims = (int(k),) if np.isscalar(k) else tuple(int(v) for v in k)
    levels = tuple(float(v) for v in np.atleast_1d(levels))
    if replications < 100:
        raise DomainError("replications must be >= 100")
    if not all(0.0 < lev < 1.0 for lev in levels):
        raise DomainError("levels must lie strictly in (0, 1)")
    values = np.empty((len(dims), len(levels)))
    for i, dim in enumerate(dims):
        sups = np.sort(_sup_sample(dim, grid_points, replications, seed))
        for j, lev in enumerate(levels):
            values[i, j] = sups[_quantile_index(lev, replications) - 1]
    return CriticalValueTable(
        dims=dims,
        levels=levels,
        values=values,
        grid_points=grid_points,
        replications=replications,
        seed=seed,
    )


def save_table(table: CriticalValueTable, path) -> None:
    Path(path).write_text(table.to_json() + "\n")


def load_table(path) -> CriticalValueTable:
    return CriticalValueTable.from_json(Path(path).read_text())


def load_or_compute(
    path,
    k,
    levels,
    grid_points: int = DEFAULT_GRID_POINTS,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = DEFAULT_SEED,
) -> CriticalValueTable:
    """Load a cached table matching the request or compute and cache one."""
    path = Path(path)
    dims = (int(k),) if np.isscalar(k) else tuple(int(v) for v in k)
    levels_t = tuple(float(v) for v in np.atleast_1d(levels))
    if path.exists():
        table = load_table(path)
        matches = (
            table.grid_points == grid_points
            and table.replications == replications
            and table.seed == seed
            and all(d in table.dims for d in dims)
            and all(any(abs(l - lev) <= 1e-12 for lev in table.levels) for l in levels_t)
        )
        if matches:
            return table
    table = estimate_quantiles(dims, levels_t, grid_points, replications, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, path)
    return table


_default_cache: dict[tuple[int, float], float] = {}


def default_critical_value(k: int, level: float) -> float:
    """Default source of ``w_k(level)`` when no table is supplied.

    ``k = 1`` uses the analytic series inversion; higher dimensions use a
    Monte Carlo table at the default grid/replication settings, cached in
    process and, when :data:`CACHE_ENV` points at a file, on disk.
    """
    k = int(k)
    if k == 1:
        return kolmogorov_upper_point(level)
    key = (k, float(level))
    if key not in _default_cache:
        cache_path = os.environ.get(CACHE_ENV)
        if cache_path:
            table = load_or_compute(cache_path, (k,), (level,))
        else:
            table = estimate_quantiles((k,), (level,))
        _default_cache[key] = table.value(k, level)
    return _default_cache[key]


def lookup(k: int, level: float, table: CriticalValueTable | None = None) -> float:
    """Critical value from ``table`` when given, else from the defaults."""
    if table is not None:
        return table.value(k, level)
    return default_critical_value(k, level)
