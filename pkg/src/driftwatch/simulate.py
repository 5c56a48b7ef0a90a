"""Euler scheme simulation of discretely observed diffusion paths.

Paths are generated on a fine grid of ``substeps`` Euler steps per recorded
observation; only every ``substeps``-th point is kept.  All noise comes from
per-path :class:`~driftwatch._rng.NormalStream` objects, so a path is a pure
function of its plan and identical plans give bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._rng import NormalStream, derive_seed
from .errors import DomainError, NumericalBlowup
from .model import ChangeScenario, ModelSpec, ObservationSeries, is_builtin_ou

Array = np.ndarray

#: absolute state threshold that flags a misconfigured (non-ergodic) run
BLOWUP_LIMIT = 1e12

#: fine steps buffered per chunk in the batched driver
_CHUNK_STEPS = 16384


def default_step(n: int) -> float:
    """Sampling interval ``n**(-2/3)``, the high-frequency design default."""
    if n < 1:
        raise DomainError("n must be positive")
    return float(n) ** (-2.0 / 3.0)


def derive_replication_seed(master_seed: int, replication_index: int) -> int:
    """Seed for one replication of a campaign keyed by ``master_seed``.

    Deterministic and injective in ``replication_index`` for a fixed master.
    """
    return derive_seed(master_seed, replication_index)


@dataclass(frozen=True, eq=False)
class SimulationPlan:
    """Everything needed to generate one observed path."""

    model: ModelSpec
    n: int
    step: float
    x0: Array
    scenario: ChangeScenario
    substeps: int = 10
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise DomainError("n must be a positive integer")
        if not np.isfinite(self.step) or self.step <= 0:
            raise DomainError("step must be a positive real")
        if int(self.substeps) < 1:
            raise DomainError("substeps must be >= 1")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.model.state_dim,) or not np.all(np.isfinite(x0)):
            raise DomainError("x0 must be a finite vector of the state dimension")
        object.__setattr__(self, "x0", x0)
        space = self.model.param_space
        for alpha, beta in (
            (self.scenario.pre_alpha, self.scenario.pre_beta),
            (self.scenario.post_alpha, self.scenario.post_beta),
        ):
            if not space.contains(alpha, beta):
                raise DomainError("scenario parameters lie outside the parameter box")

    @property
    def horizon(self) -> float:
        return self.n * self.step

    def with_seed(self, seed: int) -> "SimulationPlan":
        return replace(self, seed=int(seed))


def _switch_step(plan: SimulationPlan) -> int:
    """First fine-step index (0-based) simulated with post-change parameters.

    The parameters change strictly after time ``floor(n t*) * step``, so the
    recorded increment that contains the change is generated entirely under
    the post-change regime.
    """
    total = plan.n * plan.substeps
    if plan.scenario.change_fraction is None:
        return total
    return int(math.floor(plan.n * plan.scenario.change_fraction)) * plan.substeps


def _ou_params(scenario: ChangeScenario) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    pre = (float(scenario.pre_alpha[0]), float(scenario.pre_beta[0]), float(scenario.pre_beta[1]))
    post = (float(scenario.post_alpha[0]), float(scenario.post_beta[0]), float(scenario.post_beta[1]))
    return pre, post


def _simulate_batch(plan: SimulationPlan, seeds: Sequence[int]) -> tuple[Array, Array]:
    """Simulate one path per seed; ``plan.seed`` is ignored here.

    Returns ``(values, blown)`` where ``values`` has shape
    ``(len(seeds), n + 1, d)`` and ``blown[b]`` is the first observation index
    at which path ``b`` exceeded :data:`BLOWUP_LIMIT`, or -1.  Each path
    consumes its own normal stream in time order, so membership in a batch
    never changes a path.
    """
    if is_builtin_ou(plan.model):
        return _ou_batch(plan, seeds)
    return _generic_batch(plan, seeds)


def _ou_batch(plan: SimulationPlan, seeds: Sequence[int]) -> tuple[Array, Array]:
    n, m = plan.n, plan.substeps
    total = n * m
    dt = plan.step / m
    sqdt = math.sqrt(dt)
    switch = _switch_step(plan)
    (a1, b1, g1), (a2, b2, g2) = _ou_params(plan.scenario)

    nb = len(seeds)
    streams = [NormalStream(s) for s in seeds]
    out = np.empty((nb, n + 1))
    out[:, 0] = plan.x0[0]
    x = np.full(nb, plan.x0[0])
    blown = np.full(nb, -1, dtype=int)

    with np.errstate(over="ignore", invalid="ignore"):
        j = 0
        while j < total:
            span = min(_CHUNK_STEPS, total - j)
            z = np.empty((nb, span))
            for b, stream in enumerate(streams):
                z[b] = stream.normals(span)
            for k in range(span):
                step_index = j + k
                if step_index >= switch:
                    alpha, beta, gamma = a2, b2, g2
                else:
                    alpha, beta, gamma = a1, b1, g1
                x = x * (1.0 - beta * dt) + beta * gamma * dt + (alpha * sqdt) * z[:, k]
                if (step_index + 1) % m == 0:
                    obs = (step_index + 1) // m
                    out[:, obs] = x
                    bad = (~(np.abs(x) <= BLOWUP_LIMIT)) & (blown < 0)
                    if bad.any():
                        blown[bad] = obs
            j += span
    return out[:, :, None], blown


def _generic_batch(plan: SimulationPlan, seeds: Sequence[int]) -> tuple[Array, Array]:
    model = plan.model
    n, m, d = plan.n, plan.substeps, model.state_dim
    total = n * m
    dt = plan.step / m
    sqdt = math.sqrt(dt)
    switch = _switch_step(plan)
    scen = plan.scenario

    nb = len(seeds)
    out = np.empty((nb, n + 1, d))
    blown = np.full(nb, -1, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        for b, seed in enumerate(seeds):
            z = NormalStream(seed).normals((total, d))
            x = plan.x0.copy()
            out[b, 0] = x
            for j in range(total):
                if j >= switch:
                    alpha, beta = scen.post_alpha, scen.post_beta
                else:
                    alpha, beta = scen.pre_alpha, scen.pre_beta
                drift = model.drift_vector(x, beta)
                diff = model.diffusion_matrix(x, alpha)
                x = x + drift * dt + (diff @ z[j]) * sqdt
                if (j + 1) % m == 0:
                    obs = (j + 1) // m
                    out[b, obs] = x
                    if blown[b] < 0 and not np.all(np.abs(x) <= BLOWUP_LIMIT):
                        blown[b] = obs
    return out, blown


def simulate_path(plan: SimulationPlan) -> ObservationSeries:
    """Generate the observed series for ``plan``.

    Raises :class:`NumericalBlowup` with the first offending observation
    index when a state coordinate exceeds :data:`BLOWUP_LIMIT`.
    """
    values, blown = _simulate_batch(plan, (plan.seed,))
    if blown[0] >= 0:
        raise NumericalBlowup(int(blown[0]))
    return ObservationSeries(values[0], plan.step)
