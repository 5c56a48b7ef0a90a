"""Shared fixtures: the built-in model, small critical-value tables, helpers."""

from __future__ import annotations

import numpy as np
import pytest

from driftwatch import critvals as cv
from driftwatch.model import (
    ChangeScenario,
    ModelSpec,
    ObservationSeries,
    ParamBox,
    ParamSpace,
    ou_model,
)


@pytest.fixture(scope="session")
def ou():
    return ou_model()


@pytest.fixture(scope="session")
def small_table():
    """Cheap Monte Carlo table for unit tests that need a k=2 critical value."""
    return cv.estimate_quantiles((1, 2), (0.1, 0.05), grid_points=2000, replications=2000, seed=11)


def make_series(values, step) -> ObservationSeries:
    return ObservationSeries(np.asarray(values, dtype=float), step)


def ou_twin(alpha_low: float = 0.0) -> ModelSpec:
    """Generic (non-fast-path) clone of the OU dynamics for cross-checks."""
    return ModelSpec(
        state_dim=1,
        alpha_dim=1,
        beta_dim=2,
        drift=lambda x, b: np.array([-b[0] * (x[0] - b[1])]),
        diffusion=lambda x, a: np.array([[a[0]]]),
        param_space=ParamSpace(
            alpha=ParamBox([alpha_low], [100.0]),
            beta=ParamBox([1e-3, -100.0], [100.0, 100.0]),
        ),
        drift_jacobian_beta=lambda x, b: np.array([[-(x[0] - b[1]), b[0]]]),
        name="ou-twin",
    )


def no_change(alpha=1.0, beta=1.0, gamma=1.0) -> ChangeScenario:
    return ChangeScenario.no_change([alpha], [beta, gamma])
