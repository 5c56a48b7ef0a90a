"""Diffusion model specifications, parameter boxes, and the built-in OU model.

A model is the pair of coefficient functions of the stochastic differential
equation ``dX = b(X, beta) dt + a(X, alpha) dW`` together with the box that
the two parameter blocks live in.  ``alpha`` drives the diffusion coefficient
``a`` and ``beta`` drives the drift ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NonPositiveDefiniteDiffusion

Array = np.ndarray

#: relative tolerance for user-supplied drift Jacobians vs finite differences
JACOBIAN_RTOL = 1e-5


def _as_vector(value, dim: int, name: str) -> Array:
    out = np.atleast_1d(np.asarray(value, dtype=float))
    if out.shape != (dim,):
        raise DomainError(f"{name} must have shape ({dim},), got {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class ParamBox:
    """Axis-aligned box of closed intervals, one per parameter coordinate."""

    lower: Array
    upper: Array

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DomainError("bounds must be 1-d arrays of equal length")
        if np.any(lower > upper):
            raise DomainError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, value) -> bool:
        v = np.asarray(value, dtype=float)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def clip(self, value) -> Array:
        return np.clip(np.asarray(value, dtype=float), self.lower, self.upper)

    def on_boundary(self, value, rtol: float = 1e-9) -> bool:
        v = np.asarray(value, dtype=float)
        span = np.maximum(self.upper - self.lower, 1.0)
        return bool(
            np.any(v - self.lower <= rtol * span) or np.any(self.upper - v <= rtol * span)
        )

    def scipy_bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist()))


@dataclass(frozen=True, eq=False)
class ParamSpace:
    """Product box for the diffusion block (alpha) and the drift block (beta)."""

    alpha: ParamBox
    beta: ParamBox

    def contains(self, alpha, beta) -> bool:
        return self.alpha.contains(alpha) and self.beta.contains(beta)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Coefficient functions and parameter space of a diffusion model.

    Parameters
    ----------
    state_dim, alpha_dim, beta_dim:
        Dimensions of the state, the diffusion parameter, and the drift
        parameter.
    drift:
        ``(x, beta) -> (d,)`` drift vector.
    diffusion:
        ``(x, alpha) -> (d, d)`` diffusion coefficient matrix.
    param_space:
        Box the parameters live in.
    drift_jacobian_beta:
        Optional ``(x, beta) -> (d, q)`` Jacobian of the drift in beta.  When
        absent a central finite difference is used and flagged in validation
        reports.

    Instances are immutable and safe to share between workers; the coefficient
    functions must be pure.
    """

    state_dim: int
    alpha_dim: int
    beta_dim: int
    drift: Callable[[Array, Array], Array]
    diffusion: Callable[[Array, Array], Array]
    param_space: ParamSpace
    drift_jacobian_beta: Callable[[Array, Array], Array] | None = None
    name: str = "custom"

    def __post_init__(self):
        for attr in ("state_dim", "alpha_dim", "beta_dim"):
            if int(getattr(self, attr)) < 1:
                raise DomainError(f"{attr} must be a positive integer")
        if self.param_space.alpha.dim != self.alpha_dim:
            raise DomainError("alpha box dimension does not match alpha_dim")
        if self.param_space.beta.dim != self.beta_dim:
            raise DomainError("beta box dimension does not match beta_dim")

    @property
    def has_exact_jacobian(self) -> bool:
        return self.drift_jacobian_beta is not None

    def drift_vector(self, x, beta) -> Array:
        return _as_vector(self.drift(x, beta), self.state_dim, "drift(x, beta)")

    def diffusion_matrix(self, x, alpha) -> Array:
        a = np.atleast_2d(np.asarray(self.diffusion(x, alpha), dtype=float))
        if a.shape != (self.state_dim, self.state_dim):
            raise DomainError(
                f"diffusion(x, alpha) must be {self.state_dim}x{self.state_dim}"
            )
        return a

    def covariance(self, x, alpha) -> Array:
        """Diffusion covariance ``a(x, alpha) @ a(x, alpha).T``."""
        a = self.diffusion_matrix(x, alpha)
        return a @ a.T

    def drift_jacobian(self, x, beta) -> Array:
        """Jacobian of the drift in beta, shape ``(d, q)``.

        Falls back to a central finite difference with step
        ``1e-6 * max(1, |beta_j|)`` per coordinate when the model does not
        supply one.
        """
        if self.drift_jacobian_beta is not None:
            jac = np.atleast_2d(np.asarray(self.drift_jacobian_beta(x, beta), dtype=float))
            if jac.shape != (self.state_dim, self.beta_dim):
                raise DomainError(
                    f"drift_jacobian_beta must be {self.state_dim}x{self.beta_dim}"
                )
            return jac
        return self.finite_difference_jacobian(x, beta)

    def finite_difference_jacobian(self, x, beta) -> Array:
        beta = np.asarray(beta, dtype=float)
        jac = np.empty((self.state_dim, self.beta_dim))
        for j in range(self.beta_dim):
            step = 1e-6 * max(1.0, abs(beta[j]))
            up = beta.copy()
            dn = beta.copy()
            up[j] += step
            dn[j] -= step
            jac[:, j] = (self.drift_vector(x, up) - self.drift_vector(x, dn)) / (2 * step)
        return jac


def is_builtin_ou(model: ModelSpec) -> bool:
    """True when the fast closed-form paths for the built-in OU model apply."""
    return model.name == "ou" and (
        model.state_dim,
        model.alpha_dim,
        model.beta_dim,
    ) == (1, 1, 2)


def ou_model(
    alpha_bounds: tuple[float, float] = (1e-3, 100.0),
    beta_bounds: tuple[float, float] = (1e-3, 100.0),
    gamma_bounds: tuple[float, float] = (-100.0, 100.0),
) -> ModelSpec:
    """The 1-d mean-reverting model ``dX = -beta (X - gamma) dt + alpha dW``.

    Parameters are ``alpha = [alpha]`` (diffusion) and ``beta = [beta, gamma]``
    (reversion speed and long-run level).  The default box keeps
    ``alpha, beta > 0`` as the model requires.
    """
    if alpha_bounds[0] <= 0 or beta_bounds[0] <= 0:
        raise DomainError("alpha and beta lower bounds must be positive")

    def drift(x, b):
        return np.array([-b[0] * (x[0] - b[1])])

    def drift_jacobian(x, b):
        return np.array([[-(x[0] - b[1]), b[0]]])

    def diffusion(x, a):
        return np.array([[a[0]]])

    space = ParamSpace(
        alpha=ParamBox([alpha_bounds[0]], [alpha_bounds[1]]),
        beta=ParamBox(
            [beta_bounds[0], gamma_bounds[0]], [beta_bounds[1], gamma_bounds[1]]
        ),
    )
    return ModelSpec(
        state_dim=1,
        alpha_dim=1,
        beta_dim=2,
        drift=drift,
        diffusion=diffusion,
        param_space=space,
        drift_jacobian_beta=drift_jacobian,
        name="ou",
    )


def ou_invariant_moments(alpha: float, beta: float, gamma: float) -> tuple[float, float]:
    """Mean and variance of the stationary law of the OU model.

    The stationary distribution is normal with mean ``gamma`` and variance
    ``alpha**2 / (2 beta)``.
    """
    if alpha <= 0 or beta <= 0:
        raise DomainError("alpha and beta must be positive")
    return float(gamma), float(alpha) ** 2 / (2.0 * float(beta))


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Equispaced discrete observations of a d-dimensional path.

    ``values`` has shape ``(n + 1, d)`` (a 1-d array is treated as d = 1) and
    ``step`` is the uniform sampling interval.  Increments are derived from
    views of the stored array; the series itself is never copied or mutated.
    """

    values: Array
    step: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 2:
            raise DomainError("values must hold at least two observations")
        if not np.all(np.isfinite(values)):
            raise DomainError("observations must be finite")
        step = float(self.step)
        if not np.isfinite(step) or step <= 0:
            raise DomainError("step must be a positive real")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "step", step)

    @property
    def n(self) -> int:
        """Number of observation intervals."""
        return self.values.shape[0] - 1

    @property
    def state_dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return self.n * self.step

    def increments(self) -> Array:
        """Increment matrix ``values[i] - values[i-1]``, shape ``(n, d)``."""
        return self.values[1:] - self.values[:-1]

    def times(self) -> Array:
        return np.arange(self.values.shape[0]) * self.step


@dataclass(frozen=True, eq=False)
class ChangeScenario:
    """Pre/post parameter values with an optional in-sample change point.

    ``change_fraction`` is the fraction of the observation window before the
    change; ``None`` means no change is simulated and the post values are
    ignored.
    """

    pre_alpha: Array
    pre_beta: Array
    post_alpha: Array
    post_beta: Array
    change_fraction: float | None = None

    def __post_init__(self):
        for field in ("pre_alpha", "pre_beta", "post_alpha", "post_beta"):
            arr = np.atleast_1d(np.asarray(getattr(self, field), dtype=float))
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{field} must be finite")
            object.__setattr__(self, field, arr)
        if self.pre_alpha.shape != self.post_alpha.shape:
            raise DomainError("pre and post alpha must have the same shape")
        if self.pre_beta.shape != self.post_beta.shape:
            raise DomainError("pre and post beta must have the same shape")
        if self.change_fraction is not None:
            t = float(self.change_fraction)
            if not 0.0 < t < 1.0:
                raise DomainError("change_fraction must lie strictly in (0, 1)")
            object.__setattr__(self, "change_fraction", t)

    @classmethod
    def no_change(cls, alpha, beta) -> "ChangeScenario":
        return cls(alpha, beta, alpha, beta, None)

    @property
    def has_change(self) -> bool:
        return self.change_fraction is not None

    def is_effective_change(self) -> bool:
        """True when a change point exists and actually alters a parameter."""
        return self.has_change and (
            not np.array_equal(self.pre_alpha, self.post_alpha)
            or not np.array_equal(self.pre_beta, self.post_beta)
        )


@dataclass(frozen=True)
class ValidationReport:
    """Spot-check results for a model over a probe set."""

    probes: int
    min_det_covariance: float
    max_jacobian_mismatch: float
    jacobian_from_finite_difference: bool
    passed: bool


def validate_model(
    spec: ModelSpec, probes: Sequence[tuple[Array, tuple[Array, Array]]]
) -> ValidationReport:
    """Probe a model at the given ``(x, (alpha, beta))`` points.

    Checks that the diffusion covariance has positive determinant at every
    probe and that the drift Jacobian agrees with central finite differences
    to relative tolerance ``JACOBIAN_RTOL``.  Raises
    :class:`NonPositiveDefiniteDiffusion` on a degenerate covariance.
    """
    if len(probes) == 0:
        raise DomainError("probes must be non-empty")
    min_det = np.inf
    max_mismatch = 0.0
    for x, (alpha, beta) in probes:
        x = _as_vector(x, spec.state_dim, "probe x")
        alpha = _as_vector(alpha, spec.alpha_dim, "probe alpha")
        beta = _as_vector(beta, spec.beta_dim, "probe beta")
        if not spec.param_space.contains(alpha, beta):
            raise DomainError("probe parameters lie outside the parameter box")
        det = float(np.linalg.det(spec.covariance(x, alpha)))
        if det <= 0.0:
            raise NonPositiveDefiniteDiffusion(x=x, alpha=alpha)
        min_det = min(min_det, det)
        jac = spec.drift_jacobian(x, beta)
        fd = spec.finite_difference_jacobian(x, beta)
        scale = max(1.0, float(np.max(np.abs(jac))))
        max_mismatch = max(max_mismatch, float(np.max(np.abs(jac - fd))) / scale)
    return ValidationReport(
        probes=len(probes),
        min_det_covariance=min_det,
        max_jacobian_mismatch=max_mismatch,
        jacobian_from_finite_difference=not spec.has_exact_jacobian,
        passed=min_det > 0.0 and max_mismatch < JACOBIAN_RTOL,
    )
