"""Quasi-likelihoods and the two-step estimator for diffusion and drift.

The diffusion block ``alpha`` is fitted first by maximizing the Gaussian
quasi-log likelihood built from squared increments; the drift block ``beta``
is then fitted given ``alpha`` from the drift-corrected increments.  The
built-in OU model has closed forms for both stages; every other model goes
through a bounded Nelder-Mead search over the parameter box.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import (
    BoundaryHitWarning,
    DegenerateRegression,
    DomainError,
    NonPositiveDefiniteDiffusion,
    OptimizerFailure,
)
from .model import (
    ChangeScenario,
    ModelSpec,
    ObservationSeries,
    ParamBox,
    is_builtin_ou,
)

Array = np.ndarray


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the generic optimizer; closed forms ignore most of them."""

    use_closed_form: bool = True
    restarts: int = 5
    max_evals: int = 2000
    xatol: float = 1e-8


@dataclass(frozen=True)
class OptimizerTrace:
    iterations: int
    evaluations: int
    converged: bool
    grad_norm: float
    method: str

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "method": self.method,
        }


@dataclass(frozen=True, eq=False)
class QmleResult:
    """Fitted parameters with their objective values and optimizer trace."""

    alpha_hat: Array
    beta_hat: Array | None
    u1_value: float
    u2_value: float | None
    trace: OptimizerTrace
    boundary: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat.tolist(),
            "beta_hat": None if self.beta_hat is None else self.beta_hat.tolist(),
            "u1": self.u1_value,
            "u2": self.u2_value,
            "trace": self.trace.to_dict(),
            "boundary": list(self.boundary),
        }


def _check_series(series: ObservationSeries, model: ModelSpec) -> None:
    if series.state_dim != model.state_dim:
        from .errors import DimensionMismatch

        raise DimensionMismatch(
            f"series dimension {series.state_dim} != model dimension {model.state_dim}"
        )


def quasi_loglik_diffusion(series: ObservationSeries, model: ModelSpec, alpha) -> float:
    """Gaussian quasi-log likelihood of the diffusion parameter.

    ``-1/2 sum_i [ incr_i' C_i^{-1} incr_i / h + log det C_i ]`` where ``C_i``
    is the diffusion covariance at the left endpoint of increment ``i``.
    """
    _check_series(series, model)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    h = series.step
    if is_builtin_ou(model):
        a = alpha[0]
        if a <= 0:
            raise NonPositiveDefiniteDiffusion(alpha=alpha)
        dx = series.increments()[:, 0]
        n = series.n
        return float(-0.5 * np.sum(dx * dx) / (h * a * a) - n * math.log(a))
    total = 0.0
    incr = series.increments()
    for i in range(series.n):
        cov = model.covariance(series.values[i], alpha)
        try:
            chol = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefiniteDiffusion(
                x=series.values[i], alpha=alpha, index=i + 1
            ) from exc
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        quad = float(incr[i] @ cho_solve(chol, incr[i]))
        total += quad / h + logdet
    return -0.5 * total


def quasi_loglik_drift(
    series: ObservationSeries, model: ModelSpec, beta, alpha
) -> float:
    """Gaussian quasi-log likelihood of the drift parameter given ``alpha``.

    ``-1/(2h) sum_i r_i' C_i^{-1} r_i`` with residuals
    ``r_i = incr_i - h * drift(X_{i-1}, beta)``.
    """
    _check_series(series, model)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    h = series.step
    if is_builtin_ou(model):
        a = alpha[0]
        if a <= 0:
            raise NonPositiveDefiniteDiffusion(alpha=alpha)
        x_prev = series.values[:-1, 0]
        dx = series.increments()[:, 0]
        resid = dx + h * beta[0] * (x_prev - beta[1])
        return float(-0.5 * np.sum(resid * resid) / (h * a * a))
    total = 0.0
    incr = series.increments()
    for i in range(series.n):
        x = series.values[i]
        cov = model.covariance(x, alpha)
        try:
            chol = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefiniteDiffusion(x=x, alpha=alpha, index=i + 1) from exc
        resid = incr[i] - h * model.drift_vector(x, beta)
        total += float(resid @ cho_solve(chol, resid)) / h
    return -0.5 * total


def _probe_points(box: ParamBox, count: int) -> Array:
    # Deterministic Sobol probes strictly inside the box (skip the corner point).
    sampler = qmc.Sobol(d=box.dim, scramble=False)
    size = 1
    while size < count + 1:
        size *= 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        unit = sampler.random(size)[1 : count + 1]
    return box.lower + unit * (box.upper - box.lower)


def _fd_grad_norm(fun, x: Array) -> float:
    grad = np.empty(x.size)
    for j in range(x.size):
        step = 1e-6 * max(1.0, abs(x[j]))
        up = x.copy()
        dn = x.copy()
        up[j] += step
        dn[j] -= step
        grad[j] = (fun(up) - fun(dn)) / (2 * step)
    return float(np.linalg.norm(grad))


def _nelder_mead_max(fun, box: ParamBox, options: FitOptions) -> tuple[Array, float, OptimizerTrace]:
    """Maximize ``fun`` over the box.

    A deterministic Sobol probe grid is screened by objective value, the
    simplex search restarts from the best probes, and a final restart from
    the incumbent polishes the result.
    """
    bounds = box.scipy_bounds()
    probes = _probe_points(box, max(64, 8 * options.restarts))
    scores = np.array([fun(p) for p in probes])
    evals = probes.shape[0]
    if not np.any(np.isfinite(scores)):
        raise OptimizerFailure("objective not finite at any probe point")
    order = np.argsort(-scores)
    starts = list(probes[order[: options.restarts]])

    best = None
    iters = 0
    converged = False

    def run(start):
        return minimize(
            lambda v: -fun(v),
            start,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "xatol": options.xatol,
                "fatol": 1e-12,
                "maxfev": options.max_evals,
                "maxiter": options.max_evals,
            },
        )

    for start in starts:
        res = run(start)
        iters += int(res.nit)
        evals += int(res.nfev)
        converged = converged or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not converged:
        raise OptimizerFailure("no restart converged within the evaluation budget")
    polish = run(best.x)
    iters += int(polish.nit)
    evals += int(polish.nfev)
    if polish.fun < best.fun:
        best = polish
    x = np.asarray(best.x, dtype=float)
    trace = OptimizerTrace(
        iterations=iters,
        evaluations=evals,
        converged=True,
        grad_norm=_fd_grad_norm(fun, x),
        method="nelder-mead",
    )
    return x, float(-best.fun), trace


def _warn_boundary(names: tuple[str, ...]) -> None:
    if names:
        warnings.warn(
            f"estimate projected onto the parameter boundary: {', '.join(names)}",
            BoundaryHitWarning,
            stacklevel=3,
        )


def fit_alpha(
    series: ObservationSeries, model: ModelSpec, options: FitOptions | None = None
) -> QmleResult:
    """Fit the diffusion parameter by maximizing its quasi-log likelihood.

    For the built-in OU model the exact maximizer
    ``alpha_hat**2 = mean(incr**2) / h`` is used; other models run the bounded
    Nelder-Mead search.  Estimates are projected onto the parameter box and a
    :class:`BoundaryHitWarning` is emitted on projection.
    """
    _check_series(series, model)
    options = options or FitOptions()
    if series.n < max(10, model.alpha_dim + 1):
        raise DomainError("series too short to fit the diffusion parameter")
    box = model.param_space.alpha

    if is_builtin_ou(model) and options.use_closed_form:
        dx = series.increments()[:, 0]
        raw = math.sqrt(float(np.mean(dx * dx)) / series.step)
        alpha_hat = box.clip([raw])
        boundary = ("alpha",) if alpha_hat[0] != raw else ()
        _warn_boundary(boundary)
        value = quasi_loglik_diffusion(series, model, alpha_hat)
        trace = OptimizerTrace(
            iterations=0,
            evaluations=1,
            converged=True,
            grad_norm=_fd_grad_norm(
                lambda v: quasi_loglik_diffusion(series, model, v), alpha_hat
            ),
            method="closed-form",
        )
        return QmleResult(alpha_hat, None, value, None, trace, boundary)

    def objective(v):
        try:
            return quasi_loglik_diffusion(series, model, v)
        except NonPositiveDefiniteDiffusion:
            return -np.inf

    alpha_hat, value, trace = _nelder_mead_max(objective, box, options)
    boundary = ("alpha",) if box.on_boundary(alpha_hat) else ()
    _warn_boundary(boundary)
    return QmleResult(alpha_hat, None, value, None, trace, boundary)


def fit_beta(
    series: ObservationSeries,
    model: ModelSpec,
    alpha_hat,
    options: FitOptions | None = None,
) -> QmleResult:
    """Fit the drift parameter given ``alpha_hat``.

    The OU fast path regresses increments on ``(X_prev, 1)``:
    ``beta_hat = -slope / h`` and ``gamma_hat = intercept / (h beta_hat)``.
    Raises :class:`DegenerateRegression` when the regressor has no variance.
    """
    _check_series(series, model)
    options = options or FitOptions()
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    if series.n < max(10, model.beta_dim + 1):
        raise DomainError("series too short to fit the drift parameter")
    box = model.param_space.beta
    h = series.step

    if is_builtin_ou(model) and options.use_closed_form:
        x_prev = series.values[:-1, 0]
        dx = series.increments()[:, 0]
        var = float(np.var(x_prev))
        if var <= 1e-20 * max(1.0, float(np.mean(x_prev * x_prev))):
            raise DegenerateRegression("regressor variance is zero (constant path)")
        cov = float(np.mean(x_prev * dx)) - float(np.mean(x_prev)) * float(np.mean(dx))
        slope = cov / var
        intercept = float(np.mean(dx)) - slope * float(np.mean(x_prev))
        beta_raw = -slope / h
        if beta_raw > 0:
            gamma_raw = intercept / (h * beta_raw)
        else:
            # no mean reversion in the data; the level is unidentified
            gamma_raw = float(np.mean(x_prev))
        beta_hat = box.clip([beta_raw, gamma_raw])
        boundary = []
        if beta_hat[0] != beta_raw:
            boundary.append("beta")
        if beta_hat[1] != gamma_raw:
            boundary.append("gamma")
        boundary = tuple(boundary)
        _warn_boundary(boundary)
        u2_value = quasi_loglik_drift(series, model, beta_hat, alpha_hat)
        trace = OptimizerTrace(
            iterations=0,
            evaluations=1,
            converged=True,
            grad_norm=_fd_grad_norm(
                lambda v: quasi_loglik_drift(series, model, v, alpha_hat), beta_hat
            ),
            method="closed-form",
        )
        u1_value = quasi_loglik_diffusion(series, model, alpha_hat)
        return QmleResult(alpha_hat, beta_hat, u1_value, u2_value, trace, boundary)

    def objective(v):
        try:
            return quasi_loglik_drift(series, model, v, alpha_hat)
        except NonPositiveDefiniteDiffusion:
            return -np.inf

    beta_hat, u2_value, trace = _nelder_mead_max(objective, box, options)
    boundary = ("beta",) if box.on_boundary(beta_hat) else ()
    _warn_boundary(boundary)
    u1_value = quasi_loglik_diffusion(series, model, alpha_hat)
    return QmleResult(alpha_hat, beta_hat, u1_value, u2_value, trace, boundary)


def fit(
    series: ObservationSeries, model: ModelSpec, options: FitOptions | None = None
) -> QmleResult:
    """Two-step fit: diffusion parameter first, then drift given it."""
    first = fit_alpha(series, model, options)
    second = fit_beta(series, model, first.alpha_hat, options)
    return QmleResult(
        alpha_hat=first.alpha_hat,
        beta_hat=second.beta_hat,
        u1_value=first.u1_value,
        u2_value=second.u2_value,
        trace=second.trace,
        boundary=tuple(dict.fromkeys(first.boundary + second.boundary)),
    )


def ou_misspecified_limits(
    scenario: ChangeScenario, alpha0: float
) -> tuple[float, float]:
    """Large-sample limits of the full-sample OU drift fit under a drift change.

    When the drift parameters move from ``(beta1, gamma1)`` to
    ``(beta2, gamma2)`` at fraction ``t`` of the window while the diffusion
    parameter stays at ``alpha0``, the full-sample estimates converge to::

        gamma_bar = t * gamma1 + (1 - t) * gamma2
        beta_bar  = 1 / ( t / beta1 + (1 - t) / beta2
                          + (2 / alpha0**2) * t * (1 - t) * (gamma1 - gamma2)**2 )
    """
    beta1, gamma1 = float(scenario.pre_beta[0]), float(scenario.pre_beta[1])
    beta2, gamma2 = float(scenario.post_beta[0]), float(scenario.post_beta[1])
    if beta1 <= 0 or beta2 <= 0:
        raise DomainError("reversion speeds must be positive")
    if float(alpha0) <= 0:
        raise DomainError("alpha0 must be positive")
    if scenario.change_fraction is None:
        if beta1 == beta2 and gamma1 == gamma2:
            return beta1, gamma1
        raise DomainError("scenario with differing parameters needs a change_fraction")
    t = scenario.change_fraction
    gamma_bar = t * gamma1 + (1.0 - t) * gamma2
    denom = (
        t / beta1
        + (1.0 - t) / beta2
        + (2.0 / float(alpha0) ** 2) * t * (1.0 - t) * (gamma1 - gamma2) ** 2
    )
    return 1.0 / denom, gamma_bar
