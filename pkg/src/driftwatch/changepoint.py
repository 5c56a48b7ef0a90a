"""Cusum statistics and the adaptive change-point decision workflow.

Three tests are provided, each a scaled maximum over k of the centered
partial sums ``S_k - (k/n) S_n`` of per-increment summands:

* ``alpha``: summands are normalized squared increments, scale
  ``1/sqrt(2 d n)``; detects a change in the diffusion parameter.
* ``beta1``: summands are scalar drift residual scores, scale
  ``1/sqrt(d n h)``; simple but can miss pure reversion-speed changes.
* ``beta2``: summands are drift score vectors whitened by the inverse square
  root of the information matrix, scale ``1/sqrt(n h)``; compared against the
  sup-norm law of a q-dimensional Brownian bridge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import critvals as _critvals
from .errors import (
    DomainError,
    EmptySeries,
    NonPositiveDefiniteDiffusion,
    SingularInformation,
)
from .estimate import FitOptions, QmleResult, fit_alpha, fit_beta
from .model import ModelSpec, ObservationSeries, is_builtin_ou

Array = np.ndarray

TEST_NAMES = ("alpha", "beta1", "beta2")


def diffusion_cusum_summands(
    series: ObservationSeries, model: ModelSpec, alpha_hat
) -> Array:
    """Per-increment summands of the diffusion test.

    Entry ``i`` is ``incr_i' C_i^{-1} incr_i / h`` with ``C_i`` the diffusion
    covariance at the left endpoint.  For the OU model this is
    ``incr_i**2 / (h alpha_hat**2)``.
    """
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    h = series.step
    if is_builtin_ou(model):
        a = alpha_hat[0]
        if a <= 0:
            raise NonPositiveDefiniteDiffusion(alpha=alpha_hat)
        dx = series.increments()[:, 0]
        return dx * dx / (h * a * a)
    incr = series.increments()
    out = np.empty(series.n)
    for i in range(series.n):
        cov = model.covariance(series.values[i], alpha_hat)
        try:
            chol = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefiniteDiffusion(
                x=series.values[i], alpha=alpha_hat, index=i + 1
            ) from exc
        out[i] = float(incr[i] @ cho_solve(chol, incr[i])) / h
    return out


def drift_cusum_summands(
    series: ObservationSeries, model: ModelSpec, alpha_hat, beta_hat
) -> Array:
    """Scalar drift-residual summands ``1' a^{-1} (incr_i - h drift_i)``.

    For the OU model: ``(incr_i + h beta (X_prev - gamma)) / alpha``.
    """
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    h = series.step
    if is_builtin_ou(model):
        a = alpha_hat[0]
        if a <= 0:
            raise NonPositiveDefiniteDiffusion(alpha=alpha_hat)
        x_prev = series.values[:-1, 0]
        dx = series.increments()[:, 0]
        return (dx + h * beta_hat[0] * (x_prev - beta_hat[1])) / a
    incr = series.increments()
    ones = np.ones(model.state_dim)
    out = np.empty(series.n)
    for i in range(series.n):
        x = series.values[i]
        diff = model.diffusion_matrix(x, alpha_hat)
        try:
            solved = np.linalg.solve(diff, incr[i] - h * model.drift_vector(x, beta_hat))
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefiniteDiffusion(x=x, alpha=alpha_hat, index=i + 1) from exc
        out[i] = float(ones @ solved)
    return out


def drift_score_summands(
    series: ObservationSeries, model: ModelSpec, alpha_hat, beta_hat
) -> Array:
    """Drift score vectors ``J_i' C_i^{-1} (incr_i - h drift_i)``, shape (n, q).

    ``J_i`` is the drift Jacobian in beta at the left endpoint.  For the OU
    model row ``i`` is ``(-(X_prev - gamma), beta) * resid_i / alpha**2``.
    """
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    h = series.step
    if is_builtin_ou(model):
        a = alpha_hat[0]
        if a <= 0:
            raise NonPositiveDefiniteDiffusion(alpha=alpha_hat)
        x_prev = series.values[:-1, 0]
        dx = series.increments()[:, 0]
        resid = (dx + h * beta_hat[0] * (x_prev - beta_hat[1])) / (a * a)
        return np.column_stack((-(x_prev - beta_hat[1]) * resid, beta_hat[0] * resid))
    incr = series.increments()
    out = np.empty((series.n, model.beta_dim))
    for i in range(series.n):
        x = series.values[i]
        cov = model.covariance(x, alpha_hat)
        try:
            chol = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NonPositiveDefiniteDiffusion(x=x, alpha=alpha_hat, index=i + 1) from exc
        resid = incr[i] - h * model.drift_vector(x, beta_hat)
        out[i] = model.drift_jacobian(x, beta_hat).T @ cho_solve(chol, resid)
    return out


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    """Path average of ``J' C^{-1} J`` with its symmetric inverse square root."""

    matrix: Array
    inv_sqrt: Array
    min_eigenvalue: float


def info_matrix(
    series: ObservationSeries, model: ModelSpec, alpha_hat, beta_hat
) -> InfoMatrix:
    """Information-type matrix used to whiten the drift score cusum.

    Raises :class:`SingularInformation` when the smallest eigenvalue is at or
    below the floor ``1e-10 * trace / q``.
    """
    alpha_hat = np.atleast_1d(np.asarray(alpha_hat, dtype=float))
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    q = model.beta_dim
    if series.n < q:
        raise DomainError("need at least q observations for the information matrix")
    if is_builtin_ou(model):
        a, b, g = alpha_hat[0], beta_hat[0], beta_hat[1]
        x_prev = series.values[:-1, 0]
        centered = x_prev - g
        m_cc = float(np.mean(centered * centered))
        m_b = float(np.mean(-b * centered))
        mat = np.array([[m_cc, m_b], [m_b, b * b]]) / (a * a)
    else:
        mat = np.zeros((q, q))
        for i in range(series.n):
            x = series.values[i]
            cov = model.covariance(x, alpha_hat)
            try:
                chol = cho_factor(cov, lower=True)
            except np.linalg.LinAlgError as exc:
                raise NonPositiveDefiniteDiffusion(
                    x=x, alpha=alpha_hat, index=i + 1
                ) from exc
            jac = model.drift_jacobian(x, beta_hat)
            mat += jac.T @ cho_solve(chol, jac)
        mat /= series.n
    mat = 0.5 * (mat + mat.T)
    eigvals, eigvecs = np.linalg.eigh(mat)
    floor = 1e-10 * float(np.trace(mat)) / q
    min_eig = float(eigvals[0])
    if min_eig <= floor:
        raise SingularInformation(min_eig, floor)
    inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return InfoMatrix(matrix=mat, inv_sqrt=inv_sqrt, min_eigenvalue=min_eig)


@dataclass(frozen=True, eq=False)
class CusumProfile:
    """Centered partial-sum path of a summand sequence and its scaled max."""

    summands: Array
    centered_partial_sums: Array
    statistic: float
    argmax_k: int
    scale: float


def cusum_statistic(summands, scale: float, whiten: Array | None = None) -> CusumProfile:
    """Scaled maximum of ``||S_k - (k/n) S_n||`` over ``k = 1..n``.

    ``summands`` is ``(n,)`` for scalar tests or ``(n, q)`` for vector tests;
    ``whiten`` optionally pre-multiplies vector summands.  Ties in the argmax
    break toward the smallest k.  The final centered value is exactly zero by
    construction.
    """
    summands = np.asarray(summands, dtype=float)
    if summands.ndim not in (1, 2):
        raise DomainError("summands must be a 1-d or 2-d array")
    n = summands.shape[0]
    if n < 2:
        raise EmptySeries("cusum needs at least two summands")
    if whiten is not None:
        if summands.ndim != 2:
            raise DomainError("whitening applies to vector summands only")
        summands = summands @ np.asarray(whiten, dtype=float).T
    partial = np.cumsum(summands, axis=0)
    ratio = np.arange(1, n + 1) / n
    if summands.ndim == 1:
        centered = partial - ratio * partial[-1]
        norms = np.abs(centered)
    else:
        centered = partial - ratio[:, None] * partial[-1]
        norms = np.linalg.norm(centered, axis=1)
    argmax = int(np.argmax(norms))
    return CusumProfile(
        summands=summands,
        centered_partial_sums=centered,
        statistic=float(scale * norms[argmax]),
        argmax_k=argmax + 1,
        scale=float(scale),
    )


@dataclass(frozen=True, eq=False)
class TestReport:
    """Decision record of one cusum test."""

    test_name: str
    statistic: float
    critical_value: float
    level: float
    reject: bool
    argmax_k: int
    alpha_hat: Array
    beta_hat: Array | None
    profile: CusumProfile | None = None

    def to_dict(self) -> dict:
        return {
            "test": self.test_name,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "level": self.level,
            "reject": self.reject,
            "argmax_k": self.argmax_k,
            "alpha_hat": self.alpha_hat.tolist(),
            "beta_hat": None if self.beta_hat is None else self.beta_hat.tolist(),
        }


def _alpha_report(series, model, level, critvals, fit: QmleResult) -> TestReport:
    d = model.state_dim
    summands = diffusion_cusum_summands(series, model, fit.alpha_hat)
    profile = cusum_statistic(summands, 1.0 / np.sqrt(2.0 * d * series.n))
    cv = _critvals.lookup(1, level, critvals)
    return TestReport(
        test_name="alpha",
        statistic=profile.statistic,
        critical_value=cv,
        level=level,
        reject=profile.statistic > cv,
        argmax_k=profile.argmax_k,
        alpha_hat=fit.alpha_hat,
        beta_hat=None,
        profile=profile,
    )


def _beta_report(series, model, variant, level, critvals, fit: QmleResult) -> TestReport:
    d = model.state_dim
    h = series.step
    if variant == 1:
        summands = drift_cusum_summands(series, model, fit.alpha_hat, fit.beta_hat)
        profile = cusum_statistic(summands, 1.0 / np.sqrt(d * series.n * h))
        cv = _critvals.lookup(1, level, critvals)
        name = "beta1"
    elif variant == 2:
        scores = drift_score_summands(series, model, fit.alpha_hat, fit.beta_hat)
        info = info_matrix(series, model, fit.alpha_hat, fit.beta_hat)
        profile = cusum_statistic(scores, 1.0 / np.sqrt(series.n * h), whiten=info.inv_sqrt)
        cv = _critvals.lookup(model.beta_dim, level, critvals)
        name = "beta2"
    else:
        raise DomainError("variant must be 1 or 2")
    return TestReport(
        test_name=name,
        statistic=profile.statistic,
        critical_value=cv,
        level=level,
        reject=profile.statistic > cv,
        argmax_k=profile.argmax_k,
        alpha_hat=fit.alpha_hat,
        beta_hat=fit.beta_hat,
        profile=profile,
    )


def test_alpha(
    series: ObservationSeries,
    model: ModelSpec,
    level: float = 0.1,
    critvals=None,
    options: FitOptions | None = None,
) -> TestReport:
    """Cusum test for a change in the diffusion parameter."""
    fit = fit_alpha(series, model, options)
    return _alpha_report(series, model, level, critvals, fit)


def test_beta(
    series: ObservationSeries,
    model: ModelSpec,
    variant: int = 2,
    level: float = 0.1,
    critvals=None,
    options: FitOptions | None = None,
) -> TestReport:
    """Cusum test for a change in the drift parameter (variant 1 or 2)."""
    first = fit_alpha(series, model, options)
    fit = fit_beta(series, model, first.alpha_hat, options)
    return _beta_report(series, model, variant, level, critvals, fit)


def run_tests(
    series: ObservationSeries,
    model: ModelSpec,
    tests=TEST_NAMES,
    level: float = 0.1,
    critvals=None,
    options: FitOptions | None = None,
    adaptive: bool = False,
) -> dict[str, TestReport | None]:
    """Run the requested tests with shared parameter fits.

    Returns a mapping from test name to report.  With ``adaptive=True`` the
    drift tests are skipped (mapped to ``None``) whenever the diffusion test
    rejects, mirroring the two-step decision workflow.
    """
    unknown = set(tests) - set(TEST_NAMES)
    if unknown:
        raise DomainError(f"unknown tests: {sorted(unknown)}")
    reports: dict[str, TestReport | None] = {}
    fit_a = fit_alpha(series, model, options)
    alpha_report = None
    if "alpha" in tests or adaptive:
        alpha_report = _alpha_report(series, model, level, critvals, fit_a)
    if "alpha" in tests:
        reports["alpha"] = alpha_report
    wants_beta = [t for t in ("beta1", "beta2") if t in tests]
    if wants_beta:
        if adaptive and alpha_report is not None and alpha_report.reject:
            for t in wants_beta:
                reports[t] = None
        else:
            fit_b = fit_beta(series, model, fit_a.alpha_hat, options)
            for t in wants_beta:
                reports[t] = _beta_report(
                    series, model, 1 if t == "beta1" else 2, level, critvals, fit_b
                )
    return reports


def adaptive_test(
    series: ObservationSeries,
    model: ModelSpec,
    level: float = 0.1,
    critvals=None,
    options: FitOptions | None = None,
    include_variant1: bool = False,
) -> tuple[TestReport, list[TestReport]]:
    """Two-step workflow: test the diffusion parameter, then the drift.

    The drift is tested only when the diffusion test does not reject.  Returns
    the diffusion report and the list of drift reports (variant 2, plus
    variant 1 when requested); the list is empty when the diffusion test
    rejected.
    """
    tests = ("alpha", "beta1", "beta2") if include_variant1 else ("alpha", "beta2")
    reports = run_tests(
        series, model, tests=tests, level=level, critvals=critvals,
        options=options, adaptive=True,
    )
    alpha_report = reports["alpha"]
    assert alpha_report is not None
    beta_reports = [
        reports[name]
        for name in ("beta2", "beta1")
        if name in reports and reports[name] is not None
    ]
    return alpha_report, beta_reports
