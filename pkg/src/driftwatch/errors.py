"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class DriftwatchError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DriftwatchError, ValueError):
    """An argument lies outside its mathematical domain."""


class NonPositiveDefiniteDiffusion(DriftwatchError):
    """The diffusion covariance a(x)aᵀ(x) is not positive definite."""

    def __init__(self, x=None, alpha=None, index: int | None = None):
        self.x = x
        self.alpha = alpha
        self.index = index
        where = f" at observation {index}" if index is not None else ""
        super().__init__(f"diffusion covariance not positive definite{where}")


class NumericalBlowup(DriftwatchError):
    """A simulated state coordinate exceeded the blowup threshold."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(
            f"state exceeded blowup threshold at observation {index}; "
            "check parameters and step size"
        )


class OptimizerFailure(DriftwatchError):
    """The numerical optimizer did not converge within its budget."""


class DegenerateRegression(DriftwatchError):
    """The regressor matrix of the drift fit is singular (e.g. constant path)."""


class SingularInformation(DriftwatchError):
    """The drift information matrix has an eigenvalue at or below the floor."""

    def __init__(self, min_eigenvalue: float, floor: float):
        self.min_eigenvalue = min_eigenvalue
        self.floor = floor
        super().__init__(
            f"information matrix nearly singular: min eigenvalue "
            f"{min_eigenvalue:.3e} <= floor {floor:.3e}"
        )


class EmptySeries(DriftwatchError):
    """Too few observations for the requested computation."""


class ParseError(DriftwatchError):
    """A CSV row could not be parsed. ``row`` is the 1-based data row."""

    def __init__(self, row: int, message: str = "malformed row"):
        self.row = row
        super().__init__(f"{message} (data row {row})")


class NonUniformGrid(DriftwatchError):
    """The time column is not equispaced. ``row`` is the offending data row."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"non-uniform time spacing at data row {row}")


class DimensionMismatch(DriftwatchError):
    """Series dimension does not match the model's state dimension."""


class InsufficientSample(DriftwatchError):
    """Not enough statistics in a cell to summarize a distribution."""


class CellAborted(DriftwatchError):
    """A campaign cell exceeded the per-cell failure budget."""

    def __init__(self, cell, failures: int, replications: int):
        self.cell = cell
        self.failures = failures
        self.replications = replications
        super().__init__(
            f"cell {cell} aborted: {failures} failures out of {replications} replications"
        )


class BoundaryHitWarning(UserWarning):
    """An estimate was projected onto the boundary of the parameter box."""
