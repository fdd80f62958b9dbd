"""Exception hierarchy for the ISCAP toolkit."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from iscap.models.solution import SolveReport


class IscapError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(IscapError, ValueError):
    """An argument is outside the set of values an operation accepts."""


class DomainError(InvalidArgumentError):
    """A probability or similar argument lies outside its open domain."""


class ContractViolationError(IscapError):
    """A structural precondition (e.g. Hermitian symmetry) does not hold."""


class SingularityError(IscapError):
    """A field point coincides with (or overlaps) an array element."""


class ScenarioValidationError(IscapError):
    """A scenario document failed validation.

    Attributes:
        field: Dotted path of the offending field, when known
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class QuadratureToleranceError(IscapError):
    """Quadrature refinement hit its node cap before reaching the tolerance."""

    def __init__(self, achieved: float, requested: float, nodes: int) -> None:
        self.achieved = achieved
        self.requested = requested
        self.nodes = nodes
        super().__init__(
            f"quadrature did not converge: achieved {achieved:.3e} "
            f"> requested {requested:.3e} with {nodes} nodes"
        )


class MissingCovarianceError(IscapError, KeyError):
    """No G matrix is available for a (bs, er) pair."""

    def __init__(self, bs_index: int, er_index: int) -> None:
        self.bs_index = bs_index
        self.er_index = er_index
        super().__init__(f"missing covariance G for bs={bs_index}, er={er_index}")


class SolverError(IscapError):
    """A conic solve did not return an optimal point."""

    def __init__(self, message: str, report: SolveReport | None = None) -> None:
        self.report = report
        super().__init__(message)


class InfeasibleProblemError(SolverError):
    """The problem was certified infeasible."""


class NumericalFailureError(SolverError):
    """The solver stopped without a certificate (iteration cap, stall)."""


class DegenerateSolutionError(SolverError):
    """A relaxed optimum grants a CU (numerically) zero desired power."""


class ArtifactError(IscapError):
    """Reading or writing an output artifact failed."""

    def __init__(self, path: Path, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")
