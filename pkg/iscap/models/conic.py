"""Conic problem data: Hermitian PSD blocks, one free scalar, linear rows."""

from __future__ import annotations

from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from iscap._compat import StrEnum
from iscap.core.exceptions import ContractViolationError
from iscap.types.arrays import HermitianMatrix
from iscap.utils.numerics import ensure_hermitian, trace_inner


class ConstraintKind(StrEnum):
    SENSING = "sensing"
    SINR = "sinr"
    HARVEST = "harvest"
    POWER = "power"


class Sense(StrEnum):
    GE = ">="
    LE = "<="


@dataclass(frozen=True)
class LinearConstraint:
    """
    sum_j Re trace(C_j X_j) + theta * Theta (sense) rhs.

    ``coefficients`` maps block index to a Hermitian matrix C_j.
    """

    label: str
    kind: ConstraintKind
    coefficients: Mapping[int, HermitianMatrix]
    theta: float
    sense: Sense
    rhs: float

    def value(self, blocks: Sequence[HermitianMatrix], theta: float) -> float:
        total = self.theta * theta
        for j, c in self.coefficients.items():
            total += trace_inner(c, blocks[j])
        return total

    def slack(self, blocks: Sequence[HermitianMatrix], theta: float) -> float:
        """Nonnegative when the row holds."""
        value = self.value(blocks, theta)
        return value - self.rhs if self.sense is Sense.GE else self.rhs - value


@dataclass(frozen=True)
class ConicProblem:
    """
    maximize Theta over PSD blocks X_j and free Theta subject to linear rows.

    ``variable_scale`` is a typical block trace (the power budget) used to
    normalize the problem before it reaches a solver.
    """

    block_dims: tuple[int, ...]
    block_names: tuple[str, ...]
    constraints: tuple[LinearConstraint, ...]
    variable_scale: float = 1.0
    label: str = ""

    def __post_init__(self) -> None:
        if len(self.block_dims) != len(self.block_names):
            raise ContractViolationError("block_dims and block_names differ in length")
        for row in self.constraints:
            for j, c in row.coefficients.items():
                if not 0 <= j < len(self.block_dims):
                    raise ContractViolationError(f"{row.label}: unknown block {j}")
                if c.shape != (self.block_dims[j], self.block_dims[j]):
                    raise ContractViolationError(
                        f"{row.label}: coefficient for {self.block_names[j]} "
                        f"has shape {c.shape}"
                    )
                ensure_hermitian(c, f"{row.label} coefficient")

    @property
    def block_count(self) -> int:
        return len(self.block_dims)

    def count_by_kind(self) -> dict[ConstraintKind, int]:
        return dict(Counter(row.kind for row in self.constraints))

    def without(self, kind: ConstraintKind) -> ConicProblem:
        """Copy with every row of ``kind`` removed."""
        rows = tuple(row for row in self.constraints if row.kind is not kind)
        return ConicProblem(
            self.block_dims, self.block_names, rows, self.variable_scale, self.label
        )

    def slacks(self, blocks: Sequence[HermitianMatrix], theta: float) -> dict[str, float]:
        return {row.label: row.slack(blocks, theta) for row in self.constraints}

    def normalized(self) -> NormalizedProblem:
        """
        Rescale blocks by ``variable_scale``, Theta by an upper bound on the
        objective, and every row by its largest coefficient or rhs.
        """
        s = self.variable_scale
        norms = {
            (i, j): float(np.max(np.abs(linalg.eigvalsh(c))))
            for i, row in enumerate(self.constraints)
            for j, c in row.coefficients.items()
        }

        bounds = [
            sum(s * norms[(i, j)] for j in row.coefficients) / abs(row.theta)
            for i, row in enumerate(self.constraints)
            if row.theta != 0.0
        ]
        positive = [b for b in bounds if b > 0]
        t = min(positive) if positive else 1.0

        rows: list[LinearConstraint] = []
        scales: list[float] = []
        for i, row in enumerate(self.constraints):
            candidates = [abs(row.rhs), abs(row.theta) * t]
            candidates += [s * norms[(i, j)] for j in row.coefficients]
            r = max(candidates)
            r = r if r > 0 else 1.0
            scales.append(r)
            rows.append(
                LinearConstraint(
                    label=row.label,
                    kind=row.kind,
                    coefficients={j: c * (s / r) for j, c in row.coefficients.items()},
                    theta=row.theta * t / r,
                    sense=row.sense,
                    rhs=row.rhs / r,
                )
            )
        scaled = ConicProblem(self.block_dims, self.block_names, tuple(rows), 1.0, self.label)
        return NormalizedProblem(scaled, s, t, tuple(scales))


@dataclass(frozen=True)
class NormalizedProblem:
    """A problem in solver units plus the factors mapping back to physical ones."""

    problem: ConicProblem
    variable_scale: float
    theta_scale: float
    row_scales: tuple[float, ...] = field(default=())
