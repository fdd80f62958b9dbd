"""Beamforming solutions and solver reports."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from iscap._compat import StrEnum
from iscap.core.exceptions import ContractViolationError
from iscap.types.arrays import ComplexVector, HermitianMatrix
from iscap.utils.numerics import outer, psd_residual


class SolveStatus(StrEnum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


class Provenance(StrEnum):
    SDR = "SDR"
    MRT = "MRT"
    NON_COORDINATED = "NonCoordinated"
    WORST_CASE_ROBUST = "WorstCaseRobust"
    MANUAL = "Manual"


@dataclass(frozen=True)
class SolveReport:
    """
    Outcome and diagnostics of one design run.

    Slacks are in normalized units (each constraint row divided by its
    scale); a nonnegative slack means the constraint holds.
    """

    status: SolveStatus
    objective: float
    solver: str = ""
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    duality_gap: float = float("nan")
    slacks: dict[str, float] = field(default_factory=dict)
    active: tuple[str, ...] = ()
    ranks: tuple[int, ...] = ()
    reconstruction_error: float | None = None
    solve_time: float = 0.0
    iterations: int = 0
    certificate: str | None = None
    notes: tuple[str, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    def min_slack(self, prefix: str) -> float:
        """Smallest slack among constraints whose label starts with ``prefix``."""
        values = [v for k, v in self.slacks.items() if k.startswith(prefix)]
        return min(values) if values else float("nan")

    def with_updates(self, **changes: object) -> SolveReport:
        return replace(self, **changes)  # type: ignore[arg-type]


@dataclass(frozen=True)
class BeamformingSolution:
    """Per-BS information beam w_k and dual-purpose covariance R_k."""

    info_beams: tuple[ComplexVector, ...]
    dual_covariances: tuple[HermitianMatrix, ...]
    provenance: Provenance
    report: SolveReport | None = None

    @classmethod
    def zeros(cls, dimensions: list[int]) -> BeamformingSolution:
        return cls(
            info_beams=tuple(np.zeros(n, dtype=np.complex128) for n in dimensions),
            dual_covariances=tuple(np.zeros((n, n), dtype=np.complex128) for n in dimensions),
            provenance=Provenance.MANUAL,
        )

    @property
    def K(self) -> int:
        return len(self.info_beams)

    def transmit_covariance(self, k: int) -> HermitianMatrix:
        """w_k w_k^H + R_k."""
        return outer(self.info_beams[k]) + self.dual_covariances[k]

    def bs_power(self, k: int) -> float:
        return float(
            np.vdot(self.info_beams[k], self.info_beams[k]).real
            + np.trace(self.dual_covariances[k]).real
        )

    def check_invariants(self, power_budget: float) -> None:
        """
        Raise if any BS exceeds its budget or has a non-PSD covariance.

        Tolerances: 1e-6 P_max on power, 1e-7 P_max on the PSD residual.
        """
        if len(self.dual_covariances) != self.K:
            raise ContractViolationError("info beams and covariances differ in count")
        for k in range(self.K):
            power = self.bs_power(k)
            if power > power_budget * (1.0 + 1e-6):
                raise ContractViolationError(
                    f"bs {k} transmits {power:.6e} W > budget {power_budget:.6e} W"
                )
            residual = psd_residual(self.dual_covariances[k])
            if residual > 1e-7 * power_budget:
                raise ContractViolationError(
                    f"bs {k} dual covariance not PSD (residual {residual:.3e})"
                )

    def with_report(self, report: SolveReport) -> BeamformingSolution:
        return replace(self, report=report)
