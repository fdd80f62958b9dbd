"""
Fixed-direction (MRT) designs.

Directions are fixed per BS: the information beam along the CU channel, the
WPT beam along the principal eigenvector of G_{k,k}, and the sensing beam
along the principal eigenvector of the averaged round-trip matrix A_k. Only
the three powers per BS remain, giving a small LP. Sensing rows sum the
echo of every BS at each sample point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from structlog import get_logger

from iscap.clients.conic_solver import solve_sdp
from iscap.core.exceptions import (
    ContractViolationError,
    InfeasibleProblemError,
    NumericalFailureError,
)
from iscap.models.conic import ConicProblem, ConstraintKind, LinearConstraint, Sense
from iscap.models.scenario import CuType, Scenario
from iscap.models.solution import BeamformingSolution, Provenance, SolveReport, SolveStatus
from iscap.services.channels import channel_vector, echo_weight
from iscap.services.covariance import CovarianceSet
from iscap.services.metrics import echo_power, round_trip_matrix
from iscap.types.arrays import ComplexVector, HermitianMatrix
from iscap.utils.numerics import outer, principal_eigenpair, quad_form

logger = get_logger()

ASYMPTOTIC_NOTE = "asymptotic approximation"

_BEAMS = ("c", "e", "s")


@dataclass(frozen=True)
class BeamDirections:
    """Unit beam directions and round-trip matrices, one entry per BS."""

    info: tuple[ComplexVector, ...]
    wpt: tuple[ComplexVector, ...]
    sensing: tuple[ComplexVector, ...]
    round_trip: tuple[HermitianMatrix, ...]

    def beams(self, k: int) -> tuple[ComplexVector, ComplexVector, ComplexVector]:
        return self.info[k], self.wpt[k], self.sensing[k]


@dataclass(frozen=True)
class PowerAllocation:
    """Powers (W) of the information, WPT and sensing beams per BS."""

    rho_c: tuple[float, ...]
    rho_e: tuple[float, ...]
    rho_s: tuple[float, ...]
    theta: float
    asymptotic: bool = False

    @property
    def K(self) -> int:
        return len(self.rho_c)

    def total(self, k: int) -> float:
        return self.rho_c[k] + self.rho_e[k] + self.rho_s[k]

    def check_invariants(self, power_budget: float) -> None:
        for k in range(self.K):
            if min(self.rho_c[k], self.rho_e[k], self.rho_s[k]) < 0.0:
                raise ContractViolationError(f"bs {k} has a negative beam power")
            if self.total(k) > power_budget + 1e-9:
                raise ContractViolationError(f"bs {k} exceeds the power budget")


def beam_directions(scenario: Scenario, covariances: CovarianceSet) -> BeamDirections:
    """
    Fixed beam directions for every BS.

    A_k = (1/M) sum_m c_{k,m} h* h^T with c_{k,m} the round-trip weight of
    sensing point m.
    """
    info: list[ComplexVector] = []
    wpt: list[ComplexVector] = []
    sensing: list[ComplexVector] = []
    round_trip: list[HermitianMatrix] = []
    rcs = scenario.params.rcs_magnitude
    points = scenario.sensing.sample_points

    for k, g in enumerate(scenario.bs):
        h = channel_vector(g, scenario.cus[k].position).vector
        info.append(h / np.linalg.norm(h))
        _, nu_e = principal_eigenpair(covariances.matrix(k, k))
        wpt.append(nu_e)
        a = sum(
            (
                echo_weight(g, p, rcs) * round_trip_matrix(channel_vector(g, p).vector)
                for p in points
            ),
            np.zeros((g.element_count, g.element_count), dtype=np.complex128),
        ) / len(points)
        a = (a + a.conj().T) / 2.0
        _, nu_s = principal_eigenpair(a)
        sensing.append(nu_s)
        round_trip.append(a)

    return BeamDirections(tuple(info), tuple(wpt), tuple(sensing), tuple(round_trip))


def _index(k: int, beam: int) -> int:
    return 3 * k + beam


def _scalar(value: float) -> HermitianMatrix:
    return np.array([[value]], dtype=np.complex128)


def build_lp(
    scenario: Scenario,
    covariances: CovarianceSet,
    dirs: BeamDirections,
    cu_type: CuType,
) -> ConicProblem:
    """
    Power-allocation LP over (rho_c, rho_e, rho_s) per BS and Theta.

    3K + 1 variables; M sensing, K SINR, K harvest and K power rows plus
    nonnegativity.
    """
    K = scenario.K
    rows: list[LinearConstraint] = []
    rcs = scenario.params.rcs_magnitude

    for m, p in enumerate(scenario.sensing.sample_points):
        coefficients: dict[int, HermitianMatrix] = {}
        for l, g in enumerate(scenario.bs):
            h = channel_vector(g, p).vector
            weight = echo_weight(g, p, rcs)
            for b, x in enumerate(dirs.beams(l)):
                coefficients[_index(l, b)] = _scalar(weight * abs(h @ x) ** 2)
        rows.append(
            LinearConstraint(
                f"sensing[{m}]", ConstraintKind.SENSING, coefficients, -1.0, Sense.GE, 0.0
            )
        )

    for k, cu in enumerate(scenario.cus):
        gamma = cu.sinr_threshold
        coefficients = {}
        for l, g in enumerate(scenario.bs):
            h = channel_vector(g, cu.position).vector
            info, wpt, sense = (abs(np.vdot(h, x)) ** 2 for x in dirs.beams(l))
            if l == k:
                coefficients[_index(l, 0)] = _scalar(((1.0 + gamma) / gamma) * info - info)
            else:
                coefficients[_index(l, 0)] = _scalar(-info)
            if cu_type is CuType.TYPE_I or (cu_type is CuType.TYPE_II and l != k):
                coefficients[_index(l, 1)] = _scalar(-wpt)
                coefficients[_index(l, 2)] = _scalar(-sense)
        rows.append(
            LinearConstraint(
                f"sinr[{k}]",
                ConstraintKind.SINR,
                coefficients,
                0.0,
                Sense.GE,
                scenario.params.noise_comm,
            )
        )

    for k, er in enumerate(scenario.ers):
        coefficients = {}
        for l in range(K):
            G = covariances.matrix(l, k)
            for b, x in enumerate(dirs.beams(l)):
                coefficients[_index(l, b)] = _scalar(quad_form(G, x))
        rows.append(
            LinearConstraint(
                f"harvest[{k}]",
                ConstraintKind.HARVEST,
                coefficients,
                0.0,
                Sense.GE,
                er.harvest_threshold / scenario.params.eh_efficiency,
            )
        )

    for k in range(K):
        rows.append(
            LinearConstraint(
                f"power[{k}]",
                ConstraintKind.POWER,
                {_index(k, b): _scalar(1.0) for b in range(3)},
                0.0,
                Sense.LE,
                scenario.params.power_budget,
            )
        )

    names = tuple(f"rho_{beam}[{k}]" for k in range(K) for beam in _BEAMS)
    return ConicProblem(
        (1,) * (3 * K),
        names,
        tuple(rows),
        scenario.params.power_budget,
        f"mrt-type-{cu_type.value}",
    )


def _binding_classes(problem: ConicProblem, tol: float | None) -> list[str]:
    """Constraint classes whose removal alone makes the LP feasible."""
    binding: list[str] = []
    for kind in (ConstraintKind.SINR, ConstraintKind.HARVEST):
        _, report = solve_sdp(problem.without(kind), tol)
        if report.optimal:
            binding.append(kind.value)
    return binding


def build_and_solve_lp(
    scenario: Scenario,
    covariances: CovarianceSet,
    dirs: BeamDirections,
    cu_type: CuType,
    tol: float | None = None,
) -> tuple[PowerAllocation, SolveReport]:
    """
    Optimal powers for fixed directions.

    Raises:
        InfeasibleProblemError: With the binding constraint classes in the
            report certificate
        NumericalFailureError: If the solver stops without a certificate
    """
    problem = build_lp(scenario, covariances, dirs, cu_type)
    blocks, report = solve_sdp(problem, tol)

    if report.status is SolveStatus.INFEASIBLE:
        binding = _binding_classes(problem, tol)
        summary = ", ".join(binding) if binding else "sinr+harvest jointly"
        report = report.with_updates(certificate=f"{report.certificate}; binding: {summary}")
        logger.info("mrt_lp_infeasible", cu_type=cu_type.value, binding=summary)
        raise InfeasibleProblemError(f"MRT power allocation infeasible ({summary})", report)
    if not report.optimal:
        raise NumericalFailureError("MRT power allocation failed", report)

    powers = [max(0.0, float(b[0, 0].real)) for b in blocks]
    allocation = PowerAllocation(
        rho_c=tuple(powers[0::3]),
        rho_e=tuple(powers[1::3]),
        rho_s=tuple(powers[2::3]),
        theta=report.objective,
    )
    return allocation, report


def closed_form_asymptotic(
    scenario: Scenario, covariances: CovarianceSet, dirs: BeamDirections
) -> PowerAllocation:
    """
    Large-array allocation ignoring inter-beam leakage.

    rho_c = Gamma sigma_c^2 / |h|^2, rho_e = (Omega / eta) / (nu_e^H G nu_e)
    and rho_s takes the rest of the budget. Theta is the achieved worst-case
    echo power when the allocation passes ``asymptotic_feasible``, else NaN.
    """
    p = scenario.params
    rho_c: list[float] = []
    rho_e: list[float] = []
    rho_s: list[float] = []
    for k in range(scenario.K):
        h = channel_vector(scenario.bs[k], scenario.cus[k].position).vector
        c = scenario.cus[k].sinr_threshold * p.noise_comm / float(np.vdot(h, h).real)
        gain = quad_form(covariances.matrix(k, k), dirs.wpt[k])
        e = (scenario.ers[k].harvest_threshold / p.eh_efficiency) / gain
        rho_c.append(c)
        rho_e.append(e)
        rho_s.append(p.power_budget - c - e)

    allocation = PowerAllocation(
        tuple(rho_c), tuple(rho_e), tuple(rho_s), math.nan, asymptotic=True
    )
    if not asymptotic_feasible(allocation, p.power_budget):
        return allocation
    solution = allocation_to_solution(allocation, dirs)
    theta = min(echo_power(solution, scenario, m) for m in range(scenario.sensing.sample_count))
    return PowerAllocation(tuple(rho_c), tuple(rho_e), tuple(rho_s), theta, asymptotic=True)


def asymptotic_feasible(alloc: PowerAllocation, power_budget: float) -> bool:
    """rho_c <= P, rho_e <= P and rho_c + rho_e <= P at every BS."""
    return all(
        c <= power_budget and e <= power_budget and c + e <= power_budget
        for c, e in zip(alloc.rho_c, alloc.rho_e, strict=True)
    )


def allocation_to_solution(
    alloc: PowerAllocation,
    dirs: BeamDirections,
    report: SolveReport | None = None,
) -> BeamformingSolution:
    """w_k = sqrt(rho_c) u_k and R_k = rho_e nu_e nu_e^H + rho_s nu_s nu_s^H."""
    beams = tuple(math.sqrt(max(c, 0.0)) * dirs.info[k] for k, c in enumerate(alloc.rho_c))
    duals = tuple(
        max(alloc.rho_e[k], 0.0) * outer(dirs.wpt[k])
        + max(alloc.rho_s[k], 0.0) * outer(dirs.sensing[k])
        for k in range(alloc.K)
    )
    return BeamformingSolution(beams, duals, Provenance.MRT, report)


def solve_mrt(
    scenario: Scenario,
    covariances: CovarianceSet,
    cu_type: CuType,
    tol: float | None = None,
) -> BeamformingSolution:
    """Directions, LP powers and the assembled solution in one call."""
    dirs = beam_directions(scenario, covariances)
    allocation, report = build_and_solve_lp(scenario, covariances, dirs, cu_type, tol)
    return allocation_to_solution(allocation, dirs, report)


def solve_mrt_asymptotic(scenario: Scenario, covariances: CovarianceSet) -> BeamformingSolution:
    """
    Closed-form allocation as a solution, labeled an asymptotic approximation.

    Raises:
        InfeasibleProblemError: If the allocation fails the feasibility screen
    """
    dirs = beam_directions(scenario, covariances)
    allocation = closed_form_asymptotic(scenario, covariances, dirs)
    if not asymptotic_feasible(allocation, scenario.params.power_budget):
        report = SolveReport(
            status=SolveStatus.INFEASIBLE,
            objective=math.nan,
            certificate="closed-form powers exceed the budget",
            notes=(ASYMPTOTIC_NOTE,),
        )
        raise InfeasibleProblemError("asymptotic allocation infeasible", report)
    report = SolveReport(
        status=SolveStatus.OPTIMAL,
        objective=allocation.theta,
        solver="closed-form",
        notes=(ASYMPTOTIC_NOTE,),
    )
    return allocation_to_solution(allocation, dirs, report)
