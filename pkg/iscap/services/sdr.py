"""
Semidefinite-relaxation designs.

The relaxed problem has blocks W_k (information covariance) and R_k
(dual-purpose covariance) per BS. Block j < K is W_j, block K + j is R_j.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
from structlog import get_logger

from iscap.clients.conic_solver import solve_sdp
from iscap.core.exceptions import (
    DegenerateSolutionError,
    InfeasibleProblemError,
    InvalidArgumentError,
    NumericalFailureError,
    SolverError,
)
from iscap.models.conic import ConicProblem, ConstraintKind, LinearConstraint, Sense
from iscap.models.geometry import Point2D
from iscap.models.scenario import CuType, RegionKind, Scenario, UncertaintyRegion
from iscap.models.solution import BeamformingSolution, Provenance, SolveReport, SolveStatus
from iscap.services.channels import channel_vector, echo_weight
from iscap.services.covariance import CovarianceG, CovarianceSet
from iscap.services.metrics import echo_power, round_trip_matrix, sinr
from iscap.types.arrays import ComplexVector, HermitianMatrix
from iscap.utils.numerics import outer, quad_form

logger = get_logger()

WORST_CASE_SAMPLES = 9


def _w(k: int) -> int:
    return k


def _r(scenario: Scenario, k: int) -> int:
    return scenario.K + k


def _block_names(scenario: Scenario) -> tuple[str, ...]:
    return tuple(f"W[{k}]" for k in range(scenario.K)) + tuple(
        f"R[{k}]" for k in range(scenario.K)
    )


def _channels_to(scenario: Scenario, point: Point2D) -> list[ComplexVector]:
    return [channel_vector(g, point).vector for g in scenario.bs]


def _sensing_rows(scenario: Scenario) -> list[LinearConstraint]:
    rows: list[LinearConstraint] = []
    rcs = scenario.params.rcs_magnitude
    for m, p in enumerate(scenario.sensing.sample_points):
        coefficients: dict[int, HermitianMatrix] = {}
        for l, g in enumerate(scenario.bs):
            h = channel_vector(g, p).vector
            c = echo_weight(g, p, rcs) * round_trip_matrix(h)
            coefficients[_w(l)] = c
            coefficients[_r(scenario, l)] = c
        rows.append(
            LinearConstraint(
                f"sensing[{m}]", ConstraintKind.SENSING, coefficients, -1.0, Sense.GE, 0.0
            )
        )
    return rows


def _sinr_rows(scenario: Scenario, cu_type: CuType) -> list[LinearConstraint]:
    """
    (1+G)/G h_kk^H W_k h_kk - sum_l h_lk^H W_l h_lk - dual terms >= sigma_c^2.

    Dual terms: all l (Type I), l != k (Type II), none (Type III).
    """
    rows: list[LinearConstraint] = []
    for k, cu in enumerate(scenario.cus):
        h = _channels_to(scenario, cu.position)
        gamma = cu.sinr_threshold
        coefficients: dict[int, HermitianMatrix] = {}
        for l in range(scenario.K):
            hl = outer(h[l])
            coefficients[_w(l)] = ((1.0 + gamma) / gamma) * hl - hl if l == k else -hl
            dual = cu_type is CuType.TYPE_I or (cu_type is CuType.TYPE_II and l != k)
            if dual:
                coefficients[_r(scenario, l)] = -hl
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
    return rows


def _harvest_rows(scenario: Scenario, covariances: CovarianceSet) -> list[LinearConstraint]:
    eta = scenario.params.eh_efficiency
    rows: list[LinearConstraint] = []
    for k, er in enumerate(scenario.ers):
        coefficients: dict[int, HermitianMatrix] = {}
        for l in range(scenario.K):
            g = eta * covariances.matrix(l, k)
            coefficients[_w(l)] = g
            coefficients[_r(scenario, l)] = g
        rows.append(
            LinearConstraint(
                f"harvest[{k}]",
                ConstraintKind.HARVEST,
                coefficients,
                0.0,
                Sense.GE,
                er.harvest_threshold,
            )
        )
    return rows


def _pointwise_harvest_rows(
    scenario: Scenario, points: Sequence[Sequence[Point2D]]
) -> list[LinearConstraint]:
    eta = scenario.params.eh_efficiency
    rows: list[LinearConstraint] = []
    for k, er in enumerate(scenario.ers):
        for j, p in enumerate(points[k]):
            coefficients: dict[int, HermitianMatrix] = {}
            for l, h in enumerate(_channels_to(scenario, p)):
                g = eta * outer(h)
                coefficients[_w(l)] = g
                coefficients[_r(scenario, l)] = g
            rows.append(
                LinearConstraint(
                    f"harvest[{k}.{j}]",
                    ConstraintKind.HARVEST,
                    coefficients,
                    0.0,
                    Sense.GE,
                    er.harvest_threshold,
                )
            )
    return rows


def _power_rows(scenario: Scenario) -> list[LinearConstraint]:
    rows: list[LinearConstraint] = []
    for k, g in enumerate(scenario.bs):
        eye = np.eye(g.element_count, dtype=np.complex128)
        rows.append(
            LinearConstraint(
                f"power[{k}]",
                ConstraintKind.POWER,
                {_w(k): eye, _r(scenario, k): eye},
                0.0,
                Sense.LE,
                scenario.params.power_budget,
            )
        )
    return rows


def _assemble(
    scenario: Scenario,
    cu_type: CuType,
    harvest: list[LinearConstraint],
    label: str,
) -> ConicProblem:
    if scenario.K == 0:
        raise InvalidArgumentError("scenario has no base stations")
    dims = tuple(g.element_count for g in scenario.bs) * 2
    rows = (
        _sensing_rows(scenario)
        + _sinr_rows(scenario, cu_type)
        + harvest
        + _power_rows(scenario)
    )
    return ConicProblem(
        dims, _block_names(scenario), tuple(rows), scenario.params.power_budget, label
    )


def build_sdr(scenario: Scenario, covariances: CovarianceSet, cu_type: CuType) -> ConicProblem:
    """
    Relaxed problem for one CU type.

    2K PSD blocks plus Theta; M sensing rows, K SINR rows, K averaged
    harvest rows and K power rows. No rank constraints.

    Raises:
        MissingCovarianceError: If any G_{l,k} is missing
    """
    return _assemble(
        scenario,
        cu_type,
        _harvest_rows(scenario, covariances),
        f"sdr-type-{cu_type.value}",
    )


def build_worst_case(
    scenario: Scenario, cu_type: CuType, sample_count: int = WORST_CASE_SAMPLES
) -> ConicProblem:
    """Relaxed problem with each averaged harvest row replaced by pointwise rows."""
    points = [worst_case_points(er.region, sample_count) for er in scenario.ers]
    return _assemble(
        scenario,
        cu_type,
        _pointwise_harvest_rows(scenario, points),
        f"worst-case-type-{cu_type.value}",
    )


def worst_case_points(
    region: UncertaintyRegion, sample_count: int = WORST_CASE_SAMPLES
) -> list[Point2D]:
    """
    n x n axis-aligned grid over the disc's bounding square.

    Grid points outside the disc are projected radially onto its boundary;
    for n = 3 this gives the center, four edge midpoints and four diagonal
    boundary points.
    """
    side = math.isqrt(sample_count)
    if side * side != sample_count or side < 1:
        raise InvalidArgumentError(f"sample_count must be a perfect square, got {sample_count}")
    if region.kind is RegionKind.GAUSSIAN:
        raise InvalidArgumentError("worst-case sampling needs a point or disc region")
    radius = region.radius
    ticks = np.linspace(-radius, radius, side) if side > 1 else np.zeros(1)
    points: list[Point2D] = []
    for dy in ticks:
        for dx in ticks:
            distance = math.hypot(dx, dy)
            if distance > radius:
                dx, dy = dx * radius / distance, dy * radius / distance
            points.append(Point2D(x=region.center.x + dx, y=region.center.y + dy))
    return points


def extract_rank_one(
    W: HermitianMatrix, R: HermitianMatrix, scenario: Scenario, k: int
) -> tuple[ComplexVector, HermitianMatrix]:
    """
    Rank-one information beam from a relaxed (W_k, R_k) pair.

    w = W h / sqrt(h^H W h) and R' = W + R - w w^H, with h the channel from
    BS k to CU k. The total covariance W + R is preserved.

    Raises:
        DegenerateSolutionError: If h^H W h is numerically zero
    """
    h = channel_vector(scenario.bs[k], scenario.cus[k].position).vector
    desired = quad_form(W, h)
    threshold = 1e-12 * float(np.vdot(h, h).real) * scenario.params.power_budget
    if desired <= threshold:
        raise DegenerateSolutionError(
            f"cu {k} receives no desired power at the relaxed optimum ({desired:.3e})"
        )
    beam = (W @ h) / math.sqrt(desired)
    residual = W + R - outer(beam)
    return beam, (residual + residual.conj().T) / 2.0


def _raise_for_status(report: SolveReport, what: str) -> None:
    if report.status is SolveStatus.INFEASIBLE:
        raise InfeasibleProblemError(f"{what} is infeasible", report)
    if report.status is not SolveStatus.OPTIMAL:
        raise NumericalFailureError(f"{what} failed: {', '.join(report.notes)}", report)


def evaluate_solution(
    problem: ConicProblem, solution: BeamformingSolution, scenario: Scenario
) -> tuple[float, dict[str, float]]:
    """
    Objective and normalized slacks of a rank-one solution on ``problem``.

    The objective is the smallest echo power over the sensing points;
    slacks are in solver units (rows divided by their scale).
    """
    blocks = [outer(w) for w in solution.info_beams] + list(solution.dual_covariances)
    theta = min(echo_power(solution, scenario, m) for m in range(scenario.sensing.sample_count))
    normalized = problem.normalized()
    slacks = {
        row.label: row.slack(blocks, theta) / scale
        for row, scale in zip(problem.constraints, normalized.row_scales, strict=True)
    }
    return theta, slacks


def _design(
    problem: ConicProblem,
    scenario: Scenario,
    provenance: Provenance,
    tol: float | None,
) -> BeamformingSolution:
    blocks, report = solve_sdp(problem, tol)
    _raise_for_status(report, problem.label)

    K = scenario.K
    beams: list[ComplexVector] = []
    duals: list[HermitianMatrix] = []
    for k in range(K):
        beam, dual = extract_rank_one(blocks[_w(k)], blocks[_r(scenario, k)], scenario, k)
        beams.append(beam)
        duals.append(dual)
    solution = BeamformingSolution(tuple(beams), tuple(duals), provenance)

    achieved, slacks = evaluate_solution(problem, solution, scenario)
    violation = max([0.0] + [-v for label, v in slacks.items() if not label.startswith("sensing")])
    gap = abs(achieved - report.objective) / max(abs(report.objective), 1e-300)
    report = report.with_updates(
        ranks=report.ranks[:K],
        reconstruction_error=max(violation, gap),
    )
    logger.debug(
        "rank_one_extracted",
        label=problem.label,
        ranks=list(report.ranks),
        reconstruction_error=report.reconstruction_error,
    )
    return solution.with_report(report)


def solve_sdr(
    scenario: Scenario,
    covariances: CovarianceSet,
    cu_type: CuType,
    tol: float | None = None,
) -> BeamformingSolution:
    """
    Optimal coordinated design: solve the relaxation, then extract rank-one beams.

    Raises:
        InfeasibleProblemError: If the relaxation is infeasible
        NumericalFailureError: If the solver stops without a certificate
        DegenerateSolutionError: If a CU gets zero desired power
    """
    return _design(build_sdr(scenario, covariances, cu_type), scenario, Provenance.SDR, tol)


def solve_worstcase_robust(
    scenario: Scenario,
    cu_type: CuType,
    sample_count: int = WORST_CASE_SAMPLES,
    tol: float | None = None,
) -> BeamformingSolution:
    """Design with pointwise harvest guarantees on a grid over each ER disc."""
    problem = build_worst_case(scenario, cu_type, sample_count)
    return _design(problem, scenario, Provenance.WORST_CASE_ROBUST, tol)


def single_cell(scenario: Scenario, k: int) -> Scenario:
    """BS k alone with its own CU, ER and the full set of sensing points."""
    return scenario.model_copy(
        update={"bs": (scenario.bs[k],), "cus": (scenario.cus[k],), "ers": (scenario.ers[k],)}
    )


def solve_noncoordinated(
    scenario: Scenario,
    covariances: CovarianceSet,
    cu_type: CuType,
    tol: float | None = None,
) -> BeamformingSolution:
    """
    Each BS designs alone: own CU without inter-cell terms, own ER with its
    own G only, own echo at every sensing point.

    The returned report's objective and slacks are evaluated on the
    combined solution against the coordinated problem; ``feasible`` in the
    notes says whether the combination meets every coordinated constraint.

    Raises:
        InfeasibleProblemError: Every failing single-cell design is infeasible
        NumericalFailureError: Some single-cell design failed otherwise; the
            report notes carry the status of every BS
    """
    beams: list[ComplexVector] = []
    duals: list[HermitianMatrix] = []
    statuses: list[SolveStatus] = []
    for k in range(scenario.K):
        own = CovarianceSet({(0, 0): _reindexed(covariances.get(k, k))})
        try:
            cell = solve_sdr(single_cell(scenario, k), own, cu_type, tol)
        except SolverError as exc:
            status = (
                SolveStatus.INFEASIBLE
                if isinstance(exc, InfeasibleProblemError)
                else SolveStatus.NUMERICAL_FAILURE
            )
            logger.info("noncoordinated_cell_failed", bs=k, status=status.value, error=str(exc))
            statuses.append(status)
            continue
        statuses.append(SolveStatus.OPTIMAL)
        beams.append(cell.info_beams[0])
        duals.append(cell.dual_covariances[0])

    failed = [s for s in statuses if s is not SolveStatus.OPTIMAL]
    if failed:
        notes = tuple(f"bs{k}={s.value}" for k, s in enumerate(statuses))
        overall = (
            SolveStatus.INFEASIBLE
            if all(s is SolveStatus.INFEASIBLE for s in failed)
            else SolveStatus.NUMERICAL_FAILURE
        )
        report = SolveReport(status=overall, objective=math.nan, notes=notes)
        infeasible = overall is SolveStatus.INFEASIBLE
        error = InfeasibleProblemError if infeasible else NumericalFailureError
        raise error(f"single-cell design failed: {', '.join(notes)}", report)

    solution = BeamformingSolution(tuple(beams), tuple(duals), Provenance.NON_COORDINATED)
    problem = build_sdr(scenario, covariances, cu_type)
    theta, slacks = evaluate_solution(problem, solution, scenario)
    feasible = all(v >= -1e-6 for label, v in slacks.items() if not label.startswith("sensing"))
    report = SolveReport(
        status=SolveStatus.OPTIMAL,
        objective=theta,
        slacks=slacks,
        notes=(f"feasible={feasible}",),
    )
    return solution.with_report(report)


def _reindexed(cov: CovarianceG) -> CovarianceG:
    return replace(cov, bs_index=0, er_index=0)


def canonicalize_type_one(
    solution: BeamformingSolution, scenario: Scenario
) -> BeamformingSolution:
    """
    Move the part of each R_k seen by CU k into the information beam.

    With v = R h and c = h^H R h, R' = R - v v^H / c and W' = w w^H + v v^H / c
    keep W' + R' unchanged; the rank-one beam is then re-extracted. The
    result has zero intra-cell leakage h^H R h and the same objective.
    """
    beams: list[ComplexVector] = []
    duals: list[HermitianMatrix] = []
    for k in range(scenario.K):
        h = channel_vector(scenario.bs[k], scenario.cus[k].position).vector
        R = solution.dual_covariances[k]
        v = R @ h
        c = float(np.vdot(h, v).real)
        W = outer(solution.info_beams[k])
        if c > 0.0:
            W = W + np.outer(v, v.conj()) / c
            R = R - np.outer(v, v.conj()) / c
        beam, dual = extract_rank_one(W, R, scenario, k)
        beams.append(beam)
        duals.append(dual)
    return BeamformingSolution(tuple(beams), tuple(duals), solution.provenance, solution.report)


def intra_cell_leakage(solution: BeamformingSolution, scenario: Scenario) -> list[float]:
    """h_kk^H R_k h_kk per BS."""
    return [
        quad_form(
            solution.dual_covariances[k],
            channel_vector(scenario.bs[k], scenario.cus[k].position).vector,
        )
        for k in range(scenario.K)
    ]


def _smallest_echo(solution: BeamformingSolution, scenario: Scenario) -> float:
    return min(echo_power(solution, scenario, m) for m in range(scenario.sensing.sample_count))


@dataclass(frozen=True)
class TypeEquivalenceReport:
    theta_type_one: float
    theta_type_two: float
    theta_type_three: float
    relative_gap: float
    leakage_raw: tuple[float, ...]
    leakage_canonical: tuple[float, ...]
    leakage_bounds: tuple[float, ...]
    ordering_holds: bool
    echo_raw: float
    echo_canonical: float
    sinr_raw: tuple[float, ...]
    sinr_canonical: tuple[float, ...]

    @property
    def transfer_holds(self) -> bool:
        """Moving leakage into the information beam keeps the echo and no CU loses SINR."""
        echo_shift = abs(self.echo_canonical - self.echo_raw) / max(abs(self.echo_raw), 1e-300)
        return echo_shift <= 1e-6 and all(
            after >= before * (1.0 - 1e-6)
            for before, after in zip(self.sinr_raw, self.sinr_canonical, strict=True)
        )

    @property
    def passed(self) -> bool:
        return (
            self.relative_gap <= 1e-5
            and self.ordering_holds
            and self.transfer_holds
            and all(
                value <= bound
                for value, bound in zip(self.leakage_canonical, self.leakage_bounds, strict=True)
            )
        )


def verify_corollary(
    scenario: Scenario, covariances: CovarianceSet, tol: float | None = None
) -> TypeEquivalenceReport:
    """
    Compare the Type-I and Type-II optima and the Type-I intra-cell leakage.

    Leakage is reported on the extracted Type-I solution and after
    canonicalization; the bound is 1e-6 trace(R_k) |h|^2, with trace(R_k)
    floored at tol * P_max.
    The transfer itself is checked: the smallest echo over the sensing
    points must not move and no Type-I SINR may drop.
    """
    one = solve_sdr(scenario, covariances, CuType.TYPE_I, tol)
    two = solve_sdr(scenario, covariances, CuType.TYPE_II, tol)
    three = solve_sdr(scenario, covariances, CuType.TYPE_III, tol)
    theta = [s.report.objective if s.report else math.nan for s in (one, two, three)]

    canonical = canonicalize_type_one(one, scenario)
    floor = (tol or 1e-7) * scenario.params.power_budget
    bounds = []
    for k in range(scenario.K):
        h = channel_vector(scenario.bs[k], scenario.cus[k].position).vector
        trace = max(float(np.trace(one.dual_covariances[k]).real), floor)
        bounds.append(1e-6 * trace * float(np.vdot(h, h).real))

    report = TypeEquivalenceReport(
        theta_type_one=theta[0],
        theta_type_two=theta[1],
        theta_type_three=theta[2],
        relative_gap=abs(theta[0] - theta[1]) / max(abs(theta[0]), 1e-300),
        leakage_raw=tuple(intra_cell_leakage(one, scenario)),
        leakage_canonical=tuple(intra_cell_leakage(canonical, scenario)),
        leakage_bounds=tuple(bounds),
        ordering_holds=theta[2] >= theta[1] * (1.0 - 1e-6),
        echo_raw=_smallest_echo(one, scenario),
        echo_canonical=_smallest_echo(canonical, scenario),
        sinr_raw=tuple(sinr(one, scenario, k, CuType.TYPE_I) for k in range(scenario.K)),
        sinr_canonical=tuple(
            sinr(canonical, scenario, k, CuType.TYPE_I) for k in range(scenario.K)
        ),
    )
    logger.info("type_equivalence_verified", gap=report.relative_gap, passed=report.passed)
    return report
