"""
Conic solver bridge.

Solves a ConicProblem with cvxpy's Clarabel interior-point backend:
Hermitian PSD blocks become ``hermitian=True`` variables, 1x1 blocks
nonnegative scalars. The problem is normalized first so that tolerances
are relative.
"""

from __future__ import annotations

import math
import time
from typing import Any

import cvxpy as cp
import numpy as np
from structlog import get_logger

from iscap.core.config import settings
from iscap.models.conic import ConicProblem, Sense
from iscap.models.solution import SolveReport, SolveStatus
from iscap.types.arrays import HermitianMatrix
from iscap.utils.numerics import numerical_rank, psd_residual

logger = get_logger()

_OPTIMAL = {cp.OPTIMAL, cp.OPTIMAL_INACCURATE}
_INFEASIBLE = {cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE}

# Residual (solver units) up to which an "inaccurate" optimum is accepted.
_INACCURATE_ACCEPT = 1e-6


def _solver_options(solver: str, tol: float) -> dict[str, Any]:
    if solver == "CLARABEL":
        return {
            "tol_gap_abs": tol,
            "tol_gap_rel": tol,
            "tol_feas": tol,
            "max_iter": settings.sdp_max_iter,
        }
    if solver == "SCS":
        return {"eps": tol, "max_iters": 100 * settings.sdp_max_iter}
    return {}


def _extra_stat(stats: Any, name: str) -> float:
    extra = getattr(stats, "extra_stats", None)
    value = getattr(extra, name, None)
    return float(value) if value is not None else math.nan


def _block_rank(block: HermitianMatrix) -> int:
    if block.shape[0] == 1:
        return int(block[0, 0].real > 0.0)
    return numerical_rank(block)


def solve_sdp(
    problem: ConicProblem,
    tol: float | None = None,
    *,
    solver: str | None = None,
) -> tuple[list[HermitianMatrix], SolveReport]:
    """
    Maximize Theta subject to the problem's rows and PSD cones.

    Never raises on solver outcomes: infeasibility and numerical failure are
    reported through the returned report's status.

    Args:
        problem: Problem in physical units
        tol: Relative feasibility / duality-gap tolerance
        solver: cvxpy solver name (defaults to settings.solver)

    Returns:
        Tuple of (block values in physical units, SolveReport); blocks are
        zero matrices unless the status is optimal
    """
    tol = settings.sdp_tol if tol is None else tol
    solver = solver or settings.solver
    normalized = problem.normalized()
    scaled = normalized.problem

    variables: list[Any] = []
    cones: list[Any] = []
    for n in scaled.block_dims:
        if n == 1:
            variables.append(cp.Variable(nonneg=True))
        else:
            x = cp.Variable((n, n), hermitian=True)
            variables.append(x)
            cones.append(x >> 0)
    theta = cp.Variable()

    rows: list[Any] = []
    for row in scaled.constraints:
        terms: list[Any] = [row.theta * theta] if row.theta != 0.0 else []
        for j, c in row.coefficients.items():
            if scaled.block_dims[j] == 1:
                terms.append(float(c[0, 0].real) * variables[j])
            else:
                terms.append(cp.real(cp.trace(c @ variables[j])))
        lhs = sum(terms[1:], terms[0])
        rows.append(lhs >= row.rhs if row.sense is Sense.GE else lhs <= row.rhs)

    prob = cp.Problem(cp.Maximize(theta), rows + cones)
    started = time.perf_counter()
    try:
        prob.solve(solver=solver, **_solver_options(solver, tol))
        status_text = str(prob.status)
    except cp.SolverError as exc:
        status_text = f"solver_error: {exc}"
    elapsed = time.perf_counter() - started

    stats = prob.solver_stats
    iterations = int(getattr(stats, "num_iters", 0) or 0)
    zero_blocks = [np.zeros((n, n), dtype=np.complex128) for n in problem.block_dims]

    if status_text in _INFEASIBLE:
        report = SolveReport(
            status=SolveStatus.INFEASIBLE,
            objective=math.nan,
            solver=solver,
            solve_time=elapsed,
            iterations=iterations,
            certificate=f"{solver} dual certificate: {status_text}",
        )
        logger.info("sdp_solve_infeasible", label=problem.label, seconds=round(elapsed, 4))
        return zero_blocks, report

    if status_text not in _OPTIMAL:
        report = SolveReport(
            status=SolveStatus.NUMERICAL_FAILURE,
            objective=math.nan,
            solver=solver,
            solve_time=elapsed,
            iterations=iterations,
            notes=(status_text,),
        )
        logger.warning("sdp_solve_failed", label=problem.label, status=status_text)
        return zero_blocks, report

    hat_blocks: list[HermitianMatrix] = []
    for n, var in zip(scaled.block_dims, variables, strict=True):
        value = np.asarray(var.value, dtype=np.complex128).reshape(n, n)
        hat_blocks.append((value + value.conj().T) / 2.0)
    hat_theta = float(theta.value)

    slacks = scaled.slacks(hat_blocks, hat_theta)
    primal_residual = max(
        [max(0.0, -v) for v in slacks.values()]
        + [psd_residual(b) for b, n in zip(hat_blocks, scaled.block_dims, strict=True) if n > 1]
        + [0.0]
    )
    notes: tuple[str, ...] = ()
    status = SolveStatus.OPTIMAL
    if status_text == cp.OPTIMAL_INACCURATE:
        notes = ("solver reported reduced accuracy",)
        if primal_residual > _INACCURATE_ACCEPT:
            status = SolveStatus.NUMERICAL_FAILURE

    primal = _extra_stat(stats, "obj_val")
    dual = _extra_stat(stats, "obj_val_dual")
    gap = abs(primal - dual) / max(1.0, abs(primal)) if math.isfinite(primal) else math.nan

    blocks = [normalized.variable_scale * b for b in hat_blocks]
    report = SolveReport(
        status=status,
        objective=normalized.theta_scale * hat_theta,
        solver=solver,
        primal_residual=primal_residual,
        dual_residual=_extra_stat(stats, "r_dual"),
        duality_gap=gap,
        slacks=slacks,
        active=tuple(k for k, v in slacks.items() if v <= settings.activity_tol),
        ranks=tuple(_block_rank(b) for b in blocks),
        solve_time=elapsed,
        iterations=iterations,
        notes=notes,
    )
    logger.info(
        "sdp_solve_completed",
        label=problem.label,
        status=status.value,
        objective=report.objective,
        iterations=iterations,
        seconds=round(elapsed, 4),
    )
    return blocks, report
