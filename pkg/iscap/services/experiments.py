"""
Experiment harness: parameter sweeps, figure presets and received-power maps.

Sweep cells (one per grid point) are independent and run in a bounded
process pool; each cell computes its ER covariances once and then runs
every (method, CU type) pair. Rows are keyed by grid coordinates and
sorted, so the table does not depend on completion order.
"""

from __future__ import annotations

import itertools
import math
import time
from collections import Counter
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from structlog import get_logger

from iscap.core.config import settings
from iscap.core.exceptions import InfeasibleProblemError, IscapError
from iscap.models.experiments import Method, PowerMapSpec, SweepParameter, SweepSpec
from iscap.models.geometry import Point2D
from iscap.models.scenario import CuType, Scenario
from iscap.models.solution import BeamformingSolution, SolveStatus
from iscap.services.channels import channel_matrix
from iscap.services.covariance import (
    CovarianceCache,
    CovarianceSet,
    compute_covariances,
    load_covariances,
    save_covariances,
)
from iscap.services.metrics import received_power, worst_case_detection
from iscap.services.mrt import solve_mrt, solve_mrt_asymptotic
from iscap.services.scenario import apply_parameter, scenario_hash
from iscap.services.sdr import (
    build_sdr,
    evaluate_solution,
    solve_noncoordinated,
    solve_sdr,
    solve_worstcase_robust,
)
from iscap.types.arrays import RealArray
from iscap.types.reports import PowerCellTD, SweepRowTD, TimingRowTD

logger = get_logger()

# Normalized slack below which a coordinated constraint counts as violated.
FEASIBILITY_TOL = 1e-6

_cache = CovarianceCache()


def design(
    method: Method,
    scenario: Scenario,
    covariances: CovarianceSet,
    cu_type: CuType,
    tol: float | None = None,
) -> BeamformingSolution:
    """Run one beamforming design by name."""
    match method:
        case Method.SDR:
            return solve_sdr(scenario, covariances, cu_type, tol)
        case Method.MRT:
            return solve_mrt(scenario, covariances, cu_type, tol)
        case Method.MRT_ASYMPTOTIC:
            return solve_mrt_asymptotic(scenario, covariances)
        case Method.NON_COORDINATED:
            return solve_noncoordinated(scenario, covariances, cu_type, tol)
        case Method.WORST_CASE_ROBUST:
            return solve_worstcase_robust(scenario, cu_type, tol=tol)


def apply_overrides(scenario: Scenario, overrides: Mapping[SweepParameter, float]) -> Scenario:
    for parameter, value in overrides.items():
        scenario = apply_parameter(scenario, parameter, value)
    return scenario


@dataclass(frozen=True)
class _CellJob:
    scenario: Scenario
    spec: SweepSpec
    primary_index: int
    secondary_index: int
    primary_value: float
    secondary_value: float


def _cells(spec: SweepSpec, scenario: Scenario) -> list[_CellJob]:
    secondary = list(enumerate(spec.secondary_grid)) or [(0, math.nan)]
    return [
        _CellJob(scenario, spec, i, j, pv, sv)
        for (i, pv), (j, sv) in itertools.product(enumerate(spec.grid), secondary)
    ]


def _empty_row(job: _CellJob, method: Method, cu_type: CuType) -> SweepRowTD:
    return SweepRowTD(
        primary_index=job.primary_index,
        secondary_index=job.secondary_index,
        primary_value=job.primary_value,
        secondary_value=job.secondary_value,
        method=method.value,
        cu_type=cu_type.value,
        status=SolveStatus.NUMERICAL_FAILURE.value,
        theta=math.nan,
        detection_probability=math.nan,
        worst_point=-1,
        min_sinr_slack=math.nan,
        min_harvest_slack=math.nan,
        min_power_slack=math.nan,
        feasible=False,
        reconstruction_error=math.nan,
        message="",
    )


def _min_slack(slacks: Mapping[str, float], prefix: str) -> float:
    values = [v for k, v in slacks.items() if k.startswith(prefix)]
    return min(values) if values else math.nan


def _fill_row(
    row: SweepRowTD,
    solution: BeamformingSolution,
    scenario: Scenario,
    covariances: CovarianceSet,
    cu_type: CuType,
) -> None:
    """Evaluate ``solution`` against the coordinated constraints of ``cu_type``."""
    theta, slacks = evaluate_solution(build_sdr(scenario, covariances, cu_type), solution, scenario)
    p_d, worst = worst_case_detection(solution, scenario)
    row["status"] = SolveStatus.OPTIMAL.value
    row["theta"] = theta
    row["detection_probability"] = p_d
    row["worst_point"] = worst
    row["min_sinr_slack"] = _min_slack(slacks, "sinr")
    row["min_harvest_slack"] = _min_slack(slacks, "harvest")
    row["min_power_slack"] = _min_slack(slacks, "power")
    row["feasible"] = all(
        v >= -FEASIBILITY_TOL for k, v in slacks.items() if not k.startswith("sensing")
    )
    report = solution.report
    if report is not None:
        if report.reconstruction_error is not None:
            row["reconstruction_error"] = report.reconstruction_error
        row["message"] = "; ".join(report.notes)


def _run_cell(job: _CellJob) -> tuple[list[SweepRowTD], list[TimingRowTD]]:
    spec = job.spec
    rows: list[SweepRowTD] = []
    timings: list[TimingRowTD] = []
    pairs = list(itertools.product(spec.methods, spec.cu_types))

    try:
        scenario = apply_overrides(job.scenario, spec.overrides)
        scenario = apply_parameter(scenario, spec.swept_parameter, job.primary_value)
        if spec.secondary_parameter is not None:
            scenario = apply_parameter(scenario, spec.secondary_parameter, job.secondary_value)
        covariances = compute_covariances(scenario, cache=_cache, workers=1)
    except IscapError as exc:
        logger.warning("sweep_cell_setup_failed", cell=(job.primary_index, job.secondary_index))
        for method, cu_type in pairs:
            row = _empty_row(job, method, cu_type)
            row["message"] = str(exc)
            rows.append(row)
        return rows, timings

    for method, cu_type in pairs:
        row = _empty_row(job, method, cu_type)
        started = time.perf_counter()
        iterations = 0
        try:
            solution = design(method, scenario, covariances, cu_type, spec.tol)
            _fill_row(row, solution, scenario, covariances, cu_type)
            iterations = solution.report.iterations if solution.report else 0
        except InfeasibleProblemError as exc:
            row["status"] = SolveStatus.INFEASIBLE.value
            row["message"] = str(exc)
        except IscapError as exc:
            row["message"] = str(exc)
            logger.warning(
                "sweep_cell_failed",
                method=method.value,
                cu_type=cu_type.value,
                error=str(exc),
            )
        rows.append(row)
        timings.append(
            TimingRowTD(
                primary_index=job.primary_index,
                secondary_index=job.secondary_index,
                method=method.value,
                cu_type=cu_type.value,
                seconds=time.perf_counter() - started,
                iterations=iterations,
            )
        )
    logger.debug(
        "sweep_cell_completed",
        cell=(job.primary_index, job.secondary_index),
        statuses=[r["status"] for r in rows],
    )
    return rows, timings


@dataclass(frozen=True)
class SweepResult:
    """Result table (deterministic) and per-cell wall times (kept apart)."""

    spec: SweepSpec
    table: pd.DataFrame
    timings: pd.DataFrame

    def status_counts(self) -> dict[str, int]:
        counts = Counter(self.table["status"]) if len(self.table) else Counter[str]()
        return {status.value: counts.get(status.value, 0) for status in SolveStatus}

    @property
    def failures(self) -> int:
        return self.status_counts()[SolveStatus.NUMERICAL_FAILURE.value]


def run_sweep(spec: SweepSpec, scenario: Scenario, *, workers: int | None = None) -> SweepResult:
    """
    Solve every grid point x method x CU type and tabulate the outcome.

    Failed cells are kept with status infeasible or numerical-failure.

    Args:
        spec: Sweep definition
        scenario: Base scenario; overrides and grid values are applied to it
        workers: Process count (defaults to settings.sweep_workers); 1 runs inline

    Returns:
        SweepResult with one row per (grid point, method, CU type)
    """
    workers = workers or settings.sweep_workers
    jobs = _cells(spec, scenario)
    logger.info(
        "sweep_started",
        parameter=spec.swept_parameter.value,
        cells=len(jobs),
        methods=[m.value for m in spec.methods],
        workers=workers,
    )

    if workers == 1:
        outcomes = [_run_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))

    rows = [row for cell_rows, _ in outcomes for row in cell_rows]
    timing_rows = [t for _, cell_timings in outcomes for t in cell_timings]

    method_order = {m.value: i for i, m in enumerate(spec.methods)}
    type_order = {t.value: i for i, t in enumerate(spec.cu_types)}

    def key(r: SweepRowTD | TimingRowTD) -> tuple[int, int, int, int]:
        return (
            r["primary_index"],
            r["secondary_index"],
            method_order[r["method"]],
            type_order[r["cu_type"]],
        )

    rows.sort(key=key)
    timing_rows.sort(key=key)

    table = pd.DataFrame(rows, columns=list(SweepRowTD.__annotations__))
    renames = {"primary_value": spec.swept_parameter.value}
    if spec.secondary_parameter is not None:
        renames["secondary_value"] = spec.secondary_parameter.value
    else:
        table = table.drop(columns=["secondary_value"])
    table = table.rename(columns=renames)
    timings = pd.DataFrame(timing_rows, columns=list(TimingRowTD.__annotations__))

    result = SweepResult(spec, table, timings)
    logger.info("sweep_completed", **result.status_counts())
    return result


@dataclass(frozen=True)
class FigurePreset:
    """
    Defaults of one figure.

    ``full`` mirrors the caption; ``desk`` is the reduced-array variant run
    without --full-scale, with thresholds the 16-element arrays can meet.
    A preset with fixed ``antennas`` runs at that size in both variants.
    Power-map presets carry no sweep and list the designs to map instead.
    """

    name: str
    description: str
    case: int
    full: SweepSpec | None = None
    desk: SweepSpec | None = None
    map_methods: tuple[Method, ...] = ()
    map_cu_type: CuType = CuType.TYPE_I
    full_overrides: dict[SweepParameter, float] = field(default_factory=dict)
    desk_overrides: dict[SweepParameter, float] = field(default_factory=dict)
    antennas: int | None = None

    @property
    def is_power_map(self) -> bool:
        return self.full is None

    def sweep(self, full_scale: bool) -> SweepSpec:
        spec = self.full if full_scale else self.desk
        if spec is None:
            raise ValueError(f"{self.name} is a power-map preset")
        return spec

    def overrides(self, full_scale: bool) -> dict[SweepParameter, float]:
        return self.full_overrides if full_scale else self.desk_overrides


_P = SweepParameter
_ALL_TYPES = (CuType.TYPE_I, CuType.TYPE_II, CuType.TYPE_III)
_COMPARED = (Method.SDR, Method.MRT, Method.MRT_ASYMPTOTIC, Method.NON_COORDINATED)


def _sweep(parameter: SweepParameter, grid: Sequence[float], **kwargs: object) -> SweepSpec:
    return SweepSpec.model_validate({"swept_parameter": parameter, "grid": tuple(grid), **kwargs})


FIGURE_PRESETS: dict[str, FigurePreset] = {
    "fig3": FigurePreset(
        name="fig3",
        description="P_D versus SINR threshold: SDR, MRT, asymptotic MRT, non-coordinated",
        case=3,
        full=_sweep(
            _P.SINR_THRESHOLD_DB,
            [0.0, 5.0, 10.0, 15.0, 20.0],
            overrides={_P.HARVEST_THRESHOLD_DBM: -30.0, _P.UNCERTAINTY_AREA_M2: 0.0},
            methods=_COMPARED,
            cu_types=_ALL_TYPES,
        ),
        desk=_sweep(
            _P.SINR_THRESHOLD_DB,
            [0.0, 5.0, 10.0],
            overrides={_P.HARVEST_THRESHOLD_DBM: -45.0, _P.UNCERTAINTY_AREA_M2: 0.0},
            methods=_COMPARED,
            cu_types=_ALL_TYPES,
        ),
    ),
    "fig4": FigurePreset(
        name="fig4",
        description="P_D versus ER uncertainty area",
        case=3,
        full=_sweep(
            _P.UNCERTAINTY_AREA_M2,
            [0.0, 1.0, 2.0, 4.0, 8.0],
            overrides={_P.SINR_THRESHOLD_DB: 10.0, _P.HARVEST_THRESHOLD_DBM: -30.0},
            methods=(Method.SDR, Method.MRT, Method.WORST_CASE_ROBUST),
            cu_types=(CuType.TYPE_I, CuType.TYPE_III),
        ),
        desk=_sweep(
            _P.UNCERTAINTY_AREA_M2,
            [0.0, 1.0, 2.0, 4.0],
            overrides={_P.SINR_THRESHOLD_DB: 5.0, _P.HARVEST_THRESHOLD_DBM: -45.0},
            methods=(Method.SDR, Method.MRT, Method.WORST_CASE_ROBUST),
            cu_types=(CuType.TYPE_I, CuType.TYPE_III),
        ),
    ),
    "fig5": FigurePreset(
        name="fig5",
        description="P_D versus powering threshold",
        case=3,
        full=_sweep(
            _P.HARVEST_THRESHOLD_DBM,
            [-40.0, -35.0, -30.0, -25.0],
            overrides={_P.SINR_THRESHOLD_DB: 10.0, _P.UNCERTAINTY_AREA_M2: 0.0},
            methods=(Method.SDR, Method.MRT, Method.MRT_ASYMPTOTIC),
            cu_types=_ALL_TYPES,
        ),
        desk=_sweep(
            _P.HARVEST_THRESHOLD_DBM,
            [-55.0, -50.0, -45.0, -40.0],
            overrides={_P.SINR_THRESHOLD_DB: 10.0, _P.UNCERTAINTY_AREA_M2: 0.0},
            methods=(Method.SDR, Method.MRT, Method.MRT_ASYMPTOTIC),
            cu_types=_ALL_TYPES,
        ),
    ),
    "fig6": FigurePreset(
        name="fig6",
        description="P_D versus power budget and false-alarm probability",
        case=3,
        full=_sweep(
            _P.POWER_BUDGET_DBM,
            [21.0, 24.0, 27.0, 30.0, 33.0],
            secondary_parameter=_P.FALSE_ALARM,
            secondary_grid=(1e-4, 1e-6, 1e-8),
            overrides={_P.SINR_THRESHOLD_DB: 10.0, _P.HARVEST_THRESHOLD_DBM: -36.55},
            methods=(Method.SDR, Method.MRT),
            cu_types=(CuType.TYPE_I, CuType.TYPE_III),
        ),
        desk=_sweep(
            _P.POWER_BUDGET_DBM,
            [24.0, 27.0, 30.0],
            secondary_parameter=_P.FALSE_ALARM,
            secondary_grid=(1e-4, 1e-6, 1e-8),
            overrides={_P.SINR_THRESHOLD_DB: 5.0, _P.HARVEST_THRESHOLD_DBM: -45.0},
            methods=(Method.SDR, Method.MRT),
            cu_types=(CuType.TYPE_I, CuType.TYPE_III),
        ),
    ),
    "fig7": FigurePreset(
        name="fig7",
        description="P_D surface over powering and SINR thresholds (Type III)",
        case=3,
        full=_sweep(
            _P.HARVEST_THRESHOLD_DBM,
            [-40.0, -35.0, -30.0, -25.0],
            secondary_parameter=_P.SINR_THRESHOLD_DB,
            secondary_grid=(0.0, 5.0, 10.0, 15.0, 20.0),
            methods=(Method.SDR, Method.MRT),
            cu_types=(CuType.TYPE_III,),
        ),
        desk=_sweep(
            _P.HARVEST_THRESHOLD_DBM,
            [-55.0, -50.0, -45.0],
            secondary_parameter=_P.SINR_THRESHOLD_DB,
            secondary_grid=(0.0, 5.0, 10.0),
            methods=(Method.SDR, Method.MRT),
            cu_types=(CuType.TYPE_III,),
        ),
    ),
    "fig8": FigurePreset(
        name="fig8",
        description="Near-field received power maps per BS",
        case=3,
        map_methods=(Method.SDR, Method.NON_COORDINATED),
        full_overrides={_P.SINR_THRESHOLD_DB: 20.0, _P.HARVEST_THRESHOLD_DBM: -35.0},
        desk_overrides={_P.SINR_THRESHOLD_DB: 20.0, _P.HARVEST_THRESHOLD_DBM: -35.0},
        antennas=64,
    ),
    "fig9": FigurePreset(
        name="fig9",
        description="Far-field received power maps per BS (16 elements)",
        case=3,
        map_methods=(Method.SDR, Method.NON_COORDINATED),
        full_overrides={_P.SINR_THRESHOLD_DB: 0.0, _P.HARVEST_THRESHOLD_DBM: -45.0},
        desk_overrides={_P.SINR_THRESHOLD_DB: 0.0, _P.HARVEST_THRESHOLD_DBM: -45.0},
        antennas=16,
    ),
}


@dataclass(frozen=True)
class PowerMap:
    """
    Received power (W) per BS on a grid of cell centers.

    ``values[b, iy, ix]`` belongs to BS ``bs_indices[b]``; cells holding an
    array element of any BS are invalid and carry NaN.
    """

    spec: PowerMapSpec
    bs_indices: tuple[int, ...]
    values: RealArray
    valid: NDArray[np.bool_]

    @property
    def x_centers(self) -> RealArray:
        return self.spec.x_min + (np.arange(self.spec.nx) + 0.5) * self.spec.cell_width

    @property
    def y_centers(self) -> RealArray:
        return self.spec.y_min + (np.arange(self.spec.ny) + 0.5) * self.spec.cell_height

    def cell_of(self, point: Point2D) -> tuple[int, int]:
        """(iy, ix) of the cell containing ``point``."""
        ix = int(np.clip((point.x - self.spec.x_min) // self.spec.cell_width, 0, self.spec.nx - 1))
        iy = int(np.clip((point.y - self.spec.y_min) // self.spec.cell_height, 0, self.spec.ny - 1))
        return iy, ix

    def value_at(self, bs_index: int, point: Point2D) -> float:
        iy, ix = self.cell_of(point)
        return float(self.values[self.bs_indices.index(bs_index), iy, ix])

    def table(self) -> pd.DataFrame:
        rows = [
            PowerCellTD(
                bs=bs,
                ix=ix,
                iy=iy,
                x=float(self.x_centers[ix]),
                y=float(self.y_centers[iy]),
                power=float(self.values[b, iy, ix]),
                valid=bool(self.valid[iy, ix]),
            )
            for b, bs in enumerate(self.bs_indices)
            for iy in range(self.spec.ny)
            for ix in range(self.spec.nx)
        ]
        return pd.DataFrame(rows, columns=list(PowerCellTD.__annotations__))


def default_map_spec(
    scenario: Scenario, resolution: int | None = None, margin: float = 10.0
) -> PowerMapSpec:
    """Square-celled box around every BS, CU, ER and sensing point."""
    points = (
        [g.reference_center for g in scenario.bs]
        + [cu.position for cu in scenario.cus]
        + [er.region.center for er in scenario.ers]
        + list(scenario.sensing.sample_points)
    )
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    n = resolution or settings.powermap_resolution
    return PowerMapSpec(
        x_min=min(xs) - margin,
        x_max=max(xs) + margin,
        y_min=min(ys) - margin,
        y_max=max(ys) + margin,
        nx=n,
        ny=n,
    )


def power_map(solution: BeamformingSolution, scenario: Scenario, spec: PowerMapSpec) -> PowerMap:
    """h_k(p)^H (w_k w_k^H + R_k) h_k(p) at every cell center, per BS."""
    bs_indices = spec.bs_indices if spec.bs_indices is not None else tuple(range(scenario.K))
    valid = np.ones((spec.ny, spec.nx), dtype=np.bool_)
    for g in scenario.bs:
        for x, y in g.element_coordinates():
            ix = math.floor((x - spec.x_min) / spec.cell_width)
            iy = math.floor((y - spec.y_min) / spec.cell_height)
            if 0 <= ix < spec.nx and 0 <= iy < spec.ny:
                valid[iy, ix] = False

    xx, yy = np.meshgrid(
        spec.x_min + (np.arange(spec.nx) + 0.5) * spec.cell_width,
        spec.y_min + (np.arange(spec.ny) + 0.5) * spec.cell_height,
    )
    centers = np.column_stack([xx[valid], yy[valid]])

    values = np.full((len(bs_indices), spec.ny, spec.nx), np.nan)
    for b, k in enumerate(bs_indices):
        H = channel_matrix(scenario.bs[k], centers)
        X = solution.transmit_covariance(k)
        power = np.einsum("pi,ij,pj->p", H.conj(), X, H).real
        values[b][valid] = np.maximum(power, 0.0)
    logger.debug("power_map_computed", cells=spec.nx * spec.ny, invalid=int((~valid).sum()))
    return PowerMap(spec, tuple(bs_indices), values, valid)


def _db_ratio(numerator: float, denominator: float) -> float:
    tiny = float(np.finfo(float).tiny)
    return 10.0 * math.log10(max(numerator, tiny) / max(denominator, tiny))


# Suppression at unintended CUs expected of a coordinated design at Gamma >= 20 dB.
NULL_DEPTH_MARGIN_DB = 20.0


def null_depth_db(solution: BeamformingSolution, scenario: Scenario) -> list[float]:
    """
    Per BS: power at its own CU over the strongest power at any other CU, in dB.

    Empty-neighbor (K = 1) scenarios give +inf.
    """
    depths: list[float] = []
    for k in range(scenario.K):
        own = received_power(solution, scenario, k, scenario.cus[k].position)
        others = [
            received_power(solution, scenario, k, cu.position)
            for j, cu in enumerate(scenario.cus)
            if j != k
        ]
        depths.append(_db_ratio(own, max(others)) if others else math.inf)
    return depths


def isolation_db(solution: BeamformingSolution, scenario: Scenario) -> list[float]:
    """Per CU: power from its own BS over the strongest other BS, in dB."""
    isolation: list[float] = []
    for k, cu in enumerate(scenario.cus):
        powers = [received_power(solution, scenario, l, cu.position) for l in range(scenario.K)]
        others = [p for l, p in enumerate(powers) if l != k]
        isolation.append(_db_ratio(powers[k], max(others)) if others else math.inf)
    return isolation


DESK_OVERRIDES: dict[SweepParameter, float] = {SweepParameter.HARVEST_THRESHOLD_DBM: -45.0}

COVARIANCE_CACHE_FILE = "covariances.bin"


def covariances_for(
    scenario: Scenario, directory: Path, tol: float | None = None
) -> CovarianceSet:
    """ER covariances of ``scenario``, reusing ``directory``/covariances.bin on a hash match."""
    tol = settings.quadrature_tol if tol is None else tol
    path = directory / COVARIANCE_CACHE_FILE
    digest = scenario_hash(scenario)
    cached = load_covariances(path, digest, tol)
    if cached is not None:
        logger.info("covariance_cache_hit", path=str(path))
        return cached
    covariances = compute_covariances(scenario, tol, cache=_cache)
    directory.mkdir(parents=True, exist_ok=True)
    save_covariances(path, digest, covariances, tol)
    return covariances
