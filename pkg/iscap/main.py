"""Command-line entry point: sweeps, power maps, the verify suite and SDPA export."""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import pandas as pd
import yaml
from pydantic import ValidationError

from iscap.clients.sdpa import export_sdpa
from iscap.core.config import settings
from iscap.core.exceptions import (
    ArtifactError,
    ContractViolationError,
    InvalidArgumentError,
    IscapError,
    MissingCovarianceError,
    ScenarioValidationError,
    SingularityError,
)
from iscap.core.logging import logger, setup_logging
from iscap.models.conic import ConicProblem
from iscap.models.experiments import Method, SweepParameter, SweepSpec
from iscap.models.scenario import CuType, Scenario
from iscap.services.experiments import (
    DESK_OVERRIDES,
    FIGURE_PRESETS,
    FigurePreset,
    apply_overrides,
    covariances_for,
    default_map_spec,
    design,
    isolation_db,
    null_depth_db,
    power_map,
    run_sweep,
)
from iscap.services.mrt import beam_directions, build_lp
from iscap.services.reports import emit_csv, emit_heatmap
from iscap.services.scenario import (
    builtin_case,
    dump_scenario,
    load_scenario_file,
    scenario_hash,
    with_antennas,
)
from iscap.services.sdr import build_sdr, build_worst_case
from iscap.services.verification import run_verify

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", type=int, choices=(1, 2, 3), help="builtin layout")
    common.add_argument("--config", type=Path, help="scenario YAML document")
    common.add_argument(
        "--cu-type", action="append", choices=[t.value for t in CuType], help="repeatable"
    )
    common.add_argument(
        "--method", action="append", choices=[m.value for m in Method], help="repeatable"
    )
    common.add_argument("--out-dir", type=Path, default=None)
    common.add_argument("--tol", type=float, default=None, help="solver tolerance")
    common.add_argument(
        "--full-scale", action="store_true", help="caption thresholds with 64-element arrays"
    )
    common.add_argument("--antennas", type=int, default=None, help="override N on every BS")
    common.add_argument("--figure", choices=sorted(FIGURE_PRESETS), default=None)

    parser = argparse.ArgumentParser(prog="iscap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    sweep.add_argument("--parameter", choices=[p.value for p in SweepParameter])
    sweep.add_argument("--grid", type=str, help="comma-separated values")
    sweep.add_argument("--workers", type=int, default=None)

    powermap = sub.add_parser("powermap", parents=[common], help="received-power maps")
    powermap.add_argument("--resolution", type=int, default=None)

    verify = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    verify.add_argument(
        "--seed", type=int, default=None, help="Monte-Carlo covariance cross-check seed"
    )

    export = sub.add_parser("export-sdpa", parents=[common], help="write an SDPA file")
    export.add_argument("--output", type=Path, default=None)
    return parser


def _preset(args: argparse.Namespace) -> FigurePreset | None:
    return FIGURE_PRESETS[args.figure] if args.figure else None


def _scenario(args: argparse.Namespace, preset: FigurePreset | None) -> Scenario:
    """
    Resolve the scenario for a run.

    Builtin cases run at the desk-scale array size (with desk thresholds)
    unless --full-scale; a --config document keeps its own size. --antennas
    wins over both.
    """
    if args.config is not None:
        scenario = load_scenario_file(args.config)
        antennas = args.antennas
    else:
        case = args.case or (preset.case if preset else 3)
        scenario = builtin_case(case)
        full = settings.full_scale_antennas if args.full_scale else settings.desk_scale_antennas
        antennas = args.antennas or (preset.antennas if preset else None) or full
        if not args.full_scale and preset is None:
            scenario = apply_overrides(scenario, DESK_OVERRIDES)
    if preset is not None and preset.is_power_map:
        scenario = apply_overrides(scenario, preset.overrides(args.full_scale))
    if antennas is not None:
        scenario = with_antennas(scenario, antennas)
    return scenario


def _out_dir(args: argparse.Namespace, command: str) -> Path:
    base = args.out_dir or settings.out_dir
    path = base / (args.figure or command)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(
    path: Path, args: argparse.Namespace, scenario: Scenario, **extra: object
) -> None:
    manifest = {
        "command": args.command,
        "figure": args.figure,
        "full_scale": args.full_scale,
        "scenario_hash": scenario_hash(scenario),
        "scenario": dump_scenario(scenario),
        **extra,
    }
    try:
        (path / "run.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True))
    except OSError as exc:
        raise ArtifactError(path / "run.yaml", str(exc)) from exc


def _sweep_spec(args: argparse.Namespace, preset: FigurePreset | None) -> SweepSpec:
    if preset is not None and not preset.is_power_map:
        spec = preset.sweep(args.full_scale)
        updates: dict[str, object] = {}
        if args.method:
            updates["methods"] = tuple(Method(m) for m in args.method)
        if args.cu_type:
            updates["cu_types"] = tuple(CuType(t) for t in args.cu_type)
        if args.tol is not None:
            updates["tol"] = args.tol
        return SweepSpec.model_validate({**spec.model_dump(), **updates})

    if args.parameter is None or args.grid is None:
        raise InvalidArgumentError("sweep needs --figure or both --parameter and --grid")
    try:
        grid = tuple(float(v) for v in args.grid.split(",") if v.strip())
    except ValueError as exc:
        raise InvalidArgumentError(f"--grid must be numbers: {args.grid}") from exc
    return SweepSpec.model_validate(
        {
            "swept_parameter": args.parameter,
            "grid": grid,
            "methods": tuple(args.method or (Method.SDR.value,)),
            "cu_types": tuple(args.cu_type or (CuType.TYPE_III.value,)),
            "tol": args.tol,
        }
    )


def _cmd_sweep(args: argparse.Namespace) -> int:
    preset = _preset(args)
    spec = _sweep_spec(args, preset)
    scenario = _scenario(args, preset)
    out = _out_dir(args, "sweep")

    result = run_sweep(spec, scenario, workers=args.workers)
    emit_csv(result.table, out / "results.csv")
    emit_csv(result.timings, out / "timings.csv")
    _write_manifest(out, args, scenario, sweep=spec.model_dump(mode="json"))
    return EXIT_SOLVER if result.failures else EXIT_OK


def _cmd_powermap(args: argparse.Namespace) -> int:
    preset = _preset(args)
    scenario = _scenario(args, preset)
    out = _out_dir(args, "powermap")
    covariances = covariances_for(scenario, out)
    methods = [Method(m) for m in args.method or ()]
    methods = methods or list(preset.map_methods if preset else ()) or [Method.SDR]
    cu_type = preset.map_cu_type if preset else CuType.TYPE_I
    if args.cu_type:
        cu_type = CuType(args.cu_type[0])
    spec = default_map_spec(scenario, args.resolution)

    summary: list[dict[str, object]] = []
    for method in methods:
        solution = design(method, scenario, covariances, cu_type, args.tol)
        grid = power_map(solution, scenario, spec)
        name = method.value.lower()
        emit_csv(grid.table(), out / f"powermap_{name}.csv")
        for k in grid.bs_indices:
            emit_heatmap(
                grid,
                out / f"powermap_{name}_bs{k + 1}.svg",
                bs_index=k,
                scenario=scenario,
                title=f"{method.value}: BS {k + 1}",
            )
        for k, (depth, isolation) in enumerate(
            zip(null_depth_db(solution, scenario), isolation_db(solution, scenario), strict=True)
        ):
            summary.append(
                {"method": method.value, "bs": k, "null_depth_db": depth, "isolation_db": isolation}
            )
    emit_csv(pd.DataFrame(summary), out / "null_depth.csv")
    _write_manifest(out, args, scenario, cu_type=cu_type.value)
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    scenario = _scenario(args, _preset(args))
    out = _out_dir(args, "verify")
    seed = args.seed if args.seed is not None else settings.seed
    rows = run_verify(scenario, tol=args.tol, seed=seed)
    emit_csv(pd.DataFrame(rows), out / "verify.csv")
    _write_manifest(out, args, scenario, seed=seed)
    failed = [r for r in rows if r["kind"] == "check" and not r["passed"]]
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    scenario = _scenario(args, _preset(args))
    out = _out_dir(args, "export-sdpa")
    method = Method(args.method[0]) if args.method else Method.SDR
    cu_type = CuType(args.cu_type[0]) if args.cu_type else CuType.TYPE_III

    problem: ConicProblem
    match method:
        case Method.WORST_CASE_ROBUST:
            problem = build_worst_case(scenario, cu_type)
        case Method.MRT:
            covariances = covariances_for(scenario, out)
            dirs = beam_directions(scenario, covariances)
            problem = build_lp(scenario, covariances, dirs, cu_type)
        case Method.SDR:
            problem = build_sdr(scenario, covariances_for(scenario, out), cu_type)
        case _:
            raise InvalidArgumentError(f"{method.value} has no single conic problem to export")

    export_sdpa(problem, args.output or out / f"{problem.label}.dat-s")
    return EXIT_OK


_COMMANDS = {
    "sweep": _cmd_sweep,
    "powermap": _cmd_powermap,
    "verify": _cmd_verify,
    "export-sdpa": _cmd_export,
}

# Input errors; every other IscapError is a failed design or computation.
_INVALID_INPUT = (
    ScenarioValidationError,
    InvalidArgumentError,
    ValidationError,
    ArtifactError,
    SingularityError,
    ContractViolationError,
    MissingCovarianceError,
)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one command and map failures to exit codes."""
    setup_logging()
    args = _parser().parse_args(argv)
    logger.info("command_started", command=args.command, figure=args.figure)
    try:
        code = _COMMANDS[args.command](args)
    except _INVALID_INPUT as exc:
        logger.error("command_invalid", command=args.command, error=str(exc))
        return EXIT_INVALID
    except IscapError as exc:
        logger.error(
            "command_solver_failed", command=args.command, error=str(exc), kind=type(exc).__name__
        )
        return EXIT_SOLVER
    logger.info("command_finished", command=args.command, exit_code=code)
    return code


if __name__ == "__main__":
    sys.exit(main())
