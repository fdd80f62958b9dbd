"""Scenario ingestion, serialization and builtin cases."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from collections.abc import Mapping
from importlib import resources
from pathlib import Path
from typing import Any, cast

import yaml
from pydantic import ValidationError
from structlog import get_logger

from iscap.core.exceptions import ScenarioValidationError
from iscap.models.documents import (
    SCHEMA_VERSION,
    UNIT_PAIRS,
    BaseStationDocument,
    RegionDocument,
    ScenarioDocument,
)
from iscap.models.experiments import SweepParameter
from iscap.models.geometry import ArrayGeometry, Point2D
from iscap.models.scenario import (
    CuSpec,
    CuType,
    ErSpec,
    RegionKind,
    Scenario,
    SensingArea,
    SystemParams,
    UncertaintyRegion,
)
from iscap.utils.numerics import db_to_linear, dbm_to_watt

logger = get_logger()

BUILTIN_CASES = (1, 2, 3)

DEFAULT_SINR_DB = 10.0
DEFAULT_HARVEST_DBM = -30.0
DEFAULT_ELEMENT_COUNT = 64
DEFAULT_SPACING_M = 0.0625
DEFAULT_SENSING_SAMPLES = 5


def discretize_sensing_area(center: Point2D, side: float, count: int) -> list[Point2D]:
    """
    Place ``count`` sample points symmetrically in a square.

    M=1 gives the center; M=5 adds the four points at (+/- side/4, +/- side/4).
    Other counts must be listed explicitly in the scenario document.

    Raises:
        ScenarioValidationError: If side <= 0 or the count is unsupported
    """
    if not side > 0:
        raise ScenarioValidationError(f"side must be positive, got {side}", "sensing.side_m")
    if count == 1:
        return [center]
    if count == 5:
        q = side / 4.0
        offsets = [(0.0, 0.0), (-q, -q), (q, -q), (-q, q), (q, q)]
        return [Point2D(x=center.x + dx, y=center.y + dy) for dx, dy in offsets]
    raise ScenarioValidationError(
        f"{count} sample points need an explicit 'points' list", "sensing.samples"
    )


def read_case_document(case_id: int) -> dict[str, Any]:
    """Raw document of a builtin case file."""
    if case_id not in BUILTIN_CASES:
        raise ScenarioValidationError(f"unknown builtin case {case_id}", "case")
    text = resources.files("iscap.cases").joinpath(f"case{case_id}.yaml").read_text()
    return cast(dict[str, Any], yaml.safe_load(text))


def merge_documents(base: Mapping[str, Any], overlay: Mapping[str, Any]) -> dict[str, Any]:
    """
    Deep-merge ``overlay`` onto ``base``.

    Mappings merge recursively, anything else (lists included) is replaced.
    Setting one member of a unit pair drops the other member from ``base``.
    """
    merged: dict[str, Any] = copy.deepcopy(dict(base))
    for key, value in overlay.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_documents(
                cast(Mapping[str, Any], merged[key]), cast(Mapping[str, Any], value)
            )
        else:
            merged[key] = copy.deepcopy(value)
    for pairs in UNIT_PAIRS.values():
        for first, second in pairs:
            if first in overlay and second in merged and second not in overlay:
                del merged[second]
            if second in overlay and first in merged and first not in overlay:
                del merged[first]
    return merged


def _validation_error(exc: ValidationError) -> ScenarioValidationError:
    first = exc.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or None
    return ScenarioValidationError(first["msg"], field)


def _region(doc: RegionDocument) -> UncertaintyRegion:
    center = Point2D.of(doc.center)
    if doc.kind == "uniform_disc":
        if doc.radius_m is not None:
            return UncertaintyRegion.disc(center, doc.radius_m)
        if doc.area_m2 is not None:
            return UncertaintyRegion.disc(center, math.sqrt(doc.area_m2 / math.pi))
        raise ValueError("uniform_disc regions need 'radius_m' or 'area_m2'")
    if doc.kind == "gaussian":
        return UncertaintyRegion(
            kind=RegionKind.GAUSSIAN, center=center, covariance=doc.covariance_m2
        )
    return UncertaintyRegion(kind=RegionKind.POINT, center=center, radius=doc.radius_m or 0.0)


def _geometry(
    doc: ScenarioDocument, station: BaseStationDocument, wavelength: float
) -> ArrayGeometry:
    if station.boresight_rad is not None:
        boresight = station.boresight_rad
    else:
        convention = (
            station.orientation_convention or doc.array.orientation_convention or "normal"
        )
        boresight = math.radians(cast(float, station.orientation_deg))
        if convention == "array_axis":
            boresight += math.pi / 2.0
    return ArrayGeometry(
        reference_center=Point2D.of(station.center),
        boresight_angle=boresight,
        element_count=doc.antennas
        or station.element_count
        or doc.array.element_count
        or DEFAULT_ELEMENT_COUNT,
        spacing=station.spacing_m or doc.array.spacing_m or DEFAULT_SPACING_M,
        carrier_wavelength=wavelength,
    )


def _build(doc: ScenarioDocument) -> Scenario:
    p = doc.params
    values: dict[str, float | None] = {
        "carrier_frequency": p.carrier_frequency_hz,
        "rcs_magnitude": p.rcs_magnitude,
        "eh_efficiency": p.eh_efficiency,
        "noise_comm": p.noise_comm_w
        if p.noise_comm_dbm is None
        else dbm_to_watt(p.noise_comm_dbm),
        "noise_sense": p.noise_sense_w
        if p.noise_sense_dbm is None
        else dbm_to_watt(p.noise_sense_dbm),
        "power_budget": p.power_budget_w
        if p.power_budget_dbm is None
        else dbm_to_watt(p.power_budget_dbm),
        "false_alarm": p.false_alarm,
    }
    params = SystemParams.model_validate({k: v for k, v in values.items() if v is not None})

    bs = tuple(_geometry(doc, station, params.wavelength) for station in doc.base_stations)

    cus = tuple(
        CuSpec(
            position=Point2D.of(cu.position),
            sinr_threshold=cu.sinr_threshold
            if cu.sinr_threshold is not None
            else db_to_linear(
                DEFAULT_SINR_DB if cu.sinr_threshold_db is None else cu.sinr_threshold_db
            ),
            cu_type=CuType(cu.cu_type or "I"),
        )
        for cu in doc.communication_users
    )

    ers = tuple(
        ErSpec(
            region=_region(er.region),
            harvest_threshold=er.harvest_threshold_w
            if er.harvest_threshold_w is not None
            else dbm_to_watt(
                DEFAULT_HARVEST_DBM
                if er.harvest_threshold_dbm is None
                else er.harvest_threshold_dbm
            ),
        )
        for er in doc.energy_receivers
    )

    s = doc.sensing
    center = Point2D.of(s.center)
    if s.points is not None:
        points = [Point2D.of(xy) for xy in s.points]
    else:
        points = discretize_sensing_area(
            center, s.side_m, s.samples or DEFAULT_SENSING_SAMPLES
        )
    sensing = SensingArea(center=center, side_length=s.side_m, sample_points=tuple(points))

    return Scenario(params=params, bs=bs, cus=cus, ers=ers, sensing=sensing)


def load_scenario(document: Mapping[str, Any]) -> Scenario:
    """
    Validate a scenario document and build the Scenario.

    A ``case`` key pulls in that builtin case; every other key overrides it.
    dBm values become watts and dB thresholds linear ratios.

    Args:
        document: Parsed scenario document

    Returns:
        Fully validated Scenario

    Raises:
        ScenarioValidationError: On schema violations, count mismatches or
            non-positive parameters, naming the offending field
    """
    raw: dict[str, Any] = dict(document)
    case_id = raw.get("case")
    if case_id is not None:
        if not isinstance(case_id, int):
            raise ScenarioValidationError(f"case must be an integer, got {case_id!r}", "case")
        raw = merge_documents(read_case_document(case_id), raw)

    try:
        doc = ScenarioDocument.model_validate(raw)
        return _build(doc)
    except ValidationError as exc:
        raise _validation_error(exc) from exc
    except ValueError as exc:
        raise ScenarioValidationError(str(exc)) from exc


def load_scenario_file(path: Path) -> Scenario:
    """Read a YAML scenario document from ``path``."""
    try:
        document = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioValidationError(f"cannot read {path}: {exc}") from exc
    if not isinstance(document, Mapping):
        raise ScenarioValidationError(f"{path} does not contain a mapping")
    scenario = load_scenario(cast(Mapping[str, Any], document))
    logger.info("scenario_loaded", path=str(path), bs_count=scenario.K)
    return scenario


def builtin_case(case_id: int) -> Scenario:
    """One of the three reference layouts; they differ only in CU positions."""
    return load_scenario({"case": case_id})


def _dump_region(region: UncertaintyRegion) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": region.kind.value, "center": [region.center.x, region.center.y]}
    if region.kind is RegionKind.UNIFORM_DISC:
        out["radius_m"] = region.radius
    elif region.kind is RegionKind.GAUSSIAN and region.covariance is not None:
        out["covariance_m2"] = [list(row) for row in region.covariance]
    return out


def dump_scenario(scenario: Scenario) -> dict[str, Any]:
    """
    Fully explicit document for ``scenario``.

    Uses watts, linear ratios and radian boresights so that
    ``load_scenario(dump_scenario(s)) == s`` exactly.
    """
    p = scenario.params
    return {
        "schema_version": SCHEMA_VERSION,
        "params": {
            "carrier_frequency_hz": p.carrier_frequency,
            "rcs_magnitude": p.rcs_magnitude,
            "eh_efficiency": p.eh_efficiency,
            "noise_comm_w": p.noise_comm,
            "noise_sense_w": p.noise_sense,
            "power_budget_w": p.power_budget,
            "false_alarm": p.false_alarm,
        },
        "base_stations": [
            {
                "center": [g.reference_center.x, g.reference_center.y],
                "boresight_rad": g.boresight_angle,
                "element_count": g.element_count,
                "spacing_m": g.spacing,
            }
            for g in scenario.bs
        ],
        "communication_users": [
            {
                "position": [cu.position.x, cu.position.y],
                "sinr_threshold": cu.sinr_threshold,
                "cu_type": cu.cu_type.value,
            }
            for cu in scenario.cus
        ],
        "energy_receivers": [
            {"region": _dump_region(er.region), "harvest_threshold_w": er.harvest_threshold}
            for er in scenario.ers
        ],
        "sensing": {
            "center": [scenario.sensing.center.x, scenario.sensing.center.y],
            "side_m": scenario.sensing.side_length,
            "points": [[q.x, q.y] for q in scenario.sensing.sample_points],
        },
    }


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical JSON form of the dumped scenario."""
    canonical = json.dumps(dump_scenario(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def with_antennas(scenario: Scenario, element_count: int) -> Scenario:
    """Same layout with every BS resized to ``element_count`` elements."""
    bs = tuple(g.with_element_count(element_count) for g in scenario.bs)
    return scenario.model_copy(update={"bs": bs})


def apply_parameter(scenario: Scenario, parameter: SweepParameter, value: float) -> Scenario:
    """
    Set one sweep quantity on every BS/CU/ER it concerns.

    Args:
        scenario: Base scenario
        parameter: Which quantity to set
        value: New value in the unit named by ``parameter``

    Returns:
        Modified copy of the scenario
    """
    match parameter:
        case SweepParameter.SINR_THRESHOLD_DB:
            gamma = db_to_linear(value)
            cus = tuple(cu.model_copy(update={"sinr_threshold": gamma}) for cu in scenario.cus)
            return scenario.model_copy(update={"cus": cus})
        case SweepParameter.HARVEST_THRESHOLD_DBM:
            omega = dbm_to_watt(value)
            ers = tuple(er.model_copy(update={"harvest_threshold": omega}) for er in scenario.ers)
            return scenario.model_copy(update={"ers": ers})
        case SweepParameter.UNCERTAINTY_AREA_M2:
            ers = tuple(
                er.model_copy(
                    update={"region": UncertaintyRegion.from_area(er.region.center, value)}
                )
                for er in scenario.ers
            )
            return scenario.model_copy(update={"ers": ers})
        case SweepParameter.POWER_BUDGET_DBM:
            params = scenario.params.model_copy(update={"power_budget": dbm_to_watt(value)})
            return scenario.model_copy(update={"params": params})
        case SweepParameter.FALSE_ALARM:
            if not 0.0 < value < 1.0:
                raise ScenarioValidationError(
                    f"false alarm must lie in (0, 1): {value}", "false_alarm"
                )
            params = scenario.params.model_copy(update={"false_alarm": value})
            return scenario.model_copy(update={"params": params})
        case SweepParameter.ANTENNAS:
            return with_antennas(scenario, int(value))
