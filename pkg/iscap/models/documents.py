"""
Scenario document schema (YAML).

Unit-bearing fields come in explicit pairs (``*_dbm``/``*_w``,
``*_db``/linear ratio, ``orientation_deg``/``boresight_rad``); a document
may set at most one member of each pair. Omitted values fall back to the
reference system defaults.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from iscap._compat import Self

SCHEMA_VERSION = 1

OrientationConvention = Literal["array_axis", "normal"]
Pair = tuple[float, float]

# (preferred, alternate) members of every unit pair, by section.
UNIT_PAIRS: dict[str, list[tuple[str, str]]] = {
    "params": [
        ("noise_comm_dbm", "noise_comm_w"),
        ("noise_sense_dbm", "noise_sense_w"),
        ("power_budget_dbm", "power_budget_w"),
    ],
    "base_stations": [("orientation_deg", "boresight_rad")],
    "communication_users": [("sinr_threshold_db", "sinr_threshold")],
    "energy_receivers": [("harvest_threshold_dbm", "harvest_threshold_w")],
    "region": [("radius_m", "area_m2")],
}


def _at_most_one(model: BaseModel, section: str) -> None:
    for first, second in UNIT_PAIRS[section]:
        if getattr(model, first) is not None and getattr(model, second) is not None:
            raise ValueError(f"set only one of '{first}' and '{second}'")


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class ParamsDocument(_Document):
    carrier_frequency_hz: float | None = Field(default=None, gt=0)
    rcs_magnitude: float | None = Field(default=None, gt=0)
    eh_efficiency: float | None = Field(default=None, gt=0, le=1)
    noise_comm_dbm: float | None = None
    noise_comm_w: float | None = Field(default=None, gt=0)
    noise_sense_dbm: float | None = None
    noise_sense_w: float | None = Field(default=None, gt=0)
    power_budget_dbm: float | None = None
    power_budget_w: float | None = Field(default=None, gt=0)
    false_alarm: float | None = Field(default=None, gt=0, lt=1)

    @model_validator(mode="after")
    def _check_pairs(self) -> Self:
        _at_most_one(self, "params")
        return self


class ArrayDocument(_Document):
    """Defaults applied to every base station that does not override them."""

    element_count: int | None = Field(default=None, ge=1)
    spacing_m: float | None = Field(default=None, gt=0)
    orientation_convention: OrientationConvention | None = None


class BaseStationDocument(_Document):
    center: Pair
    orientation_deg: float | None = None
    boresight_rad: float | None = None
    orientation_convention: OrientationConvention | None = None
    element_count: int | None = Field(default=None, ge=1)
    spacing_m: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_pairs(self) -> Self:
        _at_most_one(self, "base_stations")
        if self.orientation_deg is None and self.boresight_rad is None:
            raise ValueError("one of 'orientation_deg' or 'boresight_rad' is required")
        return self


class CommunicationUserDocument(_Document):
    position: Pair
    sinr_threshold_db: float | None = None
    sinr_threshold: float | None = Field(default=None, gt=0)
    cu_type: Literal["I", "II", "III"] | None = None

    @model_validator(mode="after")
    def _check_pairs(self) -> Self:
        _at_most_one(self, "communication_users")
        return self


class RegionDocument(_Document):
    kind: Literal["point", "uniform_disc", "gaussian"] = "point"
    center: Pair
    radius_m: float | None = Field(default=None, ge=0)
    area_m2: float | None = Field(default=None, ge=0)
    covariance_m2: tuple[Pair, Pair] | None = None

    @model_validator(mode="after")
    def _check_pairs(self) -> Self:
        _at_most_one(self, "region")
        return self


class EnergyReceiverDocument(_Document):
    region: RegionDocument
    harvest_threshold_dbm: float | None = None
    harvest_threshold_w: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_pairs(self) -> Self:
        _at_most_one(self, "energy_receivers")
        return self


class SensingDocument(_Document):
    center: Pair
    side_m: float = Field(default=3.0, gt=0)
    samples: int | None = Field(default=None, ge=1)
    points: list[Pair] | None = None


class ScenarioDocument(_Document):
    """Top-level scenario document."""

    schema_version: Literal[1] = SCHEMA_VERSION
    case: int | None = None
    antennas: int | None = Field(default=None, ge=1)
    params: ParamsDocument = ParamsDocument()
    array: ArrayDocument = ArrayDocument()
    base_stations: list[BaseStationDocument] = Field(min_length=1)
    communication_users: list[CommunicationUserDocument]
    energy_receivers: list[EnergyReceiverDocument]
    sensing: SensingDocument
