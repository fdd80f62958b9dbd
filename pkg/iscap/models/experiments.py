"""Experiment definitions: parameter sweeps and power maps."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator

from iscap._compat import Self, StrEnum
from iscap.models.scenario import CuType


class SweepParameter(StrEnum):
    """Scenario quantities a sweep can vary (units in the name)."""

    SINR_THRESHOLD_DB = "sinr_threshold_db"
    HARVEST_THRESHOLD_DBM = "harvest_threshold_dbm"
    UNCERTAINTY_AREA_M2 = "uncertainty_area_m2"
    POWER_BUDGET_DBM = "power_budget_dbm"
    FALSE_ALARM = "false_alarm"
    ANTENNAS = "antennas"


class Method(StrEnum):
    SDR = "SDR"
    MRT = "MRT"
    MRT_ASYMPTOTIC = "MRT-asymptotic"
    NON_COORDINATED = "NonCoordinated"
    WORST_CASE_ROBUST = "WorstCaseRobust"


class SweepSpec(BaseModel):
    """
    A grid of scenario variations and the designs to run at each grid point.

    With a secondary axis the grid is the Cartesian product, primary-major.
    ``overrides`` are applied to the scenario before any grid value.
    """

    model_config = ConfigDict(frozen=True)

    swept_parameter: SweepParameter
    grid: tuple[float, ...] = Field(min_length=1)
    secondary_parameter: SweepParameter | None = None
    secondary_grid: tuple[float, ...] = ()
    overrides: dict[SweepParameter, float] = Field(default_factory=dict)
    methods: tuple[Method, ...] = Field(default=(Method.SDR,), min_length=1)
    cu_types: tuple[CuType, ...] = Field(default=(CuType.TYPE_III,), min_length=1)
    tol: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_secondary(self) -> Self:
        if (self.secondary_parameter is None) != (len(self.secondary_grid) == 0):
            raise ValueError("secondary_parameter and secondary_grid go together")
        if self.secondary_parameter == self.swept_parameter:
            raise ValueError("secondary axis must differ from the primary axis")
        return self


class PowerMapSpec(BaseModel):
    """Rectangular evaluation grid; cell values are taken at cell centers."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = Field(gt=0)
    ny: int = Field(gt=0)
    bs_indices: tuple[int, ...] | None = None

    @model_validator(mode="after")
    def _check_box(self) -> Self:
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("bounding box must have positive extent")
        return self

    @property
    def cell_width(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def cell_height(self) -> float:
        return (self.y_max - self.y_min) / self.ny
