"""Row shapes of the emitted result tables."""

from typing import TypedDict


class SweepRowTD(TypedDict):
    """One (grid point, method, CU type) cell of a sweep.

    ``primary_value``/``secondary_value`` are renamed to the swept
    parameter names when the table is assembled.
    """

    primary_index: int
    secondary_index: int
    primary_value: float
    secondary_value: float
    method: str
    cu_type: str
    status: str
    theta: float
    detection_probability: float
    worst_point: int
    min_sinr_slack: float
    min_harvest_slack: float
    min_power_slack: float
    feasible: bool
    reconstruction_error: float
    message: str


class TimingRowTD(TypedDict):
    primary_index: int
    secondary_index: int
    method: str
    cu_type: str
    seconds: float
    iterations: int


class PowerCellTD(TypedDict):
    bs: int
    ix: int
    iy: int
    x: float
    y: float
    power: float
    valid: bool


class VerifyRowTD(TypedDict):
    """Outcome of one invariant check; ``kind`` is "check" or "info"."""

    check: str
    kind: str
    passed: bool
    value: float
    threshold: float
    detail: str


class ScalingRowTD(TypedDict):
    antennas: int
    variables: int
    seconds: float
    iterations: int
    seconds_per_iteration: float
