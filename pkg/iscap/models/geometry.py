"""Geometry models: points and uniform linear arrays."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from iscap._compat import StrEnum
from iscap.types.arrays import RealArray


class Point2D(BaseModel):
    """A point in the plane, in meters."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x: float
    y: float

    @classmethod
    def of(cls, xy: tuple[float, float] | list[float]) -> Point2D:
        """Build from an (x, y) pair."""
        return cls(x=float(xy[0]), y=float(xy[1]))

    def as_array(self) -> RealArray:
        return np.array([self.x, self.y], dtype=np.float64)

    def distance_to(self, other: Point2D) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


class FieldRegion(StrEnum):
    """Propagation region of a point relative to an array."""

    REACTIVE = "reactive"
    RADIATIVE_NEAR = "radiative-near"
    FAR = "far"


class ArrayGeometry(BaseModel):
    """
    One base station's uniform linear array.

    ``boresight_angle`` is the outward array normal in radians, counterclockwise
    from +x. Elements lie along the perpendicular, centered on
    ``reference_center``.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    reference_center: Point2D
    boresight_angle: float
    element_count: int = Field(ge=1)
    spacing: float = Field(gt=0)
    carrier_wavelength: float = Field(gt=0)

    @property
    def aperture(self) -> float:
        """D = (N - 1) d."""
        return (self.element_count - 1) * self.spacing

    @property
    def wavenumber(self) -> float:
        """kappa = 2 pi / lambda."""
        return 2.0 * math.pi / self.carrier_wavelength

    @property
    def axis_angle(self) -> float:
        """Direction along which elements are laid out."""
        return self.boresight_angle - math.pi / 2.0

    def element_coordinates(self) -> RealArray:
        """Element coordinates as an (N, 2) array."""
        offsets = (np.arange(self.element_count) - (self.element_count - 1) / 2.0) * (
            self.spacing
        )
        axis = np.array([math.cos(self.axis_angle), math.sin(self.axis_angle)])
        return self.reference_center.as_array()[None, :] + offsets[:, None] * axis

    def element_positions(self) -> list[Point2D]:
        return [Point2D.of((float(x), float(y))) for x, y in self.element_coordinates()]

    def with_element_count(self, element_count: int) -> ArrayGeometry:
        return ArrayGeometry.model_validate(
            {**self.model_dump(), "element_count": element_count}
        )
