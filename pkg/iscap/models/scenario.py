"""Scenario models: system parameters, users, regions and the full network instance."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from iscap._compat import Self, StrEnum
from iscap.models.geometry import ArrayGeometry, Point2D
from iscap.types.arrays import RealArray
from iscap.utils.numerics import SPEED_OF_LIGHT, dbm_to_watt

# Sample points may sit on the sensing-square boundary up to this slack (m).
_INSIDE_TOL = 1e-9


class CuType(StrEnum):
    """Which dual-purpose interference terms a CU can cancel."""

    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"


class RegionKind(StrEnum):
    POINT = "point"
    UNIFORM_DISC = "uniform_disc"
    GAUSSIAN = "gaussian"


class SystemParams(BaseModel):
    """Physical constants and budgets. Defaults are the reference system values."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    carrier_frequency: float = Field(default=2.4e9, gt=0)
    rcs_magnitude: float = Field(default=1.0, gt=0)
    eh_efficiency: float = Field(default=0.7, gt=0, le=1)
    noise_comm: float = Field(default=dbm_to_watt(-50.0), gt=0)
    noise_sense: float = Field(default=dbm_to_watt(-97.0), gt=0)
    power_budget: float = Field(default=dbm_to_watt(27.0), gt=0)
    false_alarm: float = Field(default=1e-4, gt=0, lt=1)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


class CuSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    position: Point2D
    sinr_threshold: float = Field(gt=0)
    cu_type: CuType = CuType.TYPE_I


class UncertaintyRegion(BaseModel):
    """
    Location-uncertainty region of an energy receiver.

    ``point`` has zero radius; ``uniform_disc`` has density 1/(pi R^2) on the
    disc; ``gaussian`` is N(center, covariance).
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: RegionKind = RegionKind.POINT
    center: Point2D
    radius: float = Field(default=0.0, ge=0)
    covariance: tuple[tuple[float, float], tuple[float, float]] | None = None

    @model_validator(mode="after")
    def _check_kind(self) -> Self:
        if self.kind is RegionKind.POINT and self.radius != 0.0:
            raise ValueError("point regions must have radius 0")
        if self.kind is RegionKind.GAUSSIAN:
            if self.covariance is None:
                raise ValueError("gaussian regions require a covariance matrix")
            sigma = np.asarray(self.covariance, dtype=np.float64)
            if abs(sigma[0, 1] - sigma[1, 0]) > 1e-12 * max(1.0, np.abs(sigma).max()):
                raise ValueError("covariance must be symmetric")
            if np.linalg.eigvalsh(sigma)[0] < -1e-12:
                raise ValueError("covariance must be positive semidefinite")
        elif self.covariance is not None:
            raise ValueError(f"covariance is only valid for gaussian regions, not {self.kind}")
        return self

    @classmethod
    def point(cls, center: Point2D) -> UncertaintyRegion:
        return cls(kind=RegionKind.POINT, center=center)

    @classmethod
    def disc(cls, center: Point2D, radius: float) -> UncertaintyRegion:
        return cls(kind=RegionKind.UNIFORM_DISC, center=center, radius=radius)

    @classmethod
    def from_area(cls, center: Point2D, area: float) -> UncertaintyRegion:
        """Disc of the given area in m^2; zero area gives a point region."""
        if area < 0:
            raise ValueError(f"area must be nonnegative, got {area}")
        if area == 0.0:
            return cls.point(center)
        return cls.disc(center, math.sqrt(area / math.pi))

    @property
    def area(self) -> float:
        if self.kind is RegionKind.UNIFORM_DISC:
            return math.pi * self.radius**2
        return 0.0

    def covariance_matrix(self) -> RealArray:
        if self.covariance is None:
            return np.zeros((2, 2))
        return np.asarray(self.covariance, dtype=np.float64)

    def sample(self, rng: np.random.Generator, count: int) -> RealArray:
        """Draw ``count`` i.i.d. positions from the region's density, shape (count, 2)."""
        mu = self.center.as_array()
        if self.kind is RegionKind.POINT:
            return np.repeat(mu[None, :], count, axis=0)
        if self.kind is RegionKind.UNIFORM_DISC:
            rho = self.radius * np.sqrt(rng.random(count))
            theta = 2.0 * math.pi * rng.random(count)
            return mu + np.column_stack((rho * np.cos(theta), rho * np.sin(theta)))
        return rng.multivariate_normal(mu, self.covariance_matrix(), size=count)


class ErSpec(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    region: UncertaintyRegion
    harvest_threshold: float = Field(gt=0)


class SensingArea(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    center: Point2D
    side_length: float = Field(gt=0)
    sample_points: tuple[Point2D, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_inside(self) -> Self:
        half = self.side_length / 2.0 + _INSIDE_TOL
        for i, p in enumerate(self.sample_points):
            if abs(p.x - self.center.x) > half or abs(p.y - self.center.y) > half:
                raise ValueError(f"sample point {i} ({p.x}, {p.y}) lies outside the square")
        return self

    @property
    def sample_count(self) -> int:
        return len(self.sample_points)

    def coordinates(self) -> RealArray:
        return np.array([[p.x, p.y] for p in self.sample_points], dtype=np.float64)


class Scenario(BaseModel):
    """A complete network instance; BS k serves CU k and ER k."""

    model_config = ConfigDict(frozen=True)

    params: SystemParams
    bs: tuple[ArrayGeometry, ...] = Field(min_length=1)
    cus: tuple[CuSpec, ...]
    ers: tuple[ErSpec, ...]
    sensing: SensingArea

    @model_validator(mode="after")
    def _check_counts(self) -> Self:
        k = len(self.bs)
        if len(self.cus) != k or len(self.ers) != k:
            raise ValueError(
                f"expected one CU and one ER per BS: {k} BSs, "
                f"{len(self.cus)} CUs, {len(self.ers)} ERs"
            )
        wavelength = self.params.wavelength
        for i, g in enumerate(self.bs):
            if not math.isclose(g.carrier_wavelength, wavelength, rel_tol=1e-12):
                raise ValueError(
                    f"bs[{i}] wavelength {g.carrier_wavelength} does not match "
                    f"carrier wavelength {wavelength}"
                )
        return self

    @property
    def K(self) -> int:
        return len(self.bs)
