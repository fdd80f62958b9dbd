"""Near-field spherical-wavefront channels and field-region classification."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from iscap.core.exceptions import SingularityError
from iscap.models.geometry import ArrayGeometry, FieldRegion, Point2D
from iscap.types.arrays import ComplexVector, RealArray

# Distances at or below this are treated as coincident with an element.
COINCIDENCE_TOL = 1e-12


@dataclass(frozen=True)
class ChannelVector:
    """Channel from one array to one point."""

    vector: ComplexVector
    source_geometry_id: str
    target_point: Point2D


def geometry_id(g: ArrayGeometry) -> str:
    """Short stable identifier derived from the geometry's content."""
    return hashlib.sha256(g.model_dump_json().encode()).hexdigest()[:12]


def element_positions(g: ArrayGeometry) -> list[Point2D]:
    """Element coordinates q_n, uniformly spaced and centered on the reference."""
    return g.element_positions()


def element_distances(g: ArrayGeometry, points: RealArray) -> RealArray:
    """
    Distances r_{p,n} from each point to each element.

    Args:
        g: Array geometry
        points: (P, 2) array of point coordinates

    Returns:
        (P, N) array of distances

    Raises:
        SingularityError: If any point coincides with an element
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    elements = g.element_coordinates()
    distances = np.linalg.norm(pts[:, None, :] - elements[None, :, :], axis=-1)
    if np.any(distances <= COINCIDENCE_TOL):
        row = int(np.argwhere(distances <= COINCIDENCE_TOL)[0][0])
        raise SingularityError(
            f"point ({pts[row, 0]}, {pts[row, 1]}) coincides with an array element"
        )
    return distances


def channel_matrix(g: ArrayGeometry, points: RealArray) -> np.ndarray:
    """Rows h(p)^T for each point: entries exp(-j kappa r) / (2 kappa r)."""
    kappa = g.wavenumber
    r = element_distances(g, points)
    return np.exp(-1j * kappa * r) / (2.0 * kappa * r)


def channel_vector(g: ArrayGeometry, p: Point2D) -> ChannelVector:
    """Spherical-wavefront channel h(p) from array ``g`` to point ``p``."""
    vector = channel_matrix(g, p.as_array()[None, :])[0]
    return ChannelVector(vector=vector, source_geometry_id=geometry_id(g), target_point=p)


def echo_weight(g: ArrayGeometry, p: Point2D, rcs_magnitude: float) -> float:
    """Round-trip weight |zeta|^2 sum_n lambda^2 / (16 pi^2 r_n^2)."""
    r = element_distances(g, p.as_array()[None, :])[0]
    lam = g.carrier_wavelength
    return float(rcs_magnitude**2 * np.sum(lam**2 / (16.0 * math.pi**2 * r**2)))


def rayleigh_distance(g: ArrayGeometry) -> float:
    """2 D^2 / lambda."""
    return 2.0 * g.aperture**2 / g.carrier_wavelength


def field_region(g: ArrayGeometry, p: Point2D) -> FieldRegion:
    """Classify ``p`` by its distance to the array's reference center."""
    r = p.distance_to(g.reference_center)
    rayleigh = rayleigh_distance(g)
    if rayleigh == 0.0 or r >= rayleigh:
        return FieldRegion.FAR
    reactive = (g.aperture**4 / (8.0 * g.carrier_wavelength)) ** (1.0 / 3.0)
    if r <= reactive:
        return FieldRegion.REACTIVE
    return FieldRegion.RADIATIVE_NEAR


def normalized_correlation(g: ArrayGeometry, p: Point2D, q: Point2D) -> float:
    """|h(p)^H h(q)|^2 / (|h(p)|^2 |h(q)|^2)."""
    hp = channel_vector(g, p).vector
    hq = channel_vector(g, q).vector
    inner = np.vdot(hp, hq)
    return float(abs(inner) ** 2 / (np.vdot(hp, hp).real * np.vdot(hq, hq).real))
