"""
Location-averaged ER channel covariance G = E[h(p) h(p)^H].

Uniform discs are integrated in polar coordinates with tensor Gauss-Legendre
rules, Gaussian regions over a 5-sigma box in whitened coordinates. Node
counts double until successive estimates agree to ``tol`` times the
Frobenius norm.
"""

from __future__ import annotations

import hashlib
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special
from structlog import get_logger

from iscap.core.config import settings
from iscap.core.exceptions import (
    ArtifactError,
    InvalidArgumentError,
    MissingCovarianceError,
    QuadratureToleranceError,
    SingularityError,
)
from iscap.models.geometry import ArrayGeometry
from iscap.models.scenario import RegionKind, Scenario, UncertaintyRegion
from iscap.services.channels import channel_matrix
from iscap.types.arrays import HermitianMatrix, RealArray
from iscap.utils.numerics import outer

logger = get_logger()

GAUSSIAN_BOX_SIGMAS = 5.0
_INITIAL_RADIAL = 8
_INITIAL_ANGULAR = 16
_BATCH_NODES = 8192

CACHE_MAGIC = b"ISCAPG\x00\x01"


@dataclass(frozen=True)
class QuadratureReport:
    nodes: int
    estimated_error: float


@dataclass(frozen=True)
class CovarianceG:
    """G_{l,e_k}: BS ``bs_index`` averaged over ER ``er_index``'s region."""

    matrix: HermitianMatrix
    bs_index: int
    er_index: int
    report: QuadratureReport

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])


@dataclass(frozen=True)
class MonteCarloG:
    """Sample-average estimate of G with per-entry standard errors."""

    matrix: HermitianMatrix
    std_error: RealArray
    std_error_real: RealArray
    std_error_imag: RealArray
    samples: int


def _check_clearance(g: ArrayGeometry, region: UncertaintyRegion) -> None:
    elements = g.element_coordinates()
    mu = region.center.as_array()
    if region.kind is RegionKind.GAUSSIAN:
        values, vectors = np.linalg.eigh(region.covariance_matrix())
        for q in elements:
            offset = vectors.T @ (q - mu)
            std = np.sqrt(np.clip(values, 0.0, None))
            inside = np.where(
                std > 0, np.abs(offset) <= GAUSSIAN_BOX_SIGMAS * std, np.abs(offset) <= 1e-12
            )
            if bool(np.all(inside)):
                raise SingularityError("gaussian region support overlaps an array element")
        return
    distances = np.linalg.norm(elements - mu[None, :], axis=1)
    if np.any(distances <= max(region.radius, 1e-12)):
        raise SingularityError(
            f"region around ({mu[0]}, {mu[1]}) overlaps an array element"
        )


def _disc_rule(region: UncertaintyRegion, radial: int, angular: int) -> tuple[RealArray, RealArray]:
    radius = region.radius
    xr, wr = special.roots_legendre(radial)
    xt, wt = special.roots_legendre(angular)
    rho = radius * (xr + 1.0) / 2.0
    theta = math.pi * (xt + 1.0)
    weights = np.outer(wr * radius / 2.0 * rho, wt * math.pi) / (math.pi * radius**2)
    mu = region.center.as_array()
    points = np.stack(
        (
            mu[0] + np.outer(rho, np.cos(theta)),
            mu[1] + np.outer(rho, np.sin(theta)),
        ),
        axis=-1,
    )
    return points.reshape(-1, 2), weights.reshape(-1)


def _gaussian_rule(region: UncertaintyRegion, order: int) -> tuple[RealArray, RealArray]:
    x, w = special.roots_legendre(order)
    z = GAUSSIAN_BOX_SIGMAS * x
    wz = GAUSSIAN_BOX_SIGMAS * w * np.exp(-(z**2) / 2.0) / math.sqrt(2.0 * math.pi)
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    weights = np.outer(wz, wz).reshape(-1)
    weights = weights / weights.sum()
    values, vectors = np.linalg.eigh(region.covariance_matrix())
    factor = vectors * np.sqrt(np.clip(values, 0.0, None))[None, :]
    offsets = np.column_stack((z1.reshape(-1), z2.reshape(-1))) @ factor.T
    return region.center.as_array()[None, :] + offsets, weights


def _weighted_outer_sum(g: ArrayGeometry, points: RealArray, weights: RealArray) -> HermitianMatrix:
    n = g.element_count
    total = np.zeros((n, n), dtype=np.complex128)
    for start in range(0, len(points), _BATCH_NODES):
        h = channel_matrix(g, points[start : start + _BATCH_NODES])
        w = weights[start : start + _BATCH_NODES]
        total += (h.T * w[None, :]) @ h.conj()
    return (total + total.conj().T) / 2.0


def compute_G(
    g: ArrayGeometry,
    region: UncertaintyRegion,
    tol: float | None = None,
    *,
    bs_index: int = 0,
    er_index: int = 0,
) -> CovarianceG:
    """
    Region-averaged covariance of the channel from ``g`` to the ER region.

    Args:
        g: Transmitting array
        region: ER location-uncertainty region
        tol: Relative Frobenius tolerance for the refinement loop
        bs_index: Index recorded on the result
        er_index: Index recorded on the result

    Returns:
        CovarianceG with its quadrature report; point regions return
        h(mu) h(mu)^H exactly

    Raises:
        SingularityError: If the region touches an array element
        QuadratureToleranceError: If refinement exceeds the node cap
    """
    tol = settings.quadrature_tol if tol is None else tol
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")

    if region.kind is RegionKind.POINT or (
        region.kind is RegionKind.UNIFORM_DISC and region.radius == 0.0
    ):
        h = channel_matrix(g, region.center.as_array()[None, :])[0]
        return CovarianceG(outer(h), bs_index, er_index, QuadratureReport(1, 0.0))

    _check_clearance(g, region)
    max_order = settings.quadrature_max_order

    def integrate(order: int) -> tuple[HermitianMatrix, int]:
        if region.kind is RegionKind.GAUSSIAN:
            points, weights = _gaussian_rule(region, order)
        else:
            points, weights = _disc_rule(region, max(order // 2, 1), order)
        return _weighted_outer_sum(g, points, weights), len(weights)

    order = max(_INITIAL_ANGULAR, _INITIAL_RADIAL * 2)
    current, nodes = integrate(order)
    error = math.inf
    while True:
        order *= 2
        if order > max_order:
            raise QuadratureToleranceError(error, tol, nodes=nodes)
        refined, nodes = integrate(order)
        error = float(np.max(np.abs(refined - current)))
        if error <= tol * float(np.linalg.norm(refined)):
            return CovarianceG(refined, bs_index, er_index, QuadratureReport(nodes, error))
        current = refined


def monte_carlo_G(
    g: ArrayGeometry,
    region: UncertaintyRegion,
    samples: int,
    seed: int,
) -> MonteCarloG:
    """
    Sample-average estimate of G from i.i.d. draws of the region density.

    Deterministic given ``seed``. ``std_error`` combines the real and
    imaginary standard errors of each entry.
    """
    if samples < 1:
        raise InvalidArgumentError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    n = g.element_count
    batch = max(1, (1 << 21) // (n * n))
    total = np.zeros((n, n), dtype=np.complex128)
    square_real = np.zeros((n, n))
    square_imag = np.zeros((n, n))

    remaining = samples
    while remaining > 0:
        count = min(batch, remaining)
        h = channel_matrix(g, region.sample(rng, count))
        terms = h[:, :, None] * h.conj()[:, None, :]
        total += terms.sum(axis=0)
        square_real += (terms.real**2).sum(axis=0)
        square_imag += (terms.imag**2).sum(axis=0)
        remaining -= count

    mean = total / samples
    if samples > 1:
        var_real = (square_real - samples * mean.real**2) / (samples - 1)
        var_imag = (square_imag - samples * mean.imag**2) / (samples - 1)
    else:
        var_real = np.zeros((n, n))
        var_imag = np.zeros((n, n))
    se_real = np.sqrt(np.clip(var_real, 0.0, None) / samples)
    se_imag = np.sqrt(np.clip(var_imag, 0.0, None) / samples)
    return MonteCarloG(
        matrix=(mean + mean.conj().T) / 2.0,
        std_error=np.hypot(se_real, se_imag),
        std_error_real=se_real,
        std_error_imag=se_imag,
        samples=samples,
    )


@dataclass
class CovarianceSet:
    """G matrices keyed by (bs_index, er_index)."""

    entries: dict[tuple[int, int], CovarianceG]

    def get(self, bs_index: int, er_index: int) -> CovarianceG:
        try:
            return self.entries[(bs_index, er_index)]
        except KeyError:
            raise MissingCovarianceError(bs_index, er_index) from None

    def matrix(self, bs_index: int, er_index: int) -> HermitianMatrix:
        return self.get(bs_index, er_index).matrix

    def __contains__(self, key: object) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class CovarianceCache:
    """Process-local memo of G keyed by (geometry, region, tol)."""

    def __init__(self) -> None:
        self._entries: dict[str, CovarianceG] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(g: ArrayGeometry, region: UncertaintyRegion, tol: float) -> str:
        payload = f"{g.model_dump_json()}|{region.model_dump_json()}|{tol!r}"
        return hashlib.sha256(payload.encode()).hexdigest()

    def __len__(self) -> int:
        return len(self._entries)

    def get_or_compute(
        self,
        g: ArrayGeometry,
        region: UncertaintyRegion,
        tol: float,
        bs_index: int,
        er_index: int,
    ) -> CovarianceG:
        key = self.key(g, region, tol)
        cached = self._entries.get(key)
        if cached is None:
            computed = compute_G(g, region, tol, bs_index=bs_index, er_index=er_index)
            with self._lock:
                cached = self._entries.setdefault(key, computed)
        return replace(cached, bs_index=bs_index, er_index=er_index)


def compute_covariances(
    scenario: Scenario,
    tol: float | None = None,
    *,
    cache: CovarianceCache | None = None,
    workers: int | None = None,
) -> CovarianceSet:
    """
    Compute G for every (BS, ER) pair of the scenario.

    Pairs are integrated concurrently; a shared ``cache`` avoids recomputing
    matrices for geometry/region pairs seen before.
    """
    tol = settings.quadrature_tol if tol is None else tol
    cache = cache if cache is not None else CovarianceCache()
    pairs = [(l, k) for l in range(scenario.K) for k in range(scenario.K)]

    def job(pair: tuple[int, int]) -> CovarianceG:
        l, k = pair
        return cache.get_or_compute(scenario.bs[l], scenario.ers[k].region, tol, l, k)

    with ThreadPoolExecutor(max_workers=workers or settings.covariance_workers) as pool:
        results = list(pool.map(job, pairs))

    logger.debug(
        "covariances_computed",
        pairs=len(results),
        max_nodes=max(r.report.nodes for r in results),
    )
    return CovarianceSet({(r.bs_index, r.er_index): r for r in results})


def save_covariances(path: Path, digest: str, covariances: CovarianceSet, tol: float) -> None:
    """
    Write every G to a little-endian binary file.

    Layout: 8-byte magic, 32-byte scenario SHA-256, uint32 entry count,
    float64 tol, then per entry uint32 bs, uint32 er, uint32 dimension,
    uint32 node count, float64 estimated error and dimension^2 complex128
    values in row-major order.
    """
    chunks = [
        CACHE_MAGIC,
        bytes.fromhex(digest),
        np.array([len(covariances)], dtype="<u4").tobytes(),
        np.array([tol], dtype="<f8").tobytes(),
    ]
    for (l, k), cov in sorted(covariances.entries.items()):
        chunks.append(
            np.array([l, k, cov.dimension, cov.report.nodes], dtype="<u4").tobytes()
        )
        chunks.append(np.array([cov.report.estimated_error], dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(cov.matrix, dtype="<c16").tobytes(order="C"))
    try:
        path.write_bytes(b"".join(chunks))
    except OSError as exc:
        raise ArtifactError(path, f"cannot write covariance cache: {exc}") from exc
    logger.info("covariance_cache_written", path=str(path), entries=len(covariances))


def load_covariances(path: Path, digest: str, tol: float) -> CovarianceSet | None:
    """Read a cache written by ``save_covariances``; None if stale or absent."""
    if not path.exists():
        return None
    data = path.read_bytes()
    if len(data) < 52 or data[:8] != CACHE_MAGIC:
        raise ArtifactError(path, "not a covariance cache file")
    stored_digest = data[8:40].hex()
    count = int(np.frombuffer(data, dtype="<u4", count=1, offset=40)[0])
    stored_tol = float(np.frombuffer(data, dtype="<f8", count=1, offset=44)[0])
    if stored_digest != digest or stored_tol != tol:
        logger.info("covariance_cache_stale", path=str(path))
        return None

    entries: dict[tuple[int, int], CovarianceG] = {}
    offset = 52
    try:
        for _ in range(count):
            header = np.frombuffer(data, dtype="<u4", count=4, offset=offset)
            l, k, n, nodes = (int(v) for v in header)
            error = float(np.frombuffer(data, dtype="<f8", count=1, offset=offset + 16)[0])
            offset += 24
            matrix = np.frombuffer(data, dtype="<c16", count=n * n, offset=offset).reshape(n, n)
            offset += 16 * n * n
            entries[(l, k)] = CovarianceG(
                matrix.astype(np.complex128), l, k, QuadratureReport(nodes, error)
            )
    except ValueError as exc:
        raise ArtifactError(path, f"truncated covariance cache: {exc}") from exc
    return CovarianceSet(entries)
