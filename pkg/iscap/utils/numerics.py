"""Shared numerical kernels: Gaussian tails, Hermitian helpers, unit conversions."""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg
from scipy.stats import norm

from iscap.core.config import settings
from iscap.core.exceptions import (
    ContractViolationError,
    DomainError,
    InvalidArgumentError,
)
from iscap.types.arrays import ComplexVector, HermitianMatrix

# Engineering value; keeps 2.4 GHz at a 0.125 m wavelength.
SPEED_OF_LIGHT = 3.0e8

HERMITIAN_TOL = 1e-12
_TINY = float(np.finfo(float).tiny)


def q_function(x: float) -> float:
    """
    Gaussian upper-tail probability Q(x).

    Args:
        x: Finite real argument

    Returns:
        Q(x) in (0, 1); deep right-tail values are clamped to the smallest
        positive normal double

    Raises:
        InvalidArgumentError: If x is NaN or infinite
    """
    if not math.isfinite(x):
        raise InvalidArgumentError(f"q_function requires a finite argument, got {x}")
    return max(float(norm.sf(x)), _TINY)


def q_inverse(p: float) -> float:
    """
    Inverse of the Gaussian upper-tail probability.

    Raises:
        DomainError: If p is not strictly between 0 and 1
    """
    if not (math.isfinite(p) and 0.0 < p < 1.0):
        raise DomainError(f"q_inverse requires 0 < p < 1, got {p}")
    return float(norm.isf(p)) + 0.0


def ensure_hermitian(matrix: HermitianMatrix, name: str = "matrix") -> HermitianMatrix:
    """
    Check conjugate symmetry and return the symmetrized matrix (M + M^H)/2.

    The tolerance is 1e-12 on entries, relative to the largest entry once
    entries exceed unit magnitude.

    Raises:
        ContractViolationError: If M is not square or not Hermitian
    """
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ContractViolationError(f"{name} must be a non-empty square matrix")
    scale = max(1.0, float(np.max(np.abs(m))))
    asymmetry = float(np.max(np.abs(m - m.conj().T)))
    if asymmetry > HERMITIAN_TOL * scale:
        raise ContractViolationError(
            f"{name} is not Hermitian (max |M - M^H| = {asymmetry:.3e})"
        )
    return (m + m.conj().T) / 2


def _fix_phase(vector: ComplexVector) -> ComplexVector:
    """Rotate so the largest-magnitude entry (lowest index on ties) is real >= 0."""
    magnitudes = np.abs(vector)
    peak = float(magnitudes.max())
    if peak == 0.0:
        return vector
    index = int(np.flatnonzero(magnitudes >= peak * (1.0 - 1e-12))[0])
    return vector * np.exp(-1j * np.angle(vector[index]))


def principal_eigenpair(matrix: HermitianMatrix) -> tuple[float, ComplexVector]:
    """
    Largest eigenvalue and its unit eigenvector under a fixed phase rule.

    When the top eigenvalue is repeated, the vector returned is the
    normalized column of the top-eigenspace projector with the largest norm
    (lowest index on ties), so e.g. the identity yields e_1.

    Args:
        matrix: Hermitian matrix

    Returns:
        Tuple of (eigenvalue, unit eigenvector)
    """
    m = ensure_hermitian(matrix)
    values, vectors = linalg.eigh(m)
    top = float(values[-1])
    scale = max(float(np.max(np.abs(values))), _TINY)
    degenerate = np.flatnonzero(values >= top - 1e-10 * scale)

    if degenerate.size == 1:
        vector = vectors[:, -1]
    else:
        basis = vectors[:, degenerate]
        projector = basis @ basis.conj().T
        norms = np.linalg.norm(projector, axis=0)
        column = int(np.flatnonzero(norms >= norms.max() * (1.0 - 1e-12))[0])
        vector = projector[:, column] / norms[column]

    vector = vector / np.linalg.norm(vector)
    return top, _fix_phase(vector.astype(np.complex128))


def psd_residual(matrix: HermitianMatrix) -> float:
    """Return max(0, -lambda_min(M)); zero iff M is PSD."""
    m = ensure_hermitian(matrix)
    smallest = float(linalg.eigvalsh(m)[0])
    return max(0.0, -smallest)


def numerical_rank(matrix: HermitianMatrix, cutoff: float | None = None) -> int:
    """Count eigenvalues above ``cutoff`` times the largest one."""
    cutoff = settings.rank_cutoff if cutoff is None else cutoff
    values = linalg.eigvalsh(ensure_hermitian(matrix))
    largest = float(values[-1])
    if largest <= 0.0:
        return 0
    return int(np.count_nonzero(values > cutoff * largest))


def outer(vector: ComplexVector) -> HermitianMatrix:
    """Rank-one Hermitian outer product v v^H."""
    v = np.asarray(vector, dtype=np.complex128)
    return np.outer(v, v.conj())


def trace_inner(coefficient: HermitianMatrix, variable: HermitianMatrix) -> float:
    """Real part of trace(C X), the inner product on Hermitian matrices."""
    return float(np.real(np.sum(coefficient * variable.T)))


def quad_form(matrix: HermitianMatrix, vector: ComplexVector) -> float:
    """Real quadratic form v^H M v."""
    return float(np.real(np.vdot(vector, matrix @ vector)))


def dbm_to_watt(dbm: float) -> float:
    """Convert dBm to watts."""
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def watt_to_dbm(watt: float) -> float:
    """Convert watts to dBm."""
    if not watt > 0.0:
        raise InvalidArgumentError(f"power must be positive to express in dBm: {watt}")
    return float(10.0 * math.log10(watt) + 30.0)


def db_to_linear(db: float) -> float:
    """Convert a dB ratio to linear scale."""
    return float(10.0 ** (db / 10.0))


def linear_to_db(ratio: float) -> float:
    """Convert a linear ratio to dB."""
    if not ratio > 0.0:
        raise InvalidArgumentError(f"ratio must be positive to express in dB: {ratio}")
    return float(10.0 * math.log10(ratio))


