"""Performance functionals of a beamforming solution."""

from __future__ import annotations

import math

import numpy as np

from iscap.core.exceptions import ContractViolationError, InvalidArgumentError
from iscap.models.geometry import Point2D
from iscap.models.scenario import CuType, Scenario
from iscap.models.solution import BeamformingSolution
from iscap.services.channels import channel_vector, echo_weight
from iscap.services.covariance import CovarianceSet
from iscap.types.arrays import HermitianMatrix
from iscap.utils.numerics import q_function, q_inverse, quad_form, trace_inner

# Imaginary residue of trace expressions tolerated before truncation.
_IMAG_TOL = 1e-10


def _real(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > _IMAG_TOL * max(scale, abs(value.real), 1e-300):
        raise ContractViolationError(f"{what} has a non-negligible imaginary part: {value}")
    return float(value.real)


def _check_index(index: int, count: int, what: str) -> None:
    if not 0 <= index < count:
        raise InvalidArgumentError(f"{what} index {index} out of range [0, {count})")


def sinr_terms(
    sol: BeamformingSolution, scenario: Scenario, cu_index: int
) -> dict[str, float]:
    """Desired power and the three interference terms seen by CU ``cu_index``."""
    _check_index(cu_index, scenario.K, "cu")
    p = scenario.cus[cu_index].position
    h = [channel_vector(g, p).vector for g in scenario.bs]
    k = cu_index
    others = [l for l in range(scenario.K) if l != k]
    return {
        "desired": abs(np.vdot(h[k], sol.info_beams[k])) ** 2,
        "intra_dual": quad_form(sol.dual_covariances[k], h[k]),
        "inter_info": sum(abs(np.vdot(h[l], sol.info_beams[l])) ** 2 for l in others),
        "inter_dual": sum(quad_form(sol.dual_covariances[l], h[l]) for l in others),
    }


def sinr(
    sol: BeamformingSolution, scenario: Scenario, cu_index: int, cu_type: CuType
) -> float:
    """
    SINR of CU ``cu_index`` for the given CU type.

    Type I counts intra-cell dual, inter-cell information and inter-cell
    dual interference; Type II drops the intra-cell dual term; Type III
    keeps only inter-cell information interference.
    """
    terms = sinr_terms(sol, scenario, cu_index)
    interference = terms["inter_info"]
    if cu_type is not CuType.TYPE_III:
        interference += terms["inter_dual"]
    if cu_type is CuType.TYPE_I:
        interference += terms["intra_dual"]
    return terms["desired"] / (interference + scenario.params.noise_comm)


def avg_harvested_power(
    sol: BeamformingSolution, scenario: Scenario, covariances: CovarianceSet, er_index: int
) -> float:
    """eta * sum_l trace(G_{l,k} (w_l w_l^H + R_l))."""
    _check_index(er_index, scenario.K, "er")
    total = 0.0
    for l in range(scenario.K):
        total += trace_inner(covariances.matrix(l, er_index), sol.transmit_covariance(l))
    return max(0.0, scenario.params.eh_efficiency * total)


def round_trip_matrix(h: np.ndarray) -> HermitianMatrix:
    """H = h* h^T, the monostatic round-trip form."""
    return np.outer(h.conj(), h)


def echo_power(sol: BeamformingSolution, scenario: Scenario, m: int) -> float:
    """
    Direct-link echo statistic phi_m at sensing point ``m``.

    phi_m = sum_k c_{k,m} trace(h* h^T (w_k w_k^H + R_k)), where c_{k,m}
    is the round-trip weight |zeta|^2 sum_n lambda^2 / (16 pi^2 r_n^2).
    """
    _check_index(m, scenario.sensing.sample_count, "sensing point")
    p = scenario.sensing.sample_points[m]
    total = 0.0
    for k, g in enumerate(scenario.bs):
        h = channel_vector(g, p).vector
        covariance = sol.transmit_covariance(k)
        value = complex(h @ covariance @ h.conj())
        scale = float(np.linalg.norm(h) ** 2 * np.abs(covariance).max(initial=0.0))
        weight = echo_weight(g, p, scenario.params.rcs_magnitude)
        total += weight * _real(value, scale, "echo trace")
    return max(0.0, total)


def detection_probability(phi: float, noise: float, false_alarm: float) -> float:
    """Q(Q^{-1}(P_FA) - sqrt(2 phi / sigma_s^2))."""
    if phi < 0 or not math.isfinite(phi):
        raise InvalidArgumentError(f"echo power must be finite and >= 0, got {phi}")
    if not noise > 0:
        raise InvalidArgumentError(f"sensing noise must be positive, got {noise}")
    return q_function(q_inverse(false_alarm) - math.sqrt(2.0 * phi / noise))


def worst_case_detection(sol: BeamformingSolution, scenario: Scenario) -> tuple[float, int]:
    """
    Lowest detection probability over the sensing sample points.

    The argmin is taken over echo power (lowest index on ties), which
    coincides with the argmin of P_D because P_D is increasing in phi.
    """
    phis = [echo_power(sol, scenario, m) for m in range(scenario.sensing.sample_count)]
    index = int(np.argmin(phis))
    p = scenario.params
    return detection_probability(phis[index], p.noise_sense, p.false_alarm), index


def received_power(
    sol: BeamformingSolution, scenario: Scenario, bs_index: int, point: Point2D
) -> float:
    """h_k(p)^H (w_k w_k^H + R_k) h_k(p) at an arbitrary point."""
    _check_index(bs_index, scenario.K, "bs")
    h = channel_vector(scenario.bs[bs_index], point).vector
    return max(0.0, quad_form(sol.transmit_covariance(bs_index), h))
