"""Unit tests for SINR, harvested power, echo power and detection metrics."""

import math

import numpy as np
import pytest
from flaky import flaky

from iscap.core.exceptions import InvalidArgumentError
from iscap.models.experiments import SweepParameter
from iscap.models.geometry import Point2D
from iscap.models.scenario import CuType
from iscap.models.solution import BeamformingSolution, Provenance
from iscap.services.channels import channel_vector
from iscap.services.covariance import compute_covariances
from iscap.services.metrics import (
    avg_harvested_power,
    detection_probability,
    echo_power,
    received_power,
    sinr,
    worst_case_detection,
)
from iscap.services.scenario import apply_parameter
from iscap.utils.numerics import outer, q_function, q_inverse
from tests.fixtures.factories import create_single_cell
from tests.fixtures.oracles import echo_term_by_term


def create_solution(rng, K, N, scale=0.05):
    """Random beams and PSD covariances for K BSs with N elements."""
    beams = []
    covariances = []
    for _ in range(K):
        beams.append(scale * (rng.standard_normal(N) + 1j * rng.standard_normal(N)))
        a = scale * (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
        covariances.append(a @ a.conj().T / N)
    return BeamformingSolution(tuple(beams), tuple(covariances), Provenance.MANUAL)


class TestSinr:
    """Tests for sinr."""

    def test_single_cell_types_agree(self, rng):
        """Test that without interference every type reduces to |h^H w|^2 / sigma^2."""
        scenario = create_single_cell(N=4)
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        sol = BeamformingSolution((w,), (np.zeros((4, 4), dtype=complex),), Provenance.MANUAL)
        h = channel_vector(scenario.bs[0], scenario.cus[0].position).vector
        expected = abs(np.vdot(h, w)) ** 2 / scenario.params.noise_comm

        for cu_type in CuType:
            assert sinr(sol, scenario, 0, cu_type) == pytest.approx(expected, rel=1e-12)

    def test_orthogonal_beam_gives_zero(self, toy_scenario, rng):
        """Test that a beam orthogonal to the CU channel has zero SINR."""
        sol = create_solution(rng, 2, 4)
        h = channel_vector(toy_scenario.bs[0], toy_scenario.cus[0].position).vector
        w = sol.info_beams[0] - np.vdot(h, sol.info_beams[0]) / np.vdot(h, h) * h
        sol = BeamformingSolution((w, sol.info_beams[1]), sol.dual_covariances, Provenance.MANUAL)

        for cu_type in CuType:
            assert sinr(sol, toy_scenario, 0, cu_type) == pytest.approx(0.0, abs=1e-18)

    def test_type_ordering(self, toy_scenario):
        """Test Type III >= Type II >= Type I on the same solution."""
        sol = create_solution(np.random.default_rng(7), 2, 4)

        for k in range(toy_scenario.K):
            one = sinr(sol, toy_scenario, k, CuType.TYPE_I)
            two = sinr(sol, toy_scenario, k, CuType.TYPE_II)
            three = sinr(sol, toy_scenario, k, CuType.TYPE_III)
            assert three >= two >= one

    def test_bad_index(self, toy_scenario, rng):
        """Test that an out-of-range CU index raises."""
        with pytest.raises(InvalidArgumentError):
            sinr(create_solution(rng, 2, 4), toy_scenario, 2, CuType.TYPE_I)


class TestHarvestedPower:
    """Tests for avg_harvested_power."""

    def test_zero_solution(self, toy_scenario, toy_covariances):
        """Test that nothing is harvested from a silent network."""
        sol = BeamformingSolution.zeros([4, 4])

        assert avg_harvested_power(sol, toy_scenario, toy_covariances, 0) == 0.0

    def test_point_region_single_cell(self, rng):
        """Test the instantaneous formula eta (|h^H w|^2 + h^H R h) for a point ER."""
        scenario = create_single_cell(N=4)
        covariances = compute_covariances(scenario)
        sol = create_solution(rng, 1, 4)
        h = channel_vector(scenario.bs[0], scenario.ers[0].region.center).vector
        w, R = sol.info_beams[0], sol.dual_covariances[0]
        expected = scenario.params.eh_efficiency * (
            abs(np.vdot(h, w)) ** 2 + np.vdot(h, R @ h).real
        )

        assert avg_harvested_power(sol, scenario, covariances, 0) == pytest.approx(
            expected, rel=1e-12
        )

    @flaky(max_runs=3)
    def test_disc_region_matches_position_average(self):
        """Test the disc average against 10^5 sampled receiver positions."""
        scenario = apply_parameter(
            create_single_cell(N=4), SweepParameter.UNCERTAINTY_AREA_M2, math.pi
        )
        covariances = compute_covariances(scenario)
        sol = create_solution(np.random.default_rng(11), 1, 4)
        X = sol.transmit_covariance(0)

        rng = np.random.default_rng()
        positions = scenario.ers[0].region.sample(rng, 100_000)
        values = np.array(
            [
                np.vdot(h, X @ h).real
                for h in (channel_vector(scenario.bs[0], Point2D.of(p)).vector for p in positions)
            ]
        )
        eta = scenario.params.eh_efficiency
        mean = eta * values.mean()
        se = eta * values.std(ddof=1) / math.sqrt(len(values))

        assert abs(avg_harvested_power(sol, scenario, covariances, 0) - mean) <= 3 * se


class TestEchoPower:
    """Tests for echo_power."""

    def test_zero_solution(self, toy_scenario):
        """Test that a silent network produces no echo."""
        sol = BeamformingSolution.zeros([4, 4])

        assert echo_power(sol, toy_scenario, 0) == 0.0

    def test_linear_in_covariance(self, toy_scenario, rng):
        """Test that doubling every covariance doubles the echo."""
        sol = create_solution(rng, 2, 4)
        doubled = BeamformingSolution(
            tuple(math.sqrt(2) * w for w in sol.info_beams),
            tuple(2 * R for R in sol.dual_covariances),
            Provenance.MANUAL,
        )

        for m in range(toy_scenario.sensing.sample_count):
            assert echo_power(doubled, toy_scenario, m) == pytest.approx(
                2 * echo_power(sol, toy_scenario, m), rel=1e-12
            )

    def test_matches_term_by_term_sum(self, rng):
        """Test a two-element single cell against an element-wise summation."""
        scenario = create_single_cell(N=2)
        sol = create_solution(rng, 1, 2)

        assert echo_power(sol, scenario, 0) == pytest.approx(
            echo_term_by_term(sol, scenario, 0), rel=1e-12
        )

    def test_bad_index(self, toy_scenario):
        """Test that an out-of-range sensing index raises."""
        with pytest.raises(InvalidArgumentError):
            echo_power(BeamformingSolution.zeros([4, 4]), toy_scenario, 99)


class TestDetectionProbability:
    """Tests for detection_probability and worst_case_detection."""

    def test_no_echo_gives_false_alarm(self):
        """Test that P_D = P_FA without echo."""
        assert detection_probability(0.0, 1e-13, 1e-4) == pytest.approx(1e-4, rel=1e-12)

    def test_half(self):
        """Test that P_D = 0.5 when the echo offsets the threshold exactly."""
        noise = 2e-13
        phi = q_inverse(1e-4) ** 2 * noise / 2

        assert detection_probability(phi, noise, 1e-4) == pytest.approx(0.5, abs=1e-12)

    def test_two_sigma_margin(self):
        """Test P_D = 1 - Q(2) when the echo exceeds the threshold by two."""
        noise = 1e-13
        phi = (q_inverse(1e-4) + 2.0) ** 2 * noise / 2

        assert detection_probability(phi, noise, 1e-4) == pytest.approx(0.977, abs=1e-3)
        assert detection_probability(phi, noise, 1e-4) == pytest.approx(1 - q_function(2.0))

    def test_negative_echo_rejected(self):
        """Test that a negative echo power raises."""
        with pytest.raises(InvalidArgumentError):
            detection_probability(-1.0, 1e-13, 1e-4)

    def test_single_point(self, rng):
        """Test that M=1 returns P_D at that point."""
        scenario = create_single_cell(N=2)
        sol = create_solution(rng, 1, 2)
        pd, index = worst_case_detection(sol, scenario)
        params = scenario.params

        assert index == 0
        assert pd == detection_probability(
            echo_power(sol, scenario, 0), params.noise_sense, params.false_alarm
        )

    def test_permutation_invariant(self, toy_scenario, rng):
        """Test that reordering the sample points keeps the worst-case value."""
        sol = create_solution(rng, 2, 4)
        points = toy_scenario.sensing.sample_points
        reversed_sensing = toy_scenario.sensing.model_copy(
            update={"sample_points": tuple(reversed(points))}
        )
        reordered = toy_scenario.model_copy(update={"sensing": reversed_sensing})

        assert worst_case_detection(sol, reordered)[0] == pytest.approx(
            worst_case_detection(sol, toy_scenario)[0], rel=1e-12
        )

    def test_farthest_corner_is_worst(self):
        """Test that an isotropic single-cell transmission is weakest at the far corners."""
        scenario = create_single_cell(N=4, samples=5)
        P = scenario.params.power_budget
        sol = BeamformingSolution(
            (np.zeros(4, dtype=complex),), (P / 4 * np.eye(4, dtype=complex),), Provenance.MANUAL
        )

        _, index = worst_case_detection(sol, scenario)

        assert index in (3, 4)


class TestReceivedPower:
    """Tests for received_power."""

    def test_matches_outer_product(self, toy_scenario, rng):
        """Test h^H (w w^H + R) h at an arbitrary point."""
        sol = create_solution(rng, 2, 4)
        point = Point2D(x=10.0, y=12.0)
        h = channel_vector(toy_scenario.bs[1], point).vector
        X = outer(sol.info_beams[1]) + sol.dual_covariances[1]

        assert received_power(sol, toy_scenario, 1, point) == pytest.approx(
            np.vdot(h, X @ h).real, rel=1e-12
        )
