"""Unit tests for relaxed-problem assembly and rank-one extraction."""

from dataclasses import replace

import numpy as np
import pytest

from iscap.core.exceptions import ContractViolationError, DegenerateSolutionError
from iscap.models.conic import ConicProblem, ConstraintKind, LinearConstraint, Sense
from iscap.models.experiments import SweepParameter
from iscap.models.scenario import CuType
from iscap.services.channels import channel_vector
from iscap.services.scenario import apply_parameter
from iscap.services.sdr import (
    TypeEquivalenceReport,
    build_sdr,
    build_worst_case,
    extract_rank_one,
    worst_case_points,
)
from iscap.utils.numerics import outer


def create_equivalence_report(**changes) -> TypeEquivalenceReport:
    report = TypeEquivalenceReport(
        theta_type_one=2.0,
        theta_type_two=2.0,
        theta_type_three=2.5,
        relative_gap=0.0,
        leakage_raw=(1e-3, 0.0),
        leakage_canonical=(0.0, 0.0),
        leakage_bounds=(1e-9, 1e-9),
        ordering_holds=True,
        echo_raw=2.0,
        echo_canonical=2.0,
        sinr_raw=(10.0, 12.0),
        sinr_canonical=(10.5, 12.0),
    )
    return replace(report, **changes)


def _row(problem, label):
    return next(row for row in problem.constraints if row.label == label)


class TestBuildSdr:
    """Tests for build_sdr."""

    def test_counts(self, toy_scenario, toy_covariances):
        """Test 2K blocks and M + 3K rows."""
        problem = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_I)
        K, M = toy_scenario.K, toy_scenario.sensing.sample_count

        assert problem.block_count == 2 * K
        assert len(problem.constraints) == M + 3 * K
        assert problem.count_by_kind() == {
            ConstraintKind.SENSING: M,
            ConstraintKind.SINR: K,
            ConstraintKind.HARVEST: K,
            ConstraintKind.POWER: K,
        }

    def test_type_three_has_no_dual_terms(self, toy_scenario, toy_covariances):
        """Test that Type-III SINR rows reference only information blocks."""
        problem = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_III)

        for k in range(toy_scenario.K):
            assert set(_row(problem, f"sinr[{k}]").coefficients) == {0, 1}

    def test_type_two_omits_own_dual(self, toy_scenario, toy_covariances):
        """Test that Type-II SINR rows drop only the own-cell dual block."""
        problem = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_II)

        assert set(_row(problem, "sinr[0]").coefficients) == {0, 1, 3}
        assert set(_row(problem, "sinr[1]").coefficients) == {0, 1, 2}

    def test_type_one_keeps_every_dual(self, toy_scenario, toy_covariances):
        """Test that Type-I SINR rows include every dual block."""
        problem = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_I)

        assert set(_row(problem, "sinr[0]").coefficients) == {0, 1, 2, 3}

    def test_sinr_row_holds_at_target(self, toy_scenario, toy_covariances):
        """Test that the row is tight when the SINR equals its target."""
        problem = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_III)
        h = channel_vector(toy_scenario.bs[0], toy_scenario.cus[0].position).vector
        gamma = toy_scenario.cus[0].sinr_threshold
        noise = toy_scenario.params.noise_comm
        w = h / np.linalg.norm(h) * np.sqrt(gamma * noise) / np.linalg.norm(h)
        blocks = [outer(w), np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4))]

        assert _row(problem, "sinr[0]").slack(blocks, 0.0) == pytest.approx(0.0, abs=1e-20)

    def test_normalized_rows_are_unit_scale(self, toy_scenario, toy_covariances):
        """Test that normalization brings every row to unit magnitude."""
        normalized = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_I).normalized()

        assert normalized.variable_scale == toy_scenario.params.power_budget
        assert normalized.theta_scale > 0
        for row in normalized.problem.constraints:
            largest = max(
                [abs(row.rhs), abs(row.theta)]
                + [float(np.max(np.abs(np.linalg.eigvalsh(c)))) for c in row.coefficients.values()]
            )
            assert largest == pytest.approx(1.0)


class TestBuildWorstCase:
    """Tests for build_worst_case and worst_case_points."""

    def test_nine_points_on_disc(self, toy_scenario):
        """Test the 3x3 grid projected onto a unit disc."""
        region = apply_parameter(
            toy_scenario, SweepParameter.UNCERTAINTY_AREA_M2, np.pi
        ).ers[0].region
        points = worst_case_points(region, 9)

        assert len(points) == 9
        assert points[4] == region.center
        for p in points:
            assert p.distance_to(region.center) <= 1.0 + 1e-12

    def test_pointwise_rows_replace_average(self, toy_scenario):
        """Test that each ER contributes one harvest row per grid point."""
        problem = build_worst_case(toy_scenario, CuType.TYPE_I, 9)

        assert problem.count_by_kind()[ConstraintKind.HARVEST] == 9 * toy_scenario.K


class TestExtractRankOne:
    """Tests for extract_rank_one."""

    def test_rank_one_input_is_idempotent(self, toy_scenario, rng):
        """Test that W = w w^H gives back w up to phase and R unchanged."""
        w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        R = outer(rng.standard_normal(4) + 0j)
        beam, dual = extract_rank_one(outer(w), R, toy_scenario, 0)

        assert abs(np.vdot(beam, w)) == pytest.approx(np.vdot(w, w).real, rel=1e-10)
        assert np.allclose(dual, R, atol=1e-12 * np.abs(R).max())

    def test_identity_input(self, toy_scenario):
        """Test that W = I gives w = h/|h| and R' = R + I - h h^H/|h|^2."""
        h = channel_vector(toy_scenario.bs[0], toy_scenario.cus[0].position).vector
        u = h / np.linalg.norm(h)
        R = np.zeros((4, 4), dtype=complex)
        beam, dual = extract_rank_one(np.eye(4, dtype=complex), R, toy_scenario, 0)

        assert np.allclose(beam, u)
        assert np.allclose(dual, np.eye(4) - outer(u))

    def test_total_covariance_preserved(self, toy_scenario, rng):
        """Test that W + R is unchanged by the extraction."""
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        W = a @ a.conj().T
        R = np.eye(4, dtype=complex)
        beam, dual = extract_rank_one(W, R, toy_scenario, 1)

        assert np.allclose(outer(beam) + dual, W + R)

    def test_no_desired_power(self, toy_scenario):
        """Test that a zero W raises DegenerateSolutionError."""
        with pytest.raises(DegenerateSolutionError):
            extract_rank_one(np.zeros((4, 4)), np.eye(4), toy_scenario, 0)


class TestConicProblem:
    """Tests for ConicProblem validation."""

    def test_wrong_coefficient_shape(self):
        """Test that a coefficient of the wrong size is rejected."""
        row = LinearConstraint("r", ConstraintKind.POWER, {0: np.eye(3)}, 0.0, Sense.LE, 1.0)

        with pytest.raises(ContractViolationError):
            ConicProblem((2,), ("X",), (row,))

    def test_without_drops_kind(self, toy_scenario, toy_covariances):
        """Test that without() removes every row of one kind."""
        problem = build_sdr(toy_scenario, toy_covariances, CuType.TYPE_I)

        assert ConstraintKind.SINR not in problem.without(ConstraintKind.SINR).count_by_kind()


class TestTypeEquivalenceReport:
    """Tests for TypeEquivalenceReport.passed."""

    def test_lossless_transfer_passes(self):
        """Test that leakage moved into the information beam at no cost passes."""
        report = create_equivalence_report()

        assert report.transfer_holds
        assert report.passed

    def test_leakage_left_after_transfer_fails(self):
        """Test that intra-cell leakage above the bound after the transfer fails."""
        report = create_equivalence_report(leakage_canonical=(1e-6, 0.0))

        assert report.transfer_holds
        assert not report.passed

    def test_sinr_lost_in_transfer_fails(self):
        """Test that a CU losing SINR in the transfer fails even with zero leakage."""
        report = create_equivalence_report(sinr_canonical=(9.0, 12.0))

        assert not report.transfer_holds
        assert not report.passed

    def test_echo_moved_by_transfer_fails(self):
        """Test that a transfer changing the smallest echo fails."""
        report = create_equivalence_report(echo_canonical=1.9)

        assert not report.transfer_holds
        assert not report.passed

    def test_type_gap_fails(self):
        """Test that distinct Type I and Type II optima fail."""
        report = create_equivalence_report(theta_type_two=2.1, relative_gap=0.05)

        assert not report.passed
