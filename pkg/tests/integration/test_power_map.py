"""Integration tests for received-power maps and null depth."""

import math

import numpy as np
import pytest

from iscap.models.experiments import Method, PowerMapSpec
from iscap.models.scenario import CuType
from iscap.models.solution import BeamformingSolution
from iscap.services.covariance import compute_covariances
from iscap.services.experiments import (
    FIGURE_PRESETS,
    NULL_DEPTH_MARGIN_DB,
    apply_overrides,
    default_map_spec,
    design,
    isolation_db,
    null_depth_db,
    power_map,
)
from iscap.services.metrics import received_power
from iscap.services.scenario import builtin_case, with_antennas
from iscap.services.sdr import canonicalize_type_one, solve_sdr
from iscap.utils.numerics import linear_to_db
from tests.fixtures.factories import create_single_cell


@pytest.fixture
def type_one_solution(toy_scenario, toy_covariances):
    solution = solve_sdr(toy_scenario, toy_covariances, CuType.TYPE_I)
    return canonicalize_type_one(solution, toy_scenario)


def _centered_on(point, width=1.0, n=5):
    half = n * width / 2
    return PowerMapSpec(
        x_min=point.x - half, x_max=point.x + half, y_min=point.y - half, y_max=point.y + half,
        nx=n, ny=n,
    )


class TestPowerMap:
    """Tests for power_map."""

    def test_silent_network(self, toy_scenario):
        """Test that a zero solution maps to zero power everywhere."""
        spec = default_map_spec(toy_scenario, resolution=12)
        grid = power_map(BeamformingSolution.zeros([4, 4]), toy_scenario, spec)

        assert np.all(grid.values[:, grid.valid] == 0.0)

    def test_cell_center_matches_point_evaluation(self, toy_scenario, type_one_solution):
        """Test that the cell holding a CU reports the power at its center."""
        cu = toy_scenario.cus[0].position
        grid = power_map(type_one_solution, toy_scenario, _centered_on(cu))

        assert grid.cell_of(cu) == (2, 2)
        for k in range(toy_scenario.K):
            assert grid.value_at(k, cu) == pytest.approx(
                received_power(type_one_solution, toy_scenario, k, cu), rel=1e-12
            )

    def test_element_cells_are_invalid(self, toy_scenario, type_one_solution):
        """Test that cells holding an array element carry NaN."""
        spec = _centered_on(toy_scenario.bs[0].reference_center, width=0.5, n=4)
        grid = power_map(type_one_solution, toy_scenario, spec)

        assert not grid.valid.all()
        assert np.isnan(grid.values[:, ~grid.valid]).all()
        assert np.isfinite(grid.values[:, grid.valid]).all()

    def test_bs_subset(self, toy_scenario, type_one_solution):
        """Test that only the requested BSs are mapped."""
        spec = default_map_spec(toy_scenario, resolution=6).model_copy(update={"bs_indices": (1,)})
        grid = power_map(type_one_solution, toy_scenario, spec)

        assert grid.bs_indices == (1,)
        assert grid.values.shape == (1, 6, 6)

    def test_table_layout(self, toy_scenario, type_one_solution):
        """Test one row per BS and cell."""
        grid = power_map(type_one_solution, toy_scenario, default_map_spec(toy_scenario, 3))
        table = grid.table()

        assert len(table) == toy_scenario.K * 9
        assert list(table.columns) == ["bs", "ix", "iy", "x", "y", "power", "valid"]


class TestDefaultMapSpec:
    """Tests for default_map_spec."""

    def test_box_holds_every_node(self, toy_scenario):
        """Test that every BS, CU, ER and sensing point lies inside the box."""
        spec = default_map_spec(toy_scenario, resolution=10)
        points = (
            [g.reference_center for g in toy_scenario.bs]
            + [cu.position for cu in toy_scenario.cus]
            + [er.region.center for er in toy_scenario.ers]
            + list(toy_scenario.sensing.sample_points)
        )

        for p in points:
            assert spec.x_min < p.x < spec.x_max
            assert spec.y_min < p.y < spec.y_max
        assert (spec.nx, spec.ny) == (10, 10)


class TestIsolation:
    """Tests for isolation_db and null_depth_db."""

    def test_type_one_isolation_meets_sinr_target(self, toy_scenario, type_one_solution):
        """Test that each CU hears its own BS at least Gamma above any other BS."""
        isolation = isolation_db(type_one_solution, toy_scenario)

        for k, cu in enumerate(toy_scenario.cus):
            assert isolation[k] >= linear_to_db(cu.sinr_threshold) - 1e-3

    def test_single_cell_is_unbounded(self):
        """Test that K=1 has no neighbor to null toward."""
        scenario = create_single_cell(N=4)
        solution = solve_sdr(scenario, compute_covariances(scenario), CuType.TYPE_I)

        assert null_depth_db(solution, scenario) == [math.inf]
        assert isolation_db(solution, scenario) == [math.inf]

    def test_silent_network_is_finite(self, toy_scenario):
        """Test that zero power on both sides gives 0 dB rather than NaN."""
        depths = null_depth_db(BeamformingSolution.zeros([4, 4]), toy_scenario)

        assert depths == [0.0, 0.0]


@pytest.fixture(scope="module")
def near_field_case3():
    """Case 3 at the near-field power-map operating point."""
    preset = FIGURE_PRESETS["fig8"]
    scenario = with_antennas(builtin_case(preset.case), preset.antennas)
    scenario = apply_overrides(scenario, preset.overrides(False))
    return scenario, compute_covariances(scenario)


class TestNullDepthMargin:
    """Tests for null depth at the near-field power-map operating point."""

    def test_preset_keeps_operating_point(self):
        """Test that the reduced run maps the same 64-element, 20 dB, -35 dBm point."""
        preset = FIGURE_PRESETS["fig8"]

        assert preset.antennas == 64
        assert preset.overrides(False) == preset.overrides(True)

    @pytest.mark.slow
    def test_coordinated_design_nulls_unintended_cus(self, near_field_case3):
        """Test that coordination reaches the margin and per-cell designs miss it."""
        scenario, covariances = near_field_case3
        coordinated = design(Method.SDR, scenario, covariances, CuType.TYPE_I)
        per_cell = design(Method.NON_COORDINATED, scenario, covariances, CuType.TYPE_I)

        assert min(null_depth_db(coordinated, scenario)) >= NULL_DEPTH_MARGIN_DB
        assert min(null_depth_db(per_cell, scenario)) < NULL_DEPTH_MARGIN_DB
