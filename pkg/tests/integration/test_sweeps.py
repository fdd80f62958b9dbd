"""Integration tests for parameter sweeps."""

import numpy as np
import pandas as pd
import pytest

from iscap.models.experiments import Method, SweepParameter, SweepSpec
from iscap.models.scenario import CuType
from iscap.models.solution import SolveStatus
from iscap.services.experiments import FIGURE_PRESETS, run_sweep
from iscap.services.metrics import worst_case_detection
from iscap.services.sdr import solve_sdr
from iscap.utils.numerics import linear_to_db, watt_to_dbm


def _spec(parameter, grid, **kwargs):
    return SweepSpec.model_validate({"swept_parameter": parameter, "grid": tuple(grid), **kwargs})


def _feasible_sinr_grid(scenario):
    """SINR thresholds no stricter than the weakest target the instance was built for."""
    weakest = min(linear_to_db(cu.sinr_threshold) for cu in scenario.cus)
    return [weakest - 20.0, weakest - 10.0, weakest]


def _feasible_harvest_grid(scenario):
    """Harvest thresholds no stricter than the weakest target the instance was built for."""
    weakest = min(watt_to_dbm(er.harvest_threshold) for er in scenario.ers)
    return [weakest - 20.0, weakest - 10.0, weakest]


def _scaled(scenario, beta):
    """Noise powers, harvest targets and budget multiplied by ``beta``."""
    params = scenario.params.model_copy(
        update={
            "noise_comm": beta * scenario.params.noise_comm,
            "noise_sense": beta * scenario.params.noise_sense,
            "power_budget": beta * scenario.params.power_budget,
        }
    )
    ers = tuple(
        er.model_copy(update={"harvest_threshold": beta * er.harvest_threshold})
        for er in scenario.ers
    )
    return scenario.model_copy(update={"params": params, "ers": ers})


class TestRunSweep:
    """Tests for run_sweep."""

    def test_single_point_matches_direct_solve(self, toy_scenario, toy_covariances):
        """Test that a one-point sweep reports the P_D of a direct solve."""
        spec = _spec(SweepParameter.FALSE_ALARM, [toy_scenario.params.false_alarm])
        result = run_sweep(spec, toy_scenario, workers=1)
        direct = solve_sdr(toy_scenario, toy_covariances, CuType.TYPE_III)
        expected, worst = worst_case_detection(direct, toy_scenario)

        assert len(result.table) == 1
        row = result.table.iloc[0]
        assert row["status"] == SolveStatus.OPTIMAL.value
        assert row["detection_probability"] == pytest.approx(expected, rel=1e-6)
        assert row["worst_point"] == worst
        assert bool(row["feasible"])

    def test_row_layout(self, toy_scenario):
        """Test one row per grid point, method and CU type in primary-major order."""
        spec = _spec(
            SweepParameter.SINR_THRESHOLD_DB,
            _feasible_sinr_grid(toy_scenario)[:2],
            methods=(Method.SDR, Method.MRT),
            cu_types=(CuType.TYPE_I, CuType.TYPE_III),
        )
        result = run_sweep(spec, toy_scenario, workers=1)

        assert len(result.table) == 2 * 2 * 2
        assert len(result.timings) == len(result.table)
        assert result.table["primary_index"].tolist() == [0] * 4 + [1] * 4
        assert result.table["method"].tolist()[:4] == ["SDR", "SDR", "MRT", "MRT"]
        assert "sinr_threshold_db" in result.table.columns
        assert "secondary_value" not in result.table.columns
        assert (result.timings["seconds"] >= 0).all()

    def test_detection_falls_with_sinr_target(self, toy_scenario):
        """Test that P_D never rises as the SINR threshold tightens."""
        spec = _spec(SweepParameter.SINR_THRESHOLD_DB, _feasible_sinr_grid(toy_scenario))
        table = run_sweep(spec, toy_scenario, workers=1).table
        p_d = table["detection_probability"].to_numpy()

        assert (table["status"] == SolveStatus.OPTIMAL.value).all()
        assert np.all(np.diff(p_d) <= 1e-6)

    def test_detection_falls_with_harvest_target(self, toy_scenario):
        """Test that P_D never rises as the harvest threshold tightens."""
        spec = _spec(SweepParameter.HARVEST_THRESHOLD_DBM, _feasible_harvest_grid(toy_scenario))
        table = run_sweep(spec, toy_scenario, workers=1).table
        p_d = table["detection_probability"].to_numpy()

        assert (table["status"] == SolveStatus.OPTIMAL.value).all()
        assert np.all(np.diff(p_d) <= 1e-6)

    def test_detection_falls_with_uncertainty_area(self, toy_scenario):
        """Test that P_D never rises as the ER uncertainty discs grow."""
        spec = _spec(SweepParameter.UNCERTAINTY_AREA_M2, [0.0, 0.5, 1.0, 2.0])
        table = run_sweep(spec, toy_scenario, workers=1).table
        p_d = table["detection_probability"].to_numpy()

        assert (table["status"] == SolveStatus.OPTIMAL.value).all()
        assert table["uncertainty_area_m2"].tolist() == [0.0, 0.5, 1.0, 2.0]
        assert np.all(np.diff(p_d) <= 1e-6)

    @pytest.mark.parametrize("beta", [0.1, 10.0])
    def test_scaling_powers_scales_theta(self, toy_scenario, beta):
        """Test that scaling noise, harvest targets and budget together scales Theta alone."""
        spec = _spec(SweepParameter.FALSE_ALARM, [toy_scenario.params.false_alarm])
        base = run_sweep(spec, toy_scenario, workers=1).table.iloc[0]
        scaled = run_sweep(spec, _scaled(toy_scenario, beta), workers=1).table.iloc[0]

        assert scaled["theta"] == pytest.approx(beta * base["theta"], rel=1e-6)
        assert scaled["detection_probability"] == pytest.approx(
            base["detection_probability"], rel=1e-6
        )

    def test_budget_and_false_alarm_grid(self, toy_scenario):
        """Test P_D rises with the budget and falls with the false-alarm probability."""
        spec = _spec(
            SweepParameter.POWER_BUDGET_DBM,
            [27.0, 30.0, 33.0],
            secondary_parameter=SweepParameter.FALSE_ALARM,
            secondary_grid=(1e-4, 1e-6),
        )
        table = run_sweep(spec, toy_scenario, workers=1).table
        surface = table.pivot(
            index="power_budget_dbm", columns="false_alarm", values="detection_probability"
        ).to_numpy()

        assert np.all(np.diff(surface, axis=0) >= -1e-6)
        assert np.all(surface[:, 0] >= surface[:, 1] - 1e-9)

    def test_infeasible_rows_are_not_failures(self, toy_scenario):
        """Test that an unreachable target is tallied apart from solver failures."""
        spec = _spec(SweepParameter.HARVEST_THRESHOLD_DBM, [-200.0, 40.0])
        result = run_sweep(spec, toy_scenario, workers=1)

        assert result.table["status"].tolist() == ["optimal", "infeasible"]
        assert result.status_counts() == {"optimal": 1, "infeasible": 1, "numerical-failure": 0}
        assert result.failures == 0
        assert np.isnan(result.table["theta"].iloc[1])

    def test_invalid_grid_value_marks_cell_failed(self, toy_scenario):
        """Test that a grid value the scenario rejects fails only its own cell."""
        spec = _spec(SweepParameter.FALSE_ALARM, [1e-4, 1.0])
        result = run_sweep(spec, toy_scenario, workers=1)

        assert result.table["status"].tolist() == ["optimal", "numerical-failure"]
        assert "false alarm" in result.table["message"].iloc[1]
        assert result.failures == 1

    @pytest.mark.slow
    def test_worker_count_does_not_change_table(self, toy_scenario):
        """Test that a process pool gives the same table as an inline run."""
        spec = _spec(SweepParameter.SINR_THRESHOLD_DB, _feasible_sinr_grid(toy_scenario))
        inline = run_sweep(spec, toy_scenario, workers=1).table
        pooled = run_sweep(spec, toy_scenario, workers=2).table

        pd.testing.assert_frame_equal(inline, pooled)


class TestFigurePresets:
    """Tests for FIGURE_PRESETS."""

    def test_every_preset_has_both_variants(self):
        """Test that sweep presets define a caption and a reduced-array grid."""
        for preset in FIGURE_PRESETS.values():
            if preset.is_power_map:
                assert preset.map_methods
                assert preset.desk_overrides
            else:
                assert preset.sweep(True).swept_parameter == preset.sweep(False).swept_parameter

    def test_power_map_preset_has_no_sweep(self):
        """Test that asking a power-map preset for a sweep raises."""
        with pytest.raises(ValueError):
            FIGURE_PRESETS["fig8"].sweep(False)

    @pytest.mark.slow
    def test_fig3_desk_detection_falls_with_sinr(self, case3_desk):
        """Test the reduced-array SINR sweep on Case 3 for the optimal Type III design."""
        preset = FIGURE_PRESETS["fig3"].sweep(False)
        spec = SweepSpec.model_validate(
            {**preset.model_dump(), "methods": (Method.SDR,), "cu_types": (CuType.TYPE_III,)}
        )
        table = run_sweep(spec, case3_desk, workers=1).table
        optimal = table[table["status"] == SolveStatus.OPTIMAL.value]

        assert np.all(np.diff(optimal["detection_probability"].to_numpy()) <= 1e-6)
