"""Unit tests for CSV and heatmap emission."""

import math

import numpy as np
import pandas as pd
import pytest

from iscap.models.experiments import PowerMapSpec
from iscap.services.experiments import PowerMap
from iscap.services.reports import (
    column_header,
    emit_csv,
    emit_heatmap,
    read_csv_table,
)


def create_power_map(values, valid=None):
    values = np.asarray(values, dtype=float)[None, :, :]
    ny, nx = values.shape[1:]
    spec = PowerMapSpec(x_min=0.0, x_max=float(nx), y_min=0.0, y_max=float(ny), nx=nx, ny=ny)
    if valid is None:
        valid = np.ones((ny, nx), dtype=bool)
    return PowerMap(spec=spec, bs_indices=(0,), values=values, valid=valid)


class TestColumnHeader:
    """Tests for column_header."""

    def test_known_unit(self):
        """Test that known columns carry their unit."""
        assert column_header("theta") == "theta [W]"
        assert column_header("sinr_threshold_db") == "sinr_threshold_db [dB]"

    def test_unknown_unit(self):
        """Test that unknown columns get a dash."""
        assert column_header("method") == "method [-]"


class TestEmitCsv:
    """Tests for emit_csv and read_csv_table."""

    def test_empty_table_is_header_only(self, tmp_path):
        """Test that an empty table writes only the header line."""
        path = emit_csv(pd.DataFrame(columns=["method", "theta"]), tmp_path / "empty.csv")

        assert path.read_text() == "method [-],theta [W]\n"

    def test_round_trip_preserves_doubles(self, tmp_path):
        """Test that values survive a write and re-parse exactly."""
        values = [1.0 / 3.0, math.pi * 1e-13, 1e-300 / 7.0, 0.1 + 0.2]
        table = pd.DataFrame({"theta": values, "method": ["SDR", "MRT", "SDR", "MRT"]})
        path = emit_csv(table, tmp_path / "values.csv")
        parsed = read_csv_table(path)

        assert list(parsed.columns) == ["theta", "method"]
        assert parsed["theta"].tolist() == values

    def test_nan_written_literally(self, tmp_path):
        """Test that missing values appear as 'nan'."""
        table = pd.DataFrame({"theta": [float("nan"), 1.0]})
        path = emit_csv(table, tmp_path / "nan.csv")

        assert path.read_text().splitlines()[1] == "nan"
        assert math.isnan(read_csv_table(path)["theta"][0])

    def test_creates_parent_directory(self, tmp_path):
        """Test that missing parent directories are created."""
        path = emit_csv(pd.DataFrame({"x": [1.0]}), tmp_path / "a" / "b" / "out.csv")

        assert path.exists()


class TestEmitHeatmap:
    """Tests for emit_heatmap."""

    def test_two_by_two_has_four_cells(self, tmp_path):
        """Test that a 2x2 grid yields exactly four cell rectangles."""
        grid = create_power_map([[1e-9, 2e-9], [3e-9, 4e-9]])
        svg = emit_heatmap(grid, tmp_path / "map.svg").read_text()

        assert svg.count('id="cell-') == 4
        for iy in range(2):
            for ix in range(2):
                assert f'id="cell-{iy}-{ix}"' in svg

    def test_overlays_present(self, tmp_path, toy_scenario):
        """Test that the scenario overlay marks every BS, CU, ER and sensing point."""
        grid = create_power_map([[1e-9, 2e-9], [3e-9, 4e-9]])
        svg = emit_heatmap(grid, tmp_path / "map.svg", scenario=toy_scenario).read_text()

        for k in range(toy_scenario.K):
            assert f'id="bs-{k}"' in svg
            assert f'id="cu-{k}"' in svg
            assert f'id="er-{k}"' in svg
        assert f'id="sensing-{toy_scenario.sensing.sample_count - 1}"' in svg

    def test_deterministic(self, tmp_path):
        """Test that rendering twice gives identical bytes."""
        grid = create_power_map([[0.0, 1.0], [np.nan, 0.5]], np.array([[1, 1], [0, 1]], bool))
        first = emit_heatmap(grid, tmp_path / "a.svg").read_bytes()
        second = emit_heatmap(grid, tmp_path / "b.svg").read_bytes()

        assert first == second

    @pytest.mark.parametrize("values", [[[0.0, 0.0], [0.0, 0.0]], [[np.nan, 1.0], [1.0, 1.0]]])
    def test_degenerate_grids_render(self, tmp_path, values):
        """Test that all-zero and partly invalid grids still render."""
        grid = create_power_map(values)

        assert emit_heatmap(grid, tmp_path / "map.svg").read_text().count('id="cell-') == 4
