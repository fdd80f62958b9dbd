"""Unit tests for SDPA export and import."""

import numpy as np
import pytest

from iscap.clients.sdpa import export_sdpa, read_sdpa, real_embedding, to_sdpa
from iscap.core.exceptions import ArtifactError
from iscap.models.experiments import SweepParameter
from iscap.models.scenario import CuType
from iscap.services.covariance import compute_covariances
from iscap.services.scenario import apply_parameter
from iscap.services.sdr import build_sdr, solve_sdr
from iscap.utils.numerics import trace_inner
from tests.fixtures.factories import create_single_cell
from tests.fixtures.oracles import solve_sdpa


@pytest.fixture
def single_cell_problem():
    scenario = create_single_cell(N=2)
    return scenario, build_sdr(scenario, compute_covariances(scenario), CuType.TYPE_I)


class TestRealEmbedding:
    """Tests for real_embedding."""

    def test_symmetric_and_trace_preserving(self, rng):
        """Test that Re tr(C X) = emb(C) . emb(X) / 2 for Hermitian C and X."""
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        C, X = a + a.conj().T, b @ b.conj().T
        ec, ex = real_embedding(C), real_embedding(X)

        assert np.array_equal(ec, ec.T)
        assert 0.5 * np.sum(ec * ex) == pytest.approx(trace_inner(C, X), rel=1e-12)


class TestExportSdpa:
    """Tests for export_sdpa and read_sdpa."""

    def test_reimport_matches(self, tmp_path, single_cell_problem):
        """Test that re-reading an export reproduces the constraint data."""
        _, problem = single_cell_problem
        path = tmp_path / "problem.dat-s"
        written = export_sdpa(problem, path)

        assert read_sdpa(path).same_data(written)

    def test_layout(self, single_cell_problem):
        """Test block sizes, row count and header lines."""
        _, problem = single_cell_problem
        data = to_sdpa(problem)
        rows = len(problem.constraints)

        assert data.block_sizes == (4, 4, -(2 + rows))
        assert data.constraint_count == rows
        assert data.header[0] == "problem: sdr-type-I"
        assert data.header[-1].startswith("units: X = ")

    def test_header_lines_are_comments(self, tmp_path, single_cell_problem):
        """Test that the file opens with '* ' comment lines."""
        _, problem = single_cell_problem
        path = tmp_path / "problem.dat-s"
        export_sdpa(problem, path)
        lines = path.read_text().splitlines()

        assert all(line.startswith("* ") for line in lines[:5])
        assert lines[5] == str(len(problem.constraints))

    def test_infeasible_problem_exports(self, tmp_path):
        """Test that export does not care whether the problem is feasible."""
        scenario = apply_parameter(
            create_single_cell(N=2), SweepParameter.HARVEST_THRESHOLD_DBM, 40.0
        )
        problem = build_sdr(scenario, compute_covariances(scenario), CuType.TYPE_III)
        path = tmp_path / "infeasible.dat-s"
        export_sdpa(problem, path)

        assert path.stat().st_size > 0

    def test_malformed_file(self, tmp_path):
        """Test that garbage content raises ArtifactError."""
        path = tmp_path / "bad.dat-s"
        path.write_text("* comment\nnot-a-number\n")

        with pytest.raises(ArtifactError):
            read_sdpa(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises ArtifactError."""
        with pytest.raises(ArtifactError):
            read_sdpa(tmp_path / "absent.dat-s")

    def test_independent_solve_agrees(self, tmp_path, single_cell_problem):
        """Test that solving the exported data reproduces the embedded optimum."""
        scenario, problem = single_cell_problem
        path = tmp_path / "problem.dat-s"
        export_sdpa(problem, path)
        solution = solve_sdr(scenario, compute_covariances(scenario), CuType.TYPE_I)
        external = solve_sdpa(read_sdpa(path)) * problem.normalized().theta_scale

        assert external == pytest.approx(solution.report.objective, rel=1e-5)
