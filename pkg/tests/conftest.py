"""Pytest configuration for tests."""

import os
from pathlib import Path

import numpy as np
import pytest
from dotenv import load_dotenv

# Load .env.test file if it exists
env_test_path = Path(__file__).parent.parent / ".env.test"
if env_test_path.exists():
    load_dotenv(env_test_path)

# Set test environment variables before any imports (only if not already set)
os.environ.setdefault("ISCAP_LOG_LEVEL", "WARNING")
os.environ.setdefault("ISCAP_LOG_JSON", "false")
os.environ.setdefault("ISCAP_COVARIANCE_WORKERS", "2")
os.environ.setdefault("ISCAP_SWEEP_WORKERS", "1")


@pytest.fixture
def rng():
    """Seeded generator; tests that need fresh draws create their own."""
    return np.random.default_rng(20240601)


@pytest.fixture
def toy_scenario():
    """Two BSs with 4-element arrays and point ERs: fast to solve."""
    from tests.fixtures.factories import create_toy_scenario

    return create_toy_scenario()


@pytest.fixture
def toy_covariances(toy_scenario):
    """Exact (point-region) covariances of the toy scenario."""
    from iscap.services.covariance import compute_covariances

    return compute_covariances(toy_scenario)


@pytest.fixture(scope="session")
def case3_desk():
    """Case 3 at 16 elements with thresholds the reduced arrays can meet."""
    from tests.fixtures.factories import create_case_scenario

    return create_case_scenario(3, antennas=16, sinr_db=10.0, harvest_dbm=-45.0)


@pytest.fixture(scope="session")
def case3_desk_covariances(case3_desk):
    from iscap.services.covariance import compute_covariances

    return compute_covariances(case3_desk)
