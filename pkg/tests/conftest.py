"""
Shared fixtures for the T^(r)-free process laboratory tests
"""
import pytest

from tests.helpers import state_with_edges
from trfree import create_lab


@pytest.fixture(scope="session", autouse=True)
def lab():
    """Create a lab bound to the testing settings."""
    return create_lab("testing")


@pytest.fixture
def out_dir(tmp_path):
    """Fresh output directory for one ensemble."""
    return str(tmp_path / "out")


@pytest.fixture
def path_state():
    """r=2, n=3 with edges {0,1} and {1,2}."""
    return state_with_edges(3, 2, [(0, 1), (1, 2)])
