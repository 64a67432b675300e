import pytest

from mipsim.topology import load_topology


@pytest.fixture
def topo():
    return load_topology()
