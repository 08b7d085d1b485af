import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gridrisk.netmodel import load_case
from gridrisk.powerflow import solve_power_flow
from gridrisk.dynsim import init_dynamics

CASE_PATH = os.path.join(os.path.dirname(__file__), "..", "cases", "ieee39.json")


@pytest.fixture(scope="session")
def ieee39():
    return load_case(CASE_PATH)


@pytest.fixture(scope="session")
def ieee39_pf(ieee39):
    return solve_power_flow(ieee39, tol=1e-10, max_iter=40)


@pytest.fixture(scope="session")
def ieee39_state(ieee39, ieee39_pf):
    return init_dynamics(ieee39, ieee39_pf)
