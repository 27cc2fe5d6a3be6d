import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ecl.gen import two_type_demo_economy
from ecl.model import AgentType, Economy, StateSpace, UtilitySpec
from ecl.partitions import Partition

FIXTURES = Path(__file__).parent / "fixtures"


def sqrt_utility():
    return UtilitySpec(family="ces", weights=np.array([1.0, 1.0]), rho=0.5)


def symmetric_exchange_economy():
    """Two equal-mass atomless types, square-root utility, endowments (2,0)/(0,2)."""
    space = StateSpace(labels=("s0",), prob=np.array([1.0]))
    u = sqrt_utility()
    t0 = AgentType(
        name="A",
        mass=1.0,
        kind="atomless",
        utility=(u,),
        endowment=np.array([[2.0, 0.0]]),
        info=Partition.discrete(1),
        prior=np.array([1.0]),
    )
    t1 = AgentType(
        name="B",
        mass=1.0,
        kind="atomless",
        utility=(u,),
        endowment=np.array([[0.0, 2.0]]),
        info=Partition.discrete(1),
        prior=np.array([1.0]),
    )
    return Economy(states=space, goods=2, types=(t0, t1))


def one_atom_economy():
    """One atomless 'ocean' and one atom trading two goods in one state."""
    space = StateSpace(labels=("s0",), prob=np.array([1.0]))
    u = sqrt_utility()
    ocean = AgentType(
        name="ocean",
        mass=1.0,
        kind="atomless",
        utility=(u,),
        endowment=np.array([[2.0, 0.0]]),
        info=Partition.discrete(1),
        prior=np.array([1.0]),
    )
    big = AgentType(
        name="big",
        mass=1.0,
        kind="atom",
        utility=(u,),
        endowment=np.array([[0.0, 2.0]]),
        info=Partition.discrete(1),
        prior=np.array([1.0]),
    )
    return Economy(states=space, goods=2, types=(ocean, big))


@pytest.fixture
def demo_economy():
    return two_type_demo_economy(4)


@pytest.fixture
def symmetric_economy():
    return symmetric_exchange_economy()


@pytest.fixture
def atom_economy():
    return one_atom_economy()
