"""Deterministic random economies for tests, demos and the gen command.

Generated economies are conforming by construction: CES utilities, per-type
endowments measurable with respect to the type's own information, information
partitions drawn from a small fixed family whose join separates every state,
and (optionally) identical atoms.  The same seed always yields the same
economy, value for value.
"""

import numpy as np

from .model import (
    ATOM,
    ATOMLESS,
    AgentType,
    CES,
    Economy,
    StateSpace,
    UtilitySpec,
)
from .partitions import Partition


def partition_family(n_states: int) -> list[Partition]:
    """A fixed family of up to four partitions whose join is discrete.

    The first two (consecutive pairs and shifted pairs) already join to the
    discrete partition, so any assignment that carries both satisfies the
    full-joint-information requirement.
    """
    if n_states == 1:
        return [Partition.trivial(1)]
    pairs = [
        set(range(i, min(i + 2, n_states))) for i in range(0, n_states, 2)
    ]
    shifted = [{0}] + [
        set(range(i, min(i + 2, n_states))) for i in range(1, n_states, 2)
    ]
    family = [
        Partition.from_cells(pairs, n_states),
        Partition.from_cells(shifted, n_states),
    ]
    evens_odds = [
        {s for s in range(n_states) if s % 2 == 0},
        {s for s in range(n_states) if s % 2 == 1},
    ]
    halves = [
        set(range((n_states + 1) // 2)),
        set(range((n_states + 1) // 2, n_states)),
    ]
    for cells in (evens_odds, halves):
        if all(cells):
            p = Partition.from_cells(cells, n_states)
            if p not in family:
                family.append(p)
    return family


def _measurable_endowment(rng, partition: Partition, n_states: int, goods: int):
    endow = np.empty((n_states, goods))
    for cell in partition.cells:
        value = rng.uniform(0.1, 5.0, goods)
        for s in sorted(cell):
            endow[s] = value
    return endow


def generate_economy(
    n_types: int = 3,
    goods: int = 2,
    states: int = 4,
    atoms: int = 0,
    seed: int = 0,
) -> Economy:
    """Seeded conforming economy with ``n_types`` atomless types plus atoms.

    Atom types (appended after the atomless ones) are identical to each other
    in mass and every characteristic.
    """
    if n_types < 1:
        raise ValueError("need at least one atomless type")
    rng = np.random.default_rng(seed)
    labels = tuple(f"s{i}" for i in range(states))
    prob = rng.uniform(0.5, 1.5, states)
    space = StateSpace(labels=labels, prob=prob / np.sum(prob))
    family = partition_family(states)

    types = []
    for i in range(n_types):
        if i < 2 and len(family) >= 2:
            info = family[i]
        else:
            info = family[int(rng.integers(0, len(family)))]
        rho = float(rng.uniform(0.2, 0.8))
        weights = rng.uniform(0.5, 2.0, goods)
        utility = (UtilitySpec(family=CES, weights=weights, rho=rho),) * states
        endow = _measurable_endowment(rng, info, states, goods)
        prior = rng.uniform(0.5, 1.5, states)
        types.append(
            AgentType(
                name=f"t{i}",
                mass=float(rng.uniform(0.5, 2.0)),
                kind=ATOMLESS,
                utility=utility,
                endowment=endow,
                info=info,
                prior=prior / np.sum(prior),
            )
        )
    if atoms > 0:
        info = family[0]
        rho = float(rng.uniform(0.2, 0.8))
        weights = rng.uniform(0.5, 2.0, goods)
        utility = (UtilitySpec(family=CES, weights=weights, rho=rho),) * states
        endow = _measurable_endowment(rng, info, states, goods)
        prior = rng.uniform(0.5, 1.5, states)
        prior = prior / np.sum(prior)
        mass = float(rng.uniform(0.5, 2.0))
        for a in range(atoms):
            types.append(
                AgentType(
                    name=f"atom{a}",
                    mass=mass,
                    kind=ATOM,
                    utility=utility,
                    endowment=endow,
                    info=info,
                    prior=prior,
                )
            )
    return Economy(states=space, goods=goods, types=tuple(types))


def two_type_demo_economy(n_states: int = 4) -> Economy:
    """The classic two-type benchmark economy, replicated over any state count.

    Two equal-mass atomless types with square-root preferences over two goods
    and endowments (1,2) and (3,2) in every state; one type is fully informed,
    the other learns nothing privately.  Every state's equilibrium is the same:
    price (1/2, 1/2) with demands (3/2, 3/2) and (5/2, 5/2).
    """
    labels = tuple(f"s{i}" for i in range(n_states))
    space = StateSpace(labels=labels, prob=np.full(n_states, 1.0 / n_states))
    ces = UtilitySpec(family=CES, weights=np.array([1.0, 1.0]), rho=0.5)
    prior = np.full(n_states, 1.0 / n_states)
    type_a = AgentType(
        name="A",
        mass=0.5,
        kind=ATOMLESS,
        utility=(ces,) * n_states,
        endowment=np.tile([1.0, 2.0], (n_states, 1)),
        info=Partition.discrete(n_states),
        prior=prior,
    )
    type_b = AgentType(
        name="B",
        mass=0.5,
        kind=ATOMLESS,
        utility=(ces,) * n_states,
        endowment=np.tile([3.0, 2.0], (n_states, 1)),
        info=Partition.trivial(n_states),
        prior=prior,
    )
    return Economy(states=space, goods=2, types=(type_a, type_b))
