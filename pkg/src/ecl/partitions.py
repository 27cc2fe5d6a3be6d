"""Finite partition lattice over state indices.

States are integers ``0 .. n_states-1``; a partition is a disjoint cover of
that range by nonempty cells.  Partitions stand in for the sigma-algebras they
generate: at finite scale the two are interchangeable, so measurability,
conditioning and information pooling all reduce to cell arithmetic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EconomyError

#: Default tolerance for grouping price vectors into level sets.
PRICE_EQ_TOL = 1e-9

#: Max-norm tolerance for "constant on a cell" checks.
MEASURABILITY_TOL = 1e-9


@dataclass(frozen=True)
class Partition:
    """A partition of ``range(n_states)`` in canonical form.

    Cells are stored sorted by their least element, which makes equality,
    hashing and serialization deterministic.
    """

    cells: tuple[frozenset[int], ...]
    n_states: int

    def __post_init__(self):
        seen: set[int] = set()
        for cell in self.cells:
            if not cell:
                raise EconomyError("partition contains an empty cell")
            if seen & cell:
                raise EconomyError("partition cells are not disjoint")
            seen |= cell
        if seen != set(range(self.n_states)):
            raise EconomyError(
                f"partition does not cover states 0..{self.n_states - 1}"
            )
        canonical = tuple(sorted(self.cells, key=min))
        object.__setattr__(self, "cells", canonical)
        index = {}
        for i, cell in enumerate(canonical):
            for s in cell:
                index[s] = i
        object.__setattr__(self, "_cell_index", index)

    @classmethod
    def from_cells(cls, cells, n_states: int) -> "Partition":
        return cls(tuple(frozenset(c) for c in cells), n_states)

    @classmethod
    def discrete(cls, n_states: int) -> "Partition":
        return cls.from_cells([{s} for s in range(n_states)], n_states)

    @classmethod
    def trivial(cls, n_states: int) -> "Partition":
        return cls.from_cells([set(range(n_states))], n_states)

    def cell_of(self, state: int) -> frozenset[int]:
        return self.cells[self._cell_index[state]]

    def cell_index_of(self, state: int) -> int:
        return self._cell_index[state]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def is_discrete(self) -> bool:
        return all(len(c) == 1 for c in self.cells)

    def as_sorted_lists(self) -> list[list[int]]:
        """Canonical nested-list form (used for serialization)."""
        return [sorted(c) for c in self.cells]


def _check_same_space(p: Partition, q: Partition):
    if p.n_states != q.n_states:
        raise EconomyError(
            f"partitions are over different state spaces "
            f"({p.n_states} vs {q.n_states} states)"
        )


def join(p: Partition, q: Partition) -> Partition:
    """Coarsest common refinement: cells are the nonempty pairwise intersections."""
    _check_same_space(p, q)
    cells = []
    for a in p.cells:
        for b in q.cells:
            c = a & b
            if c:
                cells.append(c)
    return Partition(tuple(cells), p.n_states)


def join_all(parts, n_states: int) -> Partition:
    """Join of an iterable of partitions; the trivial partition if empty."""
    out = Partition.trivial(n_states)
    for p in parts:
        out = join(out, p)
    return out


def meet(p: Partition, q: Partition) -> Partition:
    """Finest partition coarser than both (connected components of shared cells)."""
    _check_same_space(p, q)
    n = p.n_states
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for part in (p, q):
        for cell in part.cells:
            states = sorted(cell)
            for s in states[1:]:
                union(states[0], s)
    groups: dict[int, set[int]] = {}
    for s in range(n):
        groups.setdefault(find(s), set()).add(s)
    return Partition.from_cells(groups.values(), n)


def meet_all(parts, n_states: int) -> Partition:
    out = Partition.discrete(n_states)
    for p in parts:
        out = meet(out, p)
    return out


def refines(p: Partition, q: Partition) -> bool:
    """True iff every cell of ``p`` is contained in some cell of ``q``."""
    _check_same_space(p, q)
    return all(cell <= q.cell_of(min(cell)) for cell in p.cells)


def sigma_of_price(price_system, tol: float = PRICE_EQ_TOL) -> Partition:
    """Partition of states by level sets of a price system.

    Two states land in the same cell when their price vectors are equal within
    ``tol`` in the max norm; near-equality is closed transitively so the result
    is a genuine partition even when solver noise produces epsilon-chains.
    """
    prices = np.asarray(getattr(price_system, "prices", price_system), dtype=float)
    if tol < 0:
        raise EconomyError("price-equality tolerance must be nonnegative")
    n = prices.shape[0]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if np.max(np.abs(prices[i] - prices[j])) <= tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups: dict[int, set[int]] = {}
    for s in range(n):
        groups.setdefault(find(s), set()).add(s)
    return Partition.from_cells(groups.values(), n)


def chain_merged_cells(price_system, partition: Partition, tol: float = PRICE_EQ_TOL):
    """Cells of ``partition`` whose states are only tol-equal via a chain.

    Returns the list of cells (as sorted state lists) containing at least one
    pair of states whose prices differ by more than ``tol``: those merges are
    artifacts of transitive closure rather than genuine price equality, and
    reports should flag them.
    """
    prices = np.asarray(getattr(price_system, "prices", price_system), dtype=float)
    flagged = []
    for cell in partition.cells:
        states = sorted(cell)
        worst = 0.0
        for a in range(len(states)):
            for b in range(a + 1, len(states)):
                worst = max(
                    worst, float(np.max(np.abs(prices[states[a]] - prices[states[b]])))
                )
        if worst > tol:
            flagged.append(states)
    return flagged


def combine_info(agent_partition: Partition, price_partition: Partition) -> Partition:
    """Pool an agent's private information with what prices reveal."""
    return join(agent_partition, price_partition)


def is_measurable(state_function, partition: Partition, tol: float = MEASURABILITY_TOL) -> bool:
    """True iff the state function is constant on every cell of ``partition``.

    ``state_function`` is an array with one row (or scalar) per state; vector
    values are compared in the max norm within ``tol``.
    """
    values = np.asarray(state_function, dtype=float)
    if values.shape[0] != partition.n_states:
        raise EconomyError("state function length does not match the state space")
    for cell in partition.cells:
        states = sorted(cell)
        ref = values[states[0]]
        for s in states[1:]:
            if np.max(np.abs(values[s] - ref)) > tol:
                return False
    return True


def cond_expect(values, partition: Partition, prior) -> np.ndarray:
    """Conditional expectation of per-state values given a partition.

    Output at a state is the prior-weighted average of ``values`` over that
    state's cell, so the result is constant on cells and preserves the
    prior-weighted mean.
    """
    v = np.asarray(values, dtype=float)
    q = np.asarray(prior, dtype=float)
    if v.shape[0] != partition.n_states or q.shape[0] != partition.n_states:
        raise EconomyError("values/prior length does not match the state space")
    out = np.empty_like(v)
    for cell in partition.cells:
        states = sorted(cell)
        w = q[states]
        avg = float(np.dot(w, v[states]) / np.sum(w))
        out[states] = avg
    return out
