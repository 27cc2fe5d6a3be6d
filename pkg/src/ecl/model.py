"""Domain types for finite asymmetric-information exchange economies.

An economy is a finite state space with probabilities, a goods count, and a
list of agent types.  Each type carries a measure weight (its mass), an
atom/atomless kind, per-state utility specs and endowments, an information
partition and a prior.  Atomless types stand in for a continuum of identical
small agents and may join coalitions fractionally; atoms are indivisible
large agents.

All values are immutable after construction and every operation here is a
pure function, so the module is safe for unrestricted data-parallel use.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EconomyError
from .partitions import Partition, join_all

#: Probabilities and price rows must sum to one within this.
SUM_ONE_TOL = 1e-12

#: Relative tolerance for per-state market clearing of allocations.
FEASIBILITY_RTOL = 1e-9

ATOMLESS = "atomless"
ATOM = "atom"

CES = "ces"
COBB_DOUGLAS = "cobb_douglas"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# utility families
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """A parametric utility family on the nonnegative orthant.

    ``ces``: u(x) = sum_k weights_k * x_k**rho with 0 < rho < 1 and positive
    weights; continuous, strictly increasing and strictly quasi-concave
    everywhere on the orthant.

    ``cobb_douglas``: u(x) = prod_k x_k**weights_k with positive weights
    summing to one.  Strict monotonicity fails on the boundary, so types using
    it must have strictly positive wealth in every state (checked during
    economy validation).
    """

    family: str
    weights: np.ndarray
    rho: float | None = None

    def __post_init__(self):
        w = _frozen_array(self.weights)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.shape[0] < 1:
            raise EconomyError("utility weights must be a nonempty vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise EconomyError("utility weights must be strictly positive")
        if self.family == CES:
            if self.rho is None or not (0.0 < self.rho < 1.0):
                raise EconomyError("CES exponent rho must lie in (0, 1)")
        elif self.family == COBB_DOUGLAS:
            if self.rho is not None:
                raise EconomyError("cobb_douglas takes no rho")
            if abs(float(np.sum(w)) - 1.0) > 1e-9:
                raise EconomyError("cobb_douglas weights must sum to 1")
        else:
            raise EconomyError(f"unknown utility family {self.family!r}")

    def value(self, bundle) -> float:
        x = np.maximum(np.asarray(bundle, dtype=float), 0.0)
        if self.family == CES:
            return float(np.sum(self.weights * x**self.rho))
        return float(np.prod(x**self.weights))

    def gradient(self, bundle) -> np.ndarray:
        """Marginal utilities; components are +inf where the bundle is zero."""
        x = np.maximum(np.asarray(bundle, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            if self.family == CES:
                return self.weights * self.rho * x ** (self.rho - 1.0)
            u = self.value(x)
            if u <= 0.0:
                # On the boundary the product vanishes; fall back to the
                # limiting direction so callers can still normalize.
                out = np.where(x > 0.0, 0.0, np.inf)
                return out
            return u * self.weights / x

    def same_as(self, other: "UtilitySpec") -> bool:
        return (
            self.family == other.family
            and self.rho == other.rho
            and self.weights.shape == other.weights.shape
            and bool(np.all(self.weights == other.weights))
        )


# ---------------------------------------------------------------------------
# state space, agent types, economy
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Finite set of states of nature with strictly positive probabilities."""

    labels: tuple[str, ...]
    prob: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        p = _frozen_array(self.prob)
        object.__setattr__(self, "prob", p)
        if len(labels) < 1:
            raise EconomyError("state space needs at least one state")
        if len(set(labels)) != len(labels):
            raise EconomyError("state labels must be unique")
        if p.shape != (len(labels),):
            raise EconomyError("one probability per state required")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise EconomyError("state probabilities must be strictly positive")
        if abs(float(np.sum(p)) - 1.0) > SUM_ONE_TOL:
            raise EconomyError("state probabilities must sum to 1")

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise EconomyError(f"unknown state label {label!r}") from None

    def __eq__(self, other):
        return (
            isinstance(other, StateSpace)
            and self.labels == other.labels
            and bool(np.array_equal(self.prob, other.prob))
        )


@dataclass(frozen=True, eq=False)
class AgentType:
    """One agent type: measure weight, kind, and per-state characteristics."""

    name: str
    mass: float
    kind: str
    utility: tuple[UtilitySpec, ...]
    endowment: np.ndarray  # states x goods
    info: Partition
    prior: np.ndarray  # over states

    def __post_init__(self):
        object.__setattr__(self, "endowment", _frozen_array(self.endowment))
        object.__setattr__(self, "prior", _frozen_array(self.prior))
        object.__setattr__(self, "utility", tuple(self.utility))
        if self.kind not in (ATOMLESS, ATOM):
            raise EconomyError(f"agent kind must be atomless or atom, got {self.kind!r}")
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise EconomyError(f"type {self.name!r} has nonpositive mass")
        if self.endowment.ndim != 2:
            raise EconomyError(f"type {self.name!r} endowment must be states x goods")
        if not np.all(np.isfinite(self.endowment)) or np.any(self.endowment < 0):
            raise EconomyError(f"type {self.name!r} endowment must be nonnegative")
        n_states = self.endowment.shape[0]
        if len(self.utility) != n_states:
            raise EconomyError(f"type {self.name!r} needs one utility spec per state")
        if self.prior.shape != (n_states,):
            raise EconomyError(f"type {self.name!r} prior must have one entry per state")
        if not np.all(np.isfinite(self.prior)) or np.any(self.prior <= 0):
            raise EconomyError(f"type {self.name!r} prior must be strictly positive")
        if abs(float(np.sum(self.prior)) - 1.0) > 1e-9:
            raise EconomyError(f"type {self.name!r} prior must sum to 1")
        if self.info.n_states != n_states:
            raise EconomyError(f"type {self.name!r} partition does not match state space")

    def same_characteristics(self, other: "AgentType") -> bool:
        """Same type in the sense of identical (info, utility, endowment, prior)."""
        return (
            self.info == other.info
            and len(self.utility) == len(other.utility)
            and all(a.same_as(b) for a, b in zip(self.utility, other.utility))
            and bool(np.array_equal(self.endowment, other.endowment))
            and bool(np.array_equal(self.prior, other.prior))
        )


@dataclass(frozen=True, eq=False)
class Economy:
    states: StateSpace
    goods: int
    types: tuple[AgentType, ...]

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        if self.goods < 2:
            raise EconomyError("an economy needs at least 2 goods")
        if not self.types:
            raise EconomyError("an economy needs at least one agent type")
        names = [t.name for t in self.types]
        if len(set(names)) != len(names):
            raise EconomyError("type names must be unique")
        for t in self.types:
            if t.endowment.shape != (self.states.n, self.goods):
                raise EconomyError(
                    f"type {t.name!r} endowment shape {t.endowment.shape} does not "
                    f"match {self.states.n} states x {self.goods} goods"
                )
        for s in range(self.states.n):
            agg = aggregate_endowment(self, s, _validate=False)
            if np.any(agg <= 0):
                raise EconomyError(
                    f"aggregate endowment has a zero component in state "
                    f"{self.states.labels[s]!r}"
                )
        # Cobb-Douglas needs positive wealth (nonzero endowment) in every state.
        for t in self.types:
            for s, u in enumerate(t.utility):
                if u.family == COBB_DOUGLAS and not np.any(t.endowment[s] > 0):
                    raise EconomyError(
                        f"type {t.name!r} uses cobb_douglas with zero wealth in "
                        f"state {self.states.labels[s]!r}"
                    )

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def masses(self) -> np.ndarray:
        return np.array([t.mass for t in self.types])

    @property
    def atom_indices(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.types) if t.kind == ATOM)

    def type_index(self, name: str) -> int:
        for i, t in enumerate(self.types):
            if t.name == name:
                return i
        raise EconomyError(f"unknown type name {name!r}")

    def __eq__(self, other):
        if not isinstance(other, Economy) or self.goods != other.goods:
            return False
        if self.states != other.states or self.n_types != other.n_types:
            return False
        for a, b in zip(self.types, other.types):
            if (
                a.name != b.name
                or a.mass != b.mass
                or a.kind != b.kind
                or not a.same_characteristics(b)
            ):
                return False
        return True


@dataclass(frozen=True, eq=False)
class Allocation:
    """Per-type, per-state consumption bundles clearing markets state by state."""

    bundles: np.ndarray  # types x states x goods

    def __post_init__(self):
        object.__setattr__(self, "bundles", _frozen_array(self.bundles))
        if self.bundles.ndim != 3:
            raise EconomyError("allocation bundles must be types x states x goods")
        if not np.all(np.isfinite(self.bundles)) or np.any(self.bundles < 0):
            raise EconomyError("allocation bundles must be nonnegative")

    def __eq__(self, other):
        return isinstance(other, Allocation) and bool(
            np.array_equal(self.bundles, other.bundles)
        )


@dataclass(frozen=True, eq=False)
class PriceSystem:
    """State-indexed strictly positive simplex price vectors."""

    prices: np.ndarray  # states x goods

    def __post_init__(self):
        object.__setattr__(self, "prices", _frozen_array(self.prices))
        if self.prices.ndim != 2:
            raise EconomyError("price system must be states x goods")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise EconomyError("prices must be strictly positive")
        sums = np.sum(self.prices, axis=1)
        if np.any(np.abs(sums - 1.0) > SUM_ONE_TOL):
            raise EconomyError("each price vector must sum to 1")

    def __eq__(self, other):
        return isinstance(other, PriceSystem) and bool(
            np.array_equal(self.prices, other.prices)
        )


@dataclass(frozen=True, eq=False)
class FuzzyCoalition:
    """Participation weights per type: fractional for atomless types, all-or-nothing for atoms."""

    participation: np.ndarray  # over types, in measure units

    def __post_init__(self):
        object.__setattr__(self, "participation", _frozen_array(self.participation))
        lam = self.participation
        if lam.ndim != 1:
            raise EconomyError("participation must be a vector over types")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise EconomyError("participation weights must be nonnegative")
        if float(np.sum(lam)) <= 0:
            raise EconomyError("a coalition needs positive total participation")

    def validate_for(self, economy: Economy):
        lam = self.participation
        if lam.shape != (economy.n_types,):
            raise EconomyError("participation vector does not match the type list")
        for i, t in enumerate(economy.types):
            if lam[i] > t.mass * (1 + 1e-12):
                raise EconomyError(
                    f"participation of type {t.name!r} exceeds its mass"
                )
            if t.kind == ATOM and lam[i] not in (0.0, t.mass):
                raise EconomyError(
                    f"atom {t.name!r} must participate fully or not at all"
                )

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.nonzero(self.participation > 0)[0])

    def __eq__(self, other):
        return isinstance(other, FuzzyCoalition) and bool(
            np.array_equal(self.participation, other.participation)
        )


# ---------------------------------------------------------------------------
# assumption report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Which of the standard assumptions hold for a validated economy.

    Keys: endowment adequacy (aggregate positive / per-type positive),
    joint measurability (automatic at finite scale), utility regularity,
    finitely-many-information-structures with full joint information, and
    identical large agents.
    """

    flags: dict
    notes: tuple[str, ...]

    def __getitem__(self, key: str) -> bool:
        return self.flags[key]


def assumption_flags(economy: Economy) -> AssumptionReport:
    """Report which assumptions hold.  Hard invariants were already enforced."""
    notes = []
    flags = {
        "A1": True,  # aggregate endowment >> 0 is a construction invariant
        "A1'": all(bool(np.all(t.endowment > 0)) for t in economy.types),
        "A2": True,
        "A3": True,
        "A4": True,
        "A4'": True,
    }
    notes.append("A2 and all joint measurability are automatic at finite scale.")
    if any(
        u.family == COBB_DOUGLAS for t in economy.types for u in t.utility
    ):
        notes.append(
            "cobb_douglas types: strict monotonicity holds only off the boundary; "
            "positive wealth in every state was verified."
        )
    distinct: list[Partition] = []
    for t in economy.types:
        if t.info not in distinct:
            distinct.append(t.info)
    full_join = join_all(distinct, economy.states.n)
    flags["A5"] = full_join.is_discrete()
    if not flags["A5"]:
        notes.append("joint information of all types does not separate every state")
    atoms = [economy.types[i] for i in economy.atom_indices]
    flags["A6"] = all(
        atoms[0].same_characteristics(a) for a in atoms[1:]
    ) if atoms else True
    if not atoms:
        notes.append("no atoms present; identical-large-agents holds vacuously")
    return AssumptionReport(flags=flags, notes=tuple(notes))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def _utility_from_raw(raw) -> UtilitySpec:
    if not isinstance(raw, dict):
        raise EconomyError("utility must be an object")
    allowed = {"family", "rho", "weights"}
    unknown = set(raw) - allowed
    if unknown:
        raise EconomyError(f"unknown utility fields: {sorted(unknown)}")
    family = raw.get("family")
    if family not in (CES, COBB_DOUGLAS):
        raise EconomyError(f"unknown utility family {family!r}")
    return UtilitySpec(
        family=family,
        weights=_numeric_vector(raw.get("weights"), "utility weights"),
        rho=float(raw["rho"]) if "rho" in raw and raw["rho"] is not None else None,
    )


def _numeric_vector(raw, what: str) -> np.ndarray:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise EconomyError(f"{what} must be a nonempty array of numbers")
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise EconomyError(f"{what} must contain only numbers")
    return np.array(raw, dtype=float)


def _numeric_matrix(raw, what: str) -> np.ndarray:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise EconomyError(f"{what} must be a nonempty array of rows")
    return np.array([_numeric_vector(r, what) for r in raw], dtype=float)


def _partition_from_labels(raw, states: StateSpace) -> Partition:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise EconomyError("partition must be a nonempty list of label lists")
    cells = []
    for cell in raw:
        if not isinstance(cell, (list, tuple)):
            raise EconomyError("each partition cell must be a list of state labels")
        cells.append({states.index(str(lbl)) for lbl in cell})
    return Partition.from_cells(cells, states.n)


def validate_economy(raw) -> Economy:
    """Build and validate an economy from a structured description.

    Accepts either an ``Economy`` (validation is idempotent) or a parsed
    JSON-style dict with fields ``states``, ``goods`` and ``types``.  Unknown
    fields are rejected.  Raises :class:`EconomyError` on any violated
    invariant: nonpositive mass, a state where some good is absent in the
    aggregate, zero-wealth cobb_douglas types, malformed partitions.
    """
    if isinstance(raw, Economy):
        return Economy(states=raw.states, goods=raw.goods, types=raw.types)
    if not isinstance(raw, dict):
        raise EconomyError("economy description must be a dict or Economy")
    unknown = set(raw) - {"states", "goods", "types"}
    if unknown:
        raise EconomyError(f"unknown economy fields: {sorted(unknown)}")
    raw_states = raw.get("states")
    if not isinstance(raw_states, dict) or set(raw_states) - {"labels", "prob"}:
        raise EconomyError("states must be an object with labels and prob")
    labels = raw_states.get("labels")
    if not isinstance(labels, (list, tuple)) or not labels:
        raise EconomyError("states.labels must be a nonempty list")
    states = StateSpace(
        labels=tuple(str(x) for x in labels),
        prob=_numeric_vector(raw_states.get("prob"), "states.prob"),
    )
    goods = raw.get("goods")
    if isinstance(goods, bool) or not isinstance(goods, int):
        raise EconomyError("goods must be an integer count")
    raw_types = raw.get("types")
    if not isinstance(raw_types, (list, tuple)) or not raw_types:
        raise EconomyError("types must be a nonempty list")
    types = []
    allowed = {"name", "mass", "kind", "utility", "endowment", "partition", "prior"}
    for rt in raw_types:
        if not isinstance(rt, dict):
            raise EconomyError("each type must be an object")
        unknown = set(rt) - allowed
        if unknown:
            raise EconomyError(f"unknown type fields: {sorted(unknown)}")
        raw_u = rt.get("utility")
        if isinstance(raw_u, (list, tuple)):
            utility = tuple(_utility_from_raw(u) for u in raw_u)
            if len(utility) != states.n:
                raise EconomyError(
                    "a per-state utility list needs one entry per state"
                )
        else:
            utility = (_utility_from_raw(raw_u),) * states.n
        mass = rt.get("mass")
        if isinstance(mass, bool) or not isinstance(mass, (int, float)):
            raise EconomyError("type mass must be a number")
        types.append(
            AgentType(
                name=str(rt.get("name")),
                mass=float(mass),
                kind=str(rt.get("kind", ATOMLESS)),
                utility=utility,
                endowment=_numeric_matrix(rt.get("endowment"), "endowment"),
                info=_partition_from_labels(rt.get("partition"), states),
                prior=_numeric_vector(rt.get("prior"), "prior"),
            )
        )
    return Economy(states=states, goods=goods, types=tuple(types))


def aggregate_endowment(economy: Economy, state: int, _validate: bool = True) -> np.ndarray:
    """Mass-weighted total endowment in one state."""
    if _validate and not (0 <= state < economy.states.n):
        raise EconomyError(f"state index {state} out of range")
    types = economy.types
    return np.sum([t.mass * t.endowment[state] for t in types], axis=0)


def split_atoms(economy: Economy) -> Economy:
    """Associated atomless economy: every atom re-emitted as an atomless type.

    Masses and all characteristics are preserved, so aggregate endowments are
    unchanged; only coalition formation differs (former atoms may now
    participate fractionally).
    """
    new_types = tuple(
        AgentType(
            name=t.name,
            mass=t.mass,
            kind=ATOMLESS,
            utility=t.utility,
            endowment=t.endowment,
            info=t.info,
            prior=t.prior,
        )
        if t.kind == ATOM
        else t
        for t in economy.types
    )
    return Economy(states=economy.states, goods=economy.goods, types=new_types)


def allocation_feasible(economy: Economy, bundles, rtol: float = FEASIBILITY_RTOL) -> bool:
    """Per-state market clearing, componentwise within relative tolerance."""
    b = np.asarray(bundles, dtype=float)
    if b.shape != (economy.n_types, economy.states.n, economy.goods):
        return False
    masses = economy.masses
    for s in range(economy.states.n):
        total = masses @ b[:, s, :]
        agg = aggregate_endowment(economy, s)
        if np.any(np.abs(total - agg) > rtol * np.maximum(1.0, np.abs(agg))):
            return False
    return True


def make_allocation(economy: Economy, bundles) -> Allocation:
    """Wrap bundles as an :class:`Allocation`, enforcing per-state feasibility."""
    alloc = Allocation(bundles=np.asarray(bundles, dtype=float))
    if not allocation_feasible(economy, alloc.bundles):
        raise EconomyError("bundles do not clear markets state by state")
    return alloc


def endowment_allocation(economy: Economy) -> Allocation:
    """The no-trade allocation: everyone consumes their endowment."""
    bundles = np.stack([t.endowment for t in economy.types])
    return Allocation(bundles=bundles)


def average_atoms(allocation: Allocation, economy: Economy) -> Allocation:
    """Replace every atom's bundle with the mass-weighted atom-sector average.

    Atomless bundles are unchanged.  Averaging conserves the atom-sector total
    in every state, so feasibility is preserved exactly.
    """
    atoms = economy.atom_indices
    if not atoms:
        raise EconomyError("average_atoms requires at least one atom")
    b = np.array(allocation.bundles)
    masses = np.array([economy.types[i].mass for i in atoms])
    total_mass = float(np.sum(masses))
    for s in range(economy.states.n):
        avg = np.einsum("i,ik->k", masses, b[list(atoms), s, :]) / total_mass
        for i in atoms:
            b[i, s, :] = avg
    return Allocation(bundles=b)
