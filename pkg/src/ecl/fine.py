"""Fine-core machinery: communication systems, fine blocking, constructive paths.

A coalition that pools its members' information can block on any event it can
jointly discern, comparing conditional expected utilities rather than per-state
ones.  The search here covers full communication (everyone learns the join of
participants' partitions) and private communication (everyone keeps their own);
intermediate information structures are out of scope and every report says so.
Events range over atoms of the relevant communication partition, which loses
nothing: conditional expectations are cell-local, so blocking on a union of
atoms implies blocking on each atom.
"""

from dataclasses import dataclass

import numpy as np

from .core import (
    BlockCertificate,
    FindBlockOptions,
    _solve_coalition,
    deterministic_coalitions,
    verify_certificate,
)
from .errors import EconomyError, StaleCertificateError, UndecidedError
from .improve import GainTerm, competitive_start, solve_improvement
from .model import (
    ATOM,
    Allocation,
    Economy,
    FuzzyCoalition,
    allocation_feasible,
    assumption_flags,
)
from .partitions import Partition, join_all, meet_all
from .walras import StateEconomy

FULL = "full"
PRIVATE = "private"
BOTH = "both"

FINE_BLOCKED = "fine_blocked"
NO_FINE_BLOCK = "no_fine_block_found"
UNDECIDED = "undecided"

#: Componentwise tolerance for per-state coalition feasibility on the event.
FINE_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class FineGainWitness:
    """One conditional-expected-utility comparison backing a certificate."""

    type_name: str
    state_labels: tuple[str, ...]  # the communication cell, within the event
    weights: tuple[float, ...]  # conditional prior over those states
    baseline: float  # conditional expected utility of the blocked allocation


@dataclass(frozen=True, eq=False)
class FineBlockCertificate:
    """A verified fine-blocking move.

    ``bundles`` hold the improving consumption on the event only (aligned with
    ``event_labels``); outside the event every participant consumes their
    endowment, which never enters the conditional comparisons on the event.
    """

    coalition: FuzzyCoalition
    mode: str  # full | private
    communication: Partition
    event_labels: tuple[str, ...]
    type_names: tuple[str, ...]
    bundles: np.ndarray  # participants x event-states x goods
    witnesses: tuple[FineGainWitness, ...]
    margin: float
    eps_block: float

    def __post_init__(self):
        b = np.asarray(self.bundles, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "bundles", b)


@dataclass(frozen=True)
class FineBlockOptions:
    mode: str = FULL
    eps_block: float = 1e-6
    budget: int = 256
    inner_iter: int = 200
    seed: int = 0
    good_enough_factor: float = 1e3

    @property
    def good_enough(self) -> float:
        return max(self.eps_block * self.good_enough_factor, 1e-3)


@dataclass(frozen=True)
class FineBlockSearch:
    status: str  # fine_blocked | no_fine_block_found | undecided
    certificate: FineBlockCertificate | None = None
    searched: int = 0
    detail: str = ""


@dataclass(frozen=True)
class FineCoreReport:
    verdict: str
    modes: tuple[str, ...]
    searches: tuple[FineBlockSearch, ...]
    certificate: FineBlockCertificate | None
    notes: tuple[str, ...]


def communication_partition(economy: Economy, coalition: FuzzyCoalition) -> Partition:
    """Join of the information partitions of all participating types."""
    support = coalition.support
    if not support:
        raise EconomyError("communication needs a nonempty coalition")
    return join_all(
        (economy.types[i].info for i in support), economy.states.n
    )


def _comm_partition_for(economy, support, mode, type_index):
    if mode == FULL:
        return join_all((economy.types[i].info for i in support), economy.states.n)
    return economy.types[type_index].info


def _event_atoms(economy, support, mode) -> list[tuple[int, ...]]:
    if mode == FULL:
        comm = join_all((economy.types[i].info for i in support), economy.states.n)
    else:
        comm = meet_all(
            (economy.types[i].info for i in support), economy.states.n
        )
    return [tuple(sorted(c)) for c in comm.cells]


def _build_terms(economy, support, mode, event, f_bundles):
    """Gain terms and baselines for one (coalition, event) candidate."""
    terms = []
    witnesses = []
    for k, i in enumerate(support):
        t = economy.types[i]
        if mode == FULL:
            cells = [event]
        else:
            cells = [
                tuple(sorted(c))
                for c in t.info.cells
                if set(c) <= set(event)
            ]
        for cell in cells:
            w = np.zeros(len(event))
            prior = np.array([t.prior[s] for s in cell])
            prior = prior / np.sum(prior)
            for weight, s in zip(prior, cell):
                w[event.index(s)] = weight
            baseline = float(
                sum(
                    weight * t.utility[s].value(f_bundles[i, s])
                    for weight, s in zip(prior, cell)
                )
            )
            terms.append(GainTerm(participant=k, weights=w, baseline=baseline))
            witnesses.append(
                FineGainWitness(
                    type_name=t.name,
                    state_labels=tuple(economy.states.labels[s] for s in cell),
                    weights=tuple(float(x) for x in prior),
                    baseline=baseline,
                )
            )
    return terms, witnesses


def verify_fine_certificate(
    economy: Economy, cert: FineBlockCertificate, allocation: Allocation | None = None
):
    """Independent re-verification; raises StaleCertificateError on any failure.

    Checks event measurability for every participant's communication
    partition, per-state coalition feasibility on the event, and the
    conditional-expected-utility margins (recomputed from the economy, and
    against the allocation when supplied).
    """
    lam = cert.coalition.participation
    if lam.shape != (economy.n_types,):
        raise StaleCertificateError("certificate does not match the type list")
    support = cert.coalition.support
    if tuple(economy.types[i].name for i in support) != cert.type_names:
        raise StaleCertificateError("participant names do not match the economy")
    for i in support:
        t = economy.types[i]
        if t.kind == ATOM and lam[i] != t.mass:
            raise StaleCertificateError("atom participation must equal its mass")
        if lam[i] > t.mass * (1 + 1e-12):
            raise StaleCertificateError("participation exceeds type mass")
    if not cert.event_labels:
        raise StaleCertificateError("event is empty")
    event = tuple(economy.states.index(lbl) for lbl in cert.event_labels)
    event_set = set(event)
    for i in support:
        comm_i = _comm_partition_for(economy, support, cert.mode, i)
        covered = set()
        for cell in comm_i.cells:
            if cell <= event_set:
                covered |= cell
        if covered != event_set:
            raise StaleCertificateError(
                f"event is not measurable for participant {economy.types[i].name!r}"
            )
    lam_s = lam[list(support)]
    n_ev = len(event)
    if cert.bundles.shape != (len(support), n_ev, economy.goods):
        raise StaleCertificateError("bundle tensor has the wrong shape")
    for j, s in enumerate(event):
        endow = np.stack([economy.types[i].endowment[s] for i in support])
        net = np.einsum("i,ik->k", lam_s, cert.bundles[:, j, :] - endow)
        scale = max(1.0, float(np.max(np.abs(lam_s @ endow))))
        if np.max(np.abs(net)) > FINE_FEAS_TOL * scale:
            raise StaleCertificateError(
                f"coalition redistribution does not balance in state "
                f"{economy.states.labels[s]!r}"
            )
    if cert.margin < cert.eps_block:
        raise StaleCertificateError("margin below the blocking threshold")
    for k, i in enumerate(support):
        t = economy.types[i]
        comm_i = _comm_partition_for(economy, support, cert.mode, i)
        for cell in comm_i.cells:
            if not (cell <= event_set):
                continue
            states = sorted(cell)
            prior = np.array([t.prior[s] for s in states])
            prior = prior / np.sum(prior)
            val_g = float(
                sum(
                    w * t.utility[s].value(cert.bundles[k, event.index(s), :])
                    for w, s in zip(prior, states)
                )
            )
            if allocation is not None:
                base = float(
                    sum(
                        w * t.utility[s].value(allocation.bundles[i, s])
                        for w, s in zip(prior, states)
                    )
                )
            else:
                labels = tuple(economy.states.labels[s] for s in states)
                match = [
                    wit
                    for wit in cert.witnesses
                    if wit.type_name == t.name and wit.state_labels == labels
                ]
                if not match:
                    raise StaleCertificateError(
                        f"no stored baseline for {t.name!r} on cell {labels}"
                    )
                base = match[0].baseline
            if val_g - base < cert.margin - 1e-12:
                raise StaleCertificateError(
                    f"participant {t.name!r} does not achieve the stated margin "
                    f"on cell {sorted(cell)}"
                )


def _solve_fine_candidate(economy, lam, event, mode, f_bundles, opts):
    support = tuple(int(i) for i in np.nonzero(lam > 0)[0])
    lam_s = lam[list(support)]
    terms, witnesses = _build_terms(economy, support, mode, event, f_bundles)
    n_ev = len(event)
    utilities = [
        [economy.types[i].utility[s] for s in event] for i in support
    ]
    endow = np.stack(
        [np.stack([economy.types[i].endowment[s] for s in event]) for i in support]
    )
    resources = np.einsum("i,ijk->jk", lam_s, endow)
    # Cheap upper bound: nobody can do better than eating all resources.
    ub = np.inf
    for t in terms:
        i = t.participant
        cap = sum(
            t.weights[j] * utilities[i][j].value(resources[j] / lam_s[i])
            for j in range(n_ev)
            if t.weights[j] > 0
        )
        ub = min(ub, cap - t.baseline)
    if ub < opts.eps_block:
        return None
    starts = [endow]
    comp = competitive_start(lam_s, utilities, endow)
    if comp is not None:
        starts.append(comp)
    sol = solve_improvement(
        lam_s,
        utilities,
        resources,
        terms,
        max_iter=opts.inner_iter,
        good_enough=opts.good_enough,
        extra_starts=starts,
    )
    if sol.margin < opts.eps_block:
        return None
    # Recompute the margin from scratch before certifying.
    margins = []
    for t in terms:
        i = t.participant
        val = sum(
            t.weights[j] * utilities[i][j].value(sol.bundles[i, j])
            for j in range(n_ev)
            if t.weights[j] > 0
        )
        margins.append(val - t.baseline)
    margin = float(np.min(margins))
    if margin < opts.eps_block:
        return None
    if mode == FULL:
        comm = join_all((economy.types[i].info for i in support), economy.states.n)
    else:
        comm = meet_all((economy.types[i].info for i in support), economy.states.n)
    cert = FineBlockCertificate(
        coalition=FuzzyCoalition(participation=lam),
        mode=mode,
        communication=comm,
        event_labels=tuple(economy.states.labels[s] for s in event),
        type_names=tuple(economy.types[i].name for i in support),
        bundles=sol.bundles,
        witnesses=tuple(witnesses),
        margin=margin,
        eps_block=opts.eps_block,
    )
    verify_fine_certificate(economy, cert, Allocation(bundles=f_bundles))
    return cert


def find_fine_block(
    economy: Economy,
    allocation: Allocation,
    options: FineBlockOptions | None = None,
) -> FineBlockSearch:
    """Search for a fine-blocking coalition, event and improving assignment.

    Coalitions range over the deterministic candidate stream (plus seeded
    random fuzzy profiles while budget remains); events over atoms of the
    coalition's communication partition.  A clean pass over the deterministic
    candidates with no certificate reports none-found, which over-approximates
    fine-core membership (only full and private communication are searched);
    running out of budget first reports undecided.
    """
    opts = options or FineBlockOptions()
    if not allocation_feasible(economy, allocation.bundles):
        raise EconomyError("allocation is infeasible for this economy")
    modes = [FULL, PRIVATE] if opts.mode == BOTH else [opts.mode]
    f = allocation.bundles
    masses = economy.masses
    kinds = tuple(t.kind for t in economy.types)
    total_searched = 0
    for mode in modes:
        solves = 0
        # The deterministic candidates are the completeness basis: cutting
        # them short means the verdict cannot honestly be none-found.
        for lam in deterministic_coalitions(masses, kinds):
            support = tuple(int(i) for i in np.nonzero(lam > 0)[0])
            for event in _event_atoms(economy, support, mode):
                if solves >= opts.budget:
                    return FineBlockSearch(
                        status=UNDECIDED,
                        searched=total_searched + solves,
                        detail="budget exhausted before the deterministic candidates",
                    )
                solves += 1
                cert = _solve_fine_candidate(economy, lam, event, mode, f, opts)
                if cert is not None:
                    return FineBlockSearch(
                        status=FINE_BLOCKED,
                        certificate=cert,
                        searched=total_searched + solves,
                    )
        # Spend any leftover budget on seeded random fuzzy profiles.
        rng = np.random.default_rng(opts.seed)
        while solves < opts.budget:
            lam = np.zeros(len(masses))
            mask = rng.random(len(masses)) > 0.3
            if not np.any(mask):
                continue
            for i in range(len(masses)):
                if not mask[i]:
                    continue
                lam[i] = masses[i] if kinds[i] == ATOM else masses[i] * rng.uniform(0.1, 1.0)
            support = tuple(int(i) for i in np.nonzero(lam > 0)[0])
            for event in _event_atoms(economy, support, mode):
                if solves >= opts.budget:
                    break
                solves += 1
                cert = _solve_fine_candidate(economy, lam, event, mode, f, opts)
                if cert is not None:
                    return FineBlockSearch(
                        status=FINE_BLOCKED,
                        certificate=cert,
                        searched=total_searched + solves,
                    )
        total_searched += solves
    return FineBlockSearch(
        status=NO_FINE_BLOCK,
        searched=total_searched,
        detail=f"modes={'/'.join(modes)}; events restricted to communication atoms",
    )


def expost_to_fine_block(
    economy: Economy,
    allocation: Allocation,
    cert: BlockCertificate,
    options: FineBlockOptions | None = None,
) -> FineBlockCertificate:
    """Turn a state-wise blocking certificate into a fine-blocking one.

    Widens the coalition until every information structure in the economy has
    a participating carrier (fractional mass for atomless types, at most one
    whole atom when large agents are present) and re-solves the improvement
    program at the blocking state.  With full joint information the widened
    coalition's communication partition separates every state, so the event
    collapses to the blocking state and conditional expectations reduce to
    state utilities.
    """
    opts = options or FineBlockOptions()
    flags = assumption_flags(economy)
    if not flags["A5"]:
        raise EconomyError(
            "the construction requires full joint information (A5 fails)"
        )
    atoms = economy.atom_indices
    if atoms and not flags["A6"]:
        raise EconomyError("atoms with different characteristics are unsupported")
    s0 = economy.states.index(cert.state_label)
    se0 = StateEconomy.from_economy(economy, s0)
    f_state = allocation.bundles[:, s0, :]
    verify_certificate(se0, cert, f_state)

    base_lam = np.array(cert.coalition.participation)
    # Keep at most one atom: the one easiest to improve (lowest utility at
    # the blocking state), or the already participating one when unique.
    if atoms:
        atom_base = {
            i: economy.types[i].utility[s0].value(f_state[i]) for i in atoms
        }
        keep = min(atoms, key=lambda i: (atom_base[i], i))
        for i in atoms:
            base_lam[i] = economy.types[i].mass if i == keep else 0.0

    groups: dict = {}
    for i, t in enumerate(economy.types):
        groups.setdefault(t.info, []).append(i)

    fb_opts = FindBlockOptions(
        eps_block=opts.eps_block,
        budget=1,
        inner_iter=max(opts.inner_iter, 250),
        seed=opts.seed,
    )
    for eta in (0.1, 0.01, 0.001):
        lam = np.array(base_lam)
        for info, members in groups.items():
            if any(lam[i] > 0 for i in members):
                continue
            atomless = [i for i in members if economy.types[i].kind != ATOM]
            if atomless:
                j = atomless[0]
                lam[j] = eta * economy.types[j].mass
            else:
                # Only atoms carry this information; under A6 they are all
                # identical, so one of them suffices.
                j = min(members)
                lam[j] = economy.types[j].mass
        state_cert = _solve_coalition(se0, lam, f_state, fb_opts)
        if state_cert is None:
            continue
        support = state_cert.coalition.support
        comm = join_all(
            (economy.types[i].info for i in support), economy.states.n
        )
        event = tuple(sorted(comm.cell_of(s0)))
        if event != (s0,):
            # The widened coalition should separate every state under A5.
            continue
        witnesses = tuple(
            FineGainWitness(
                type_name=economy.types[i].name,
                state_labels=(cert.state_label,),
                weights=(1.0,),
                baseline=float(state_cert.baselines[k]),
            )
            for k, i in enumerate(support)
        )
        fine_cert = FineBlockCertificate(
            coalition=state_cert.coalition,
            mode=FULL,
            communication=comm,
            event_labels=(cert.state_label,),
            type_names=state_cert.type_names,
            bundles=state_cert.bundles[:, None, :],
            witnesses=witnesses,
            margin=state_cert.margin,
            eps_block=opts.eps_block,
        )
        verify_fine_certificate(economy, fine_cert, allocation)
        return fine_cert
    raise UndecidedError(
        "coalition widening found no improving assignment within budget"
    )


def verify_fine_core_candidate(
    economy: Economy,
    allocation: Allocation,
    options: FineBlockOptions | None = None,
) -> FineCoreReport:
    """Run the fine-blocking search and package the verdict with disclosures.

    A none-found verdict is explicitly an under-approximation of blocking
    power: only full and private communication systems are searched and events
    range over communication atoms, so it over-approximates fine-core
    membership and is never reported as membership.
    """
    opts = options or FineBlockOptions()
    modes = (FULL, PRIVATE) if opts.mode == BOTH else (opts.mode,)
    searches = []
    certificate = None
    for mode in modes:
        search = find_fine_block(
            economy,
            allocation,
            FineBlockOptions(
                mode=mode,
                eps_block=opts.eps_block,
                budget=opts.budget,
                inner_iter=opts.inner_iter,
                seed=opts.seed,
            ),
        )
        searches.append(search)
        if search.status == FINE_BLOCKED:
            certificate = search.certificate
            break
    if certificate is not None:
        verdict = FINE_BLOCKED
    elif any(s.status == UNDECIDED for s in searches):
        verdict = UNDECIDED
    else:
        verdict = NO_FINE_BLOCK
    notes = (
        "searched communication systems: "
        + ", ".join(modes)
        + " (intermediate systems not searched)",
        "events restricted to atoms of the communication partition",
        "a none-found verdict is not a fine-core membership proof",
    )
    return FineCoreReport(
        verdict=verdict,
        modes=modes,
        searches=tuple(searches),
        certificate=certificate,
        notes=notes,
    )
