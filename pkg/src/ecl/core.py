"""Blocking searches and ex-post core membership.

A state allocation is blocked when some fuzzy coalition can redistribute its
own endowment so that every participant gains strictly.  The search runs in
two phases: a cheap competitive-support test (supported allocations are
unblockable in convex type economies), then a budgeted improvement search over
coalition candidates.  "Undecided" is a first-class outcome: the improvement
search is heuristic, and a silent none-found would corrupt everything built on
top of it.  An exhaustive grid oracle provides ground truth on tiny instances.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EconomyError, InstanceTooLargeError, StaleCertificateError
from .improve import GainTerm, competitive_start, solve_improvement
from .model import ATOM, Allocation, Economy, FuzzyCoalition, allocation_feasible
from .util import parallel_map, worker_count
from .walras import StateEconomy, demand

#: Margin that makes "strictly better" computable.
DEFAULT_EPS_BLOCK = 1e-6

#: Componentwise tolerance for coalition feasibility of certificates.
CERT_FEAS_TOL = 1e-9

#: Bundle distance below which an allocation counts as competitively supported.
SUPPORT_TOL = 1e-7

BLOCKED = "blocked"
NONE_FOUND = "none_found"
UNDECIDED = "undecided"

IN_CORE = "in_core"


@dataclass(frozen=True, eq=False)
class BlockCertificate:
    """A verified witness that a coalition blocks an allocation in one state.

    Carries full numeric witness data so it can be re-verified externally:
    the participation profile, the improving bundles, the baseline utilities
    of the blocked allocation, and the achieved margin.
    """

    state_label: str
    coalition: FuzzyCoalition
    type_names: tuple[str, ...]  # participating types, in type order
    bundles: np.ndarray  # participants x goods
    baselines: np.ndarray  # utility of the blocked allocation, per participant
    margin: float
    eps_block: float

    def __post_init__(self):
        b = np.asarray(self.bundles, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "bundles", b)
        base = np.asarray(self.baselines, dtype=float)
        base.setflags(write=False)
        object.__setattr__(self, "baselines", base)


@dataclass(frozen=True)
class FindBlockOptions:
    eps_block: float = DEFAULT_EPS_BLOCK
    support_tol: float = SUPPORT_TOL
    budget: int = 64
    inner_iter: int = 150
    seed: int = 0
    good_enough_factor: float = 1e3  # stop the inner ascent at this multiple

    @property
    def good_enough(self) -> float:
        return max(self.eps_block * self.good_enough_factor, 1e-3)


@dataclass(frozen=True)
class BlockSearch:
    """Outcome of a blocking search for one state."""

    status: str  # blocked | none_found | undecided
    certificate: BlockCertificate | None = None
    support_price: np.ndarray | None = None
    coalitions_tried: int = 0
    detail: str = ""


def walras_support_price(se: StateEconomy, bundles, tol: float = SUPPORT_TOL):
    """Supporting price if the bundles are competitive from endowment wealth.

    Takes the normalized utility gradient at an interior bundle as the price
    candidate and checks that every type sits at its demand.  Returns the
    price, or None when no support exists at this tolerance.
    """
    b = np.asarray(bundles, dtype=float)
    price = None
    for i in range(se.n_types):
        if np.all(b[i] > 1e-12):
            g = se.utilities[i].gradient(b[i])
            if np.all(np.isfinite(g)) and np.all(g > 0):
                price = g / float(np.sum(g))
                break
    if price is None:
        return None
    for i in range(se.n_types):
        w = float(price @ se.endowments[i])
        d = demand(se.utilities[i], price, w)
        if np.max(np.abs(b[i] - d)) > tol * max(1.0, float(np.max(np.abs(d)))):
            return None
    return price


def verify_certificate(se: StateEconomy, cert: BlockCertificate, f_bundles=None):
    """Independently re-verify a certificate; raises StaleCertificateError.

    Checks coalition feasibility componentwise, strict improvement over the
    stored baselines at the stored margin, and (when the blocked allocation is
    supplied) that the stored baselines match it.
    """
    lam = cert.coalition.participation
    if lam.shape != (se.n_types,):
        raise StaleCertificateError("certificate does not match the type list")
    support = cert.coalition.support
    names = tuple(se.names[i] for i in support)
    if names != cert.type_names:
        raise StaleCertificateError("participant names do not match the economy")
    for i in support:
        if se.kinds[i] == ATOM and lam[i] != se.masses[i]:
            raise StaleCertificateError("atom participation must equal its mass")
        if lam[i] > se.masses[i] * (1 + 1e-12):
            raise StaleCertificateError("participation exceeds type mass")
    lam_s = lam[list(support)]
    net = np.einsum("i,ik->k", lam_s, cert.bundles - se.endowments[list(support)])
    scale = max(1.0, float(np.max(np.abs(se.aggregate))))
    if np.max(np.abs(net)) > CERT_FEAS_TOL * scale:
        raise StaleCertificateError(
            f"coalition redistribution does not balance (error {np.max(np.abs(net)):.2e})"
        )
    if cert.margin < cert.eps_block:
        raise StaleCertificateError("certificate margin below the blocking threshold")
    for k, i in enumerate(support):
        gain = se.utilities[i].value(cert.bundles[k]) - cert.baselines[k]
        if gain < cert.margin - 1e-12:
            raise StaleCertificateError(
                f"participant {se.names[i]!r} does not achieve the stated margin"
            )
        if f_bundles is not None:
            actual = se.utilities[i].value(np.asarray(f_bundles)[i])
            if abs(actual - cert.baselines[k]) > 1e-9 * max(1.0, abs(actual)):
                raise StaleCertificateError(
                    f"baseline utility of {se.names[i]!r} does not match the allocation"
                )


def _margin_upper_bound(se, support, lam, baselines):
    lam_s = lam[list(support)]
    resources = np.einsum("i,ik->k", lam_s, se.endowments[list(support)])
    ub = np.inf
    for k, i in enumerate(support):
        ub = min(ub, se.utilities[i].value(resources / lam_s[k]) - baselines[k])
    return ub


def deterministic_coalitions(masses, kinds) -> list[np.ndarray]:
    """The finite deterministic portion of the coalition candidate stream.

    All nonempty type subsets at full participation (largest first), then the
    same subsets with atomless participation scaled to one half and one
    quarter; atoms always participate fully or not at all.
    """
    masses = np.asarray(masses, dtype=float)
    n = masses.shape[0]
    subsets = [
        mask
        for size in range(n, 0, -1)
        for mask in itertools.combinations(range(n), size)
    ]
    out = []
    for frac in (1.0, 0.5, 0.25):
        for mask in subsets:
            lam = np.zeros(n)
            for i in mask:
                lam[i] = masses[i] if kinds[i] == ATOM else frac * masses[i]
            out.append(lam)
    return out


def coalition_candidates(masses, kinds, budget: int, seed: int):
    """Deterministic stream of participation vectors, most promising first.

    After the deterministic portion, seeded random fuzzy profiles fill any
    remaining budget.
    """
    masses = np.asarray(masses, dtype=float)
    n = masses.shape[0]
    emitted = 0
    for lam in deterministic_coalitions(masses, kinds):
        yield lam
        emitted += 1
        if emitted >= budget:
            return
    rng = np.random.default_rng(seed)
    while emitted < budget:
        lam = np.zeros(n)
        mask = rng.random(n) > 0.3
        if not np.any(mask):
            continue
        for i in range(n):
            if not mask[i]:
                continue
            if kinds[i] == ATOM:
                lam[i] = masses[i]
            else:
                lam[i] = masses[i] * rng.uniform(0.1, 1.0)
        yield lam
        emitted += 1


def _solve_coalition(se, lam, f_bundles, opts):
    """Run the improvement program for one participation profile."""
    support = tuple(int(i) for i in np.nonzero(lam > 0)[0])
    lam_s = lam[list(support)]
    baselines = np.array(
        [se.utilities[i].value(np.asarray(f_bundles)[i]) for i in support]
    )
    if _margin_upper_bound(se, support, lam, baselines) < opts.eps_block:
        return None
    if len(support) == 1:
        # A lone type can only consume its endowment.
        i = support[0]
        margin = se.utilities[i].value(se.endowments[i]) - baselines[0]
        if margin < opts.eps_block:
            return None
        bundles = se.endowments[[i]].copy()
    else:
        utilities = [[se.utilities[i]] for i in support]
        endow = se.endowments[list(support)][:, None, :]
        resources = np.einsum("i,ik->k", lam_s, se.endowments[list(support)])[None, :]
        starts = [endow]
        comp = competitive_start(lam_s, utilities, endow)
        if comp is not None:
            starts.append(comp)
        sol = solve_improvement(
            lam_s,
            utilities,
            resources,
            [
                GainTerm(participant=k, weights=np.array([1.0]), baseline=baselines[k])
                for k in range(len(support))
            ],
            max_iter=opts.inner_iter,
            good_enough=opts.good_enough,
            extra_starts=starts,
        )
        if sol.margin < opts.eps_block:
            return None
        bundles = sol.bundles[:, 0, :]
        margin = float(np.min([
            se.utilities[i].value(bundles[k]) - baselines[k]
            for k, i in enumerate(support)
        ]))
        if margin < opts.eps_block:
            return None
    cert = BlockCertificate(
        state_label=se.state_label,
        coalition=FuzzyCoalition(participation=lam),
        type_names=tuple(se.names[i] for i in support),
        bundles=bundles,
        baselines=baselines,
        margin=margin,
        eps_block=opts.eps_block,
    )
    verify_certificate(se, cert, f_bundles)
    return cert


def find_block(
    se: StateEconomy, bundles, options: FindBlockOptions | None = None
) -> BlockSearch:
    """Search for a coalition that blocks the given state bundles.

    Runs the competitive-support test first (success means no fuzzy coalition
    can block), then the budgeted improvement search.  Every certificate is
    re-verified before being returned.  When the budget runs out with neither
    support nor certificate the result is explicitly undecided.
    """
    opts = options or FindBlockOptions()
    b = np.asarray(bundles, dtype=float)
    clearing = se.masses @ b - se.aggregate
    if np.max(np.abs(clearing)) > 1e-7 * max(1.0, float(np.max(se.aggregate))):
        raise EconomyError("state bundles are not feasible for this economy")
    price = walras_support_price(se, b, opts.support_tol)
    if price is not None:
        return BlockSearch(
            status=NONE_FOUND,
            support_price=price,
            detail="competitively supported at endowment wealth",
        )
    tried = 0
    for lam in coalition_candidates(se.masses, se.kinds, opts.budget, opts.seed):
        tried += 1
        cert = _solve_coalition(se, lam, b, opts)
        if cert is not None:
            return BlockSearch(status=BLOCKED, certificate=cert, coalitions_tried=tried)
    return BlockSearch(
        status=UNDECIDED,
        coalitions_tried=tried,
        detail=f"no support and no certificate within budget ({tried} coalitions)",
    )


# ---------------------------------------------------------------------------
# exhaustive grid oracle
# ---------------------------------------------------------------------------


def _batch_value(u, x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, 0.0)
    if u.family == "ces":
        return (x**u.rho) @ u.weights
    return np.prod(x**u.weights, axis=-1)


MAX_ORACLE_POINTS = 40_000_000


def blocking_oracle_grid(
    se: StateEconomy,
    bundles,
    grid_step: float = 0.05,
    eps_block: float = DEFAULT_EPS_BLOCK,
) -> BlockSearch:
    """Exhaustively enumerate coalitions and redistributions on a grid.

    Ground truth for small instances: participation fractions and resource
    shares both range over multiples of ``grid_step``, so halving the step
    refines the grid in place and can only find more.  Limited to three types,
    three goods and steps of at least 0.02.
    """
    if se.n_types > 3 or se.goods > 3:
        raise InstanceTooLargeError("oracle supports at most 3 types and 3 goods")
    if grid_step < 0.02:
        raise InstanceTooLargeError("oracle grid step must be at least 0.02")
    f = np.asarray(bundles, dtype=float)
    levels = round(1.0 / grid_step)
    fracs = np.linspace(0.0, 1.0, levels + 1)
    lam_grids = [
        np.array([0.0, se.masses[i]])
        if se.kinds[i] == ATOM
        else fracs * se.masses[i]
        for i in range(se.n_types)
    ]
    pair_shares = np.array(
        [(a, b) for a in fracs for b in fracs if a + b <= 1.0 + 1e-12]
    )
    # Upfront size accounting keeps the enumeration honest.
    n_coal = int(np.prod([len(g) for g in lam_grids]))
    per_coal = max(
        (levels + 1) ** se.goods, len(pair_shares) ** se.goods if se.n_types == 3 else 0
    )
    if n_coal * per_coal > MAX_ORACLE_POINTS:
        raise InstanceTooLargeError(
            f"oracle grid would need {n_coal * per_coal} evaluations"
        )

    best = None  # (margin, lam, support, bundles)
    baseline_all = np.array(
        [se.utilities[i].value(f[i]) for i in range(se.n_types)]
    )
    for lam_tuple in itertools.product(*lam_grids):
        lam = np.array(lam_tuple)
        support = tuple(int(i) for i in np.nonzero(lam > 0)[0])
        if not support:
            continue
        lam_s = lam[list(support)]
        resources = np.einsum("i,ik->k", lam_s, se.endowments[list(support)])
        k = len(support)
        if k == 1:
            i = support[0]
            margin = se.utilities[i].value(se.endowments[i]) - baseline_all[i]
            cand_bundles = se.endowments[[i]]
        else:
            if k == 2:
                mesh = np.meshgrid(*([fracs] * se.goods), indexing="ij")
                shares = np.stack([m.ravel() for m in mesh], axis=1)  # P x goods
                h1 = shares * resources
                g1 = h1 / lam_s[0]
                g2 = (resources - h1) / lam_s[1]
                gains = np.minimum(
                    _batch_value(se.utilities[support[0]], g1)
                    - baseline_all[support[0]],
                    _batch_value(se.utilities[support[1]], g2)
                    - baseline_all[support[1]],
                )
                pt = int(np.argmax(gains))
                margin = float(gains[pt])
                cand_bundles = np.stack([g1[pt], g2[pt]])
            else:
                idx = np.meshgrid(
                    *([np.arange(len(pair_shares))] * se.goods), indexing="ij"
                )
                flat = [ix.ravel() for ix in idx]
                s1 = np.stack(
                    [pair_shares[flat[g], 0] for g in range(se.goods)], axis=1
                )
                s2 = np.stack(
                    [pair_shares[flat[g], 1] for g in range(se.goods)], axis=1
                )
                h1 = s1 * resources
                h2 = s2 * resources
                g1 = h1 / lam_s[0]
                g2 = h2 / lam_s[1]
                g3 = (resources - h1 - h2) / lam_s[2]
                gains = np.minimum(
                    np.minimum(
                        _batch_value(se.utilities[support[0]], g1)
                        - baseline_all[support[0]],
                        _batch_value(se.utilities[support[1]], g2)
                        - baseline_all[support[1]],
                    ),
                    _batch_value(se.utilities[support[2]], g3)
                    - baseline_all[support[2]],
                )
                pt = int(np.argmax(gains))
                margin = float(gains[pt])
                cand_bundles = np.stack([g1[pt], g2[pt], g3[pt]])
        if best is None or margin > best[0]:
            best = (margin, lam, support, cand_bundles)
    margin, lam, support, cand_bundles = best
    if margin < eps_block:
        return BlockSearch(status=NONE_FOUND, detail="exhausted grid")
    cert = BlockCertificate(
        state_label=se.state_label,
        coalition=FuzzyCoalition(participation=lam),
        type_names=tuple(se.names[i] for i in support),
        bundles=cand_bundles,
        baselines=baseline_all[list(support)],
        margin=margin,
        eps_block=eps_block,
    )
    verify_certificate(se, cert, f)
    return BlockSearch(status=BLOCKED, certificate=cert)


# ---------------------------------------------------------------------------
# ex-post core
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExPostCoreReport:
    """State-wise blocking outcomes aggregated into an ex-post verdict."""

    verdict: str  # in_core | blocked | undecided
    state_outcomes: tuple[tuple[str, str], ...]  # (state label, status)
    certificate: BlockCertificate | None
    notes: tuple[str, ...] = ()


def expost_core_check(
    economy: Economy,
    allocation: Allocation,
    options: FindBlockOptions | None = None,
    method: str = "search",
) -> ExPostCoreReport:
    """Decide ex-post core membership via the state-wise characterization.

    An allocation is in the ex-post core iff no state admits a blocking
    coalition, so the check runs a blocking search in every state.  With
    ``method="oracle"`` the exhaustive grid oracle decides each state
    (tiny instances only).
    """
    if not allocation_feasible(economy, allocation.bundles):
        raise EconomyError("allocation is infeasible for this economy")
    opts = options or FindBlockOptions()

    def run_state(s: int) -> BlockSearch:
        se = StateEconomy.from_economy(economy, s)
        state_bundles = allocation.bundles[:, s, :]
        if method == "oracle":
            return blocking_oracle_grid(se, state_bundles, eps_block=opts.eps_block)
        return find_block(se, state_bundles, opts)

    n_states = economy.states.n
    outcomes: list[BlockSearch] = []
    if worker_count() > 1:
        outcomes = parallel_map(run_state, range(n_states))
    else:
        for s in range(n_states):
            out = run_state(s)
            outcomes.append(out)
            if out.status == BLOCKED:
                break
    state_outcomes = tuple(
        (economy.states.labels[s], outcomes[s].status) for s in range(len(outcomes))
    )
    notes = []
    if economy.atom_indices and method != "oracle":
        notes.append(
            "economy has atoms: unblocked verdicts rest on the improvement "
            "search budget, not on competitive-support completeness"
        )
    for out in outcomes:
        if out.status == BLOCKED:
            return ExPostCoreReport(
                verdict=BLOCKED,
                state_outcomes=state_outcomes,
                certificate=out.certificate,
                notes=tuple(notes),
            )
    if any(out.status == UNDECIDED for out in outcomes):
        return ExPostCoreReport(
            verdict=UNDECIDED,
            state_outcomes=state_outcomes,
            certificate=None,
            notes=tuple(notes),
        )
    return ExPostCoreReport(
        verdict=IN_CORE,
        state_outcomes=state_outcomes,
        certificate=None,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# block -> full assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentRow:
    name: str
    source_type: str
    mass: float
    bundles: np.ndarray  # states x goods


@dataclass(frozen=True)
class BlockAssignment:
    """The blocking move extended over all of T x Omega.

    Participants consume their improving bundles on the event where the
    coalition's endowment total matches the blocking state, and their
    endowments elsewhere; everyone else keeps endowments everywhere.  Types
    with partial participation split into an in-coalition and an
    out-of-coalition row.
    """

    event_labels: tuple[str, ...]
    rows: tuple[AssignmentRow, ...]


def expost_block_to_assignment(
    economy: Economy, cert: BlockCertificate
) -> BlockAssignment:
    """Materialize a blocking certificate as an assignment over types and states."""
    s0 = economy.states.index(cert.state_label)
    se0 = StateEconomy.from_economy(economy, s0)
    verify_certificate(se0, cert)
    lam = cert.coalition.participation
    support = cert.coalition.support
    lam_s = lam[list(support)]
    ref_total = np.einsum(
        "i,ik->k", lam_s, np.stack([economy.types[i].endowment[s0] for i in support])
    )
    event = []
    for s in range(economy.states.n):
        total = np.einsum(
            "i,ik->k",
            lam_s,
            np.stack([economy.types[i].endowment[s] for i in support]),
        )
        if np.max(np.abs(total - ref_total)) <= 1e-9 * np.max(
            np.maximum(1.0, np.abs(ref_total))
        ):
            event.append(s)
    rows = []
    for i, t in enumerate(economy.types):
        if lam[i] > 0:
            k = support.index(i)
            bundles = np.array(t.endowment)
            for s in event:
                bundles[s] = cert.bundles[k]
            rows.append(
                AssignmentRow(
                    name=f"{t.name}/in",
                    source_type=t.name,
                    mass=float(lam[i]),
                    bundles=bundles,
                )
            )
            rest = t.mass - float(lam[i])
            if rest > 1e-15:
                rows.append(
                    AssignmentRow(
                        name=f"{t.name}/out",
                        source_type=t.name,
                        mass=rest,
                        bundles=np.array(t.endowment),
                    )
                )
        else:
            rows.append(
                AssignmentRow(
                    name=t.name,
                    source_type=t.name,
                    mass=t.mass,
                    bundles=np.array(t.endowment),
                )
            )
    return BlockAssignment(
        event_labels=tuple(economy.states.labels[s] for s in event),
        rows=tuple(rows),
    )
