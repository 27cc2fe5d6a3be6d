"""Projected-ascent solvers for coalition improvement programs.

The blocking searches all reduce to the same max-min program: split the
coalition's per-state resources among participants to maximize the smallest
(possibly expectation-weighted) utility gain over a reference allocation.
Feasible points live on a product of scaled simplexes (one per state and
good), so projected subgradient ascent with an active-set averaged gradient is
a natural fit.  Soundness never rests on this solver: every candidate it
produces is re-verified against the certificate invariants by the caller.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import UtilitySpec
from .walras import StateEconomy, solve_walras
from .errors import EconomyError, SolverError


@dataclass(frozen=True)
class GainTerm:
    """One min-term: an expectation-weighted utility gain for a participant.

    ``weights`` is a probability vector over the event's states; ex-post
    blocking uses a single state with weight one.
    """

    participant: int
    weights: np.ndarray
    baseline: float
    label: str = ""


@dataclass(frozen=True)
class ImprovementSolution:
    margin: float
    bundles: np.ndarray  # participants x event-states x goods
    gains: np.ndarray  # per term
    iterations: int


def project_columns_simplex(v: np.ndarray, sums: np.ndarray) -> np.ndarray:
    """Project each column of ``v`` onto {x >= 0, sum(x) = s} for its target sum."""
    k, m = v.shape
    out = np.empty_like(v)
    for j in range(m):
        s = sums[j]
        if s <= 0:
            out[:, j] = 0.0
            continue
        u = np.sort(v[:, j])[::-1]
        css = np.cumsum(u) - s
        idx = np.arange(1, k + 1)
        cond = u - css / idx > 0
        rho = int(np.nonzero(cond)[0][-1])
        theta = css[rho] / (rho + 1.0)
        out[:, j] = np.maximum(v[:, j] - theta, 0.0)
    return out


def _term_gains(h, lambdas, utilities, terms):
    n_part, n_ev, _ = h.shape
    values = np.empty((n_part, n_ev))
    for i in range(n_part):
        gi = h[i] / lambdas[i]
        for j in range(n_ev):
            values[i, j] = utilities[i][j].value(gi[j])
    return np.array(
        [float(t.weights @ values[t.participant]) - t.baseline for t in terms]
    )


def solve_improvement(
    lambdas,
    utilities,
    resources,
    terms,
    max_iter: int = 300,
    good_enough: float | None = None,
    extra_starts=(),
) -> ImprovementSolution:
    """Maximize the smallest gain term over feasible resource splits.

    Args:
        lambdas: participation weights, one per participant (all positive).
        utilities: per-participant list of per-event-state utility specs.
        resources: event-states x goods array of coalition endowment totals.
        terms: the gain terms whose minimum is maximized.
        good_enough: stop early once the margin reaches this level.
        extra_starts: additional warm-start bundle arrays to consider.

    Returns the best margin found with the corresponding bundles; the caller
    re-verifies before using the result as a certificate.
    """
    lam = np.asarray(lambdas, dtype=float)
    res = np.asarray(resources, dtype=float)
    n_part = lam.shape[0]
    n_ev, goods = res.shape
    total = float(np.sum(lam))

    def pack(bundles):
        return np.einsum("i,ijk->ijk", lam, bundles)

    # Callers with per-participant endowments pass the competitive split
    # (see competitive_start) and the endowment split through extra_starts.
    starts = [pack(np.broadcast_to(res / total, (n_part, n_ev, goods)).copy())]
    for b in extra_starts:
        starts.append(pack(np.asarray(b, dtype=float)))

    best_h = None
    best_margin = -np.inf
    best_gains = None
    total_iters = 0

    flat_sums = res.reshape(-1)

    # Ascend from the most promising start first; early exit usually makes
    # the remaining starts unnecessary.
    prepared = []
    for h0 in starts:
        h = project_columns_simplex(
            h0.reshape(n_part, -1), flat_sums
        ).reshape(n_part, n_ev, goods)
        gains = _term_gains(h, lam, utilities, terms)
        prepared.append((float(np.min(gains)), h, gains))
    prepared.sort(key=lambda t: -t[0])

    for margin, h, gains in prepared:
        eta = 1.0
        stalls = 0
        it = 0
        while it < max_iter and stalls < 3:
            if good_enough is not None and margin >= good_enough:
                break
            # Averaged gradient over the active (near-minimal) terms.
            span = max(1e-9, 0.01 * (float(np.max(gains)) - margin + 1e-12))
            active = [t for t, g in zip(terms, gains) if g <= margin + span]
            grad = np.zeros_like(h)
            for t in active:
                i = t.participant
                gi = h[i] / lam[i]
                for j in range(n_ev):
                    if t.weights[j] == 0:
                        continue
                    gvec = utilities[i][j].gradient(gi[j])
                    gvec = np.where(np.isfinite(gvec), gvec, 1e6)
                    grad[i, j] += t.weights[j] * gvec / lam[i]
            grad /= len(active)
            gmax = float(np.max(np.abs(grad)))
            if gmax == 0:
                break
            scale = eta * float(np.max(res)) / gmax
            improved = False
            for _ in range(25):
                trial = project_columns_simplex(
                    (h + scale * grad).reshape(n_part, -1), flat_sums
                ).reshape(n_part, n_ev, goods)
                tg = _term_gains(trial, lam, utilities, terms)
                tm = float(np.min(tg))
                it += 1
                if tm > margin + 1e-14:
                    h, gains, margin = trial, tg, tm
                    eta = min(eta * 1.5, 16.0)
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                eta *= 0.25
                stalls += 1
        total_iters += it
        if margin > best_margin:
            best_margin = margin
            best_h = h
            best_gains = gains
        if good_enough is not None and best_margin >= good_enough:
            break

    bundles = best_h / lam[:, None, None]
    return ImprovementSolution(
        margin=best_margin,
        bundles=bundles,
        gains=best_gains,
        iterations=total_iters,
    )


def competitive_start(lambdas, utilities, endowments):
    """Per-state competitive redistribution of the coalition's endowment.

    Returns participants x event-states x goods demand bundles, or None when
    some state's sub-economy does not solve.  Used as a warm start: when a
    coalition blocks at all, its internal competitive allocation is usually a
    strong candidate.
    """
    lam = np.asarray(lambdas, dtype=float)
    endow = np.asarray(endowments, dtype=float)  # participants x states x goods
    n_part, n_ev, goods = endow.shape
    out = np.empty_like(endow)
    for j in range(n_ev):
        try:
            se = StateEconomy(
                goods=goods,
                masses=lam,
                kinds=("atomless",) * n_part,
                utilities=tuple(utilities[i][j] for i in range(n_part)),
                endowments=endow[:, j, :],
                names=tuple(str(i) for i in range(n_part)),
            )
            out[:, j, :] = solve_walras(se, tol=1e-8, max_iter=4000).bundles
        except (EconomyError, SolverError):
            # Coalitions whose endowment misses a good have no competitive
            # start; the other warm starts still apply.
            return None
    return out


def maximize_on_budget(
    utilities, probs, price, wealth: float, max_iter: int = 400
) -> tuple[np.ndarray, float, dict]:
    """Maximize a probability-weighted sum of utilities on one budget set.

    Solves max sum_j probs_j * U_j(x) over {x >= 0, <price, x> <= wealth} by
    projected gradient ascent in expenditure space (strict monotonicity makes
    the budget bind).  Returns (bundle, value, info) where info carries the
    multiplier check: at an interior optimum the weighted marginal utilities
    are proportional to prices on the support.
    """
    p = np.asarray(price, dtype=float)
    q = np.asarray(probs, dtype=float)
    goods = p.shape[0]
    if wealth <= 0:
        x = np.zeros(goods)
        val = float(sum(qj * u.value(x) for qj, u in zip(q, utilities)))
        return x, val, {"multiplier_dev": 0.0}

    def value(x):
        return float(sum(qj * u.value(x) for qj, u in zip(q, utilities)))

    def grad(x):
        g = np.zeros(goods)
        for qj, u in zip(q, utilities):
            gu = u.gradient(x)
            g += qj * np.where(np.isfinite(gu), gu, 1e8)
        return g

    # Expenditure coordinates y = p * x live on the simplex {y >= 0, sum = w}.
    y = np.full(goods, wealth / goods)
    x = y / p
    val = value(x)
    eta = 1.0
    stalls = 0
    it = 0
    while it < max_iter and stalls < 3:
        g = grad(x) / p
        gmax = float(np.max(np.abs(g)))
        if gmax == 0:
            break
        scale = eta * wealth / gmax
        improved = False
        for _ in range(25):
            trial = project_columns_simplex(
                (y + scale * g)[:, None], np.array([wealth])
            )[:, 0]
            tx = trial / p
            tv = value(tx)
            it += 1
            if tv > val + 1e-15:
                y, x, val = trial, tx, tv
                eta = min(eta * 1.5, 16.0)
                improved = True
                break
            scale *= 0.5
        if not improved:
            eta *= 0.25
            stalls += 1
    g = grad(x)
    support = x > 1e-12 * max(1.0, float(np.max(x)))
    ratios = g[support] / p[support]
    dev = float(np.max(ratios) - np.min(ratios)) / max(float(np.max(ratios)), 1e-300)
    return x, val, {"multiplier_dev": dev, "iterations": it}
