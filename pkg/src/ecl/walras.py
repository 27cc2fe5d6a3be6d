"""Per-state complete-information economies: demand, excess demand, equilibrium.

Each state of an economy induces a complete-information exchange economy.
Demand has closed forms for both utility families, excess demand satisfies
Walras' law identically, and equilibria are found by bisection (two goods) or
damped price adjustment with a Newton polish (three or more goods).  The
solver is deterministic for fixed inputs and options: it always starts from
the uniform price and returns the first equilibrium found, which is all the
state-wise selection needs (other equilibria may exist).
"""

from dataclasses import dataclass

import numpy as np

from .errors import EconomyError, SolverError
from .model import (
    ATOM,
    ATOMLESS,
    Allocation,
    CES,
    Economy,
    PriceSystem,
    UtilitySpec,
    _frozen_array,
)
from .util import parallel_map

#: Default max-norm residual for a solved equilibrium.
DEFAULT_TOL = 1e-10

DEFAULT_MAX_ITER = 10_000

#: Price floor used by the damped adjustment iteration.
PRICE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class StateEconomy:
    """One state's complete-information economy."""

    goods: int
    masses: np.ndarray
    kinds: tuple[str, ...]
    utilities: tuple[UtilitySpec, ...]
    endowments: np.ndarray  # types x goods
    names: tuple[str, ...]
    state_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "masses", _frozen_array(self.masses))
        object.__setattr__(self, "endowments", _frozen_array(self.endowments))
        n = self.masses.shape[0]
        if self.endowments.shape != (n, self.goods):
            raise EconomyError("endowments must be types x goods")
        if len(self.utilities) != n or len(self.kinds) != n or len(self.names) != n:
            raise EconomyError("per-type fields must have equal length")
        if np.any(self.masses <= 0):
            raise EconomyError("masses must be positive")
        agg = self.masses @ self.endowments
        if np.any(agg <= 0):
            raise EconomyError("aggregate endowment must be strictly positive")

    @classmethod
    def from_economy(cls, economy: Economy, state: int) -> "StateEconomy":
        return cls(
            goods=economy.goods,
            masses=economy.masses,
            kinds=tuple(t.kind for t in economy.types),
            utilities=tuple(t.utility[state] for t in economy.types),
            endowments=np.stack([t.endowment[state] for t in economy.types]),
            names=tuple(t.name for t in economy.types),
            state_label=economy.states.labels[state],
        )

    @property
    def n_types(self) -> int:
        return self.masses.shape[0]

    @property
    def aggregate(self) -> np.ndarray:
        return self.masses @ self.endowments

    def restrict(self, participation: np.ndarray) -> "StateEconomy":
        """Sub-economy of participating types with their participation as mass."""
        idx = [i for i in range(self.n_types) if participation[i] > 0]
        return StateEconomy(
            goods=self.goods,
            masses=np.asarray(participation, dtype=float)[idx],
            kinds=tuple(self.kinds[i] for i in idx),
            utilities=tuple(self.utilities[i] for i in idx),
            endowments=self.endowments[idx],
            names=tuple(self.names[i] for i in idx),
            state_label=self.state_label,
        )


@dataclass(frozen=True, eq=False)
class WalrasResult:
    price: np.ndarray
    bundles: np.ndarray  # types x goods
    residual: float
    iterations: int


def demand(utility: UtilitySpec, price, wealth: float) -> np.ndarray:
    """Utility-maximizing bundle on the budget set at a strictly positive price.

    Closed forms: CES allocates wealth over goods in proportion to
    ``(p_k / a_k)**(1/(rho-1))``; cobb_douglas spends the share ``alpha_k`` of
    wealth on good k.  Zero wealth returns the zero bundle (the budget set is
    {0} for strictly positive prices); the budget binds exactly otherwise.
    """
    p = np.asarray(price, dtype=float)
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise EconomyError("demand requires a strictly positive price")
    if wealth < 0:
        raise EconomyError("wealth must be nonnegative")
    if wealth == 0:
        return np.zeros_like(p)
    if utility.family == CES:
        # Work with s scaled by its max to stay clear of overflow for
        # extreme rho and tiny prices; demand is invariant to that scaling.
        log_s = np.log(p / utility.weights) / (utility.rho - 1.0)
        s = np.exp(log_s - np.max(log_s))
        return wealth * s / float(p @ s)
    return utility.weights * wealth / p


def excess_demand(se: StateEconomy, price) -> np.ndarray:
    """Mass-weighted demand minus aggregate endowment at endowment wealth."""
    p = np.asarray(price, dtype=float)
    total = np.zeros(se.goods)
    for i in range(se.n_types):
        w = float(p @ se.endowments[i])
        total += se.masses[i] * demand(se.utilities[i], p, w)
    return total - se.aggregate


def _residual(se: StateEconomy, p: np.ndarray) -> float:
    return float(np.max(np.abs(excess_demand(se, p))))


def _solve_two_goods(se: StateEconomy, tol: float, max_iter: int):
    """Bisection on the first good's price against the sign of its excess demand."""

    def z1(p1: float) -> float:
        return float(excess_demand(se, np.array([p1, 1.0 - p1]))[0])

    lo, hi = 1e-9, 1.0 - 1e-9
    f_lo, f_hi = z1(lo), z1(hi)
    used = 2
    while f_lo < 0 and lo > 1e-13:
        lo /= 10.0
        f_lo = z1(lo)
        used += 1
    while f_hi > 0 and 1.0 - hi > 1e-13:
        hi = 1.0 - (1.0 - hi) / 10.0
        f_hi = z1(hi)
        used += 1
    if f_lo == 0.0:
        return np.array([lo, 1.0 - lo]), used
    if f_hi == 0.0:
        return np.array([hi, 1.0 - hi]), used
    if f_lo < 0 or f_hi > 0:
        raise SolverError(
            "could not bracket the market-clearing price",
            state_label=se.state_label,
            residual=min(abs(f_lo), abs(f_hi)),
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = z1(mid)
        used += 1
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * mid:
            break
    p1 = 0.5 * (lo + hi)
    # A couple of guarded secant steps to polish the bracket midpoint.
    a, b = lo, hi
    fa = z1(a)
    for _ in range(8):
        fb = z1(b)
        used += 2
        if fb == fa:
            break
        c = b - fb * (b - a) / (fb - fa)
        if not (0 < c < 1):
            break
        a, fa, b = b, fb, c
        p1 = c
        if abs(z1(p1)) <= 0.1 * tol:
            break
    return np.array([p1, 1.0 - p1]), used


def _solve_many_goods(se: StateEconomy, tol: float, max_iter: int):
    """Damped price adjustment on the simplex, then Newton on log price ratios."""
    ell = se.goods
    p = np.full(ell, 1.0 / ell)
    res = _residual(se, p)
    gamma = 0.1
    iters = 0
    polish_at = max(tol, 1e-4)
    while res > polish_at and iters < max_iter:
        z = excess_demand(se, p)
        cand = np.maximum(p + gamma * z, PRICE_FLOOR)
        cand = cand / np.sum(cand)
        cand_res = _residual(se, cand)
        iters += 1
        if cand_res < res:
            p, res = cand, cand_res
            gamma = min(gamma * 1.25, 10.0)
        else:
            gamma *= 0.5
            if gamma < 1e-14:
                break

    # Newton polish: parametrize p by log ratios against the last good and
    # drive the first ell-1 excess demands to zero (Walras' law covers the rest).
    def price_of(y: np.ndarray) -> np.ndarray:
        e = np.exp(np.concatenate([y, [0.0]]))
        return e / np.sum(e)

    y = np.log(p[:-1] / p[-1])
    for _ in range(60):
        if res <= tol or iters >= max_iter:
            break
        z = excess_demand(se, p)[:-1]
        jac = np.empty((ell - 1, ell - 1))
        h = 1e-7
        for k in range(ell - 1):
            yk = y.copy()
            yk[k] += h
            jac[:, k] = (excess_demand(se, price_of(yk))[:-1] - z) / h
            iters += 1
        try:
            step = np.linalg.solve(jac, -z)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        improved = False
        for _ in range(30):
            y_new = y + scale * step
            p_new = price_of(y_new)
            res_new = _residual(se, p_new)
            iters += 1
            if res_new < res:
                y, p, res = y_new, p_new, res_new
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    return p, iters, res


def solve_walras(
    se: StateEconomy, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> WalrasResult:
    """Find a market-clearing price and the per-type demand bundles.

    Raises :class:`SolverError` (carrying the best residual and the state
    label) if the residual target is not met within the iteration budget.
    """
    if se.goods == 2:
        p, iters = _solve_two_goods(se, tol, max_iter)
    else:
        p, iters, _ = _solve_many_goods(se, tol, max_iter)
    res = _residual(se, p)
    if res > tol or not np.all(p > 0):
        raise SolverError(
            f"no equilibrium found within tolerance (best residual {res:.3e})",
            state_label=se.state_label,
            residual=res,
        )
    bundles = np.stack(
        [
            demand(se.utilities[i], p, float(p @ se.endowments[i]))
            for i in range(se.n_types)
        ]
    )
    return WalrasResult(price=p, bundles=bundles, residual=res, iterations=iters)


def is_walras_eq(se: StateEconomy, price, bundles, tol: float = 1e-9) -> bool:
    """Check the three equilibrium conditions at the given tolerance.

    (a) markets clear, (b) every bundle exhausts its budget at endowment
    wealth, (c) every bundle attains the closed-form demand.
    """
    p = np.asarray(price, dtype=float)
    b = np.asarray(bundles, dtype=float)
    if np.any(p <= 0) or abs(float(np.sum(p)) - 1.0) > 1e-9:
        return False
    clearing = se.masses @ b - se.aggregate
    if np.max(np.abs(clearing)) > tol * max(1.0, float(np.max(se.aggregate))):
        return False
    for i in range(se.n_types):
        w = float(p @ se.endowments[i])
        if abs(float(p @ b[i]) - w) > tol * max(1.0, w):
            return False
        d = demand(se.utilities[i], p, w)
        if np.max(np.abs(b[i] - d)) > tol * max(1.0, float(np.max(np.abs(d)))):
            return False
    return True


def walras_selection(
    economy: Economy, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> tuple[PriceSystem, Allocation]:
    """Solve every state independently and assemble the per-state results.

    At finite scale this is the whole content of selecting measurably from the
    equilibrium correspondence.  Solver failures propagate with the offending
    state labeled.
    """
    results = parallel_map(
        lambda s: solve_walras(StateEconomy.from_economy(economy, s), tol, max_iter),
        range(economy.states.n),
    )
    prices = np.stack([r.price for r in results])
    bundles = np.stack([r.bundles for r in results], axis=1)  # types x states x goods
    return PriceSystem(prices=prices), Allocation(bundles=bundles)
