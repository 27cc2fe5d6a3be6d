"""Rational expectations machinery: interim budgets, maximin and Bayesian checks.

Given an allocation and a price system, every agent's interim information is
their own partition joined with the level sets of prices.  The maximin
verifier compares worst-case utilities over interim cells against the
worst-case of per-state indirect utilities (the two separate because the
interim budget constrains each state independently).  The Bayesian verifier
checks measurability, budgets, and per-cell conditional expected utility
maximality via a convex cell program.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EconomyError
from .improve import maximize_on_budget
from .model import Allocation, CES, Economy, PriceSystem, UtilitySpec
from .partitions import Partition, combine_info, cond_expect, is_measurable, sigma_of_price
from .walras import demand, walras_selection

#: Tolerance for utility-level comparisons in both verifiers.
REE_TOL = 1e-8

#: Slack for interim budget feasibility.
BUDGET_TOL = 1e-12

MAXIMIN = "maximin"
BAYES = "bayes"


@dataclass(frozen=True)
class ClauseCheck:
    type_name: str
    clause: str
    location: str  # state label, cell description, or ""
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ReeReport:
    """Clause-by-clause verification record for one REE notion."""

    mode: str
    passed: bool
    checks: tuple[ClauseCheck, ...]

    @property
    def failures(self) -> tuple[ClauseCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)


def budget_ok(
    economy: Economy, type_index: int, state: int, price, bundle, tol: float = BUDGET_TOL
) -> bool:
    """Interim budget feasibility: spending cannot exceed endowment value."""
    p = np.asarray(price, dtype=float)
    e = economy.types[type_index].endowment[state]
    return float(p @ np.asarray(bundle, dtype=float)) <= float(p @ e) + tol


def maximin_utility(
    economy: Economy, type_index: int, state: int, plan, combined_partition: Partition
) -> float:
    """Worst-case utility of a state-contingent plan over the interim cell."""
    t = economy.types[type_index]
    x = np.asarray(plan, dtype=float)
    cell = combined_partition.cell_of(state)
    return min(t.utility[s].value(x[s]) for s in sorted(cell))


def _interim_partition(economy: Economy, type_index: int, prices: PriceSystem) -> Partition:
    return combine_info(economy.types[type_index].info, sigma_of_price(prices))


def verify_maximin_ree(
    economy: Economy,
    allocation: Allocation,
    prices: PriceSystem,
    tol: float = REE_TOL,
) -> ReeReport:
    """Check the worst-case-utility equilibrium conditions clause by clause.

    Clause 1: every state's bundle is budget feasible at that state's price.
    Clause 2: at every state, the plan's worst-case utility over the interim
    cell matches the benchmark: the worst case over the cell of per-state
    indirect utilities (best budget-feasible utility state by state).
    """
    checks = []
    f = allocation.bundles
    for ti, t in enumerate(economy.types):
        g_t = _interim_partition(economy, ti, prices)
        for s in range(economy.states.n):
            ok = budget_ok(economy, ti, s, prices.prices[s], f[ti, s])
            checks.append(
                ClauseCheck(
                    type_name=t.name,
                    clause="budget",
                    location=economy.states.labels[s],
                    passed=ok,
                    detail="" if ok else "bundle exceeds endowment value",
                )
            )
        indirect = np.empty(economy.states.n)
        plan_u = np.empty(economy.states.n)
        for s in range(economy.states.n):
            p = prices.prices[s]
            w = float(p @ t.endowment[s])
            indirect[s] = t.utility[s].value(demand(t.utility[s], p, w))
            plan_u[s] = t.utility[s].value(f[ti, s])
        for s in range(economy.states.n):
            cell = sorted(g_t.cell_of(s))
            have = float(np.min(plan_u[cell]))
            benchmark = float(np.min(indirect[cell]))
            ok = have >= benchmark - tol
            checks.append(
                ClauseCheck(
                    type_name=t.name,
                    clause="maximin-optimal",
                    location=economy.states.labels[s],
                    passed=ok,
                    detail=""
                    if ok
                    else f"worst-case utility {have:.12g} below benchmark {benchmark:.12g}",
                )
            )
    return ReeReport(
        mode=MAXIMIN, passed=all(c.passed for c in checks), checks=tuple(checks)
    )


def _cell_optimum(
    specs: list[UtilitySpec], probs: np.ndarray, price: np.ndarray, wealth: float
):
    """Best conditional expected utility of a cell-constant budget-feasible bundle."""
    if wealth <= 0:
        x = np.zeros(price.shape[0])
        return x, float(sum(q * u.value(x) for q, u in zip(probs, specs)))
    first = specs[0]
    if all(first.same_as(u) for u in specs[1:]):
        x = demand(first, price, wealth)
        return x, first.value(x)
    if all(u.family == CES and u.rho == first.rho for u in specs):
        merged = UtilitySpec(
            family=CES,
            weights=sum(q * u.weights for q, u in zip(probs, specs)),
            rho=first.rho,
        )
        x = demand(merged, price, wealth)
        return x, merged.value(x)
    x, val, _ = maximize_on_budget(specs, probs, price, wealth)
    return x, val


def verify_bayes_ree(
    economy: Economy,
    allocation: Allocation,
    prices: PriceSystem,
    tol: float = REE_TOL,
) -> ReeReport:
    """Check the three Bayesian equilibrium clauses.

    (i) the plan is measurable with respect to interim information; (ii) it is
    budget feasible in every state; (iii) on every interim cell its conditional
    expected utility matches the optimum of the cell program: the best single
    bundle satisfying the budget at every state of the cell (interim-measurable
    plans are cell-constant, and prices are constant on cells by construction).
    """
    checks = []
    f = allocation.bundles
    for ti, t in enumerate(economy.types):
        g_t = _interim_partition(economy, ti, prices)
        measurable = is_measurable(f[ti], g_t)
        checks.append(
            ClauseCheck(
                type_name=t.name,
                clause="measurable",
                location="",
                passed=measurable,
                detail="" if measurable else "plan varies inside an interim cell",
            )
        )
        for s in range(economy.states.n):
            ok = budget_ok(economy, ti, s, prices.prices[s], f[ti, s])
            checks.append(
                ClauseCheck(
                    type_name=t.name,
                    clause="budget",
                    location=economy.states.labels[s],
                    passed=ok,
                    detail="" if ok else "bundle exceeds endowment value",
                )
            )
        for cell in g_t.cells:
            states = sorted(cell)
            labels = ",".join(economy.states.labels[s] for s in states)
            q = t.prior[states]
            q = q / np.sum(q)
            p_cell = prices.prices[states[0]]
            wealth = min(
                float(prices.prices[s] @ t.endowment[s]) for s in states
            )
            specs = [t.utility[s] for s in states]
            _, optimum = _cell_optimum(specs, q, p_cell, wealth)
            have = float(
                sum(qs * t.utility[s].value(f[ti, s]) for qs, s in zip(q, states))
            )
            ok = optimum <= have + tol
            checks.append(
                ClauseCheck(
                    type_name=t.name,
                    clause="conditional-optimal",
                    location=labels,
                    passed=ok,
                    detail=""
                    if ok
                    else f"cell optimum {optimum:.12g} exceeds plan value {have:.12g}",
                )
            )
    return ReeReport(
        mode=BAYES, passed=all(c.passed for c in checks), checks=tuple(checks)
    )


def construct_ree(
    economy: Economy, tol: float = 1e-10, verify_tol: float = REE_TOL
) -> tuple[Allocation, PriceSystem, ReeReport, ReeReport]:
    """Build the state-wise competitive selection and verify both REE notions.

    On economies whose per-type endowments and utilities are measurable with
    respect to that type's own information, both verifiers are expected to
    pass: that is the finite-scale content of the equivalence between the
    maximin and Bayesian notions.
    """
    prices, allocation = walras_selection(economy, tol=tol)
    maximin_report = verify_maximin_ree(economy, allocation, prices, verify_tol)
    bayes_report = verify_bayes_ree(economy, allocation, prices, verify_tol)
    return allocation, prices, maximin_report, bayes_report
