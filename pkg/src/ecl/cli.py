"""Command-line front end.

Exit-code contract, stable across commands: 0 success or pass, 2 invalid
input, 3 check failed, 4 solver failure, 5 undecided.  All file emission is
deterministic (sorted keys, fixed decimal formatting, newline-terminated), so
identical inputs and seeds produce byte-identical outputs.  The environment
variable ECL_THREADS caps worker parallelism for per-state work.
"""

import json
import sys

import click
import numpy as np

from . import core, fine, io, ree
from .errors import EclError, EconomyError, SolverError
from .gen import generate_economy, two_type_demo_economy
from .model import assumption_flags, split_atoms, validate_economy
from .walras import walras_selection

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CHECK_FAILED = 3
EXIT_SOLVER = 4
EXIT_UNDECIDED = 5


def _fail_invalid(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_INVALID)


def _load_economy(path):
    try:
        return io.load_economy(path)
    except FileNotFoundError:
        _fail_invalid(f"cannot read {path}")
    except json.JSONDecodeError as exc:
        _fail_invalid(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    except EconomyError as exc:
        _fail_invalid(f"{path}: {exc}")


def _load_allocation(path, economy):
    try:
        return io.load_allocation(path, economy)
    except FileNotFoundError:
        _fail_invalid(f"cannot read {path}")
    except json.JSONDecodeError as exc:
        _fail_invalid(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    except EconomyError as exc:
        _fail_invalid(f"{path}: {exc}")


def _load_prices(path, economy):
    try:
        return io.load_prices(path, economy)
    except FileNotFoundError:
        _fail_invalid(f"cannot read {path}")
    except json.JSONDecodeError as exc:
        _fail_invalid(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    except EconomyError as exc:
        _fail_invalid(f"{path}: {exc}")


@click.group()
def main():
    """Equilibria, ex-post core and fine-core checks for finite economies."""


@main.command("validate")
@click.argument("economy_path", type=click.Path())
def cmd_validate(economy_path):
    """Validate an economy file and report which assumptions hold."""
    economy = _load_economy(economy_path)
    report = assumption_flags(economy)
    for key in ("A1", "A1'", "A2", "A3", "A4", "A4'", "A5", "A6"):
        if key in report.flags:
            click.echo(f"{key}: {'true' if report.flags[key] else 'false'}")
    for note in report.notes:
        click.echo(f"note: {note}")
    sys.exit(EXIT_OK)


@main.command("solve")
@click.argument("economy_path", type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="output path prefix")
@click.option("--tol", default=1e-10, show_default=True, help="residual tolerance")
def cmd_solve(economy_path, out, tol):
    """Solve every state and write <out>.prices.json and <out>.alloc.json."""
    economy = _load_economy(economy_path)
    try:
        prices, allocation = walras_selection(economy, tol=tol)
    except SolverError as exc:
        click.echo(f"solver failed in state {exc.state_label!r}: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    io.save_prices(f"{out}.prices.json", economy, prices)
    io.save_allocation(f"{out}.alloc.json", economy, allocation)
    click.echo(f"solved {economy.states.n} states")
    sys.exit(EXIT_OK)


@main.command("check-expost")
@click.argument("economy_path", type=click.Path())
@click.argument("allocation_path", type=click.Path())
@click.option("--budget", default=64, show_default=True, help="coalition search budget")
@click.option("--tol", default=core.DEFAULT_EPS_BLOCK, show_default=True,
              help="blocking margin threshold")
def cmd_check_expost(economy_path, allocation_path, budget, tol):
    """Decide ex-post core membership of an allocation."""
    economy = _load_economy(economy_path)
    allocation = _load_allocation(allocation_path, economy)
    opts = core.FindBlockOptions(eps_block=tol, budget=budget)
    report = core.expost_core_check(economy, allocation, opts)
    click.echo(io.canonical_dumps(io.expost_report_to_dict(report)), nl=False)
    if report.verdict == core.IN_CORE:
        sys.exit(EXIT_OK)
    if report.verdict == core.BLOCKED:
        sys.exit(EXIT_CHECK_FAILED)
    sys.exit(EXIT_UNDECIDED)


@main.command("check-ree")
@click.argument("economy_path", type=click.Path())
@click.argument("allocation_path", type=click.Path())
@click.argument("prices_path", type=click.Path())
@click.option("--mode", default="both", show_default=True,
              type=click.Choice(["bayes", "maximin", "both"]))
def cmd_check_ree(economy_path, allocation_path, prices_path, mode):
    """Verify an allocation/price pair against the equilibrium definitions."""
    economy = _load_economy(economy_path)
    allocation = _load_allocation(allocation_path, economy)
    prices = _load_prices(prices_path, economy)
    reports = []
    if mode in ("maximin", "both"):
        reports.append(ree.verify_maximin_ree(economy, allocation, prices))
    if mode in ("bayes", "both"):
        reports.append(ree.verify_bayes_ree(economy, allocation, prices))
    payload = [io.ree_report_to_dict(r) for r in reports]
    click.echo(io.canonical_dumps(payload), nl=False)
    sys.exit(EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED)


@main.command("check-fine")
@click.argument("economy_path", type=click.Path())
@click.argument("allocation_path", type=click.Path())
@click.option("--comm", default="full", show_default=True,
              type=click.Choice(["full", "private", "both"]))
@click.option("--budget", default=256, show_default=True, help="search budget")
def cmd_check_fine(economy_path, allocation_path, comm, budget):
    """Search for fine-blocking coalitions under the chosen communication."""
    economy = _load_economy(economy_path)
    allocation = _load_allocation(allocation_path, economy)
    opts = fine.FineBlockOptions(mode=comm, budget=budget)
    report = fine.verify_fine_core_candidate(economy, allocation, opts)
    click.echo(io.canonical_dumps(io.fine_report_to_dict(economy, report)), nl=False)
    if report.verdict == fine.NO_FINE_BLOCK:
        click.echo(
            "disclosure: no-fine-block-found is an under-approximation of "
            "blocking power, not a fine-core membership proof"
        )
        sys.exit(EXIT_OK)
    if report.verdict == fine.FINE_BLOCKED:
        sys.exit(EXIT_CHECK_FAILED)
    sys.exit(EXIT_UNDECIDED)


@main.command("demo-twotype")
@click.option("--states", default=4, show_default=True, help="number of states")
def cmd_demo_twotype(states):
    """Solve the two-type benchmark economy and check it end to end."""
    economy = two_type_demo_economy(states)
    try:
        allocation, prices, maximin_report, bayes_report = ree.construct_ree(economy)
    except SolverError as exc:
        click.echo(f"solver failed: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    expected_price = np.array([0.5, 0.5])
    expected_bundles = {"A": np.array([1.5, 1.5]), "B": np.array([2.5, 2.5])}
    worst = 0.0
    for s in range(economy.states.n):
        worst = max(worst, float(np.max(np.abs(prices.prices[s] - expected_price))))
        for i, t in enumerate(economy.types):
            worst = max(
                worst,
                float(
                    np.max(np.abs(allocation.bundles[i, s] - expected_bundles[t.name]))
                ),
            )
    click.echo(f"states: {states}")
    click.echo("expected price per state: (0.5, 0.5)")
    click.echo(f"computed price (state 0): ({prices.prices[0][0]:.10f}, {prices.prices[0][1]:.10f})")
    click.echo("expected bundles: A=(1.5, 1.5)  B=(2.5, 2.5)")
    click.echo(
        f"computed bundles (state 0): A=({allocation.bundles[0,0,0]:.10f}, "
        f"{allocation.bundles[0,0,1]:.10f})  B=({allocation.bundles[1,0,0]:.10f}, "
        f"{allocation.bundles[1,0,1]:.10f})"
    )
    click.echo(f"max deviation from benchmark: {worst:.3e}")
    core_report = core.expost_core_check(economy, allocation)
    click.echo(f"maximin verification: {'pass' if maximin_report.passed else 'fail'}")
    click.echo(f"bayes verification:   {'pass' if bayes_report.passed else 'fail'}")
    click.echo(f"ex-post core check:   {core_report.verdict}")
    ok = (
        worst <= 1e-8
        and maximin_report.passed
        and bayes_report.passed
        and core_report.verdict == core.IN_CORE
    )
    sys.exit(EXIT_OK if ok else EXIT_CHECK_FAILED)


@main.command("gen")
@click.option("--types", default=3, show_default=True, help="atomless type count")
@click.option("--goods", default=2, show_default=True)
@click.option("--states", default=4, show_default=True)
@click.option("--atoms", default=0, show_default=True, help="identical atom count")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--out", default=None, type=click.Path(), help="output path (default stdout)")
def cmd_gen(types, goods, states, atoms, seed, out):
    """Generate a seeded random conforming economy file."""
    economy = generate_economy(
        n_types=types, goods=goods, states=states, atoms=atoms, seed=seed
    )
    text = io.canonical_dumps(io.economy_to_dict(economy))
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    sys.exit(EXIT_OK)


@main.command("split-atoms")
@click.argument("economy_path", type=click.Path())
@click.option("--out", required=True, type=click.Path())
def cmd_split_atoms(economy_path, out):
    """Write the associated atomless economy (atoms re-emitted as atomless)."""
    economy = _load_economy(economy_path)
    io.save_economy(out, split_atoms(economy))
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
