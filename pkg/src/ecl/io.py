"""File formats and canonical serialization.

Everything emitted to disk goes through :func:`canonical_dumps`: keys sorted,
floats in fixed 17-significant-digit decimal form, two-space indentation,
newline-terminated.  Identical values therefore serialize to identical bytes,
which is what makes command output reproducible.
"""

import json

import numpy as np

from .core import BlockCertificate, ExPostCoreReport
from .errors import EconomyError
from .fine import FineBlockCertificate, FineCoreReport, FineGainWitness
from .model import (
    Allocation,
    Economy,
    FuzzyCoalition,
    PriceSystem,
    make_allocation,
    validate_economy,
)
from .partitions import Partition
from .ree import ReeReport
from .util import format_float


def _emit(obj, indent: int, out: list):
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(repr(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(items):
            out.append(pad + "  ")
            _emit(item, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj.keys())
        for i, key in enumerate(keys):
            if not isinstance(key, str):
                raise EconomyError("serializable keys must be strings")
            out.append(pad + "  " + json.dumps(key) + ": ")
            _emit(obj[key], indent + 1, out)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    else:
        raise EconomyError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj) -> str:
    out: list = []
    _emit(obj, 0, out)
    out.append("\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# economies
# ---------------------------------------------------------------------------


def _utility_dict(u) -> dict:
    d = {"family": u.family, "weights": list(u.weights)}
    if u.rho is not None:
        d["rho"] = u.rho
    return d


def economy_to_dict(economy: Economy) -> dict:
    types = []
    for t in economy.types:
        first = t.utility[0]
        if all(first.same_as(u) for u in t.utility[1:]):
            utility = _utility_dict(first)
        else:
            utility = [_utility_dict(u) for u in t.utility]
        types.append(
            {
                "name": t.name,
                "mass": t.mass,
                "kind": t.kind,
                "utility": utility,
                "endowment": [list(row) for row in t.endowment],
                "partition": [
                    [economy.states.labels[s] for s in sorted(cell)]
                    for cell in t.info.cells
                ],
                "prior": list(t.prior),
            }
        )
    return {
        "states": {
            "labels": list(economy.states.labels),
            "prob": list(economy.states.prob),
        },
        "goods": economy.goods,
        "types": types,
    }


def economy_from_dict(raw: dict) -> Economy:
    return validate_economy(raw)


def load_economy(path) -> Economy:
    with open(path) as fh:
        return economy_from_dict(json.load(fh))


def save_economy(path, economy: Economy):
    with open(path, "w") as fh:
        fh.write(canonical_dumps(economy_to_dict(economy)))


# ---------------------------------------------------------------------------
# allocations and prices
# ---------------------------------------------------------------------------


def allocation_to_dict(economy: Economy, allocation: Allocation) -> dict:
    bundles = {}
    for i, t in enumerate(economy.types):
        bundles[t.name] = {
            economy.states.labels[s]: list(allocation.bundles[i, s])
            for s in range(economy.states.n)
        }
    return {"bundles": bundles}


def allocation_from_dict(economy: Economy, raw: dict) -> Allocation:
    if not isinstance(raw, dict) or set(raw) != {"bundles"}:
        raise EconomyError("allocation file must contain exactly a bundles object")
    by_type = raw["bundles"]
    if set(by_type) != {t.name for t in economy.types}:
        raise EconomyError("allocation type names do not match the economy")
    bundles = np.empty((economy.n_types, economy.states.n, economy.goods))
    for i, t in enumerate(economy.types):
        rows = by_type[t.name]
        if set(rows) != set(economy.states.labels):
            raise EconomyError(
                f"allocation for type {t.name!r} does not cover every state"
            )
        for label, vec in rows.items():
            s = economy.states.index(label)
            if len(vec) != economy.goods:
                raise EconomyError("bundle length does not match the goods count")
            bundles[i, s] = np.asarray(vec, dtype=float)
    return make_allocation(economy, bundles)


def load_allocation(path, economy: Economy) -> Allocation:
    with open(path) as fh:
        return allocation_from_dict(economy, json.load(fh))


def save_allocation(path, economy: Economy, allocation: Allocation):
    with open(path, "w") as fh:
        fh.write(canonical_dumps(allocation_to_dict(economy, allocation)))


def prices_to_dict(economy: Economy, prices: PriceSystem) -> dict:
    return {
        "prices": {
            economy.states.labels[s]: list(prices.prices[s])
            for s in range(economy.states.n)
        }
    }


def prices_from_dict(economy: Economy, raw: dict) -> PriceSystem:
    if not isinstance(raw, dict) or set(raw) != {"prices"}:
        raise EconomyError("price file must contain exactly a prices object")
    rows = raw["prices"]
    if set(rows) != set(economy.states.labels):
        raise EconomyError("price system does not cover every state")
    prices = np.empty((economy.states.n, economy.goods))
    for label, vec in rows.items():
        s = economy.states.index(label)
        if len(vec) != economy.goods:
            raise EconomyError("price vector length does not match the goods count")
        prices[s] = np.asarray(vec, dtype=float)
    return PriceSystem(prices=prices)


def load_prices(path, economy: Economy) -> PriceSystem:
    with open(path) as fh:
        return prices_from_dict(economy, json.load(fh))


def save_prices(path, economy: Economy, prices: PriceSystem):
    with open(path, "w") as fh:
        fh.write(canonical_dumps(prices_to_dict(economy, prices)))


# ---------------------------------------------------------------------------
# certificates and reports
# ---------------------------------------------------------------------------


def block_certificate_to_dict(cert: BlockCertificate) -> dict:
    return {
        "kind": "expost-block",
        "state": cert.state_label,
        "participation": {
            name: float(cert.coalition.participation[i])
            for name, i in zip(
                cert.type_names, cert.coalition.support
            )
        },
        "bundles": {
            name: list(cert.bundles[k]) for k, name in enumerate(cert.type_names)
        },
        "baselines": {
            name: float(cert.baselines[k]) for k, name in enumerate(cert.type_names)
        },
        "margin": cert.margin,
        "eps_block": cert.eps_block,
    }


def block_certificate_from_dict(economy: Economy, raw: dict) -> BlockCertificate:
    if raw.get("kind") != "expost-block":
        raise EconomyError("not an ex-post block certificate")
    participation = np.zeros(economy.n_types)
    for name, lam in raw["participation"].items():
        participation[economy.type_index(name)] = float(lam)
    support = tuple(int(i) for i in np.nonzero(participation > 0)[0])
    names = tuple(economy.types[i].name for i in support)
    bundles = np.stack([np.asarray(raw["bundles"][n], dtype=float) for n in names])
    baselines = np.array([float(raw["baselines"][n]) for n in names])
    return BlockCertificate(
        state_label=str(raw["state"]),
        coalition=FuzzyCoalition(participation=participation),
        type_names=names,
        bundles=bundles,
        baselines=baselines,
        margin=float(raw["margin"]),
        eps_block=float(raw["eps_block"]),
    )


def fine_certificate_to_dict(economy: Economy, cert: FineBlockCertificate) -> dict:
    return {
        "kind": "fine-block",
        "mode": cert.mode,
        "communication": [
            [economy.states.labels[s] for s in sorted(cell)]
            for cell in cert.communication.cells
        ],
        "event": list(cert.event_labels),
        "participation": {
            name: float(cert.coalition.participation[i])
            for name, i in zip(cert.type_names, cert.coalition.support)
        },
        "bundles": {
            name: {
                label: list(cert.bundles[k, j])
                for j, label in enumerate(cert.event_labels)
            }
            for k, name in enumerate(cert.type_names)
        },
        "witnesses": [
            {
                "type": w.type_name,
                "states": list(w.state_labels),
                "weights": list(w.weights),
                "baseline": w.baseline,
            }
            for w in cert.witnesses
        ],
        "margin": cert.margin,
        "eps_block": cert.eps_block,
    }


def fine_certificate_from_dict(economy: Economy, raw: dict) -> FineBlockCertificate:
    if raw.get("kind") != "fine-block":
        raise EconomyError("not a fine block certificate")
    participation = np.zeros(economy.n_types)
    for name, lam in raw["participation"].items():
        participation[economy.type_index(name)] = float(lam)
    support = tuple(int(i) for i in np.nonzero(participation > 0)[0])
    names = tuple(economy.types[i].name for i in support)
    event_labels = tuple(str(x) for x in raw["event"])
    bundles = np.stack(
        [
            np.stack(
                [np.asarray(raw["bundles"][n][lbl], dtype=float) for lbl in event_labels]
            )
            for n in names
        ]
    )
    comm = Partition.from_cells(
        [
            {economy.states.index(lbl) for lbl in cell}
            for cell in raw["communication"]
        ],
        economy.states.n,
    )
    witnesses = tuple(
        FineGainWitness(
            type_name=str(w["type"]),
            state_labels=tuple(str(x) for x in w["states"]),
            weights=tuple(float(x) for x in w["weights"]),
            baseline=float(w["baseline"]),
        )
        for w in raw["witnesses"]
    )
    return FineBlockCertificate(
        coalition=FuzzyCoalition(participation=participation),
        mode=str(raw["mode"]),
        communication=comm,
        event_labels=event_labels,
        type_names=names,
        bundles=bundles,
        witnesses=witnesses,
        margin=float(raw["margin"]),
        eps_block=float(raw["eps_block"]),
    )


def expost_report_to_dict(report: ExPostCoreReport) -> dict:
    d = {
        "verdict": report.verdict,
        "states": {label: status for label, status in report.state_outcomes},
        "notes": list(report.notes),
    }
    if report.certificate is not None:
        d["certificate"] = block_certificate_to_dict(report.certificate)
    return d


def ree_report_to_dict(report: ReeReport) -> dict:
    return {
        "mode": report.mode,
        "passed": report.passed,
        "failures": [
            {
                "type": c.type_name,
                "clause": c.clause,
                "location": c.location,
                "detail": c.detail,
            }
            for c in report.failures
        ],
    }


def fine_report_to_dict(economy: Economy, report: FineCoreReport) -> dict:
    d = {
        "verdict": report.verdict,
        "modes": list(report.modes),
        "notes": list(report.notes),
        "searched": sum(s.searched for s in report.searches),
    }
    if report.certificate is not None:
        d["certificate"] = fine_certificate_to_dict(economy, report.certificate)
    return d
