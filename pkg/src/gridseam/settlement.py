"""DSO-level settlement after the wholesale market has cleared.

Dispatch comes from the DSO LP with the export pinned at the ISO award;
distribution prices come from a separate price-taking LP in which the DSO
sells its export at the coupling-bus LMP.  The split matters: at a bid-curve
breakpoint the pinned LP has non-unique duals, while the price-taking LP has
non-unique primal solutions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .dso import dso_model, feasible_range
from .grid import DRAG, REAG, DistributionSystem
from .io import atomic_writer, write_json
from .lp import FEAS_TOL, solve


class DispatchOutOfRange(ValueError):
    """The ISO award lies outside the DSO's bid range."""


class UnboundedPricing(RuntimeError):
    pass


@dataclass
class DsoDispatch:
    agg_dispatch: dict[str, float]
    branch_flows: dict[str, float]
    cost: float


def _dispatch(dist: DistributionSystem, p_star: float, feas_tol: float = FEAS_TOL) -> DsoDispatch:
    lp, model = dso_model(dist, p_star)
    sol = solve(lp)
    if not sol.optimal:
        lo, hi = feasible_range(dist)
        if not lo - feas_tol <= p_star <= hi + feas_tol:
            raise DispatchOutOfRange(f"dispatch outside bid range: {p_star!r} not in [{lo!r}, {hi!r}] "
                                     f"for {dist.id!r}")
        lp.constraints[lp.row("coupling")].rhs = min(max(p_star, lo), hi)
        sol = solve(lp)
        if not sol.optimal:
            raise DispatchOutOfRange(f"DSO LP {sol.status} at p = {p_star!r} for {dist.id!r}")
    return DsoDispatch(model.dispatch(sol.primal), model.flows(sol.primal), sol.objective_value)


def dso_dispatch(dist: DistributionSystem, p_star: float) -> dict[str, float]:
    """Aggregator dispatch (MW) with the substation export fixed at ``p_star``."""
    return _dispatch(dist, p_star).agg_dispatch


def dso_prices(dist: DistributionSystem, lmp_star: float) -> dict[str, float]:
    """D-LMP per node from the price-taking DSO problem.

    Minimizes aggregator cost minus ``lmp_star`` times the substation export.
    The substation D-LMP therefore equals ``lmp_star``.
    """
    lp, model = dso_model(dist)
    lp.set_cost(model.p_dso, -float(lmp_star))
    sol = solve(lp)
    if sol.status == "unbounded":
        raise UnboundedPricing(f"price-taking LP unbounded for {dist.id!r}")
    if not sol.optimal:
        raise UnboundedPricing(f"price-taking LP {sol.status} for {dist.id!r}")
    return model.dlmps(sol.duals)


@dataclass
class DsoSettlement:
    dso_id: str
    p_star: float
    lmp_star: float
    agg_dispatch: dict[str, float]
    dlmp: dict[str, float]
    payments: dict[str, float]
    iso_to_dso: float
    dso_net_position: float
    firm_load_charges: float = 0.0
    reag_payments: float = 0.0
    branch_flows: dict[str, float] = field(default_factory=dict)


def aggregator_payments(dist: DistributionSystem, agg_dispatch: Mapping[str, float],
                        dlmp: Mapping[str, float]) -> dict[str, float]:
    """Signed $/h per aggregator, positive when paid to the participant."""
    out = {}
    for a in dist.aggregators:
        price = dlmp[a.node]
        if a.kind == DRAG:
            out[a.id] = -price * agg_dispatch[a.id]
        else:
            out[a.id] = price * agg_dispatch[a.id]
    return out


def compute_payments(dist: DistributionSystem, agg_dispatch: Mapping[str, float], dlmp: Mapping[str, float],
                     lmp_star: float, p_star: float, branch_flows: Mapping[str, float] | None = None
                     ) -> DsoSettlement:
    """Settle every aggregator and firm load at its nodal D-LMP.

    ``dso_net_position`` is what the DSO keeps: ISO revenue plus consumer
    charges minus producer payments.
    """
    payments = aggregator_payments(dist, agg_dispatch, dlmp)
    loads = sum(dlmp[n.id] * n.firm_load_p for n in dist.nodes)
    reag = sum(payments[a.id] for a in dist.aggregators if a.kind == REAG)
    iso_to_dso = lmp_star * p_star
    net = iso_to_dso + loads - sum(payments.values())
    return DsoSettlement(dist.id, p_star, lmp_star, dict(agg_dispatch), dict(dlmp), payments,
                         iso_to_dso, net, loads, reag, dict(branch_flows or {}))


def settle(dist: DistributionSystem, p_star: float, lmp_star: float) -> DsoSettlement:
    d = _dispatch(dist, p_star)
    prices = dso_prices(dist, lmp_star)
    return compute_payments(dist, d.agg_dispatch, prices, lmp_star, p_star, d.branch_flows)


def merchandising_surplus(dist: DistributionSystem, settlement: DsoSettlement) -> float:
    """Distribution congestion rent: sum of (D-LMP downstream - upstream) * flow."""
    return sum((settlement.dlmp[br.child_node] - settlement.dlmp[br.parent_node]) * settlement.branch_flows[br.id]
               for br in dist.branches)


def write_settlement(dist: DistributionSystem, s: DsoSettlement, outdir) -> None:
    outdir = Path(outdir)
    with atomic_writer(outdir / f"settlement_{s.dso_id}.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["aggregator", "node", "dispatch_mw", "dlmp_per_mwh", "payment_per_h"])
        for a in dist.aggregators:
            w.writerow([a.id, a.node, repr(s.agg_dispatch[a.id]), repr(s.dlmp[a.node]), repr(s.payments[a.id])])
    write_json(outdir / f"settlement_{s.dso_id}.json", {
        "dso_id": s.dso_id,
        "p_star_mw": s.p_star,
        "lmp_star_per_mwh": s.lmp_star,
        "iso_to_dso_per_h": s.iso_to_dso,
        "dso_net_position_per_h": s.dso_net_position,
        "firm_load_charges_per_h": s.firm_load_charges,
        "reag_payments_per_h": s.reag_payments,
        "dlmp_per_mwh": s.dlmp,
    })

