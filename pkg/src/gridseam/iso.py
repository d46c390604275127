"""Wholesale market clearing: DC-OPF with generator and DSO block offers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping

from .dso import DsoOffer
from .grid import TransmissionSystem
from .lp import INF, LinearProgram, LpSolution, solve


class MarketInfeasible(RuntimeError):
    pass


class ModelError(RuntimeError):
    pass


@dataclass
class TransmissionModel:
    lp: LinearProgram
    gen_blocks: dict[str, list[int]] = field(default_factory=dict)
    dso_blocks: dict[str, list[int]] = field(default_factory=dict)
    theta: dict[str, int] = field(default_factory=dict)
    flows: dict[str, int] = field(default_factory=dict)
    balance: dict[str, int] = field(default_factory=dict)
    rows: list[int] = field(default_factory=list)


def add_transmission(lp: LinearProgram, t: TransmissionSystem, injections: Mapping[str, Mapping[int, float]],
                     fixed_injection: Mapping[str, float], base_mva: float = 1.0) -> TransmissionModel:
    """Append the DC-OPF of ``t``.

    ``injections`` maps a bus to extra LP columns injecting into it (DSO
    blocks or substation exports); ``fixed_injection`` adds constants.
    """
    model = TransmissionModel(lp)
    first_row = lp.num_rows
    terms: dict[str, dict[int, float]] = {b.id: {} for b in t.buses}
    for g in t.generators:
        idx = []
        for k, blk in enumerate(g.blocks):
            j = lp.add_variable(f"{g.id}[{k}]", 0.0, blk.width, cost=blk.price)
            terms[g.bus][j] = 1.0
            idx.append(j)
        model.gen_blocks[g.id] = idx
    for bus, cols in injections.items():
        for j, a in cols.items():
            terms[bus][j] = terms[bus].get(j, 0.0) + a
    # angles only matter when there are lines to carry flow
    for b in t.buses if t.lines else ():
        model.theta[b.id] = lp.add_variable(f"theta[{b.id}]", -INF, INF)
    for k, ln in enumerate(t.lines):
        lid = ln.id or f"L{k}"
        j = lp.add_variable(f"F[{lid}]", -ln.flow_limit, ln.flow_limit)
        model.flows[lid] = j
        terms[ln.from_bus][j] = terms[ln.from_bus].get(j, 0.0) - 1.0
        terms[ln.to_bus][j] = terms[ln.to_bus].get(j, 0.0) + 1.0

    for b in t.buses:
        rhs = b.firm_load - fixed_injection.get(b.id, 0.0)
        model.balance[b.id] = lp.add_constraint(terms[b.id], "eq", rhs, name=f"bal[{b.id}]")
    for k, ln in enumerate(t.lines):
        lid = ln.id or f"L{k}"
        susceptance = base_mva / ln.reactance
        lp.add_constraint({model.flows[lid]: 1.0, model.theta[ln.from_bus]: -susceptance,
                           model.theta[ln.to_bus]: susceptance}, "eq", 0.0, name=f"flow[{lid}]")
    if t.lines:
        lp.add_constraint({model.theta[t.reference_bus]: 1.0}, "eq", 0.0, name="ref")
    model.rows = list(range(first_row, lp.num_rows))
    return model


def iso_model(t: TransmissionSystem, offers: Mapping[str, DsoOffer], base_mva: float = 1.0) -> TransmissionModel:
    known = {b.id for b in t.buses}
    lp = LinearProgram("iso")
    # DSO blocks go first so that columns line up with offers
    injections: dict[str, dict[int, float]] = {}
    fixed: dict[str, float] = {}
    dso_blocks = {}
    for dso_id, offer in offers.items():
        if offer.coupling_bus not in known:
            raise ModelError(f"offer {dso_id!r} at unknown bus {offer.coupling_bus!r}")
        idx = []
        for k, blk in enumerate(offer.blocks):
            j = lp.add_variable(f"dso:{dso_id}[{k}]", 0.0, blk.width, cost=blk.price)
            injections.setdefault(offer.coupling_bus, {})[j] = 1.0
            idx.append(j)
        dso_blocks[dso_id] = idx
        fixed[offer.coupling_bus] = fixed.get(offer.coupling_bus, 0.0) + offer.p_min
    model = add_transmission(lp, t, injections, fixed, base_mva)
    model.dso_blocks = dso_blocks
    return model


def build_iso_lp(t: TransmissionSystem, offers: Mapping[str, DsoOffer], base_mva: float = 1.0) -> LinearProgram:
    """Wholesale LP: generator blocks plus DSO blocks ``p = p_min + sum(b_k)``.

    DSO fixed costs are constants and are left out of the objective.
    """
    return iso_model(t, offers, base_mva).lp


@dataclass
class IsoResult:
    gen_dispatch: dict[str, float]
    dso_dispatch: dict[str, float]
    dso_block_dispatch: dict[str, list[float]]
    gen_block_dispatch: dict[str, list[float]]
    lmps: dict[str, float]
    line_flows: dict[str, float]
    objective: float
    total_gen_mw: float
    solution: LpSolution | None = field(default=None, repr=False)


def clear_market(t: TransmissionSystem, offers: Mapping[str, DsoOffer], base_mva: float = 1.0) -> IsoResult:
    """Solve the wholesale LP; LMPs are the bus balance duals."""
    model = iso_model(t, offers, base_mva)
    sol = solve(model.lp)
    if sol.status == "infeasible":
        load = sum(b.firm_load for b in t.buses)
        gen_cap = sum(blk.width for g in t.generators for blk in g.blocks)
        dso_cap = sum(o.p_max for o in offers.values())
        raise MarketInfeasible(
            f"market infeasible: firm load {load:.6g} MW vs generator capacity {gen_cap:.6g} MW "
            f"+ DSO maximum export {dso_cap:.6g} MW (or transmission limits prevent delivery)")
    if sol.status == "unbounded":
        raise ModelError("wholesale LP unbounded: a variable is missing a bound")
    x, y = sol.primal, sol.duals
    gen = {g: float(sum(x[j] for j in idx)) for g, idx in model.gen_blocks.items()}
    blocks = {d: [float(x[j]) for j in idx] for d, idx in model.dso_blocks.items()}
    dso = {d: offers[d].p_min + float(sum(b)) for d, b in blocks.items()}
    return IsoResult(
        gen_dispatch=gen,
        dso_dispatch=dso,
        dso_block_dispatch=blocks,
        gen_block_dispatch={g: [float(x[j]) for j in idx] for g, idx in model.gen_blocks.items()},
        lmps={b: float(y[r]) for b, r in model.balance.items()},
        line_flows={lid: float(x[j]) for lid, j in model.flows.items()},
        objective=sol.objective_value,
        total_gen_mw=float(sum(gen.values())),
        solution=sol,
    )


def write_iso_results(result: IsoResult, outdir, offers: Mapping[str, DsoOffer] | None = None) -> None:
    from pathlib import Path

    from .io import atomic_writer, write_json

    outdir = Path(outdir)
    with atomic_writer(outdir / "lmps.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bus", "lmp_per_mwh"])
        for bus, lmp in result.lmps.items():
            w.writerow([bus, repr(lmp)])
    with atomic_writer(outdir / "dispatch.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant", "dispatch_mw"])
        for g, p in result.gen_dispatch.items():
            w.writerow([g, repr(p)])
        for d, p in result.dso_dispatch.items():
            w.writerow([d, repr(p)])
    fixed = sum(o.fixed_cost for o in offers.values()) if offers else 0.0
    write_json(outdir / "iso_result.json", {
        "objective_per_h": result.objective,
        "objective_with_dso_fixed_costs_per_h": result.objective + fixed,
        "total_gen_mw": result.total_gen_mw,
        "line_flows_mw": result.line_flows,
        "lmps_per_mwh": result.lmps,
        "gen_dispatch_mw": result.gen_dispatch,
        "dso_dispatch_mw": result.dso_dispatch,
    })


def block_order_violations(result: IsoResult, t: TransmissionSystem, offers: Mapping[str, DsoOffer],
                           tol: float = 1e-8) -> list[str]:
    """Participants with a block dispatched while a cheaper one is not full."""
    widths = {g.id: [b.width for b in g.blocks] for g in t.generators}
    widths.update({d: [b.width for b in o.blocks] for d, o in offers.items()})
    dispatch = {**result.gen_block_dispatch, **result.dso_block_dispatch}
    bad = []
    for name, w in widths.items():
        disp = dispatch[name]
        if any(disp[k] > tol and disp[k - 1] < w[k - 1] - tol for k in range(1, len(w))):
            bad.append(name)
    return bad
