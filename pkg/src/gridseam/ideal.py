"""Ideal co-optimization: one LP over every transmission and distribution row.

This is the oracle the coordination pipeline is checked against.  It is not
meant to scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dso import DistributionModel, add_distribution
from .grid import Scenario, validate
from .iso import MarketInfeasible, ModelError, TransmissionModel, add_transmission
from .lp import LinearProgram, LpSolution, solve
from .pipeline import CoordinationResult
from .settlement import aggregator_payments

PROBE_EPS = 1e-7
PROBE_MOVE_TOL = 1e-5


class ScenarioMismatch(ValueError):
    pass


@dataclass
class IdealModel:
    lp: LinearProgram
    transmission: TransmissionModel
    distributions: dict[str, DistributionModel]

    @property
    def distribution_rows(self) -> int:
        return sum(len(m.rows) for m in self.distributions.values())

    def dispatch_columns(self) -> list[int]:
        cols = [j for idx in self.transmission.gen_blocks.values() for j in idx]
        for m in self.distributions.values():
            cols.extend(j for idx in m.blocks.values() for j in idx)
        return cols


def ideal_model(s: Scenario) -> IdealModel:
    problems = validate(s)
    if problems:
        raise ValueError("invalid scenario: " + "; ".join(map(str, problems)))
    lp = LinearProgram(f"ideal:{s.name}")
    dists = {}
    injections: dict[str, dict[int, float]] = {}
    for d in s.distributions:
        m = add_distribution(lp, d, prefix=f"{d.id}:")
        dists[d.id] = m
        injections.setdefault(d.coupling_bus, {})[m.p_dso] = 1.0
    tm = add_transmission(lp, s.transmission, injections, {}, s.base_mva)
    return IdealModel(lp, tm, dists)


def build_ideal_lp(s: Scenario) -> LinearProgram:
    """Transmission DC-OPF plus every distribution network, coupled through
    each substation export column."""
    return ideal_model(s).lp


@dataclass
class IdealResult:
    scenario: str
    gen_dispatch: dict[str, float]
    agg_dispatch: dict[str, dict[str, float]]
    bus_lmps: dict[str, float]
    node_dlmps: dict[str, dict[str, float]]
    substation_injections: dict[str, float]
    objective: float
    degenerate: bool | None = None
    solution: LpSolution | None = field(default=None, repr=False)


def _extract(s: Scenario, model: IdealModel, sol: LpSolution) -> IdealResult:
    x, y = sol.primal, sol.duals
    tm = model.transmission
    return IdealResult(
        scenario=s.name,
        gen_dispatch={g: float(sum(x[j] for j in idx)) for g, idx in tm.gen_blocks.items()},
        agg_dispatch={d: m.dispatch(x) for d, m in model.distributions.items()},
        bus_lmps={b: float(y[r]) for b, r in tm.balance.items()},
        node_dlmps={d: m.dlmps(y) for d, m in model.distributions.items()},
        substation_injections={d: float(x[m.p_dso]) for d, m in model.distributions.items()},
        objective=sol.objective_value,
        solution=sol,
    )


def _solve_checked(lp: LinearProgram) -> LpSolution:
    sol = solve(lp)
    if sol.status == "infeasible":
        raise MarketInfeasible(f"{lp.name}: ideal co-optimization infeasible")
    if sol.status == "unbounded":
        raise ModelError(f"{lp.name}: ideal co-optimization unbounded")
    return sol


def degeneracy_probe(model: IdealModel, sol: LpSolution, *, eps: float = PROBE_EPS,
                     move_tol: float = PROBE_MOVE_TOL, seed: int = 0) -> bool:
    """True when a +-eps random cost tilt moves some dispatch by more than ``move_tol``.

    A move means the optimal face is not a single point in dispatch space.
    """
    cols = np.array(model.dispatch_columns(), dtype=int)
    if cols.size == 0:
        return False
    direction = np.random.default_rng(seed).uniform(-1.0, 1.0, cols.size)
    base = sol.primal[cols]
    for sign in (1.0, -1.0):
        lp = model.lp.copy()
        for j, dj in zip(cols, direction):
            lp.objective[j] += sign * eps * dj
        tilted = solve(lp)
        if not tilted.optimal or np.max(np.abs(tilted.primal[cols] - base)) > move_tol:
            return True
    return False


def solve_ideal(s: Scenario, *, probe: bool = True) -> IdealResult:
    """Solve the monolithic LP; prices are balance-row duals."""
    model = ideal_model(s)
    sol = _solve_checked(model.lp)
    result = _extract(s, model, sol)
    if probe:
        result.degenerate = degeneracy_probe(model, sol)
    return result


@dataclass
class ComparisonReport:
    scenario: str
    deviations: dict[str, float]
    objective_rel_deviation: float
    tol: float
    degenerate: bool
    objective_tol: float = 1e-6

    @property
    def within_tol(self) -> bool:
        return all(v <= self.tol for v in self.deviations.values())

    @property
    def objective_match(self) -> bool:
        return self.objective_rel_deviation <= self.objective_tol

    @property
    def passed(self) -> bool:
        return self.within_tol and self.objective_match

    @property
    def status(self) -> str:
        """``degenerate`` is advisory: dispatch and price equality is not
        expected when the optimum is not unique, only objective equality."""
        if self.degenerate:
            return "degenerate" if self.objective_match else "fail"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "status": self.status,
            "pass": self.passed,
            "degenerate": self.degenerate,
            "tolerance": self.tol,
            "max_deviation": self.deviations,
            "objective_relative_deviation": self.objective_rel_deviation,
            "objective_match": self.objective_match,
        }


def _max_dev(a: dict, b: dict) -> float:
    if set(a) != set(b):
        raise ScenarioMismatch(f"key sets differ: {sorted(set(a) ^ set(b))}")
    return max((abs(a[k] - b[k]) for k in a), default=0.0)


def compare(coord: CoordinationResult, ideal: IdealResult, s: Scenario, tol: float = 1e-5) -> ComparisonReport:
    """Largest deviations between coordination and ideal outcomes.

    Categories: generator dispatch, aggregator dispatch, prices (bus LMPs and
    node D-LMPs) and payments (generators at LMP, aggregators at D-LMP).
    """
    if coord.scenario != ideal.scenario or coord.scenario != s.name:
        raise ScenarioMismatch(f"results belong to different scenarios: {coord.scenario!r} vs {ideal.scenario!r}")
    t = s.transmission
    gen_bus = {g.id: g.bus for g in t.generators}

    agg_c, agg_i, price_c, price_i, pay_c, pay_i = {}, {}, {}, {}, {}, {}
    for b, v in coord.iso.lmps.items():
        price_c[("bus", b)] = v
    for b, v in ideal.bus_lmps.items():
        price_i[("bus", b)] = v
    for g, p in coord.iso.gen_dispatch.items():
        pay_c[("gen", g)] = coord.iso.lmps[gen_bus[g]] * p
    for g, p in ideal.gen_dispatch.items():
        pay_i[("gen", g)] = ideal.bus_lmps[gen_bus[g]] * p
    for d in s.distributions:
        st = coord.settlements[d.id]
        for a, p in st.agg_dispatch.items():
            agg_c[(d.id, a)] = p
        for a, p in ideal.agg_dispatch[d.id].items():
            agg_i[(d.id, a)] = p
        for n, v in st.dlmp.items():
            price_c[(d.id, n)] = v
        for n, v in ideal.node_dlmps[d.id].items():
            price_i[(d.id, n)] = v
        for a, v in st.payments.items():
            pay_c[(d.id, a)] = v
        for a, v in aggregator_payments(d, ideal.agg_dispatch[d.id], ideal.node_dlmps[d.id]).items():
            pay_i[(d.id, a)] = v

    deviations = {
        "generator_dispatch": _max_dev(coord.iso.gen_dispatch, ideal.gen_dispatch),
        "aggregator_dispatch": _max_dev(agg_c, agg_i),
        "prices": _max_dev(price_c, price_i),
        "payments": _max_dev(pay_c, pay_i),
    }
    obj_c = coord.total_objective
    rel = abs(obj_c - ideal.objective) / (1.0 + abs(ideal.objective))
    return ComparisonReport(s.name, deviations, rel, tol, bool(ideal.degenerate))
