"""DSO bid construction: the distribution market LP and its value function.

The DSO's minimal internal cost as a function of its substation export is a
convex piecewise-linear function.  :func:`trace_bid_curve` recovers it exactly
from LP optimal values and substation duals, and :func:`to_offer_blocks`
turns it into a block offer the ISO can clear.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import DDGAG, DRAG, REAG, DistributionSystem, OfferBlock, topological_order, validate_distribution
from .lp import INF, LinearProgram, LpSolution, solve

SLOPE_MERGE_TOL = 1e-7
CURVE_TOL = 1e-8
X_TOL = 1e-9
MAX_RECURSION = 64


class EmptyBidRange(RuntimeError):
    """No substation export satisfies the distribution constraints."""


class TracingError(RuntimeError):
    pass


class InvalidDistribution(ValueError):
    pass


@dataclass
class DistributionModel:
    """Column and row indices of one distribution system inside an LP."""

    dist: DistributionSystem
    p_dso: int
    q_dso: int
    blocks: dict[str, list[int]] = field(default_factory=dict)
    pl: dict[str, int] = field(default_factory=dict)
    ql: dict[str, int] = field(default_factory=dict)
    u: dict[str, int] = field(default_factory=dict)
    p_balance: dict[str, int] = field(default_factory=dict)
    q_balance: dict[str, int] = field(default_factory=dict)
    rows: list[int] = field(default_factory=list)
    columns: list[int] = field(default_factory=list)

    def dispatch(self, x: np.ndarray) -> dict[str, float]:
        """MW per aggregator: block sum for DDGAG/DRAG, the fixed profile for REAG."""
        out = {}
        for a in self.dist.aggregators:
            if a.kind == REAG:
                out[a.id] = a.fixed_profile
            else:
                out[a.id] = float(sum(x[j] for j in self.blocks[a.id]))
        return out

    def dlmps(self, y: np.ndarray) -> dict[str, float]:
        return {n: float(y[r]) for n, r in self.p_balance.items()}

    def flows(self, x: np.ndarray) -> dict[str, float]:
        return {b: float(x[j]) for b, j in self.pl.items()}


def add_distribution(lp: LinearProgram, dist: DistributionSystem, prefix: str = "") -> DistributionModel:
    """Append the full distribution market model of ``dist`` to ``lp``.

    The substation export ``P_dso`` is created as a free column; callers pin
    it, price it or couple it to a transmission bus.  Every other column and
    every row added here is recorded in ``columns`` / ``rows``.
    """
    n_before_rows = lp.num_rows
    p_dso = lp.add_variable(f"{prefix}P_dso", -INF, INF)
    q_lo = -INF if dist.q_dso_min is None else dist.q_dso_min
    q_hi = INF if dist.q_dso_max is None else dist.q_dso_max
    first_col = lp.num_vars
    q_dso = lp.add_variable(f"{prefix}Q_dso", q_lo, q_hi)
    model = DistributionModel(dist, p_dso, q_dso)

    p_terms: dict[str, dict[int, float]] = {n.id: {} for n in dist.nodes}
    q_terms: dict[str, dict[int, float]] = {n.id: {} for n in dist.nodes}
    p_rhs = {n.id: n.firm_load_p for n in dist.nodes}
    q_rhs = {n.id: n.firm_load_q for n in dist.nodes}

    for a in dist.aggregators:
        if a.kind == REAG:
            p_rhs[a.node] -= a.fixed_profile
            q_rhs[a.node] -= a.fixed_profile * a.tan_phi
            model.blocks[a.id] = []
            continue
        sign = 1.0 if a.kind == DDGAG else -1.0
        idx = []
        for k, b in enumerate(a.blocks):
            j = lp.add_variable(f"{prefix}{a.id}[{k}]", 0.0, b.width, cost=sign * b.price)
            idx.append(j)
            p_terms[a.node][j] = sign
            if a.tan_phi:
                q_terms[a.node][j] = sign * a.tan_phi
        model.blocks[a.id] = idx

    for br in dist.branches:
        jp = lp.add_variable(f"{prefix}Pl[{br.id}]", -br.pl_max, br.pl_max)
        jq = lp.add_variable(f"{prefix}Ql[{br.id}]", -br.ql_max, br.ql_max)
        model.pl[br.id] = jp
        model.ql[br.id] = jq
        p_terms[br.child_node][jp] = 1.0
        p_terms[br.parent_node][jp] = -1.0
        q_terms[br.child_node][jq] = 1.0
        q_terms[br.parent_node][jq] = -1.0
    for n in dist.nodes:
        model.u[n.id] = lp.add_variable(f"{prefix}U[{n.id}]", n.u_min, n.u_max)

    root = dist.substation_node
    p_terms[root][p_dso] = -1.0
    q_terms[root][q_dso] = -1.0
    for n in topological_order(dist):
        model.p_balance[n] = lp.add_constraint(p_terms[n], "eq", p_rhs[n], name=f"{prefix}pbal[{n}]")
    for n in topological_order(dist):
        model.q_balance[n] = lp.add_constraint(q_terms[n], "eq", q_rhs[n], name=f"{prefix}qbal[{n}]")
    lp.add_constraint({model.u[root]: 1.0}, "eq", dist.substation_u, name=f"{prefix}vroot")
    scale = 2.0 / dist.base_mva
    for br in dist.branches:
        lp.add_constraint({model.u[br.child_node]: 1.0, model.u[br.parent_node]: -1.0,
                           model.pl[br.id]: scale * br.r, model.ql[br.id]: scale * br.x},
                          "eq", 0.0, name=f"{prefix}volt[{br.id}]")
    model.rows = list(range(n_before_rows, lp.num_rows))
    model.columns = list(range(first_col, lp.num_vars))
    return model


def _checked(dist: DistributionSystem) -> None:
    problems = validate_distribution(dist)
    if problems:
        raise InvalidDistribution(f"distribution {dist.id!r} is invalid: " + "; ".join(map(str, problems)))


def dso_model(dist: DistributionSystem, p_dso: float | None = None) -> tuple[LinearProgram, DistributionModel]:
    """The DSO LP with ``P_dso`` pinned by a ``coupling`` row (or free when None)."""
    _checked(dist)
    lp = LinearProgram(f"dso:{dist.id}")
    model = add_distribution(lp, dist)
    if p_dso is not None:
        if not math.isfinite(p_dso):
            raise ValueError("p_dso must be finite")
        lp.add_constraint({model.p_dso: 1.0}, "eq", float(p_dso), name="coupling")
    return lp, model


def build_dso_lp(dist: DistributionSystem, p_dso: float) -> LinearProgram:
    """Minimal aggregator cost with the substation export fixed at ``p_dso``.

    The dual of the row named ``coupling`` is the marginal cost of export.
    """
    return dso_model(dist, p_dso)[0]


def feasible_range(dist: DistributionSystem) -> tuple[float, float]:
    """Smallest and largest substation export the feeder can support."""
    lp, model = dso_model(dist)
    lp.objective = [0.0] * lp.num_vars
    ends = []
    for sense in (1.0, -1.0):
        lp.set_cost(model.p_dso, sense)
        sol = solve(lp)
        if sol.status == "infeasible":
            raise EmptyBidRange(f"distribution {dist.id!r}: no feasible substation export")
        if sol.status != "optimal":
            raise TracingError(f"distribution {dist.id!r}: export range is unbounded")
        ends.append(float(sol.primal[model.p_dso]))
    return ends[0], ends[1]


@dataclass(frozen=True)
class PwlConvexCost:
    """Convex piecewise-linear cost given by its breakpoints ``(p, c)``.

    A single breakpoint represents a fixed-injection DSO (``p_min == p_max``).
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ps = [p for p, _ in self.breakpoints]
        if not ps:
            raise ValueError("a cost curve needs at least one breakpoint")
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("breakpoint abscissae must be strictly increasing")

    @property
    def p(self) -> np.ndarray:
        return np.array([p for p, _ in self.breakpoints])

    @property
    def c(self) -> np.ndarray:
        return np.array([c for _, c in self.breakpoints])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.c) / np.diff(self.p)

    @property
    def p_min(self) -> float:
        return self.breakpoints[0][0]

    @property
    def p_max(self) -> float:
        return self.breakpoints[-1][0]

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if len(self.breakpoints) == 1:
            return np.where(np.isclose(p, self.p_min), self.breakpoints[0][1], np.nan)[()]
        out = np.interp(p, self.p, self.c)
        span = 1e-9 * (self.p_max - self.p_min)
        return np.where((p < self.p_min - span) | (p > self.p_max + span), np.nan, out)[()]


@dataclass(frozen=True)
class DsoOffer:
    p_min: float
    p_max: float
    fixed_cost: float
    blocks: tuple[OfferBlock, ...]
    dso_id: str = ""
    coupling_bus: str = ""

    def to_curve(self) -> PwlConvexCost:
        pts = [(self.p_min, self.fixed_cost)]
        p, c = self.p_min, self.fixed_cost
        for b in self.blocks:
            p += b.width
            c += b.width * b.price
            pts.append((p, c))
        if len(pts) > 1:
            pts[-1] = (self.p_max, pts[-1][1])
        return PwlConvexCost(tuple(pts))

    def cost(self, p: float) -> float:
        """Bid-in cost at export ``p`` (fixed part included)."""
        return float(self.to_curve()(p))


def _merge(points: list[tuple[float, float]], merge_tol: float, x_tol: float) -> list[tuple[float, float]]:
    pts = sorted(points)
    dedup = [pts[0]]
    for p, c in pts[1:]:
        if p - dedup[-1][0] > x_tol:
            dedup.append((p, c))
    dedup[-1] = pts[-1]
    changed = True
    while changed and len(dedup) > 2:
        changed = False
        for k in range(1, len(dedup) - 1):
            (p0, c0), (p1, c1), (p2, c2) = dedup[k - 1], dedup[k], dedup[k + 1]
            if abs((c2 - c1) / (p2 - p1) - (c1 - c0) / (p1 - p0)) < merge_tol:
                del dedup[k]
                changed = True
                break
    return dedup


def trace_bid_curve(dist: DistributionSystem, *, slope_merge_tol: float = SLOPE_MERGE_TOL,
                    curve_tol: float = CURVE_TOL, max_recursion: int = MAX_RECURSION,
                    p_range: tuple[float, float] | None = None) -> PwlConvexCost:
    """Exact value function of the DSO LP over its feasible export range.

    Recursive supporting-line bisection: the duals at the interval ends give
    two supporting lines of the convex value function; their intersection is
    either a breakpoint (the function touches both lines there) or a point
    that splits the interval.  Duals at a kink are arbitrary subgradients,
    which keeps the lines supporting; an intersection that lands on an
    interval end proves the function is linear between the ends.
    """
    p_min, p_max = p_range if p_range is not None else feasible_range(dist)
    lp, model = dso_model(dist, p_min)
    row = lp.row("coupling")

    def evaluate(p: float) -> tuple[float, float]:
        lp.constraints[row].rhs = p
        sol: LpSolution = solve(lp)
        if not sol.optimal:
            raise TracingError(f"distribution {dist.id!r}: LP {sol.status} at p = {p!r} inside the bid range")
        return sol.objective_value, float(sol.duals[row])

    fa, sa = evaluate(p_min)
    width = p_max - p_min
    if width <= X_TOL * (1.0 + abs(p_min)):
        return PwlConvexCost(((p_min, fa),))
    fb, sb = evaluate(p_max)
    x_tol = X_TOL * width

    def recurse(a, fa, sa, b, fb, sb, depth):
        if sb - sa < slope_merge_tol:
            return []
        x = (fa - sa * a - fb + sb * b) / (sb - sa)
        if not (x - a > x_tol and b - x > x_tol):
            return []
        fx, sx = evaluate(x)
        line = fa + sa * (x - a)
        if fx - line <= curve_tol * (1.0 + abs(fx)):
            return [(x, fx)]
        if depth >= max_recursion:
            raise TracingError(f"distribution {dist.id!r}: no convergence on [{a!r}, {b!r}] "
                               f"after {max_recursion} levels")
        return (recurse(a, fa, sa, x, fx, sx, depth + 1) + [(x, fx)]
                + recurse(x, fx, sx, b, fb, sb, depth + 1))

    interior = recurse(p_min, fa, sa, p_max, fb, sb, 0)
    points = _merge([(p_min, fa)] + interior + [(p_max, fb)], slope_merge_tol, x_tol)
    return PwlConvexCost(tuple(points))


def to_offer_blocks(curve: PwlConvexCost, *, slope_merge_tol: float = SLOPE_MERGE_TOL,
                    dso_id: str = "", coupling_bus: str = "") -> DsoOffer:
    """One block per linear segment: width = length, price = slope."""
    p_min, fixed = curve.breakpoints[0]
    blocks: list[OfferBlock] = []
    for (p0, c0), (p1, c1) in zip(curve.breakpoints, curve.breakpoints[1:]):
        w = p1 - p0
        price = (c1 - c0) / w
        if blocks and abs(price - blocks[-1].price) < slope_merge_tol:
            prev = blocks[-1]
            total = prev.width + w
            blocks[-1] = OfferBlock(total, (prev.price * prev.width + price * w) / total)
        else:
            blocks.append(OfferBlock(w, price))
    return DsoOffer(p_min, curve.p_max, fixed, tuple(blocks), dso_id, coupling_bus)


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    max_decrease: float


def convexity_check(curve: PwlConvexCost, *, slope_merge_tol: float = SLOPE_MERGE_TOL) -> ConvexityReport:
    s = curve.slopes
    worst = float(np.max(s[:-1] - s[1:], initial=0.0)) if s.size > 1 else 0.0
    worst = max(worst, 0.0)
    return ConvexityReport(worst <= slope_merge_tol, worst)


def write_curve_csv(curve: PwlConvexCost, breakpoints_path, segments_path) -> None:
    """Breakpoint and marginal-cost tables, one file each."""
    from .io import atomic_writer

    with atomic_writer(breakpoints_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["breakpoint_index", "p_mw", "cost_per_h"])
        for k, (p, c) in enumerate(curve.breakpoints, start=1):
            w.writerow([k, repr(p), repr(c)])
    with atomic_writer(segments_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_index", "marginal_cost_per_mwh"])
        for k, s in enumerate(curve.slopes, start=1):
            w.writerow([k, repr(float(s))])
