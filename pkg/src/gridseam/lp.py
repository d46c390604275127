"""Dense bounded-variable primal simplex with exact dual extraction.

Every market problem in the package is written as a :class:`LinearProgram`
and solved here.  The solver returns a vertex solution, so the row duals are
exact basis duals; that matters for breakpoint detection and LMP equality.

Dual sign convention: for a minimization, ``duals[i]`` is the sensitivity of
the optimal objective to the right-hand side of constraint ``i``.  Hence the
dual of a "supply - demand = load" balance row is the marginal cost of
serving one more MW of load at that node.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

INF = math.inf
#: bounds at or beyond this magnitude are treated as infinite
INF_SENTINEL = 1e30

FEAS_TOL = 1e-8
OPT_TOL = 1e-8
PIVOT_TOL = 1e-10

EQ, LE, GE = "eq", "le", "ge"
_RELATIONS = (EQ, LE, GE)

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


class LpValidationError(ValueError):
    """The LP data violates a structural invariant (not a solver outcome)."""


class NumericalBreakdown(RuntimeError):
    """The simplex could not finish reliably (singular basis, iteration cap)."""


@dataclass
class Constraint:
    coefs: dict[int, float]
    relation: str
    rhs: float
    name: str = ""


class LinearProgram:
    """Minimize ``objective @ x`` over bounded variables and linear rows.

    Built incrementally::

        lp = LinearProgram()
        x = lp.add_variable("x", 0.0, 1.0, cost=1.0)
        lp.add_constraint({x: 1.0}, "le", 0.5, name="cap")
    """

    def __init__(self, name: str = "") -> None:
        self.name = name
        self.objective: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.var_names: list[str] = []
        self.constraints: list[Constraint] = []
        self._row_by_name: dict[str, int] = {}
        self._var_by_name: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.constraints)

    def add_variable(self, name: str = "", lower: float = 0.0, upper: float = INF,
                     cost: float = 0.0) -> int:
        idx = len(self.objective)
        self.objective.append(float(cost))
        self.lower.append(_clean_bound(lower))
        self.upper.append(_clean_bound(upper))
        self.var_names.append(name)
        if name:
            self._var_by_name[name] = idx
        return idx

    def add_constraint(self, coefs: Mapping[int, float], relation: str, rhs: float,
                       name: str = "") -> int:
        if relation not in _RELATIONS:
            raise LpValidationError(f"unknown relation {relation!r}")
        merged: dict[int, float] = {}
        for j, a in coefs.items():
            merged[int(j)] = merged.get(int(j), 0.0) + float(a)
        idx = len(self.constraints)
        self.constraints.append(Constraint(merged, relation, float(rhs), name))
        if name:
            self._row_by_name[name] = idx
        return idx

    def set_cost(self, j: int, cost: float) -> None:
        self.objective[j] = float(cost)

    def var(self, name: str) -> int:
        return self._var_by_name[name]

    def row(self, name: str) -> int:
        return self._row_by_name[name]

    def check(self) -> None:
        """Raise :class:`LpValidationError` on any broken invariant."""
        n = self.num_vars
        if not (len(self.lower) == len(self.upper) == n):
            raise LpValidationError("bound vectors do not match objective length")
        for j in range(n):
            if math.isnan(self.objective[j]) or math.isinf(self.objective[j]):
                raise LpValidationError(f"objective coefficient {j} is not finite")
            if self.lower[j] > self.upper[j]:
                raise LpValidationError(
                    f"variable {j} ({self.var_names[j]}): lower {self.lower[j]} > upper {self.upper[j]}")
            if self.lower[j] == INF or self.upper[j] == -INF:
                raise LpValidationError(f"variable {j}: bound of wrong-signed infinity")
        for i, con in enumerate(self.constraints):
            if not math.isfinite(con.rhs):
                raise LpValidationError(f"constraint {i} ({con.name}) has non-finite rhs")
            for j, a in con.coefs.items():
                if not 0 <= j < n:
                    raise LpValidationError(f"constraint {i} ({con.name}) references variable {j}")
                if not math.isfinite(a):
                    raise LpValidationError(f"constraint {i} ({con.name}) has non-finite coefficient")

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.num_rows, self.num_vars))
        for i, con in enumerate(self.constraints):
            for j, a in con.coefs.items():
                A[i, j] = a
        return A

    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def relations(self) -> list[str]:
        return [c.relation for c in self.constraints]

    def copy(self) -> "LinearProgram":
        other = LinearProgram(self.name)
        other.objective = list(self.objective)
        other.lower = list(self.lower)
        other.upper = list(self.upper)
        other.var_names = list(self.var_names)
        other.constraints = [Constraint(dict(c.coefs), c.relation, c.rhs, c.name)
                             for c in self.constraints]
        other._row_by_name = dict(self._row_by_name)
        other._var_by_name = dict(self._var_by_name)
        return other

    def dump(self) -> str:
        """Fixed-format text listing, one constraint per line."""
        def label(j):
            return self.var_names[j] or f"x{j}"

        lines = [f"LP {self.name or '<unnamed>'}: {self.num_vars} vars, {self.num_rows} rows"]
        terms = " ".join(f"{self.objective[j]:+.17g}*{label(j)}"
                         for j in range(self.num_vars) if self.objective[j] != 0.0)
        lines.append(f"MIN {terms or '0'}")
        ops = {EQ: "=", LE: "<=", GE: ">="}
        for i, con in enumerate(self.constraints):
            terms = " ".join(f"{a:+.17g}*{label(j)}" for j, a in sorted(con.coefs.items()))
            lines.append(f"R{i:<5d} {con.name or '-':<24s} {terms or '0'} {ops[con.relation]} {con.rhs:.17g}")
        for j in range(self.num_vars):
            lines.append(f"B{j:<5d} {label(j):<24s} [{self.lower[j]:.17g}, {self.upper[j]:.17g}]")
        return "\n".join(lines) + "\n"


def _clean_bound(value: float) -> float:
    value = float(value)
    if math.isnan(value):
        raise LpValidationError("bound is NaN")
    if value >= INF_SENTINEL:
        return INF
    if value <= -INF_SENTINEL:
        return -INF
    return value


@dataclass
class LpSolution:
    status: str
    primal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = math.nan
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# variable states in the working problem
_BASIC, _AT_LO, _AT_HI, _FREE = 0, 1, 2, 3


class _Simplex:
    """Working problem ``M z = b`` with ``lo <= z <= hi``.

    Columns are the structural variables, then one slack per row, then any
    phase-1 artificials.
    """

    def __init__(self, lp: LinearProgram, feas_tol: float, opt_tol: float,
                 pivot_tol: float, refactor_every: int, bland_after: int) -> None:
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.bland_after = bland_after
        self.iterations = 0

        n, m = lp.num_vars, lp.num_rows
        self.n, self.m = n, m
        A = lp.matrix()
        b = lp.rhs()
        lo = np.array(lp.lower, dtype=float)
        hi = np.array(lp.upper, dtype=float)
        slo = np.zeros(m)
        shi = np.zeros(m)
        for i, rel in enumerate(lp.relations()):
            if rel == LE:
                shi[i] = INF
            elif rel == GE:
                slo[i] = -INF

        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        state = np.where(np.isfinite(lo), _AT_LO, np.where(np.isfinite(hi), _AT_HI, _FREE))
        resid = b - A @ x

        # slacks absorb what they can; the rest goes to artificials
        art_rows = []
        art_sign = []
        s_val = np.zeros(m)
        s_state = np.full(m, _BASIC)
        basis = np.empty(m, dtype=int)
        for i in range(m):
            r = resid[i]
            clip = min(max(r, slo[i]), shi[i])
            if abs(r - clip) <= feas_tol * (1.0 + abs(b[i])):
                s_val[i] = r
                basis[i] = n + i
            else:
                s_val[i] = clip
                s_state[i] = _AT_LO if clip == slo[i] else _AT_HI
                art_rows.append(i)
                art_sign.append(1.0 if r > clip else -1.0)
        k = len(art_rows)
        art = np.zeros((m, k))
        a_val = np.zeros(k)
        for t, (i, sg) in enumerate(zip(art_rows, art_sign)):
            art[i, t] = sg
            a_val[t] = abs(resid[i] - s_val[i])
            basis[i] = n + m + t

        self.M = np.hstack([A, np.eye(m), art])
        self.b = b
        self.lo = np.concatenate([lo, slo, np.zeros(k)])
        self.hi = np.concatenate([hi, shi, np.full(k, INF)])
        self.z = np.concatenate([x, s_val, a_val])
        self.state = np.concatenate([state, s_state, np.full(k, _BASIC)])
        for i in range(m):
            self.state[basis[i]] = _BASIC
        self.basis = basis
        self.n_art = k
        self.c_struct = np.array(lp.objective, dtype=float)
        self.Binv = np.zeros((m, m))
        self._refactor()

    # -- linear algebra -------------------------------------------------

    def _refactor(self) -> None:
        if self.m == 0:
            return
        B = self.M[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis matrix on refactorization") from exc
        if not np.all(np.isfinite(Binv)):
            raise NumericalBreakdown("non-finite basis inverse")
        self.Binv = Binv
        nonbasic = self.state != _BASIC
        rhs = self.b - self.M[:, nonbasic] @ self.z[nonbasic]
        self.z[self.basis] = Binv @ rhs

    # -- main loop --------------------------------------------------------

    def run(self, cost: np.ndarray, max_iter: int) -> str:
        """Iterate to optimality; returns 'optimal' or 'unbounded'."""
        since_refactor = 0
        degenerate_streak = 0
        dual_tol = self.opt_tol * 0.1
        M, lo, hi = self.M, self.lo, self.hi
        while True:
            if self.iterations >= max_iter:
                raise NumericalBreakdown(f"iteration limit {max_iter} reached")
            y = self.Binv.T @ cost[self.basis] if self.m else np.zeros(0)
            d = cost - M.T @ y
            st = self.state
            can_up = ((st == _AT_LO) | (st == _FREE)) & (d < -dual_tol)
            can_dn = ((st == _AT_HI) | (st == _FREE)) & (d > dual_tol)
            eligible = (can_up | can_dn) & (lo < hi)
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return OPTIMAL
            bland = degenerate_streak >= self.bland_after
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            sigma = 1.0 if d[j] < 0 else -1.0

            w = self.Binv @ M[:, j]
            rate = -sigma * w
            zb = self.z[self.basis]
            lb = lo[self.basis]
            ub = hi[self.basis]
            t_flip = hi[j] - lo[j] if st[j] != _FREE else INF

            dec = (rate < -self.pivot_tol) & np.isfinite(lb)
            inc = (rate > self.pivot_tol) & np.isfinite(ub)
            ratios = np.full(self.m, INF)
            ratios[dec] = (zb[dec] - lb[dec]) / -rate[dec]
            ratios[inc] = (ub[inc] - zb[inc]) / rate[inc]
            np.maximum(ratios, 0.0, out=ratios)
            t_ratio = ratios.min() if self.m else INF

            if t_flip <= t_ratio:
                if not math.isfinite(t_flip):
                    return UNBOUNDED
                t = t_flip
                self.z[self.basis] = zb + t * rate
                self.z[j] = hi[j] if st[j] == _AT_LO else lo[j]
                st[j] = _AT_HI if st[j] == _AT_LO else _AT_LO
                self.iterations += 1
                degenerate_streak = 0
                continue

            if bland:
                ties = np.flatnonzero(ratios <= t_ratio + 1e-12)
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                # Harris-style: among near-minimal ratios take the largest pivot
                relaxed = np.full(self.m, INF)
                tol = self.feas_tol
                relaxed[dec] = (zb[dec] - lb[dec] + tol) / -rate[dec]
                relaxed[inc] = (ub[inc] - zb[inc] + tol) / rate[inc]
                t_max = relaxed.min()
                ties = np.flatnonzero(ratios <= t_max)
                r = int(ties[np.argmax(np.abs(w[ties]))])
            t = ratios[r]

            leaving = int(self.basis[r])
            self.z[self.basis] = zb + t * rate
            self.z[j] = self.z[j] + sigma * t
            if rate[r] < 0:
                self.z[leaving] = lo[leaving]
                st[leaving] = _AT_LO
            else:
                self.z[leaving] = hi[leaving]
                st[leaving] = _AT_HI
            st[j] = _BASIC
            self.basis[r] = j

            piv = w[r]
            if abs(piv) < self.pivot_tol:
                raise NumericalBreakdown("pivot element below tolerance")
            row = self.Binv[r] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[r] = row

            self.iterations += 1
            since_refactor += 1
            degenerate_streak = degenerate_streak + 1 if t <= 1e-12 else 0
            if since_refactor >= self.refactor_every:
                self._refactor()
                since_refactor = 0

    def drive_out_artificials(self) -> None:
        n_real = self.n + self.m
        for r in range(self.m):
            col = self.basis[r]
            if col < n_real:
                continue
            row = self.Binv[r] @ self.M[:, :n_real]
            row[self.state[:n_real] == _BASIC] = 0.0
            movable = self.lo[:n_real] < self.hi[:n_real]
            cands = np.flatnonzero((np.abs(row) > 1e-7) & movable)
            if cands.size == 0:
                continue  # redundant row; the artificial stays basic at zero
            j = int(cands[np.argmax(np.abs(row[cands]))])
            w = self.Binv @ self.M[:, j]
            piv = w[r]
            self.state[col] = _AT_LO
            self.z[col] = 0.0
            self.state[j] = _BASIC
            self.basis[r] = j
            new_row = self.Binv[r] / piv
            self.Binv -= np.outer(w, new_row)
            self.Binv[r] = new_row
        self._refactor()


_defaults = {"feas_tol": FEAS_TOL, "opt_tol": OPT_TOL}


@contextlib.contextmanager
def solver_tolerances(*, feas_tol: float | None = None, opt_tol: float | None = None):
    """Temporarily change the default tolerances used by :func:`solve`."""
    saved = dict(_defaults)
    for key, value in (("feas_tol", feas_tol), ("opt_tol", opt_tol)):
        if value is not None:
            if not 0.0 < value < 1.0:
                raise ValueError(f"{key} must lie in (0, 1), got {value!r}")
            _defaults[key] = float(value)
    try:
        yield
    finally:
        _defaults.update(saved)


def solve(lp: LinearProgram, *, feas_tol: float | None = None, opt_tol: float | None = None,
          pivot_tol: float = PIVOT_TOL, refactor_every: int = 100,
          bland_after: int = 50, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` to a basic optimal solution.

    Dantzig pricing switches to Bland's rule once ``bland_after`` consecutive
    degenerate pivots have been taken.  The basis inverse is rebuilt from
    scratch every ``refactor_every`` pivots.

    Raises
    ------
    LpValidationError
        The LP is malformed.
    NumericalBreakdown
        The solver could not produce a trustworthy answer.
    """
    feas_tol = _defaults["feas_tol"] if feas_tol is None else feas_tol
    opt_tol = _defaults["opt_tol"] if opt_tol is None else opt_tol
    lp.check()
    sx = _Simplex(lp, feas_tol, opt_tol, pivot_tol, refactor_every, bland_after)
    n, m = sx.n, sx.m
    if max_iter is None:
        max_iter = 50 * (n + 2 * m) + 1000

    if sx.n_art:
        phase1 = np.zeros(sx.M.shape[1])
        phase1[n + m:] = 1.0
        if sx.run(phase1, max_iter) != OPTIMAL:
            raise NumericalBreakdown("phase 1 reported unbounded")
        sx._refactor()
        infeas = float(sx.z[n + m:].sum())
        if infeas > feas_tol * (1.0 + np.abs(sx.b).max(initial=0.0)):
            return LpSolution(INFEASIBLE, iterations=sx.iterations)
        sx.hi[n + m:] = 0.0
        sx.z[n + m:][sx.state[n + m:] != _BASIC] = 0.0
        sx.drive_out_artificials()

    cost = np.zeros(sx.M.shape[1])
    cost[:n] = sx.c_struct
    status = sx.run(cost, max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=sx.iterations)
    sx._refactor()

    zb = sx.z[sx.basis]
    viol = np.maximum(sx.lo[sx.basis] - zb, zb - sx.hi[sx.basis])
    scale = 1.0 + np.abs(sx.b).max(initial=0.0)
    if viol.size and viol.max() > 1e3 * feas_tol * scale:
        raise NumericalBreakdown(f"basic solution violates bounds by {viol.max():.3e}")

    y = sx.Binv.T @ cost[sx.basis] if m else np.zeros(0)
    x = sx.z[:n].copy()
    A = sx.M[:, :n]
    return LpSolution(
        status=OPTIMAL,
        primal=x,
        duals=y,
        reduced_costs=sx.c_struct - A.T @ y,
        objective_value=float(sx.c_struct @ x),
        iterations=sx.iterations,
    )


@dataclass
class ResidualReport:
    primal: float
    dual: float
    complementarity: float
    duality_gap: float
    feas_tol: float = FEAS_TOL
    opt_tol: float = OPT_TOL

    @property
    def passed(self) -> bool:
        return (self.primal <= self.feas_tol and self.dual <= self.opt_tol
                and self.complementarity <= self.opt_tol)


def verify_kkt(lp: LinearProgram, sol: LpSolution, *, feas_tol: float = FEAS_TOL,
               opt_tol: float = OPT_TOL) -> ResidualReport:
    """Recompute optimality residuals of ``sol`` directly from the LP data.

    Reduced costs are rebuilt from the row duals, so tampering with either the
    primal or the dual vector shows up.  The dual residual measures how far
    each reduced cost lies outside the sign cone allowed by the bounds that are
    active at ``sol.primal``; complementarity is the largest product of a
    multiplier with its constraint's slack.
    """
    if not sol.optimal:
        raise ValueError("verify_kkt needs an optimal solution")
    n, m = lp.num_vars, lp.num_rows
    x = np.asarray(sol.primal, dtype=float)
    y = np.asarray(sol.duals, dtype=float)
    if x.shape != (n,) or y.shape != (m,):
        raise ValueError(f"dimension mismatch: primal {x.shape} vs {n} vars, "
                         f"duals {y.shape} vs {m} rows")
    A = lp.matrix()
    b = lp.rhs()
    c = np.array(lp.objective)
    lo = np.array(lp.lower)
    hi = np.array(lp.upper)
    ax = A @ x if m else np.zeros(0)
    rel = np.array(lp.relations())

    row_viol = np.zeros(m)
    row_viol[rel == EQ] = np.abs(ax - b)[rel == EQ]
    row_viol[rel == LE] = np.maximum(ax - b, 0.0)[rel == LE]
    row_viol[rel == GE] = np.maximum(b - ax, 0.0)[rel == GE]
    with np.errstate(invalid="ignore"):
        bound_viol = np.maximum(np.nan_to_num(lo - x, nan=0.0, neginf=0.0),
                                np.nan_to_num(x - hi, nan=0.0, neginf=0.0))
    primal = float(max(row_viol.max(initial=0.0), bound_viol.max(initial=0.0)))

    d = c - A.T @ y
    at_lo = np.isfinite(lo) & (x - lo <= feas_tol * (1.0 + np.abs(lo)))
    at_hi = np.isfinite(hi) & (hi - x <= feas_tol * (1.0 + np.abs(hi)))
    # d > 0 is explained only by an active lower bound, d < 0 by an active upper
    var_dual = np.where(at_lo, 0.0, np.maximum(d, 0.0)) + np.where(at_hi, 0.0, np.maximum(-d, 0.0))
    row_sign = np.zeros(m)
    row_sign[rel == LE] = np.maximum(y, 0.0)[rel == LE]
    row_sign[rel == GE] = np.maximum(-y, 0.0)[rel == GE]
    dual = float(max(var_dual.max(initial=0.0), row_sign.max(initial=0.0)))

    slack = np.abs(ax - b)
    row_cs = np.where(rel == EQ, 0.0, np.abs(y) * slack)
    # a multiplier on a missing bound is a dual-feasibility failure, not a CS one
    gap_lo = np.where(np.isfinite(lo), x - lo, 0.0)
    gap_hi = np.where(np.isfinite(hi), hi - x, 0.0)
    var_cs = np.maximum(np.maximum(d, 0.0) * np.abs(gap_lo), np.maximum(-d, 0.0) * np.abs(gap_hi))
    comp = float(max(row_cs.max(initial=0.0), var_cs.max(initial=0.0)))

    z_lo = np.maximum(d, 0.0)
    z_hi = np.maximum(-d, 0.0)
    dual_obj = float(b @ y + np.sum(np.where(z_lo > 0, z_lo * np.nan_to_num(lo, neginf=0.0), 0.0))
                     - np.sum(np.where(z_hi > 0, z_hi * np.nan_to_num(hi, posinf=0.0), 0.0)))
    gap = abs(float(c @ x) - dual_obj)
    return ResidualReport(primal, dual, comp, gap, feas_tol, opt_tol)
