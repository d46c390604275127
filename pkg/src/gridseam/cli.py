"""``gridseam`` command line.

Exit codes: 0 success, 1 domain failure (invalid scenario, infeasible market,
coordination-vs-oracle mismatch), 2 usage or I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .dso import CURVE_TOL, SLOPE_MERGE_TOL, EmptyBidRange, InvalidDistribution, TracingError, feasible_range
from .dso import to_offer_blocks, trace_bid_curve, write_curve_csv
from .generate import GeneratorConfig, GeneratorParameterError, generate_scenario
from .grid import Scenario, ScenarioError, emit_scenario, read_scenario, validate
from .ideal import ScenarioMismatch, compare, solve_ideal
from .io import write_json, write_text
from .iso import MarketInfeasible, ModelError, clear_market, write_iso_results
from .lp import NumericalBreakdown, solver_tolerances
from .settlement import DispatchOutOfRange, UnboundedPricing, settle, write_settlement

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

DOMAIN_ERRORS = (ScenarioError, EmptyBidRange, InvalidDistribution, MarketInfeasible, DispatchOutOfRange,
                 GeneratorParameterError, ScenarioMismatch)
NUMERIC_ERRORS = (NumericalBreakdown, TracingError, UnboundedPricing, ModelError)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _range(text: str) -> tuple[float, float]:
    """``"N"`` or ``"LO:HI"``."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO:HI, got {text!r}") from None
    if len(vals) == 1:
        return vals[0], vals[0]
    if len(vals) == 2:
        return vals[0], vals[1]
    raise argparse.ArgumentTypeError(f"expected N or LO:HI, got {text!r}")


def _int_range(text: str) -> tuple[int, int]:
    lo, hi = _range(text)
    if lo != int(lo) or hi != int(hi):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return int(lo), int(hi)


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridseam", description="Transmission-distribution market coordination.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, scenario=True, out=True):
        if scenario:
            sp.add_argument("--scenario", type=Path, required=True, help="scenario JSON file")
        sp.add_argument("--out", type=Path, required=out, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=_positive, default=1e-5, help="comparison tolerance")
        sp.add_argument("--feas-tol", type=_positive, default=None, help="LP feasibility tolerance")
        sp.add_argument("--opt-tol", type=_positive, default=None, help="LP optimality tolerance")
        sp.add_argument("--slope-merge-tol", type=_positive, default=SLOPE_MERGE_TOL)
        sp.add_argument("--curve-tol", type=_positive, default=CURVE_TOL)

    common(sub.add_parser("validate", help="check a scenario file"), out=False)
    common(sub.add_parser("bidcurve", help="trace DSO bid curves"))
    common(sub.add_parser("run", help="trace, clear and settle"))
    cp = sub.add_parser("compare", help="coordination against the ideal co-optimization")
    common(cp, scenario=False)
    src = cp.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path, help="scenario JSON file")
    src.add_argument("--random", type=int, metavar="N", help="audit N generated scenarios (seeds seed..seed+N-1)")
    gp = sub.add_parser("generate", help="write a random scenario")
    common(gp, scenario=False)
    gp.add_argument("--buses", type=_int_range, default=None, metavar="N|LO:HI")
    gp.add_argument("--feeders", type=_int_range, default=None, metavar="N|LO:HI")
    gp.add_argument("--feeder-nodes", type=_int_range, default=None, metavar="N|LO:HI")
    gp.add_argument("--aggregators", type=_int_range, default=None, metavar="N|LO:HI")
    gp.add_argument("--price-range", type=_range, default=None, metavar="LO:HI")
    gp.add_argument("--name", default=None)
    return p


# ---------------------------------------------------------------------------
# commands


def _load(path: Path) -> Scenario:
    return read_scenario(path)


def cmd_validate(args) -> int:
    s = read_scenario(args.scenario, check=False)
    problems = validate(s)
    for v in problems:
        print(v)
    if args.out is not None:
        write_json(args.out / "violations.json",
                   [{"code": v.code, "path": v.path, "message": v.message} for v in problems])
    if problems:
        print(f"{args.scenario}: {len(problems)} violation(s)", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"{args.scenario}: valid ({len(s.transmission.buses)} buses, {len(s.distributions)} distribution systems)")
    return EXIT_OK


def _trace(args, d):
    curve = trace_bid_curve(d, p_range=feasible_range(d), slope_merge_tol=args.slope_merge_tol,
                            curve_tol=args.curve_tol)
    offer = to_offer_blocks(curve, slope_merge_tol=args.slope_merge_tol, dso_id=d.id, coupling_bus=d.coupling_bus)
    return curve, offer


def _write_curve(out: Path, dso_id: str, curve) -> None:
    write_curve_csv(curve, out / f"bidcurve_{dso_id}_breakpoints.csv", out / f"bidcurve_{dso_id}_segments.csv")


def cmd_bidcurve(args) -> int:
    s = _load(args.scenario)
    status = EXIT_OK
    for d in s.distributions:
        try:
            curve, _ = _trace(args, d)
        except EmptyBidRange as exc:
            print(f"{d.id}: {exc}", file=sys.stderr)
            status = EXIT_DOMAIN
            continue
        _write_curve(args.out, d.id, curve)
        pts = ", ".join(f"({_fmt(p)}, {_fmt(c)})" for p, c in curve.breakpoints)
        slopes = ", ".join(_fmt(float(v)) for v in curve.slopes)
        print(f"{d.id}: breakpoints {pts}; marginal costs [{slopes}] $/MWh")
    return status


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except DOMAIN_ERRORS + NUMERIC_ERRORS as exc:
        raise StageError(name, exc) from exc


def cmd_run(args) -> int:
    s = _load(args.scenario)
    curves, offers = {}, {}
    for d in s.distributions:
        curves[d.id], offers[d.id] = _stage(f"trace:{d.id}", _trace, args, d)
        _write_curve(args.out, d.id, curves[d.id])
    iso = _stage("clear", clear_market, s.transmission, offers, s.base_mva)
    write_iso_results(iso, args.out, offers)
    for g, p in iso.gen_dispatch.items():
        print(f"{g}: {_fmt(p)} MW")
    for d in s.distributions:
        st = _stage(f"settle:{d.id}", settle, d, iso.dso_dispatch[d.id], iso.lmps[d.coupling_bus])
        write_settlement(d, st, args.out)
        dl = ", ".join(_fmt(st.dlmp[n.id]) for n in d.nodes)
        print(f"{d.id}: p_dso* = {_fmt(st.p_star)} MW, LMP = {_fmt(st.lmp_star)} $/MWh, "
              f"D-LMP = ({dl}) $/MWh, net position = {_fmt(st.dso_net_position)} $/h")
    print("LMP: " + ", ".join(f"{b} = {_fmt(v)}" for b, v in iso.lmps.items()) + " $/MWh")
    return EXIT_OK


def _compare_one(args, s: Scenario):
    from .pipeline import run_coordination

    coord = _stage("coordination", run_coordination, s, slope_merge_tol=args.slope_merge_tol,
                   curve_tol=args.curve_tol)
    ideal = _stage("ideal", solve_ideal, s)
    return compare(coord, ideal, s, tol=args.tol)


def cmd_compare(args) -> int:
    if args.scenario is not None:
        report = _compare_one(args, _load(args.scenario))
        write_json(args.out / "comparison.json", report.to_dict())
        dev = ", ".join(f"{k} {v:.3g}" for k, v in report.deviations.items())
        print(f"{report.scenario}: {report.status} (max deviation: {dev}; "
              f"objective {report.objective_rel_deviation:.3g} relative)")
        return EXIT_OK if report.status in ("pass", "degenerate") else EXIT_DOMAIN
    if args.random < 1:
        raise GeneratorParameterError("--random needs N >= 1")
    reports = []
    t0 = time.perf_counter()
    for seed in range(args.seed, args.seed + args.random):
        r = _compare_one(args, generate_scenario(seed))
        reports.append(r.to_dict())
        if r.status != "pass":
            print(f"{r.scenario}: {r.status}")
    counts = {k: sum(r["status"] == k for r in reports) for k in ("pass", "degenerate", "fail")}
    summary = {"scenarios": len(reports), **counts, "seconds": round(time.perf_counter() - t0, 3),
               "tolerance": args.tol, "reports": reports}
    write_json(args.out / "comparison_batch.json", summary)
    print(f"{len(reports)} scenarios: {counts['pass']} pass, {counts['degenerate']} degenerate, "
          f"{counts['fail']} fail")
    return EXIT_OK if counts["fail"] == 0 else EXIT_DOMAIN


def cmd_generate(args) -> int:
    cfg = GeneratorConfig()
    overrides = {k: getattr(args, a) for k, a in (("buses", "buses"), ("feeders", "feeders"),
                                                   ("feeder_nodes", "feeder_nodes"), ("aggregators", "aggregators"),
                                                   ("price_range", "price_range")) if getattr(args, a) is not None}
    cfg = replace(cfg, **overrides)
    s = generate_scenario(args.seed, cfg, name=args.name)
    target = args.out if args.out.suffix == ".json" else args.out / "scenario.json"
    write_text(target, emit_scenario(s))
    sizes = ", ".join(f"{d.id}: {len(d.nodes)} nodes / {len(d.aggregators)} aggregators" for d in s.distributions)
    print(f"wrote {target} ({len(s.transmission.buses)} buses; {sizes or 'no distribution systems'})")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "bidcurve": cmd_bidcurve, "run": cmd_run, "compare": cmd_compare,
            "generate": cmd_generate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        with solver_tolerances(feas_tol=args.feas_tol, opt_tol=args.opt_tol):
            return COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, NUMERIC_ERRORS) else EXIT_DOMAIN
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN if exc.violations else EXIT_USAGE
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NUMERIC_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
