"""Transmission-distribution market coordination with exact DSO bid curves."""

__version__ = "0.1.0"

from .dso import (DsoOffer, PwlConvexCost, build_dso_lp, convexity_check, feasible_range, to_offer_blocks,
                  trace_bid_curve)
from .grid import Scenario, ScenarioError, emit_scenario, load_scenario, read_scenario, validate
from .ideal import build_ideal_lp, compare, solve_ideal
from .iso import build_iso_lp, clear_market
from .lp import LinearProgram, solve, verify_kkt
from .pipeline import run_coordination
from .settlement import compute_payments, dso_dispatch, dso_prices, settle

__all__ = [
    "DsoOffer", "LinearProgram", "PwlConvexCost", "Scenario", "ScenarioError", "build_dso_lp", "build_ideal_lp",
    "build_iso_lp", "clear_market", "compare", "compute_payments", "convexity_check", "dso_dispatch",
    "dso_prices", "emit_scenario", "feasible_range", "load_scenario", "read_scenario", "run_coordination",
    "settle", "solve", "solve_ideal", "to_offer_blocks", "trace_bid_curve", "validate", "verify_kkt",
]
