"""ISO-DSO coordination end to end: trace bids, clear, settle."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dso import CURVE_TOL, SLOPE_MERGE_TOL, DsoOffer, PwlConvexCost, feasible_range, to_offer_blocks, trace_bid_curve
from .grid import Scenario
from .iso import IsoResult, clear_market
from .settlement import DsoSettlement, settle


@dataclass
class CoordinationResult:
    scenario: str
    curves: dict[str, PwlConvexCost]
    offers: dict[str, DsoOffer]
    iso: IsoResult
    settlements: dict[str, DsoSettlement] = field(default_factory=dict)

    @property
    def total_objective(self) -> float:
        """Wholesale objective with the DSO fixed costs added back."""
        return self.iso.objective + sum(o.fixed_cost for o in self.offers.values())


def build_offers(s: Scenario, *, slope_merge_tol: float = SLOPE_MERGE_TOL, curve_tol: float = CURVE_TOL
                 ) -> tuple[dict[str, PwlConvexCost], dict[str, DsoOffer]]:
    curves, offers = {}, {}
    for d in s.distributions:
        curve = trace_bid_curve(d, p_range=feasible_range(d), slope_merge_tol=slope_merge_tol, curve_tol=curve_tol)
        curves[d.id] = curve
        offers[d.id] = to_offer_blocks(curve, slope_merge_tol=slope_merge_tol, dso_id=d.id,
                                       coupling_bus=d.coupling_bus)
    return curves, offers


def run_coordination(s: Scenario, *, slope_merge_tol: float = SLOPE_MERGE_TOL,
                     curve_tol: float = CURVE_TOL) -> CoordinationResult:
    """Trace every DSO bid curve, clear the wholesale market, settle each DSO."""
    curves, offers = build_offers(s, slope_merge_tol=slope_merge_tol, curve_tol=curve_tol)
    iso = clear_market(s.transmission, offers, s.base_mva)
    result = CoordinationResult(s.name, curves, offers, iso)
    for d in s.distributions:
        result.settlements[d.id] = settle(d, iso.dso_dispatch[d.id], iso.lmps[d.coupling_bus])
    return result
