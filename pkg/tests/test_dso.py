import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gridseam.dso import (DsoOffer, EmptyBidRange, InvalidDistribution, PwlConvexCost, build_dso_lp,
                          convexity_check, dso_model, feasible_range, to_offer_blocks, trace_bid_curve,
                          write_curve_csv)
from gridseam.generate import random_distribution
from gridseam.grid import DDGAG, REAG, Aggregator, Branch, DistNode, DistributionSystem, OfferBlock
from gridseam.lp import INFEASIBLE, solve


def lp_value(dist, p):
    sol = solve(build_dso_lp(dist, p))
    return sol.objective_value if sol.optimal else None


def single_ddg():
    return DistributionSystem("one", "b", "s", (DistNode("s"), DistNode("a")),
                              (Branch("s-a", "s", "a", 0.01, 0.01, 5.0, 5.0),),
                              (Aggregator("G", DDGAG, "a", (OfferBlock(1.0, 10.0),)),))


def test_illustrative_lp_at_0_2(feeder):
    lp, model = dso_model(feeder, 0.2)
    sol = solve(lp)
    assert sol.objective_value == pytest.approx(4.0, abs=1e-10)
    disp = model.dispatch(sol.primal)
    assert disp["DDG1"] == pytest.approx(0.1, abs=1e-10)
    assert disp["DDG2"] == pytest.approx(0.1, abs=1e-10)


def test_illustrative_lp_infeasible_beyond_range(feeder):
    assert solve(build_dso_lp(feeder, 0.7)).status == INFEASIBLE


def test_null_system():
    d = DistributionSystem("z", "b", "s", (DistNode("s"), DistNode("a")),
                           (Branch("s-a", "s", "a", 0.01, 0.01, 1.0, 1.0),),
                           (Aggregator("G", DDGAG, "a", (OfferBlock(1.0, 0.0),)),))
    lp, model = dso_model(d, 0.0)
    sol = solve(lp)
    assert sol.objective_value == 0.0
    assert model.dispatch(sol.primal) == {"G": 0.0}


def test_invalid_distribution_rejected(feeder):
    bad = replace(feeder, branches=(replace(feeder.branches[0], pl_max=-1.0),))
    with pytest.raises(InvalidDistribution):
        build_dso_lp(bad, 0.0)
    with pytest.raises(ValueError):
        build_dso_lp(feeder, float("nan"))


def test_feasible_range_illustrative(feeder):
    lo, hi = feasible_range(feeder)
    assert lo == pytest.approx(0.0, abs=1e-10)
    assert hi == pytest.approx(0.6, abs=1e-10)


def test_feasible_range_fixed_injection():
    d = DistributionSystem("pv", "b", "s", (DistNode("s"), DistNode("a")),
                           (Branch("s-a", "s", "a", 0.01, 0.01, 5.0, 5.0),),
                           (Aggregator("PV", REAG, "a", (), 0.0, 1.0),))
    lo, hi = feasible_range(d)
    assert (lo, hi) == pytest.approx((1.0, 1.0), abs=1e-10)
    curve = trace_bid_curve(d)
    assert curve.breakpoints == ((pytest.approx(1.0), pytest.approx(0.0)),)
    offer = to_offer_blocks(curve)
    assert offer.blocks == () and offer.p_min == offer.p_max


def test_empty_range():
    d = DistributionSystem("x", "b", "s", (DistNode("s"), DistNode("a", firm_load_p=2.0)),
                           (Branch("s-a", "s", "a", 0.01, 0.01, 1.0, 5.0),))
    with pytest.raises(EmptyBidRange):
        feasible_range(d)


def test_feasible_range_grid_scan():
    d = random_distribution(11, n_nodes=6, n_aggregators=3)
    lo, hi = feasible_range(d)
    grid = np.arange(np.floor(lo * 1e3) / 1e3 - 0.01, hi + 0.01, 1e-3)
    feasible = [p for p in grid if solve(build_dso_lp(d, p)).optimal]
    assert feasible
    assert abs(min(feasible) - lo) <= 1e-3
    assert abs(max(feasible) - hi) <= 1e-3


def test_trace_illustrative(feeder):
    curve = trace_bid_curve(feeder)
    assert_allclose(curve.p, [0.0, 0.1, 0.6], atol=1e-8)
    assert_allclose(curve.c, [0.0, 1.5, 14.0], atol=1e-8)
    assert_allclose(curve.slopes, [15.0, 25.0], atol=1e-8)


def test_trace_single_segment():
    curve = trace_bid_curve(single_ddg())
    assert_allclose(curve.p, [0.0, 1.0], atol=1e-10)
    assert_allclose(curve.c, [0.0, 10.0], atol=1e-10)
    assert_allclose(curve.slopes, [10.0])


def dense_check(d, curve, points=200):
    ps = np.linspace(curve.p_min, curve.p_max, points)
    return max(abs(float(curve(p)) - lp_value(d, p)) for p in ps)


def test_trace_matches_dense_sampling():
    d = random_distribution(3, n_nodes=6, n_aggregators=3)
    curve = trace_bid_curve(d)
    assert dense_check(d, curve) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_random_curves_convex_and_exact(seed):
    d = random_distribution(seed)
    curve = trace_bid_curve(d)
    assert convexity_check(curve).passed
    rng = np.random.default_rng(seed)
    for p in rng.uniform(curve.p_min, curve.p_max, 10):
        v = lp_value(d, p)
        assert abs(float(curve(p)) - v) <= 1e-8 * (1 + abs(v)) + 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_slope_equals_coupling_dual_inside_segments(seed):
    d = random_distribution(100 + seed)
    curve = trace_bid_curve(d)
    for (p0, _), (p1, _), slope in zip(curve.breakpoints, curve.breakpoints[1:], curve.slopes):
        lp = build_dso_lp(d, 0.5 * (p0 + p1))
        sol = solve(lp)
        assert sol.duals[lp.row("coupling")] == pytest.approx(slope, abs=1e-6)


def test_tightening_a_branch_never_lowers_cost():
    compared = strict_increase = 0
    for seed in range(4):
        d = random_distribution(200 + seed, n_nodes=8)
        loose = trace_bid_curve(d)
        for k, br in enumerate(d.branches):
            branches = list(d.branches)
            branches[k] = replace(br, pl_max=br.pl_max * 0.6)
            tight = replace(d, branches=tuple(branches))
            try:
                lo, hi = feasible_range(tight)
            except EmptyBidRange:
                continue
            strict = trace_bid_curve(tight)
            gaps = [float(strict(p)) - float(loose(p)) for p in np.linspace(lo, hi, 30)]
            assert min(gaps) >= -1e-8
            compared += 1
            strict_increase += max(gaps) > 1e-6
    assert compared >= 5 and strict_increase >= 1


def test_offer_blocks_illustrative(feeder):
    offer = to_offer_blocks(trace_bid_curve(feeder))
    assert offer.p_min == pytest.approx(0.0, abs=1e-12)
    assert offer.fixed_cost == pytest.approx(0.0, abs=1e-12)
    assert [(b.width, b.price) for b in offer.blocks] == [(pytest.approx(0.1), pytest.approx(15.0)),
                                                          (pytest.approx(0.5), pytest.approx(25.0))]


def test_equal_slopes_merge():
    offer = to_offer_blocks(PwlConvexCost(((0.0, 0.0), (1.0, 15.0), (3.0, 45.0))))
    assert len(offer.blocks) == 1
    assert offer.blocks[0].width == pytest.approx(3.0)
    assert offer.blocks[0].price == pytest.approx(15.0)


@pytest.mark.parametrize("seed", range(5))
def test_offer_reconstructs_curve(seed):
    curve = trace_bid_curve(random_distribution(300 + seed))
    offer = to_offer_blocks(curve)
    assert sum(b.width for b in offer.blocks) == pytest.approx(offer.p_max - offer.p_min, abs=1e-9)
    prices = [b.price for b in offer.blocks]
    assert prices == sorted(prices)
    back = offer.to_curve()
    for p in np.linspace(curve.p_min, curve.p_max, 25):
        assert float(back(p)) == pytest.approx(float(curve(p)), abs=1e-8)


def test_convexity_check():
    assert convexity_check(PwlConvexCost(((0, 0), (0.1, 1.5), (0.6, 14.0)))).passed
    rep = convexity_check(PwlConvexCost(((0, 0), (1, 10), (2, 19))))
    assert not rep.passed
    assert rep.max_decrease == pytest.approx(1.0)


def test_curve_rejects_bad_breakpoints():
    with pytest.raises(ValueError):
        PwlConvexCost(((1.0, 0.0), (0.5, 1.0)))
    with pytest.raises(ValueError):
        PwlConvexCost(())


def test_curve_outside_range_is_nan(feeder):
    curve = trace_bid_curve(feeder)
    assert np.isnan(curve(0.7))
    assert float(curve(0.35)) == pytest.approx(1.5 + 25 * 0.25)


def test_offer_cost(feeder):
    offer = DsoOffer(0.0, 0.6, 0.0, (OfferBlock(0.1, 15.0), OfferBlock(0.5, 25.0)))
    assert offer.cost(0.2) == pytest.approx(4.0)


def test_curve_csv(tmp_path, feeder):
    curve = trace_bid_curve(feeder)
    write_curve_csv(curve, tmp_path / "bp.csv", tmp_path / "seg.csv")
    rows = list(csv.reader(open(tmp_path / "bp.csv")))
    assert rows[0] == ["breakpoint_index", "p_mw", "cost_per_h"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    seg = list(csv.reader(open(tmp_path / "seg.csv")))
    assert seg[0] == ["segment_index", "marginal_cost_per_mwh"]
    assert float(seg[2][1]) == pytest.approx(25.0)
