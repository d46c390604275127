import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from gridseam.dso import DsoOffer
from gridseam.generate import generate_scenario
from gridseam.grid import Bus, Generator, Line, OfferBlock, TransmissionSystem
from gridseam.ideal import solve_ideal
from gridseam.iso import (MarketInfeasible, ModelError, block_order_violations, build_iso_lp, clear_market,
                          write_iso_results)
from gridseam.lp import solve
from gridseam.pipeline import build_offers, run_coordination

ILLUSTRATIVE_OFFER = {"dso1": DsoOffer(0.0, 0.6, 0.0, (OfferBlock(0.1, 15.0), OfferBlock(0.5, 25.0)), "dso1", "2")}


def test_illustrative_lp_matches_printed_problem(case):
    lp = build_iso_lp(case.transmission, ILLUSTRATIVE_OFFER)
    sol = solve(lp)
    # 20 P_g + 15 P_dso1 + 25 P_dso2 at its optimum
    assert sol.objective_value == pytest.approx(20 * 5 + 15 * 0.1 + 25 * 0.1)
    costs = sorted(c for c in lp.objective if c)
    assert costs == [15.0, 20.0, 25.0]


def test_illustrative_clearing(case):
    r = clear_market(case.transmission, ILLUSTRATIVE_OFFER)
    assert r.gen_dispatch["G"] == pytest.approx(5.0, abs=1e-8)
    assert r.dso_dispatch["dso1"] == pytest.approx(0.2, abs=1e-8)
    assert r.lmps["2"] == pytest.approx(25.0, abs=1e-8)
    assert r.lmps["1"] == pytest.approx(25.0, abs=1e-8)
    assert r.total_gen_mw == pytest.approx(5.0)
    assert r.line_flows["tr"] == pytest.approx(5.0)


def single_bus(load=4.0):
    return TransmissionSystem((Bus("1", load),), (), (Generator("g", "1", (OfferBlock(10.0, 12.0),)),), "1")


def test_single_bus_lp_shape():
    lp = build_iso_lp(single_bus(), {})
    assert (lp.num_vars, lp.num_rows) == (1, 1)


def test_marginal_unit_pricing():
    r = clear_market(single_bus(), {})
    assert r.gen_dispatch["g"] == pytest.approx(4.0)
    assert r.lmps["1"] == pytest.approx(12.0)


def test_infeasible_market_reports_aggregate():
    with pytest.raises(MarketInfeasible, match="firm load 11"):
        clear_market(single_bus(11.0), {})


def test_offer_at_unknown_bus(case):
    offer = {"x": replace(ILLUSTRATIVE_OFFER["dso1"], coupling_bus="nowhere")}
    with pytest.raises(ModelError):
        build_iso_lp(case.transmission, offer)


def test_symmetric_dsos():
    t = TransmissionSystem((Bus("a", 3.0), Bus("b", 3.0)), (Line("a", "b", 0.1, 10.0, "ab"),),
                           (Generator("g", "a", (OfferBlock(10.0, 30.0),)),), "a")
    offer = DsoOffer(0.0, 1.0, 0.0, (OfferBlock(1.0, 20.0),))
    offers = {"d1": replace(offer, dso_id="d1", coupling_bus="a"), "d2": replace(offer, dso_id="d2", coupling_bus="b")}
    lp = build_iso_lp(t, offers)
    assert sum(name.startswith("dso:d1") for name in lp.var_names) == 1
    assert sum(name.startswith("dso:d2") for name in lp.var_names) == 1
    r = clear_market(t, offers)
    assert r.dso_dispatch["d1"] == pytest.approx(1.0)
    assert r.dso_dispatch["d2"] == pytest.approx(1.0)
    assert r.lmps["a"] == pytest.approx(r.lmps["b"])


def test_negative_p_min_enters_as_load():
    t = TransmissionSystem((Bus("a", 1.0),), (), (Generator("g", "a", (OfferBlock(10.0, 30.0),)),), "a")
    offer = {"d": DsoOffer(-0.5, 0.5, 7.0, (OfferBlock(0.5, 10.0), OfferBlock(0.5, 40.0)), "d", "a")}
    r = clear_market(t, offer)
    assert r.dso_dispatch["d"] == pytest.approx(0.0)
    assert r.gen_dispatch["g"] == pytest.approx(1.0)
    assert r.lmps["a"] == pytest.approx(30.0)


@pytest.mark.parametrize("seed", range(8))
def test_market_properties(seed):
    s = generate_scenario(seed)
    _, offers = build_offers(s)
    r = clear_market(s.transmission, offers, s.base_mva)
    for d, o in offers.items():
        assert o.p_min - 1e-8 <= r.dso_dispatch[d] <= o.p_max + 1e-8
    assert block_order_violations(r, s.transmission, offers) == []
    bus_of = {g.id: g.bus for g in s.transmission.generators}
    for g in s.transmission.generators:
        lmp = r.lmps[bus_of[g.id]]
        for blk, x in zip(g.blocks, r.gen_block_dispatch[g.id]):
            if x >= blk.width - 1e-8:
                assert blk.price <= lmp + 1e-6
            if x <= 1e-8:
                assert blk.price >= lmp - 1e-6
    limits = {ln.id: ln.flow_limit for ln in s.transmission.lines}
    if all(abs(f) < limits[k] - 1e-7 for k, f in r.line_flows.items()):
        assert np.ptp(list(r.lmps.values())) <= 1e-6
    load = sum(b.firm_load for b in s.transmission.buses)
    assert r.total_gen_mw + sum(r.dso_dispatch.values()) == pytest.approx(load, abs=1e-7)


def test_large_fixture_matches_oracle():
    s = generate_scenario(118, n_buses=118, n_feeders=2, feeder_nodes=12)
    coord = run_coordination(s)
    ideal = solve_ideal(s, probe=False)
    assert coord.iso.total_gen_mw == pytest.approx(sum(ideal.gen_dispatch.values()), abs=1e-5)


def test_result_files(tmp_path, case):
    r = clear_market(case.transmission, ILLUSTRATIVE_OFFER)
    write_iso_results(r, tmp_path, ILLUSTRATIVE_OFFER)
    lmps = list(csv.reader(open(tmp_path / "lmps.csv")))
    assert lmps[0] == ["bus", "lmp_per_mwh"]
    disp = list(csv.reader(open(tmp_path / "dispatch.csv")))
    assert disp[0] == ["participant", "dispatch_mw"]
    assert {row[0] for row in disp[1:]} == {"G", "dso1"}
    summary = json.load(open(tmp_path / "iso_result.json"))
    assert summary["objective_per_h"] == pytest.approx(104.0)
    assert not list(tmp_path.glob(".*tmp"))
