"""Seeded random scenarios for property runs and oracle audits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (DDGAG, DRAG, REAG, Aggregator, Branch, Bus, DistNode, DistributionSystem, Generator, Line,
                   OfferBlock, Scenario, TransmissionSystem, validate)

PRICE_JITTER = 1e-3
MAX_ATTEMPTS = 50


class GeneratorParameterError(ValueError):
    """Parameters that cannot yield a feasible scenario."""


@dataclass(frozen=True)
class GeneratorConfig:
    buses: tuple[int, int] = (5, 15)
    feeders: tuple[int, int] = (1, 3)
    feeder_nodes: tuple[int, int] = (6, 30)
    aggregators: tuple[int, int] = (2, 6)
    price_range: tuple[float, float] = (10.0, 60.0)
    price_jitter: float = PRICE_JITTER
    bus_load: tuple[float, float] = (0.0, 40.0)
    node_load: tuple[float, float] = (0.0, 0.3)
    capacity_margin: float = 1.5
    base_mva: float = 10.0

    def check(self) -> None:
        def rng(name, lo, hi, least):
            if not least <= lo <= hi:
                raise GeneratorParameterError(f"{name}: need {least} <= min <= max, got ({lo}, {hi})")

        rng("buses", *self.buses, 1)
        rng("feeders", *self.feeders, 0)
        rng("feeder_nodes", *self.feeder_nodes, 1)
        rng("aggregators", *self.aggregators, 0)
        rng("price_range", *self.price_range, 0.0)
        rng("bus_load", *self.bus_load, 0.0)
        rng("node_load", *self.node_load, 0.0)
        if not 0.0 <= self.price_jitter < 1.0:
            raise GeneratorParameterError("price_jitter must lie in [0, 1)")
        if self.capacity_margin < 1.0:
            raise GeneratorParameterError("capacity_margin < 1 cannot cover the load")
        if self.base_mva <= 0:
            raise GeneratorParameterError("base_mva must be > 0")


def _int(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def _blocks(rng, count, lo, hi, jitter, increasing, width=(0.1, 1.0)):
    prices = np.sort(rng.uniform(lo, hi, count))
    prices *= 1.0 + rng.uniform(-jitter, jitter, count)
    prices = np.sort(prices)
    if not increasing:
        prices = prices[::-1]
    widths = rng.uniform(*width, count)
    return tuple(OfferBlock(round(float(w), 6), float(p)) for w, p in zip(widths, prices))


def random_feeder(rng: np.random.Generator, dso_id: str, coupling_bus: str, cfg: GeneratorConfig,
                  n_nodes: int | None = None, n_aggregators: int | None = None) -> DistributionSystem:
    """A radial feeder with random loads, impedances, limits and DER aggregators."""
    n = n_nodes if n_nodes is not None else _int(rng, cfg.feeder_nodes)
    ids = [f"n{k}" for k in range(n)]
    parent = [-1] + [int(rng.integers(max(0, k - 3), k)) for k in range(1, n)]
    loads = rng.uniform(*cfg.node_load, n)
    loads[0] = 0.0
    pf = rng.uniform(0.1, 0.5, n)
    nodes = tuple(DistNode(ids[k], round(float(loads[k]), 6), round(float(loads[k] * pf[k]), 6))
                  for k in range(n))

    downstream = loads.copy()
    for k in range(n - 1, 0, -1):
        downstream[parent[k]] += downstream[k]
    branches = []
    for k in range(1, n):
        slack = rng.uniform(0.05, 1.0)
        branches.append(Branch(
            f"{ids[parent[k]]}-{ids[k]}", ids[parent[k]], ids[k],
            r=round(float(rng.uniform(0.002, 0.01)), 6), x=round(float(rng.uniform(0.002, 0.01)), 6),
            pl_max=round(float(downstream[k] + slack), 6), ql_max=round(float(downstream[k] + 1.0), 6)))

    m = n_aggregators if n_aggregators is not None else _int(rng, cfg.aggregators)
    lo, hi = cfg.price_range
    aggs = []
    for k in range(m):
        node = ids[int(rng.integers(0, n))]
        kind = rng.choice([DDGAG, DDGAG, DRAG, REAG])
        if kind == REAG:
            aggs.append(Aggregator(f"{dso_id}-R{k}", REAG, node, (), 0.0,
                                   round(float(rng.uniform(0.05, 0.5)), 6)))
        else:
            blocks = _blocks(rng, _int(rng, (1, 3)), lo, hi, cfg.price_jitter, increasing=kind == DDGAG)
            tag = "G" if kind == DDGAG else "D"
            aggs.append(Aggregator(f"{dso_id}-{tag}{k}", str(kind), node, blocks,
                                   round(float(rng.uniform(0.0, 0.3)), 6)))
    return DistributionSystem(dso_id, coupling_bus, ids[0], nodes, tuple(branches), tuple(aggs),
                              base_mva=cfg.base_mva)


def _transmission(rng, cfg: GeneratorConfig, n_buses: int, extra_load: float) -> TransmissionSystem:
    ids = [f"b{k}" for k in range(n_buses)]
    loads = rng.uniform(*cfg.bus_load, n_buses)
    total = float(loads.sum()) + extra_load
    lines = []
    edges = set()
    for k in range(1, n_buses):
        j = int(rng.integers(0, k))
        edges.add((j, k))
    for _ in range(int(rng.integers(0, n_buses // 2 + 1))):
        a, b = sorted(int(v) for v in rng.choice(n_buses, 2, replace=False)) if n_buses > 1 else (0, 0)
        if a != b:
            edges.add((a, b))
    for a, b in sorted(edges):
        lines.append(Line(ids[a], ids[b], reactance=round(float(rng.uniform(0.05, 0.3)), 6),
                          flow_limit=round(float(rng.uniform(0.15, 0.8) * max(total, 1.0)), 6),
                          id=f"{ids[a]}-{ids[b]}"))

    n_gen = _int(rng, (2, max(2, n_buses // 2 + 1)))
    lo, hi = cfg.price_range
    gens = []
    capacity = cfg.capacity_margin * total + 1.0
    shares = rng.dirichlet(np.ones(n_gen))
    for k in range(n_gen):
        nb = _int(rng, (1, 3))
        blocks = _blocks(rng, nb, lo, hi, cfg.price_jitter, increasing=True)
        scale = shares[k] * capacity / sum(b.width for b in blocks)
        blocks = tuple(OfferBlock(round(b.width * scale, 6), b.price) for b in blocks)
        gens.append(Generator(f"g{k}", ids[int(rng.integers(0, n_buses))], blocks))
    buses = tuple(Bus(ids[k], round(float(loads[k]), 6)) for k in range(n_buses))
    return TransmissionSystem(buses, tuple(lines), tuple(gens), ids[0])


def _feasible(s: Scenario) -> bool:
    from .ideal import solve_ideal
    from .iso import MarketInfeasible

    try:
        solve_ideal(s, probe=False)
    except MarketInfeasible:
        return False
    return True


def generate_scenario(seed: int, config: GeneratorConfig | None = None, *, n_buses: int | None = None,
                      n_feeders: int | None = None, feeder_nodes: int | None = None,
                      n_aggregators: int | None = None, name: str | None = None) -> Scenario:
    """Random valid, feasible scenario; the same seed always gives the same scenario.

    Explicit counts override the ranges in ``config``.  Draws that turn out
    infeasible (for example a congested corridor) are redrawn from the same
    seeded stream.
    """
    cfg = config or GeneratorConfig()
    cfg.check()
    for label, v, least in (("n_buses", n_buses, 1), ("n_feeders", n_feeders, 0),
                            ("feeder_nodes", feeder_nodes, 1), ("n_aggregators", n_aggregators, 0)):
        if v is not None and v < least:
            raise GeneratorParameterError(f"{label} must be >= {least}, got {v}")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        nb = n_buses if n_buses is not None else _int(rng, cfg.buses)
        nf = n_feeders if n_feeders is not None else _int(rng, cfg.feeders)
        feeders = []
        for k in range(nf):
            bus = f"b{int(rng.integers(0, nb))}"
            feeders.append(random_feeder(rng, f"dso{k + 1}", bus, cfg, feeder_nodes, n_aggregators))
        extra = sum(n.firm_load_p for d in feeders for n in d.nodes)
        trans = _transmission(rng, cfg, nb, extra)
        s = Scenario(trans, tuple(feeders), name=name or f"random-{seed}", base_mva=cfg.base_mva,
                     metadata={"seed": seed, "generator": "gridseam.generate"})
        if validate(s):
            continue
        if _feasible(s):
            return s
    raise GeneratorParameterError(f"no feasible scenario after {MAX_ATTEMPTS} draws (seed {seed})")


def random_distribution(seed: int, n_nodes: int | None = None, n_aggregators: int | None = None,
                        config: GeneratorConfig | None = None) -> DistributionSystem:
    """A single random feeder with a nonempty export range."""
    from .dso import EmptyBidRange, feasible_range

    cfg = config or GeneratorConfig()
    cfg.check()
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        d = random_feeder(rng, "dso1", "b0", cfg, n_nodes, n_aggregators)
        try:
            feasible_range(d)
        except EmptyBidRange:
            continue
        return d
    raise GeneratorParameterError(f"no feasible feeder after {MAX_ATTEMPTS} draws (seed {seed})")
