"""Small built-in scenarios."""

from __future__ import annotations

from .grid import (DDGAG, Aggregator, Branch, Bus, DistNode, DistributionSystem, Generator, Line, OfferBlock,
                   Scenario, TransmissionSystem)


def illustrative_feeder() -> DistributionSystem:
    """Two-node feeder: DDG1 (25 $/MWh) at the substation, DDG2 (15 $/MWh)
    behind a 0.1 MW branch.  Both units are 0.5 MW with zero minimum output.

    Impedances, reactive limits and the voltage band are not binding.
    """
    return DistributionSystem(
        id="dso1",
        coupling_bus="2",
        substation_node="1",
        nodes=(DistNode("1"), DistNode("2")),
        branches=(Branch("1-2", "1", "2", r=0.01, x=0.01, pl_max=0.1, ql_max=1.0),),
        aggregators=(
            Aggregator("DDG1", DDGAG, "1", (OfferBlock(0.5, 25.0),)),
            Aggregator("DDG2", DDGAG, "2", (OfferBlock(0.5, 15.0),)),
        ),
    )


def illustrative() -> Scenario:
    """One 5 MW generator at 20 $/MWh feeding a 5.2 MW load over a 6 MW line;
    the DSO sits at the load bus."""
    trans = TransmissionSystem(
        buses=(Bus("1", 0.0), Bus("2", 5.2)),
        lines=(Line("1", "2", reactance=0.1, flow_limit=6.0, id="tr"),),
        generators=(Generator("G", "1", (OfferBlock(5.0, 20.0),)),),
        reference_bus="1",
    )
    return Scenario(trans, (illustrative_feeder(),), name="illustrative", base_mva=1.0)
