"""Two-bus, two-node case: trace the DSO bid, clear the ISO, settle the feeder.

Run with ``python demos/illustrative_walkthrough.py``.
"""

from gridseam.cases import illustrative
from gridseam.pipeline import run_coordination

s = illustrative()
coord = run_coordination(s)

for dso_id, curve in coord.curves.items():
    pts = ", ".join(f"({p:g} MW, {c:g} $/h)" for p, c in curve.breakpoints)
    print(f"{dso_id} bid curve: {pts}")
    print(f"  marginal costs: {[float(v) for v in curve.slopes]} $/MWh")

iso = coord.iso
print("generator dispatch:", {g: round(p, 6) for g, p in iso.gen_dispatch.items()})
print("bus LMPs:", {b: round(v, 6) for b, v in iso.lmps.items()})

for dso_id, st in coord.settlements.items():
    print(f"{dso_id}: p_dso* = {st.p_star:g} MW at {st.lmp_star:g} $/MWh")
    print("  aggregator dispatch:", {a: round(v, 6) for a, v in st.agg_dispatch.items()})
    print("  D-LMPs:", {n: round(v, 6) for n, v in st.dlmp.items()})
    print("  payments:", {a: round(v, 6) for a, v in st.payments.items()})
    print(f"  ISO pays DSO {st.iso_to_dso:g} $/h, DSO keeps {st.dso_net_position:g} $/h of branch rent")
