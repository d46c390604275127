"""With feeder limits relaxed, every D-LMP equals the substation LMP and the DSO nets zero."""

from gridseam.generate import generate_scenario
from gridseam.grid import relax_limits
from gridseam.pipeline import run_coordination

s = generate_scenario(5)
for label, scen in (("as generated", s), ("relaxed x100", relax_limits(s, 100.0))):
    coord = run_coordination(scen)
    print(label)
    for dso_id, st in coord.settlements.items():
        spread = max(abs(v - st.lmp_star) for v in st.dlmp.values())
        print(f"  {dso_id}: LMP {st.lmp_star:.4f}, max |D-LMP - LMP| {spread:.2e}, "
              f"net position {st.dso_net_position:.4f} $/h")
