"""Compare the bid-curve coordination with the joint transmission+distribution LP.

Usage: ``python demos/oracle_audit.py [N]`` (default 20 seeded scenarios).
"""

import sys
import time

from gridseam.generate import generate_scenario
from gridseam.ideal import compare, solve_ideal
from gridseam.pipeline import run_coordination

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20
t0 = time.perf_counter()
worst = 0.0
statuses = {"pass": 0, "degenerate": 0, "fail": 0}
for seed in range(n):
    s = generate_scenario(seed)
    report = compare(run_coordination(s), solve_ideal(s), s)
    statuses[report.status] += 1
    worst = max(worst, max(report.deviations.values()))
    print(f"{s.name:>12}: {report.status:<10} max dev {max(report.deviations.values()):.1e}, "
          f"objective rel dev {report.objective_rel_deviation:.1e}")
print(f"\n{n} scenarios in {time.perf_counter() - t0:.1f} s: {statuses}; worst deviation {worst:.2e}")
