"""Trace one random feeder's bid curve and check it against direct LP solves."""

import numpy as np

from gridseam.dso import build_dso_lp, convexity_check, trace_bid_curve
from gridseam.generate import random_distribution
from gridseam.lp import solve

d = random_distribution(11, n_nodes=12, n_aggregators=4)
curve = trace_bid_curve(d)
print(f"feeder {d.id}: {len(d.nodes)} nodes, {len(d.aggregators)} aggregators")
print(f"bid range [{curve.p_min:.4f}, {curve.p_max:.4f}] MW with {len(curve.breakpoints)} breakpoints")
for (p0, _), (p1, _), slope in zip(curve.breakpoints, curve.breakpoints[1:], curve.slopes):
    print(f"  {p0:9.4f} .. {p1:9.4f} MW  at {slope:8.4f} $/MWh")

grid = np.linspace(curve.p_min, curve.p_max, 50)
gap = max(abs(float(curve(p)) - solve(build_dso_lp(d, p)).objective_value) for p in grid)
print(f"max |curve - LP| over {len(grid)} samples: {gap:.2e}")
print(f"convex: {convexity_check(curve).passed}")
