"""Curves in SU(1,1) driven by a potential, compared with their linear traces.

Run: python3 demos/su11_curves.py
"""

import numpy as np

from varcarleson.core_grid import Compact, SampledFunction
from varcarleson.nlft import (
    curve_variation,
    left_trace,
    nlft_evolve,
    subdivide_curve,
    trace_comparison_experiment,
    trace_variation,
)

rng = np.random.default_rng(0)
f = SampledFunction(0.5 * (rng.normal(size=200) + 1j * rng.normal(size=200)), Compact(0.0, 1.0))
curve = nlft_evolve(f, 2.0)
trace = left_trace(curve)
print("constraint drift |a|^2 - |b|^2 - 1:", curve.constraint_drift())
print("curve length equals trace length:", curve.length() == trace.length())
for r in (1.0, 1.5, 2.0):
    print(f"r = {r}: curve {curve_variation(curve, r):.5f}, trace {trace_variation(trace, r):.5f}")

sub = subdivide_curve(curve, 1.5)
print(f"\nsplit at t = {sub.t_star:.4f}: halves {sub.left_variation:.4f}, {sub.right_variation:.4f} against {sub.bound:.4f}")

table = trace_comparison_experiment(1.5, [2.0**-j for j in range(10, 3, -1)], [0, 1])
print(f"gap between curve and trace variation grows like amplitude^{table.slope:.2f}")
