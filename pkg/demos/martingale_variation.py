"""Variation of dyadic averages and the smooth square function over random probes.

Run: python3 demos/martingale_variation.py
"""

import numpy as np

from varcarleson.lepingle import (
    dyadic_averages,
    martingale_variation,
    random_probe_function,
    square_function_sweep,
    variation_ratio_sweep,
)

f = random_probe_function(np.random.default_rng(0), 1 << 10)
sweep = dyadic_averages(f, (-10, 0))
print("averages at x = 0 from fine to coarse:", np.round(sweep.levels[0, ::2], 3))
for r in (2.0, 3.0, 6.0):
    v = martingale_variation(f, r, (-10, 0))
    print(f"r = {r}: ||variation||_2 / ||f||_2 = {v.lp_norm(2) / f.lp_norm(2):.4f}")

# refining the grid samples the same random functions, so the sups should agree
for n in (1 << 10, 1 << 11):
    print(f"grid {n}: variation sup {variation_ratio_sweep(3.0, n, 50).sup:.4f}, square-function sup {square_function_sweep(2.0, n, 50).sup:.4f}")
