"""Variation norms of short sequences: the fast solver, brute force, and the optimal chain.

Run: python3 demos/variation_norms.py
"""

import math

import numpy as np

from varcarleson.varnorm import dual_linearization, variation_norm, variation_norm_bruteforce

rng = np.random.default_rng(0)
seq = np.cumsum(rng.normal(size=10))
print("sequence:", np.round(seq, 3))

# r = 1 is the total variation; larger r rewards a few long jumps over many short ones
for r in (1.0, 1.5, 2.0, 3.0, math.inf):
    fast, slow = variation_norm(seq, r), variation_norm_bruteforce(seq, r)
    print(f"r = {r:>4}: {fast:.6f}  (brute force {slow:.6f})")

chain, coeffs = dual_linearization(seq, 2.0)
print("\noptimal chain for r = 2:", chain.tolist())
print("pairing with its jumps:", float(np.real(np.sum(coeffs * np.diff(seq[chain])))))
print("dual coefficients have unit l^2 norm:", float(np.sum(np.abs(coeffs) ** 2)))
