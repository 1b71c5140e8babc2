"""Mass-halving trees and the variation in x of partial Fourier integrals.

Run: python3 demos/partial_integral_variation.py
"""

import numpy as np

from varcarleson.mpz import ProbeFunction, growth_exponent_bound, halving_tree, refinement_sweep, vmpz_norm

g = ProbeFunction.draw(np.random.default_rng(0))
f = g.sample(256)
tree = halving_tree(f, 1.5, 3)
print("leaves of the depth-3 halving tree (interval, mass):")
for leaf in tree.leaves():
    print(f"  [{leaf.left:.4f}, {leaf.right:.4f})  {leaf.mass:.4f}")

for r in (1.4, 1.8, 3.0):
    print(f"r = {r}: ratio {vmpz_norm(f, 1.5, r).ratio:.4f}")

# above p the ratio settles under refinement; below p it creeps up
for r in (1.8, 1.4):
    sweep = refinement_sweep(1.5, r, grids=(128, 256, 512), samples=5)
    print(f"r = {r}: median growth per doubling {np.median(sweep.doubling_factors, axis=0) - 1},"
          f" bound on the exponent {growth_exponent_bound(1.5, r):.4f}")
