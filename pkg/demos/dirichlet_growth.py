"""Pointwise and Lorentz-norm growth of the variation of Fourier partial sums.

The alternating choice of Dirichlet-kernel degrees gives an explicit lower bound
at a point; the Lorentz-norm sweep then fits the growth rate in the degree.

Run: python3 demos/dirichlet_growth.py   (about a minute)
"""

import math

from varcarleson.sharpness import growth_experiment, guaranteed_lower_bound, pointwise_lower_bound, select_indices

N, x = 512, 1 / 32
sel = select_indices(N, x)
print(f"N = {N}, x = {x}: {len(sel.n)} alternating degrees, first few {sel.n[:6].tolist()}")
for r in (3.0, 4.0, math.inf):
    print(f"  r = {r}: jumps give {pointwise_lower_bound(N, x, r):.3f} >= floor {guaranteed_lower_bound(N, x, r):.3f}")

res = growth_experiment(1.2, 4.0, math.inf, [2**k for k in range(6, 11)], grid_count=1 << 13)
print("\nratio of variation norm to input norm:")
for n, v in zip(res.N, res.ratio):
    print(f"  N = {int(n):5d}: {v:.4f}")
print(f"fitted exponent {res.fitted_exponent:.4f}, predicted {res.target:.4f}")
