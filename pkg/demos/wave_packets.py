"""Smooth partitions of unity over dyadic intervals and the wave-packet expansion.

Run: python3 demos/wave_packets.py
"""

import numpy as np

from varcarleson.core_grid import Compact, DyadicInterval, SampledFunction
from varcarleson.timefreq import box_frequencies, classify, maximal_partition, partition_sum, reconstruct_check

a, b = 0.3, 2.9
parts = maximal_partition(a, b, depth_cap=12)
print(f"({a}, {b}) is covered by {len(parts)} maximal dyadic intervals; the largest few:")
for J, i in sorted(parts, key=lambda p: -p[0].length())[:5]:
    print(f"  [{float(J.left):.4f}, {float(J.right):.4f})  neighbour exponent {i}  classes {[(c.cls, c.m, c.n, c.side) for c in classify(J, a, b)]}")

eta = np.linspace(a + 0.05 * (b - a), b - 0.05 * (b - a), 2001)
print("max |sum of bumps - 1| on the middle 90%:", float(np.max(np.abs(partition_sum(parts, eta) - 1))))

# a band-limited function is rebuilt from the packets of one frequency interval
rng = np.random.default_rng(1)
dom, n = Compact(-32.0, 32.0), 2048
xi = box_frequencies((dom, n))
band = (xi > -2) & (xi < 3)
spec = np.where(band, rng.normal(size=n) + 1j * rng.normal(size=n), 0)
f = SampledFunction(np.fft.ifft(spec * np.exp(2j * np.pi * xi * dom.left)) * n / 64.0, dom)
print("relative reconstruction error:", reconstruct_check(DyadicInterval(0, 0), 0, f, 64))
