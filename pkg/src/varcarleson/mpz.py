"""Variational norms of partial Fourier integrals and L^p-mass halving trees."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core_grid import Compact, SampledFunction
from .fourier import dual_frequency_grid, mpz_partial_integral
from .varnorm import VariationParams, variation_rows


def _cell_masses(f: SampledFunction, p: float) -> np.ndarray:
    return np.abs(f.samples) ** p * f.spacing


def _index_range(f: SampledFunction, interval) -> tuple[int, int]:
    if interval is None:
        return 0, f.grid_count
    lo, hi = interval
    x = f.grid
    return int(np.searchsorted(x, lo, side="left")), int(np.searchsorted(x, hi, side="left"))


def _halving_index(masses: np.ndarray, lo: int, hi: int) -> int:
    """Smallest ``j`` in ``lo..hi`` whose prefix mass over ``[lo, j)`` reaches half the total."""
    cum = np.concatenate([[0.0], np.cumsum(masses[lo:hi])])
    if not cum[-1] > 0:
        raise ValueError(f"no L^p mass on grid cells {lo}..{hi}")
    return lo + int(np.searchsorted(cum, cum[-1] / 2, side="left"))


def halving_point(f: SampledFunction, p: float, interval=None) -> float:
    """Grid point splitting the ``|f|^p`` mass of ``interval`` (default: whole domain) in half.

    The cell starting at the returned point belongs to the right half.
    """
    lo, hi = _index_range(f, interval)
    j = _halving_index(_cell_masses(f, p), lo, hi)
    return float(f.domain.left + j * f.spacing)


@dataclass
class HalvingNode:
    lo: int
    hi: int
    left: float
    right: float
    mass: float
    children: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        out = {"interval": [self.left, self.right], "mass": self.mass}
        if self.children:
            out["children"] = [c.to_json() for c in self.children]
        return out


@dataclass
class HalvingTree:
    root: HalvingNode
    depth: int
    p: float

    def leaves(self) -> list[HalvingNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.children:
                stack.extend(reversed(node.children))
            else:
                out.append(node)
        return out

    def to_json(self) -> dict:
        return {"p": self.p, "depth": self.depth, "root": self.root.to_json()}


def halving_tree(f: SampledFunction, p: float, depth: int) -> HalvingTree:
    """Recursive halving of the ``|f|^p`` mass, rooted at the hull of the support of ``f``."""
    if depth < 0 or 2**depth > f.grid_count:
        raise ValueError(f"depth {depth} exceeds log2 of the grid size {f.grid_count}")
    masses = _cell_masses(f, p)
    nz = np.flatnonzero(masses)
    if nz.size == 0:
        raise ValueError("cannot halve the zero function")
    x0, dx = f.domain.left, f.spacing

    def node(lo, hi, level):
        n = HalvingNode(lo, hi, x0 + lo * dx, x0 + hi * dx, float(masses[lo:hi].sum()))
        if level < depth:
            j = _halving_index(masses, lo, hi)
            n.children = (node(lo, j, level + 1), node(j, hi, level + 1))
        return n

    return HalvingTree(node(int(nz[0]), int(nz[-1]) + 1, 0), depth, p)


# ---------------------------------------------------------------------------
# variational norm


@dataclass(frozen=True)
class VmpzResult:
    value: float
    ratio: float
    p: float
    r: float
    xi: np.ndarray
    row_variation: np.ndarray
    grid: int

    def to_json(self) -> dict:
        return {"p": self.p, "r": self.r, "ratio": self.ratio, "grid": self.grid}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("xi,variation\n")
        for a, b in zip(self.xi, self.row_variation):
            buf.write(f"{float(a)!r},{float(b)!r}\n")
        return buf.getvalue()


def vmpz_norm(f: SampledFunction, p: float, r: float) -> VmpzResult:
    """L^{p'} over the dual grid of the r-variation in ``x`` of the partial Fourier integrals."""
    if not 1 <= p < 2:
        raise ValueError(f"exponent p must lie in [1, 2), got {p}")
    vp = VariationParams(r)
    xi = dual_frequency_grid(f)
    rows = variation_rows(mpz_partial_integral(f, xi), vp)
    dxi = 1.0 / f.length
    if p == 1:
        value = float(rows.max())
    else:
        q = p / (p - 1)
        value = float(np.sum(rows**q) * dxi) ** (1 / q)
    base = f.lp_norm(p)
    return VmpzResult(value, value / base if base > 0 else 0.0, p, r, xi, rows, f.grid_count)


# ---------------------------------------------------------------------------
# random probes

PROBE_BOX = Compact(0.0, 1.0)
PROBE_PIECES = 8
PROBE_DEGREE = 6


@dataclass(frozen=True)
class ProbeFunction:
    """Grid-independent random function on [0, 1): a step function plus a trigonometric bump."""

    breaks: np.ndarray
    heights: np.ndarray
    support: tuple
    amplitudes: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "ProbeFunction":
        breaks = np.sort(rng.random(PROBE_PIECES + 1))
        heights = rng.normal(size=PROBE_PIECES) + 1j * rng.normal(size=PROBE_PIECES)
        support = tuple(np.sort(rng.random(2)))
        amps = rng.normal(size=2 * PROBE_DEGREE + 1) + 1j * rng.normal(size=2 * PROBE_DEGREE + 1)
        return cls(breaks, heights, support, amps / (1 + np.abs(np.arange(-PROBE_DEGREE, PROBE_DEGREE + 1))))

    def sample(self, grid_count: int) -> SampledFunction:
        x = np.arange(grid_count) / grid_count
        piece = np.searchsorted(self.breaks, x, side="right") - 1
        inside = (piece >= 0) & (piece < PROBE_PIECES)
        vals = np.where(inside, self.heights[np.clip(piece, 0, PROBE_PIECES - 1)], 0)
        modes = np.exp(2j * np.pi * np.outer(x, np.arange(-PROBE_DEGREE, PROBE_DEGREE + 1))) @ self.amplitudes
        a, b = self.support
        vals = vals + modes * ((x >= a) & (x < b))
        return SampledFunction(vals, PROBE_BOX)


@dataclass(frozen=True)
class RefinementSweep:
    p: float
    r: float
    grids: tuple
    ratios: np.ndarray

    @property
    def doubling_factors(self) -> np.ndarray:
        """Per function, the ratio at each grid divided by the ratio at the previous grid."""
        return self.ratios[:, 1:] / self.ratios[:, :-1]

    def to_json(self) -> dict:
        fac = self.doubling_factors
        return {
            "p": self.p,
            "r": self.r,
            "grids": list(self.grids),
            "sup_ratio": [float(v) for v in self.ratios.max(axis=0)],
            "median_doubling_factor": [float(v) for v in np.median(fac, axis=0)],
            "max_doubling_deviation": float(np.max(np.abs(fac - 1))),
        }


def refinement_sweep(p: float, r: float, grids=(128, 256), samples: int = 100, seed: int = 0) -> RefinementSweep:
    rng = np.random.default_rng(seed)
    probes = [ProbeFunction.draw(rng) for _ in range(samples)]
    ratios = np.array([[vmpz_norm(g.sample(n), p, r).ratio for n in grids] for g in probes])
    return RefinementSweep(p, r, tuple(grids), ratios)


def growth_exponent_bound(p: float, r: float) -> float:
    """Largest possible growth exponent in the grid size when ``r < p``; zero otherwise.

    A chain on an ``N``-point grid has at most ``N`` jumps, so Hoelder bounds the
    r-variation by ``N^(1/r - 1/s)`` times the s-variation for any ``s > r``.
    """
    return max(0.0, 1.0 / r - 1.0 / p) if not math.isinf(r) else 0.0
