"""Alternating Dirichlet-kernel lower bounds and the Lorentz-norm growth sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from .core_grid import LorentzParams, SampledFunction, lorentz_norm
from .fourier import _dirichlet_values, vallee_poussin, variational_carleson
from .varnorm import VariationParams

MIN_DEGREE = 64
DEFAULT_GRID = 1 << 15


@dataclass(frozen=True)
class IndexSelection:
    N: int
    x: float
    K: int
    n: np.ndarray

    def window_values(self) -> list[Fraction]:
        x = Fraction(self.x)
        return [(2 * int(nk) + 1) * x for nk in self.n]


def select_indices(N: int, x: float) -> IndexSelection:
    """Degrees ``n_0 < ... < n_{2K-1}`` placing ``(2 n_k + 1) x`` in ``(1/4 + k, 3/4 + k)``.

    ``K`` is the largest integer strictly below ``N x``.  All window arithmetic
    is exact in rationals.
    """
    if N < MIN_DEGREE:
        raise ValueError(f"degree N must be at least {MIN_DEGREE}, got {N}")
    xf = Fraction(x)
    if not Fraction(8, N) <= xf <= Fraction(1, 8):
        raise ValueError(f"x must lie in [8/N, 1/8], got {x}")
    K = math.ceil(N * xf) - 1
    n = []
    for k in range(2 * K):
        lo = Fraction(1, 4) + k
        # smallest n with (2n + 1) x > lo
        nk = math.floor((lo / xf - 1) / 2) + 1
        w = (2 * nk + 1) * xf
        if not lo < w < lo + Fraction(1, 2) or nk > N:
            raise AssertionError(f"window {k} holds no admissible degree")
        n.append(nk)
    arr = np.array(n, dtype=np.int64)
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise AssertionError("selected degrees are not increasing")
    return IndexSelection(N, float(x), K, arr)


def pointwise_lower_bound(N: int, x: float, r: float) -> float:
    """``(sum_j |D_{n_{2j+1}}(x) - D_{n_{2j}}(x)|^r)^(1/r)`` for the alternating selection."""
    sel = select_indices(N, x)
    d = _dirichlet_values_at(sel.n, x)
    jumps = np.abs(d[1::2] - d[0::2])
    if math.isinf(r):
        return float(jumps.max())
    return float(np.sum(jumps**r) ** (1.0 / r))


def _dirichlet_values_at(degrees, x: float) -> np.ndarray:
    return np.array([_dirichlet_values(int(n), np.array([x]))[0] for n in degrees])


def guaranteed_lower_bound(N: int, x: float, r: float) -> float:
    """``K^{1/r} sqrt(2) / sin(pi x)``, the floor every alternating selection clears."""
    K = select_indices(N, x).K
    root = 1.0 if math.isinf(r) else K ** (1.0 / r)
    return root * math.sqrt(2.0) / math.sin(math.pi * x)


@dataclass(frozen=True)
class GrowthResult:
    p: float
    r: float
    s: float
    N: np.ndarray
    ratio: np.ndarray
    fitted_exponent: float
    target: float
    log_slope: float
    log_r2: float

    @property
    def abs_err(self) -> float:
        return abs(self.fitted_exponent - self.target)

    def to_csv(self) -> str:
        rows = ["N,ratio"] + [f"{int(n)},{float(v)!r}" for n, v in zip(self.N, self.ratio)]
        return "\n".join(rows) + "\n"

    def summary(self) -> dict:
        return {"fitted_exponent": self.fitted_exponent, "target": self.target, "abs_err": self.abs_err}


def growth_ratio(N: int, p: float, r: float, s: float, grid_count: int = DEFAULT_GRID) -> float:
    """``||V^r S f^N||_{L^{p,s}} / ||f^N||_{L^{p,1}}`` with degrees ``0 .. N+1``."""
    kernel = vallee_poussin(N, grid_count)
    var = variational_carleson(kernel, VariationParams(r), N + 1)
    top = lorentz_norm(var, LorentzParams(p, s))
    bottom = lorentz_norm(kernel, LorentzParams(p, 1.0))
    return top / bottom


def growth_experiment(p: float, r: float, s: float, N_list, grid_count: int = DEFAULT_GRID, mapper=map) -> GrowthResult:
    """Sweep ``N`` and fit the growth of the Lorentz-norm ratio.

    ``fitted_exponent`` is the least-squares slope of ``log ratio`` against
    ``log N``; ``log_slope`` and ``log_r2`` describe the affine fit of
    ``ratio^s`` against ``log N`` (meaningful for finite ``s``).  ``mapper``
    must preserve order; a thread pool's ``map`` parallelizes the degrees.
    """
    Ns = np.array(sorted(int(n) for n in N_list), dtype=np.int64)
    if Ns.size < 2:
        raise ValueError("growth_experiment needs at least two degrees")
    ratios = np.array(list(mapper(lambda n: growth_ratio(int(n), p, r, s, grid_count), Ns)))
    logN = np.log(Ns.astype(float))
    slope = float(np.polyfit(logN, np.log(ratios), 1)[0])
    rconj = math.inf if r == 1 else (1.0 if math.isinf(r) else r / (r - 1.0))
    target = 1.0 / p - 1.0 / rconj
    if math.isinf(s):
        log_slope, log_r2 = math.nan, math.nan
    else:
        fit = stats.linregress(logN, ratios**s)
        log_slope, log_r2 = float(fit.slope), float(fit.rvalue**2)
    return GrowthResult(p, r, s, Ns, ratios, slope, target, log_slope, log_r2)


