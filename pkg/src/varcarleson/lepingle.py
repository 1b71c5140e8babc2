"""Dyadic martingale averages, smooth averaging families and their square function."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, signal

from .core_grid import Compact, Periodic, SampledFunction
from .timefreq import _edge
from .varnorm import variation_rows


@dataclass(frozen=True)
class MartingaleSweep:
    """Per-level samples; column ``k - k_min`` holds the level of scale ``2^k``."""

    levels: np.ndarray
    k_min: int
    k_max: int
    domain: Periodic | Compact

    @property
    def scales(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def level(self, k: int) -> SampledFunction:
        if not self.k_min <= k <= self.k_max:
            raise ValueError(f"scale {k} outside {self.k_min}..{self.k_max}")
        return SampledFunction(self.levels[:, k - self.k_min], self.domain)

    def to_csv(self) -> str:
        n = self.levels.shape[0]
        x = self.domain.left + (self.domain.right - self.domain.left) / n * np.arange(n)
        real = not np.iscomplexobj(self.levels)
        buf = io.StringIO()
        buf.write("x,k,value\n")
        for c, k in enumerate(self.scales):
            for xi, v in zip(x, self.levels[:, c]):
                buf.write(f"{float(xi)!r},{k},{float(v)!r}\n" if real else f"{float(xi)!r},{k},{complex(v)!r}\n")
        return buf.getvalue()


def _scale_range(k_range) -> tuple[int, int]:
    k_min, k_max = (int(k) for k in k_range)
    if k_min > k_max:
        raise ValueError(f"empty scale range {k_min}..{k_max}")
    return k_min, k_max


def _block_sizes(f: SampledFunction, k_min: int, k_max: int) -> list[int]:
    """Grid points per dyadic interval at every scale, after checking alignment."""
    step = Fraction(f.spacing)
    if step.numerator != 1 or step.denominator & (step.denominator - 1):
        raise ValueError(f"grid spacing {f.spacing} is not a power of two")
    top = Fraction(2) ** k_max
    if Fraction(2) ** k_min < step:
        raise ValueError(f"scale 2^{k_min} is finer than the grid spacing {f.spacing}")
    if (Fraction(f.domain.left) / top).denominator != 1 or (Fraction(f.length) / top).denominator != 1:
        raise ValueError(f"domain {f.domain} is not a union of dyadic intervals of length 2^{k_max}")
    return [int(Fraction(2) ** k / step) for k in range(k_min, k_max + 1)]


def _values(f: SampledFunction) -> np.ndarray:
    a = f.samples
    return a.real.copy() if not np.any(a.imag) else a.copy()


def dyadic_averages(f: SampledFunction, k_range) -> MartingaleSweep:
    """Means of ``f`` over the dyadic interval of length ``2^k`` containing each grid point.

    Levels are built by repeated pairwise halving, so averaging a computed level
    again at a coarser scale reproduces that coarser level bit for bit.
    """
    k_min, k_max = _scale_range(k_range)
    sizes = _block_sizes(f, k_min, k_max)
    n = f.grid_count
    means = _values(f)
    size = 1
    out = np.empty((n, len(sizes)), dtype=means.dtype)
    for c, target in enumerate(sizes):
        while size < target:
            means = 0.5 * (means[0::2] + means[1::2])
            size *= 2
        out[:, c] = np.repeat(means, size)
    return MartingaleSweep(out, k_min, k_max, f.domain)


def martingale_variation(f: SampledFunction, vp, k_range) -> SampledFunction:
    sweep = dyadic_averages(f, k_range)
    return SampledFunction(variation_rows(sweep.levels, vp), f.domain)


# ---------------------------------------------------------------------------
# smooth averages


def _bump(x):
    x = np.asarray(x, dtype=float)
    return _edge(1.0 + x) * _edge(1.0 - x)


@dataclass(frozen=True)
class SmoothProfile:
    """Even smooth bump on [-1, 1] scaled to unit integral."""

    mass: float

    @classmethod
    def default(cls) -> "SmoothProfile":
        total, _ = integrate.quad(_bump, -1.0, 1.0, epsabs=0.0, epsrel=1e-12)
        return cls(total)

    def __call__(self, x):
        return _bump(x) / self.mass

    def kernel(self, k: int, spacing: float) -> tuple[np.ndarray, int]:
        """Grid weights of ``2^-k psi(2^-k x)`` at offsets ``-J..J``, summing to one."""
        width = 2.0**k
        J = int(math.ceil(width / spacing))
        w = self(np.arange(-J, J + 1) * spacing / width)
        return w / w.sum(), J


PSI = SmoothProfile.default()


def _convolve(values: np.ndarray, weights: np.ndarray, J: int, domain) -> np.ndarray:
    n = values.size
    if isinstance(domain, Periodic):
        wrapped = np.zeros(n)
        np.add.at(wrapped, np.arange(-J, J + 1) % n, weights)
        out = np.fft.ifft(np.fft.fft(values) * np.fft.fft(wrapped))
        return out.real if not np.iscomplexobj(values) else out
    return signal.fftconvolve(values, weights, mode="same")


def smooth_family(f: SampledFunction, psi: SmoothProfile | None, k_range) -> MartingaleSweep:
    """Convolutions with the dilates ``2^-k psi(2^-k .)``.

    Periodic domains wrap the kernel; compact domains pad with zeros.  The grid
    kernel is renormalised to unit sum so constants are preserved exactly on
    periodic grids even when the dilate is under-resolved.
    """
    psi = PSI if psi is None else psi
    k_min, k_max = _scale_range(k_range)
    values = _values(f)
    out = np.empty((values.size, k_max - k_min + 1), dtype=values.dtype)
    for c, k in enumerate(range(k_min, k_max + 1)):
        w, J = psi.kernel(k, f.spacing)
        out[:, c] = _convolve(values, w, J, f.domain)
    return MartingaleSweep(out, k_min, k_max, f.domain)


@dataclass(frozen=True)
class SquareFunctionResult:
    value: float
    ratio: float
    pointwise: SampledFunction


def square_function(f: SampledFunction, psi: SmoothProfile | None, k_range, p: float) -> SquareFunctionResult:
    """Grid L^p norm of the square sum of smooth minus dyadic averages, and its ratio to ``||f||_p``."""
    smooth = smooth_family(f, psi, k_range).levels
    dyadic = dyadic_averages(f, k_range).levels
    pointwise = SampledFunction(np.sqrt(np.sum(np.abs(smooth - dyadic) ** 2, axis=1)), f.domain)
    value = pointwise.lp_norm(p)
    base = f.lp_norm(p)
    return SquareFunctionResult(value, value / base if base > 0 else 0.0, pointwise)


# ---------------------------------------------------------------------------
# random probes

PROBE_DEGREE = 96
PROBE_JUMPS = 6


def random_probe_function(rng: np.random.Generator, grid_count: int) -> SampledFunction:
    """A random real function on the unit circle, independent of the grid it is sampled on.

    Low-degree Fourier modes with ``1/(1+|n|)`` decay plus a few indicators of
    intervals with random real endpoints, so refinement samples the same function.
    """
    n = np.arange(1, PROBE_DEGREE + 1)
    amp = (rng.normal(size=PROBE_DEGREE) + 1j * rng.normal(size=PROBE_DEGREE)) / (1 + n)
    ends = np.sort(rng.random((PROBE_JUMPS, 2)), axis=1)
    heights = rng.normal(size=PROBE_JUMPS)
    mean = rng.normal()

    x = np.arange(grid_count) / grid_count
    vals = np.full(grid_count, mean) + 2 * np.real(np.exp(2j * np.pi * np.outer(x, n)) @ amp)
    for (a, b), h in zip(ends, heights):
        vals += h * ((x >= a) & (x < b))
    return SampledFunction(vals, Periodic())


@dataclass(frozen=True)
class ProbeSweep:
    grid_count: int
    ratios: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.ratios.max())

    def to_json(self) -> dict:
        return {
            "grid_count": self.grid_count,
            "samples": int(self.ratios.size),
            "sup": self.sup,
            "median": float(np.median(self.ratios)),
        }


def _probe_functions(seed: int, samples: int, grid_count: int):
    rng = np.random.default_rng(seed)
    return [random_probe_function(rng, grid_count) for _ in range(samples)]


def variation_ratio_sweep(r: float, grid_count: int, samples: int = 200, seed: int = 0) -> ProbeSweep:
    """Ratios of the L^2 norm of the martingale r-variation to ``||f||_2`` over random probes.

    Scales run from the grid spacing to the whole circle.
    """
    k_min = -int(round(math.log2(grid_count)))
    out = []
    for f in _probe_functions(seed, samples, grid_count):
        out.append(martingale_variation(f, r, (k_min, 0)).lp_norm(2) / f.lp_norm(2))
    return ProbeSweep(grid_count, np.array(out))


def square_function_sweep(p: float, grid_count: int, samples: int = 200, seed: int = 0) -> ProbeSweep:
    k_min = -int(round(math.log2(grid_count)))
    out = [square_function(f, None, (k_min, 0), p).ratio for f in _probe_functions(seed, samples, grid_count)]
    return ProbeSweep(grid_count, np.array(out))
