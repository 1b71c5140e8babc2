"""Fourier partial sums on the circle, classical kernels and their variation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_grid import Compact, Periodic, SampledFunction
from .varnorm import VariationParams, variation_rows

# rows of x handled at once when a full (x, n) sweep would not fit in memory
_CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class FourierCoefficients:
    """Coefficients ``c_k`` for ``k = -max_degree .. max_degree``, stored densely."""

    values: np.ndarray
    max_degree: int

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.max_degree:
            return 0j
        return complex(self.values[k + self.max_degree])

    def window(self, n: int) -> np.ndarray:
        """Coefficients for ``k = -n .. n`` (zero padded beyond ``max_degree``)."""
        out = np.zeros(2 * n + 1, dtype=complex)
        m = min(n, self.max_degree)
        out[n - m : n + m + 1] = self.values[self.max_degree - m : self.max_degree + m + 1]
        return out


@dataclass(frozen=True)
class PartialSumSweep:
    """``values[j, n]`` is ``S_n f`` at grid point ``x[j]``."""

    x: np.ndarray
    values: np.ndarray

    @property
    def n_max(self) -> int:
        return self.values.shape[1] - 1

    def column(self, n: int) -> SampledFunction:
        return SampledFunction(self.values[:, n], Periodic())

    def to_csv(self) -> str:
        lines = ["x,n,re,im"]
        for j, xj in enumerate(self.x):
            for n in range(self.values.shape[1]):
                z = self.values[j, n]
                lines.append(f"{float(xj)!r},{n},{float(z.real)!r},{float(z.imag)!r}")
        return "\n".join(lines) + "\n"


def _require_periodic(f: SampledFunction):
    if not isinstance(f.domain, Periodic):
        raise ValueError("Fourier series need a periodic sampled function")
    if not f.is_power_of_two:
        raise ValueError("FFT paths need a power-of-two grid")


def fourier_coefficients(f: SampledFunction) -> FourierCoefficients:
    _require_periodic(f)
    n = f.grid_count
    raw = np.fft.fft(f.samples) / n
    deg = n // 2 - 1
    ks = np.arange(-deg, deg + 1)
    return FourierCoefficients(raw[ks % n], deg)


def _partial_sums_on_grid(coeffs: FourierCoefficients, rows: np.ndarray, grid_count: int, n_max: int) -> np.ndarray:
    """Sweep ``S_0 .. S_{n_max}`` at grid points ``rows / grid_count``.

    Exponentials are read from a table of ``grid_count``-th roots of unity,
    which keeps every phase exact up to one rounding.
    """
    roots = np.exp(2j * np.pi * np.arange(grid_count) / grid_count)
    c = coeffs.window(n_max)
    pos = c[n_max + 1 :]
    neg = c[:n_max][::-1]
    ns = np.arange(1, n_max + 1)
    phase = (np.outer(rows, ns) % grid_count).astype(np.intp)
    terms = roots[phase] * pos + roots[(-phase) % grid_count] * neg
    out = np.empty((rows.size, n_max + 1), dtype=complex)
    out[:, 0] = c[n_max]
    np.cumsum(terms, axis=1, out=out[:, 1:])
    out[:, 1:] += c[n_max]
    return out


def _check_degree(f: SampledFunction, n_max: int):
    if n_max < 0 or n_max >= f.grid_count // 2:
        raise ValueError(f"n_max={n_max} needs a grid with more than {2 * n_max} points")


def partial_sum_sweep(f: SampledFunction, n_max: int) -> PartialSumSweep:
    _require_periodic(f)
    _check_degree(f, n_max)
    coeffs = fourier_coefficients(f)
    vals = _partial_sums_on_grid(coeffs, np.arange(f.grid_count), f.grid_count, n_max)
    return PartialSumSweep(f.grid, vals)


def _sin_pi(x):
    # sin(pi x) with exact zeros at integers
    return np.sin(np.pi * (x - np.round(x)))


def _dirichlet_values(n: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    den = _sin_pi(x)
    small = np.abs(den) < 1e-8
    safe = np.where(small, 1.0, den)
    out = np.sin((2 * n + 1) * np.pi * (x - np.round(x))) / safe
    if np.any(small):
        # near an integer: D_n(x) = sum_{|k|<=n} cos(2 pi k x)
        xs = x[small] - np.round(x[small])
        ks = np.arange(1, n + 1)
        out[small] = 1.0 + 2.0 * np.cos(2 * np.pi * np.outer(xs, ks)).sum(axis=1)
    return out


def _grid_of(grid):
    if isinstance(grid, SampledFunction):
        return grid.grid_count
    return int(grid)


def dirichlet_kernel(n: int, grid) -> SampledFunction:
    """``D_n(x) = sin((2n+1) pi x) / sin(pi x)`` on a periodic grid of the given size."""
    if n < 0:
        raise ValueError("Dirichlet kernel degree must be nonnegative")
    g = _grid_of(grid)
    x = np.arange(g) / g
    return SampledFunction(_dirichlet_values(n, x), Periodic())


def _from_coefficients(coeff_of_k, degree: int, grid_count: int) -> SampledFunction:
    if 2 * degree >= grid_count:
        raise ValueError(f"degree {degree} is not resolved by {grid_count} grid points")
    spec = np.zeros(grid_count, dtype=complex)
    ks = np.arange(-degree, degree + 1)
    spec[ks % grid_count] = coeff_of_k(ks)
    vals = np.fft.ifft(spec) * grid_count
    return SampledFunction(vals.real, Periodic())


def fejer_kernel(N: int, grid) -> SampledFunction:
    """Average of ``D_0 .. D_N``; coefficients ``(1 - |k|/(N+1))_+``."""
    if N < 0:
        raise ValueError("Fejer kernel degree must be nonnegative")
    return _from_coefficients(lambda k: 1.0 - np.abs(k) / (N + 1.0), N, _grid_of(grid))


def vallee_poussin_coefficients(N: int, k) -> np.ndarray:
    k = np.abs(np.asarray(k, dtype=float))
    wide = np.clip(1.0 - k / (2 * N + 2.0), 0.0, None)
    narrow = np.clip(1.0 - k / (N + 1.0), 0.0, None)
    return 2 * wide - narrow


def vallee_poussin(N: int, grid) -> SampledFunction:
    """``2 K_{2N+1} - K_N``: coefficients equal 1 for ``|k| <= N+1``."""
    if N < 0:
        raise ValueError("de la Vallee-Poussin kernel degree must be nonnegative")
    return _from_coefficients(lambda k: vallee_poussin_coefficients(N, k), 2 * N + 1, _grid_of(grid))


def variational_carleson(f: SampledFunction, vp, n_max: int) -> SampledFunction:
    """Pointwise r-variation of ``n -> S_n f(x)`` for ``n = 0 .. n_max``.

    Real input gives real partial sums, which enables the faster real solver.
    The sweep is built in row blocks so memory stays bounded for large grids.
    """
    _require_periodic(f)
    _check_degree(f, n_max)
    vp = vp if isinstance(vp, VariationParams) else VariationParams(float(vp))
    coeffs = fourier_coefficients(f)
    real = not np.any(f.samples.imag)
    g = f.grid_count
    chunk = max(1, _CHUNK_ENTRIES // (n_max + 1))
    out = np.empty(g)
    for start in range(0, g, chunk):
        rows = np.arange(start, min(g, start + chunk))
        sums = _partial_sums_on_grid(coeffs, rows, g, n_max)
        if real:
            sums = sums.real
        out[rows] = variation_rows(sums, vp)
    return SampledFunction(out, Periodic())


def dual_frequency_grid(f: SampledFunction, offset: float = 0.0) -> np.ndarray:
    """Frequencies ``k / |domain|`` for ``k = -n/2 .. n/2 - 1``, optionally shifted by ``offset`` steps."""
    n = f.grid_count
    return (np.arange(-(n // 2), n - n // 2) + offset) / f.length


def mpz_partial_integral(f: SampledFunction, xi=None) -> np.ndarray:
    """Cumulative left Riemann sums of ``exp(-2 pi i xi x) f(x)``.

    Returns a matrix with one row per frequency and ``grid_count + 1``
    columns: column ``j`` integrates over ``[left, x_j)``, the last column over
    the whole domain.
    """
    if not isinstance(f.domain, Compact):
        raise ValueError("partial integrals need a compactly supported function")
    if xi is None:
        xi = dual_frequency_grid(f)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    x = f.grid
    integrand = np.exp(-2j * np.pi * np.outer(xi, x)) * f.samples * f.spacing
    out = np.zeros((xi.size, f.grid_count + 1), dtype=complex)
    np.cumsum(integrand, axis=1, out=out[:, 1:])
    return out
