"""Exact r-variation of finite sequences and of sampled metric-space curves.

The r-variation of ``a_0, ..., a_{N-1}`` is the largest value of
``(sum |a_{n_l} - a_{n_{l-1}}|^r)^(1/r)`` over increasing index chains.  It is
computed exactly by a longest-path recursion on the increment graph,

    best[j] = max(0, max_{i<j} best[i] + |a_j - a_i|^r),

with two exactness-preserving accelerations:

* real sequences are first reduced to their turning points, since for
  ``r >= 1`` an optimal chain never needs an interior point of a monotone run;
* the backwards scan over ``i`` stops as soon as the running prefix optimum plus
  the largest possible remaining jump cannot beat the current candidate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

__all__ = [
    "VariationParams",
    "IndexedSequence",
    "variation_norm",
    "variation_norm_bruteforce",
    "variation_rows",
    "prefix_variations",
    "metric_variation",
    "metric_variation_matrix",
    "dual_linearization",
]

BRUTEFORCE_MAX_LENGTH = 20


@dataclass(frozen=True)
class VariationParams:
    r: float

    def __post_init__(self):
        if not self.r >= 1:
            raise ValueError(f"variation exponent must be at least 1, got {self.r}")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.r)

    @property
    def conjugate(self) -> float:
        """Hoelder conjugate exponent r' with 1/r + 1/r' = 1."""
        if self.is_infinite:
            return 1.0
        if self.r == 1:
            return math.inf
        return self.r / (self.r - 1.0)


@dataclass(frozen=True)
class IndexedSequence:
    values: np.ndarray
    indices: np.ndarray = field(default=None)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("an indexed sequence must be a non-empty vector")
        if not np.iscomplexobj(vals):
            vals = vals.astype(float)
        idx = np.arange(vals.size) if self.indices is None else np.asarray(self.indices, dtype=np.int64)
        if idx.shape != vals.shape:
            raise ValueError("indices and values must have the same length")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.values.size


def _as_params(vp) -> VariationParams:
    return vp if isinstance(vp, VariationParams) else VariationParams(float(vp))


def _as_values(seq) -> np.ndarray:
    if isinstance(seq, IndexedSequence):
        return seq.values
    return IndexedSequence(np.asarray(seq)).values


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _turning_points(a):
    n = a.size
    keep = np.zeros(n, dtype=np.bool_)
    keep[0] = True
    keep[n - 1] = True
    for i in range(1, n - 1):
        if (a[i] - a[i - 1]) * (a[i + 1] - a[i]) <= 0.0:
            keep[i] = True
    return a[keep]


@njit(cache=True)
def _dp_real(a, r):
    n = a.size
    if n < 2:
        return 0.0
    best = np.zeros(n)
    prefix = np.zeros(n)
    pmax = np.empty(n)
    pmin = np.empty(n)
    pmax[0] = a[0]
    pmin[0] = a[0]
    for i in range(1, n):
        pmax[i] = max(pmax[i - 1], a[i])
        pmin[i] = min(pmin[i - 1], a[i])
    for j in range(1, n):
        cur = 0.0
        aj = a[j]
        for i in range(j - 1, -1, -1):
            reach = max(pmax[i] - aj, aj - pmin[i])
            if prefix[i] + reach**r <= cur:
                break
            val = best[i] + abs(aj - a[i]) ** r
            if val > cur:
                cur = val
        best[j] = cur
        prefix[j] = max(prefix[j - 1], cur)
    return prefix[n - 1] ** (1.0 / r)


@njit(cache=True)
def _dp_complex(re, im, r):
    n = re.size
    if n < 2:
        return 0.0
    best = np.zeros(n)
    prefix = np.zeros(n)
    xmax = np.empty(n)
    xmin = np.empty(n)
    ymax = np.empty(n)
    ymin = np.empty(n)
    xmax[0] = re[0]
    xmin[0] = re[0]
    ymax[0] = im[0]
    ymin[0] = im[0]
    for i in range(1, n):
        xmax[i] = max(xmax[i - 1], re[i])
        xmin[i] = min(xmin[i - 1], re[i])
        ymax[i] = max(ymax[i - 1], im[i])
        ymin[i] = min(ymin[i - 1], im[i])
    half_r = 0.5 * r
    for j in range(1, n):
        cur = 0.0
        xj = re[j]
        yj = im[j]
        for i in range(j - 1, -1, -1):
            dx = max(xmax[i] - xj, xj - xmin[i])
            dy = max(ymax[i] - yj, yj - ymin[i])
            if prefix[i] + (dx * dx + dy * dy) ** half_r <= cur:
                break
            ex = xj - re[i]
            ey = yj - im[i]
            val = best[i] + (ex * ex + ey * ey) ** half_r
            if val > cur:
                cur = val
        best[j] = cur
        prefix[j] = max(prefix[j - 1], cur)
    return prefix[n - 1] ** (1.0 / r)


@njit(cache=True)
def _diameter_complex(re, im):
    n = re.size
    out = 0.0
    for j in range(1, n):
        for i in range(j):
            dx = re[j] - re[i]
            dy = im[j] - im[i]
            d = dx * dx + dy * dy
            if d > out:
                out = d
    return math.sqrt(out)


@njit(cache=True)
def _rows_real(mat, r):
    out = np.empty(mat.shape[0])
    for k in range(mat.shape[0]):
        out[k] = _dp_real(_turning_points(mat[k]), r)
    return out


@njit(cache=True)
def _rows_complex(re, im, r):
    out = np.empty(re.shape[0])
    for k in range(re.shape[0]):
        out[k] = _dp_complex(re[k], im[k], r)
    return out


@njit(cache=True)
def _dp_matrix(dist, r):
    n = dist.shape[0]
    best = np.zeros(n)
    prefix = np.zeros(n)
    for j in range(1, n):
        cur = 0.0
        for i in range(j):
            val = best[i] + dist[i, j] ** r
            if val > cur:
                cur = val
        best[j] = cur
        prefix[j] = max(prefix[j - 1], cur)
    return prefix


# ---------------------------------------------------------------------------
# public interface


def variation_norm(seq, vp) -> float:
    """Exact r-variation of a finite scalar sequence.

    Parameters
    ----------
    seq : IndexedSequence or array_like
        Real or complex values; only their order matters.
    vp : VariationParams or float
        Exponent ``r`` in ``[1, inf]``.
    """
    vp = _as_params(vp)
    a = _as_values(seq)
    if a.size < 2:
        return 0.0
    if vp.is_infinite:
        if np.iscomplexobj(a):
            return float(_diameter_complex(np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)))
        return float(a.max() - a.min())
    if np.iscomplexobj(a):
        return float(_dp_complex(np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag), vp.r))
    return float(_dp_real(_turning_points(np.ascontiguousarray(a, dtype=float)), vp.r))


def variation_rows(rows, vp) -> np.ndarray:
    """r-variation of every row of a 2-D array (one sequence per row)."""
    vp = _as_params(vp)
    mat = np.atleast_2d(np.asarray(rows))
    if mat.shape[1] < 2:
        return np.zeros(mat.shape[0])
    if vp.is_infinite:
        if np.iscomplexobj(mat):
            return np.array([variation_norm(row, vp) for row in mat])
        return mat.max(axis=1) - mat.min(axis=1)
    if np.iscomplexobj(mat):
        return _rows_complex(np.ascontiguousarray(mat.real), np.ascontiguousarray(mat.imag), vp.r)
    return _rows_real(np.ascontiguousarray(mat, dtype=float), vp.r)


def variation_norm_bruteforce(seq, vp) -> float:
    """Exhaustive search over every index chain; the test oracle for short sequences."""
    vp = _as_params(vp)
    a = np.asarray(_as_values(seq), dtype=complex)
    n = a.size
    if n > BRUTEFORCE_MAX_LENGTH:
        raise ValueError(f"brute force is limited to {BRUTEFORCE_MAX_LENGTH} entries, got {n}")
    best = 0.0
    for size in range(2, n + 1):
        chains = np.array(list(itertools.combinations(range(n), size)), dtype=np.int64)
        jumps = np.abs(a[chains[:, 1:]] - a[chains[:, :-1]])
        if vp.is_infinite:
            best = max(best, float(jumps.max()))
        else:
            best = max(best, float((jumps**vp.r).sum(axis=1).max()))
    if vp.is_infinite:
        return best
    return best ** (1.0 / vp.r)


def prefix_variations(dist: np.ndarray, vp) -> np.ndarray:
    """r-variation of every prefix ``0..j`` of a curve given by its distance matrix."""
    vp = _as_params(vp)
    dist = np.ascontiguousarray(dist, dtype=float)
    if vp.is_infinite:
        return np.maximum.accumulate(np.max(np.triu(dist), axis=0))
    return _dp_matrix(dist, vp.r) ** (1.0 / vp.r)


def metric_variation_matrix(dist: np.ndarray, vp) -> float:
    dist = np.asarray(dist, dtype=float)
    if dist.shape[0] < 2:
        return 0.0
    return float(prefix_variations(dist, vp)[-1])


def metric_variation(points: Sequence, dist: Callable, vp) -> float:
    """r-variation of a finite curve in a metric space.

    ``dist`` is called once per unordered pair of points.
    """
    n = len(points)
    if n == 0:
        raise ValueError("metric_variation needs at least one point")
    mat = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = float(dist(points[i], points[j]))
    return metric_variation_matrix(mat, vp)


def dual_linearization(seq, vp, rtol: float = 1e-12):
    """Optimal chain and the Hoelder-dual coefficients that realise the r-variation.

    Returns
    -------
    partition : ndarray of int
        Positions ``n_0 < ... < n_K`` into ``seq`` (not ``seq.indices``).
    coeffs : ndarray of complex
        ``a_k`` with ``sum_k a_k * (x_{n_k} - x_{n_{k-1}})`` equal to the variation
        and ``sum_k |a_k|^{r'} = 1``.

    Among chains with the same value (to relative tolerance ``rtol``) the one
    with fewest points wins, then the lexicographically smallest.
    """
    vp = _as_params(vp)
    if vp.is_infinite or vp.r <= 1:
        raise ValueError("dual linearization needs 1 < r < inf")
    a = np.asarray(_as_values(seq), dtype=complex)
    n = a.size
    best = np.zeros(n)
    paths: list[tuple[int, ...]] = [(0,)]
    scale = max(float(np.max(np.abs(a - a[0]))) ** vp.r, np.finfo(float).tiny)
    tol = rtol * scale
    for j in range(1, n):
        vals = best[:j] + np.abs(a[j] - a[:j]) ** vp.r
        top = float(vals.max())
        if top <= tol:
            best[j] = 0.0
            paths.append((j,))
            continue
        ties = np.flatnonzero(vals >= top - tol)
        chosen = min(ties, key=lambda i: (len(paths[i]), paths[i]))
        best[j] = top
        paths.append(paths[chosen] + (j,))
    top = float(best.max())
    if top <= tol:
        raise ValueError("dual linearization is undefined for a sequence with zero variation")
    ends = np.flatnonzero(best >= top - tol)
    end = min(ends, key=lambda j: (len(paths[j]), paths[j]))
    partition = np.array(paths[end], dtype=np.int64)
    jumps = np.diff(a[partition])
    mags = np.abs(jumps)
    total = np.sum(mags**vp.r)
    phase = np.where(mags > 0, np.conj(jumps) / np.where(mags > 0, mags, 1.0), 0.0)
    coeffs = phase * mags ** (vp.r - 1.0) / total ** (1.0 / vp.conjugate)
    return partition, coeffs
