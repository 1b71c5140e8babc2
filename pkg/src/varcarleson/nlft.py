"""SU(1,1)-valued curves driven by piecewise-constant potentials, and their traces.

Group elements are ``[[a, b], [conj(b), conj(a)]]`` with ``|a|^2 - |b|^2 = 1``.
Algebra elements are ``[[i d, c], [conj(c), -i d]]`` with ``d`` real, normed by
``sqrt(|c|^2 + d^2)`` (Frobenius over sqrt 2), which gives both off-diagonal
generators unit norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core_grid import Compact, SampledFunction
from .varnorm import VariationParams, metric_variation_matrix, prefix_variations


@dataclass(frozen=True)
class AlgebraElement:
    c: complex
    d: float = 0.0

    def matrix(self) -> np.ndarray:
        return np.array([[1j * self.d, self.c], [np.conj(self.c), -1j * self.d]])

    def norm(self) -> float:
        return math.hypot(abs(self.c), self.d)

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.c + other.c, self.d + other.d)

    def __mul__(self, t: float) -> "AlgebraElement":
        return AlgebraElement(self.c * t, self.d * t)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SU11Element:
    a: complex
    b: complex

    @classmethod
    def identity(cls) -> "SU11Element":
        return cls(1.0 + 0j, 0j)

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [np.conj(self.b), np.conj(self.a)]])

    def constraint(self) -> float:
        """``|a|^2 - |b|^2``, which is 1 on the group."""
        return abs(self.a) ** 2 - abs(self.b) ** 2

    def inverse(self) -> "SU11Element":
        return SU11Element(np.conj(self.a), -self.b)

    def __matmul__(self, other: "SU11Element") -> "SU11Element":
        a, b = _product(self.a, self.b, other.a, other.b)
        return SU11Element(complex(a), complex(b))


def _product(a1, b1, a2, b2):
    return a1 * a2 + b1 * np.conj(b2), a1 * b2 + b1 * np.conj(a2)


def _even_odd(z):
    """``cosh(sqrt z)`` and ``sinh(sqrt z) / sqrt z``, continued to ``z <= 0``."""
    z = np.asarray(z, dtype=float)
    s = np.sqrt(np.abs(z))
    hyper = z >= 0
    even = np.where(hyper, np.cosh(s), np.cos(s))
    safe = np.where(s > 0, s, 1.0)
    odd = np.where(s > 0, np.where(hyper, np.sinh(safe), np.sin(safe)) / safe, 1.0)
    return even, odd


def _exp(c, d, t):
    even, odd = _even_odd(t * t * (np.abs(c) ** 2 - np.square(d)))
    return even + 1j * t * odd * d, t * odd * c


def algebra_exp(M: AlgebraElement, t: float = 1.0) -> SU11Element:
    """Closed-form ``exp(t M)``, using ``M^2 = (|c|^2 - d^2) I``."""
    a, b = _exp(complex(M.c), float(M.d), float(t))
    return SU11Element(complex(a), complex(b))


def _log_factor(a, b):
    """Scalar turning ``g - Re(a) I`` into the principal logarithm of ``g``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    s2 = np.abs(b) ** 2 - a.imag**2
    if np.any(a.real <= -1):
        raise ValueError("principal logarithm undefined: real part of a is at most -1")
    s = np.sqrt(np.abs(s2))
    safe = np.where(s > 0, s, 1.0)
    hyper = np.where(s > 0, np.arcsinh(safe) / safe, 1.0)
    elliptic = np.arctan2(safe, a.real) / safe
    return np.where(s2 >= 0, hyper, elliptic)


def algebra_log(g: SU11Element) -> AlgebraElement:
    """Principal logarithm, the inverse of :func:`algebra_exp` away from the branch cut."""
    k = float(_log_factor(g.a, g.b))
    return AlgebraElement(complex(g.b * k), float(g.a.imag * k))


def _distances(a1, b1, a2, b2):
    a, b = _product(np.conj(a1), -b1, a2, b2)
    return _log_factor(a, b) * np.sqrt(np.abs(b) ** 2 + a.imag**2)


def group_distance(g: SU11Element, h: SU11Element) -> float:
    """``||log(g^-1 h)||``, a left-invariant surrogate for the path metric."""
    return float(_distances(g.a, g.b, h.a, h.b))


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class GroupCurve:
    """Samples of a curve and the constant generator on each step.

    ``convention`` is ``"left"`` when ``g[j+1] = g[j] exp(dt_j M_j)`` and
    ``"right"`` when ``g[j+1] = exp(dt_j M_j) g[j]``.
    """

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    step_c: np.ndarray
    step_d: np.ndarray
    dt: np.ndarray
    convention: str = "left"

    def __len__(self) -> int:
        return self.times.size

    def point(self, j: int) -> SU11Element:
        return SU11Element(complex(self.a[j]), complex(self.b[j]))

    def step(self, j: int) -> AlgebraElement:
        return AlgebraElement(complex(self.step_c[j]), float(self.step_d[j]))

    def constraint_drift(self) -> float:
        return float(np.max(np.abs(np.abs(self.a) ** 2 - np.abs(self.b) ** 2 - 1)))

    def length(self) -> float:
        """Sum over steps of ``||dt_j M_j||``, the length of the piecewise geodesic curve."""
        return _total_length(self.step_c * self.dt, self.step_d * self.dt)

    def section(self, lo: int, hi: int) -> "GroupCurve":
        """Samples ``lo..hi`` inclusive."""
        return GroupCurve(
            self.times[lo : hi + 1],
            self.a[lo : hi + 1],
            self.b[lo : hi + 1],
            self.step_c[lo:hi],
            self.step_d[lo:hi],
            self.dt[lo:hi],
            self.convention,
        )

    def distance_matrix(self) -> np.ndarray:
        return _distances(self.a[:, None], self.b[:, None], self.a[None, :], self.b[None, :])

    def to_jsonl(self) -> str:
        rows = (
            json.dumps({"t": float(t), "a": [float(a.real), float(a.imag)], "b": [float(b.real), float(b.imag)]})
            for t, a, b in zip(self.times, self.a, self.b)
        )
        return "\n".join(rows) + "\n"


def _total_length(inc_c, inc_d) -> float:
    return float(np.sum(np.hypot(np.abs(inc_c), inc_d)))


def curve_from_steps(times, step_c, step_d=None, convention: str = "left", dt=None) -> GroupCurve:
    """Propagate the identity through constant generators on ``[times[j], times[j+1])``.

    ``dt`` overrides the step widths when the caller knows them more exactly than
    the differences of ``times``.
    """
    if convention not in ("left", "right"):
        raise ValueError(f"unknown convention {convention!r}")
    times = np.asarray(times, dtype=float)
    step_c = np.asarray(step_c, dtype=complex)
    step_d = np.zeros(step_c.size) if step_d is None else np.asarray(step_d, dtype=float)
    if times.size != step_c.size + 1 or step_d.size != step_c.size:
        raise ValueError("need one generator per step between consecutive times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must increase")
    dt = np.diff(times) if dt is None else np.asarray(dt, dtype=float)
    ea, eb = _exp(step_c, step_d, dt)
    a = np.empty(times.size, dtype=complex)
    b = np.empty(times.size, dtype=complex)
    a[0], b[0] = 1.0, 0.0
    ga, gb = 1.0 + 0j, 0j
    for j in range(step_c.size):
        if convention == "left":
            ga, gb = ga * ea[j] + gb * eb[j].conjugate(), ga * eb[j] + gb * ea[j].conjugate()
        else:
            ga, gb = ea[j] * ga + eb[j] * gb.conjugate(), ea[j] * gb + eb[j] * ga.conjugate()
        a[j + 1], b[j + 1] = ga, gb
    return GroupCurve(times, a, b, step_c, step_d, dt, convention)


def modulated_potential(f: SampledFunction, k: float) -> np.ndarray:
    """``exp(-2 pi i k x) f(x)`` at the grid points."""
    return np.exp(-2j * np.pi * (k * f.grid)) * f.samples


def nlft_evolve(f: SampledFunction, k: float, convention: str = "left") -> GroupCurve:
    """Curve solving the nonlinear Fourier equation at frequency ``k`` for piecewise-constant ``f``."""
    if not isinstance(f.domain, Compact):
        raise ValueError("the nonlinear Fourier curve needs a compactly supported potential")
    times = f.domain.left + f.spacing * np.arange(f.grid_count + 1)
    dt = np.full(f.grid_count, f.spacing)
    return curve_from_steps(times, modulated_potential(f, k), None, convention, dt)


@dataclass(frozen=True)
class Trace:
    """Cumulative sums of the increments ``dt_j M_j``, starting at zero."""

    times: np.ndarray
    c: np.ndarray
    d: np.ndarray
    inc_c: np.ndarray
    inc_d: np.ndarray

    def point(self, j: int) -> AlgebraElement:
        return AlgebraElement(complex(self.c[j]), float(self.d[j]))

    def length(self) -> float:
        return _total_length(self.inc_c, self.inc_d)

    def distance_matrix(self) -> np.ndarray:
        return np.hypot(np.abs(self.c[:, None] - self.c[None, :]), self.d[:, None] - self.d[None, :])


def left_trace(curve: GroupCurve) -> Trace:
    """Integral of ``g^-1 g'``, which on each step is the constant generator."""
    if curve.convention != "left":
        raise ValueError("the left trace needs a left-convention curve")
    inc_c = curve.step_c * curve.dt
    inc_d = curve.step_d * curve.dt
    c = np.zeros(len(curve), dtype=complex)
    d = np.zeros(len(curve))
    np.cumsum(inc_c, out=c[1:])
    np.cumsum(inc_d, out=d[1:])
    return Trace(curve.times, c, d, inc_c, inc_d)


def curve_variation(curve: GroupCurve, r: float) -> float:
    return metric_variation_matrix(curve.distance_matrix(), VariationParams(r))


def trace_variation(trace: Trace, r: float) -> float:
    return metric_variation_matrix(trace.distance_matrix(), VariationParams(r))


# ---------------------------------------------------------------------------
# subdivision


@dataclass(frozen=True)
class Subdivision:
    t_star: float
    index: int
    left: GroupCurve
    right: GroupCurve
    whole: float
    left_variation: float
    right_variation: float
    largest_increment: float
    r: float

    @property
    def bound(self) -> float:
        return 2 ** (-1 / self.r) * self.whole

    @property
    def right_slack(self) -> float:
        """Excess of the right half over the halving bound; at most one increment."""
        return max(0.0, self.right_variation - self.bound)


SPLIT_RTOL = 1e-12


def subdivide_curve(curve: GroupCurve, r: float) -> Subdivision:
    """Split at the last sample whose prefix variation is within ``2^(-1/r)`` of the whole."""
    if len(curve) < 3:
        raise ValueError("subdivision needs at least three samples")
    vp = VariationParams(r)
    dist = curve.distance_matrix()
    prefix = prefix_variations(dist, vp)
    whole = float(prefix[-1])
    if not whole > 0:
        raise ValueError("cannot subdivide a curve of zero variation")
    bound = 2 ** (-1 / r) * whole
    # exact ties (equal increments) must not be lost to rounding
    index = int(np.flatnonzero(prefix <= bound * (1 + SPLIT_RTOL))[-1])
    left = curve.section(0, index)
    right = curve.section(index, len(curve) - 1)
    right_var = metric_variation_matrix(dist[index:, index:], vp)
    return Subdivision(
        float(curve.times[index]),
        index,
        left,
        right,
        whole,
        float(prefix[index]),
        float(right_var),
        float(np.max(np.diag(dist, 1))),
        r,
    )


# ---------------------------------------------------------------------------
# trace comparison

COMPARISON_STEPS = 64
COMPARISON_BOX = Compact(0.0, 1.0)


@dataclass(frozen=True)
class ComparisonTable:
    r: float
    rows: list
    slope: float
    intercept: float

    def to_csv(self) -> str:
        lines = ["amplitude,seed,var_curve,var_trace,delta"]
        lines += [f"{float(e)!r},{s},{float(vc)!r},{float(vt)!r},{float(dl)!r}" for e, s, vc, vt, dl in self.rows]
        return "\n".join(lines) + "\n"


def random_potential(rng: np.random.Generator, amplitude: float, steps: int = COMPARISON_STEPS) -> SampledFunction:
    """Complex potential on [0, 1) with sup norm exactly ``amplitude``."""
    v = rng.normal(size=steps) + 1j * rng.normal(size=steps)
    m = np.abs(v).max()
    return SampledFunction(v * (amplitude / m) if m > 0 else v, COMPARISON_BOX)


def trace_comparison_experiment(r: float, amplitudes, seeds, k: float = 0.0, steps: int = COMPARISON_STEPS) -> ComparisonTable:
    """Gap between curve and trace r-variation for scaled random potentials.

    Each seed fixes one potential shape, rescaled to every amplitude.  The slope
    is a least-squares fit of ``log delta`` on ``log`` trace variation over rows
    with positive gap.
    """
    if not 1 <= r < 2:
        raise ValueError(f"the comparison is set up for 1 <= r < 2, got {r}")
    rows = []
    for seed in seeds:
        shape = random_potential(np.random.default_rng(seed), 1.0, steps)
        for eps in amplitudes:
            curve = nlft_evolve(shape.with_samples(shape.samples * eps), k)
            vc = curve_variation(curve, r)
            vt = trace_variation(left_trace(curve), r)
            rows.append((float(eps), int(seed), vc, vt, abs(vc - vt)))
    good = [(vt, dl) for _, _, _, vt, dl in rows if dl > 0 and vt > 0]
    if len(good) >= 2:
        slope, intercept = np.polyfit(np.log([g[0] for g in good]), np.log([g[1] for g in good]), 1)
    else:
        slope, intercept = math.nan, math.nan
    return ComparisonTable(r, rows, float(slope), float(intercept))
