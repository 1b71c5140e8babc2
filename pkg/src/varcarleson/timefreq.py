"""Smooth frequency cutoffs, maximal dyadic partitions, wave packets and multitiles.

Frequency intervals are exact: dyadic endpoints are ``Fraction`` values and
half-infinite intervals carry ``-inf`` / ``inf``.  Floating point enters only
when a bump or a wave packet is sampled on a grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core_grid import Compact, DyadicInterval, SampledFunction

C1 = 12
C2 = 2
C3 = Fraction(11, 10)

TRANSITION_HALFWIDTH = 0.01
# support of nu_i in units of |J| around c(J)
BUMP_SUPPORT = (-Fraction(13, 25), Fraction(51, 100))
SNAP_FRACTION = Fraction(1, 2**40)


# ---------------------------------------------------------------------------
# smooth cutoffs


def _edge(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _smoothstep(t):
    a = _edge(t)
    b = _edge(1.0 - t)
    return a / (a + b)


def nu(x):
    """Smooth monotone step: 0 left of -1/100, 1 right of 1/100, 1/2 at 0."""
    x = np.asarray(x, dtype=float)
    out = _smoothstep((x + TRANSITION_HALFWIDTH) / (2 * TRANSITION_HALFWIDTH))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BumpFunction:
    transition_halfwidth: float = TRANSITION_HALFWIDTH

    def __call__(self, x):
        return nu(x)


def nu_i(i: int, eta, reflected: bool = False):
    """The normalised cutoff ``nu(2^-i (eta + 1/2)) - nu(eta - 1/2)``."""
    eta = np.asarray(eta, dtype=float)
    if reflected:
        eta = -eta
    out = nu(2.0**-i * (eta + 0.5)) - nu(eta - 0.5)
    return np.clip(out, 0.0, 1.0)


def phi_J_i(J: DyadicInterval, i: int, xi, reflected: bool = False):
    """Frequency cutoff adapted to ``J``; vanishes outside the 26/25-dilate of ``J``."""
    eta = (np.asarray(xi, dtype=float) - float(J.center)) / float(J.length())
    out = nu_i(i, eta, reflected)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# frequency intervals with exact, possibly infinite, endpoints


@dataclass(frozen=True)
class Interval:
    """Half-open ``[lo, hi)``; ``lo`` may be ``-inf`` and ``hi`` may be ``inf``."""

    lo: object
    hi: object

    @classmethod
    def of(cls, J: DyadicInterval) -> "Interval":
        return cls(J.left, J.right)

    @property
    def finite(self) -> bool:
        return not (_is_inf(self.lo) or _is_inf(self.hi))

    @property
    def length(self):
        return self.hi - self.lo

    @property
    def center(self):
        return (self.lo + self.hi) / 2

    def contains(self, x) -> bool:
        return self.lo <= x < self.hi

    def shift(self, d) -> "Interval":
        return Interval(self.lo + d, self.hi + d)

    def dilate(self, c) -> "Interval":
        """Dilate about the centre; half-infinite intervals are left unchanged."""
        if not self.finite:
            return self
        half = Fraction(c) * self.length / 2
        return Interval(self.center - half, self.center + half)

    def intersects(self, other: "Interval") -> bool:
        return max(self.lo, other.lo) < min(self.hi, other.hi)

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def reflect(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def to_json(self) -> list:
        return [_num_json(self.lo), _num_json(self.hi)]


def _is_inf(v) -> bool:
    return isinstance(v, float) and math.isinf(v)


def _num_json(v):
    if _is_inf(v):
        return "-inf" if v < 0 else "inf"
    return str(v)


# ---------------------------------------------------------------------------
# maximal dyadic partitions


def _floor_div(x: Fraction, s: Fraction) -> int:
    return math.floor(x / s)


def _ceil_div(x: Fraction, s: Fraction) -> int:
    return math.ceil(x / s)


def _scale_at_least(target: Fraction) -> int:
    """Smallest k with 2^k >= target."""
    k = math.floor(math.log2(float(target)))
    while Fraction(2) ** k < target:
        k += 1
    while Fraction(2) ** (k - 1) >= target:
        k -= 1
    return k


def is_dyadic_endpoint(x, finest_scale: int) -> bool:
    """True when ``x`` is an endpoint of some dyadic interval of length ``>= 2^finest_scale``."""
    q = Fraction(x) / Fraction(2) ** finest_scale
    return q.denominator == 1


def avoid_dyadic_endpoint(x, finest_scale: int) -> Fraction:
    """Nudge ``x`` right by ``2^-40`` of the finest scale when it sits on an endpoint."""
    x = Fraction(x)
    if is_dyadic_endpoint(x, finest_scale):
        return x + SNAP_FRACTION * Fraction(2) ** finest_scale
    return x


def _admissible_range(xi: Fraction, xi2: Fraction, k: int) -> tuple[int, int]:
    s = Fraction(2) ** k
    return _ceil_div(xi, s) + 1, _floor_div(xi2, s) - 2


def _maximal_family(xi: Fraction, xi2: Fraction, k_min: int) -> list[DyadicInterval]:
    k_top = _scale_at_least(xi2 - xi)
    out = []
    for k in range(k_top, k_min - 1, -1):
        lo, hi = _admissible_range(xi, xi2, k)
        if lo > hi:
            continue
        plo, phi = _admissible_range(xi, xi2, k + 1)
        if plo > phi:
            ms: Iterable[int] = range(lo, hi + 1)
        else:
            ms = list(range(lo, min(hi, 2 * plo - 1) + 1)) + list(range(max(lo, 2 * phi + 2), hi + 1))
        out.extend(DyadicInterval(k, m) for m in ms)
    out.sort(key=lambda J: J.left)
    return out


def maximal_partition(xi, xi2, depth_cap: int = 20) -> list[tuple[DyadicInterval, int]]:
    """Maximal dyadic ``J`` inside ``(xi, xi2)`` keeping distance ``>= |J|`` from both ends.

    The two infinite towers accumulating at the ends are cut at
    ``|J| >= 2^-depth_cap (xi2 - xi)``.  Each ``J`` comes with ``i`` such that
    its left neighbour in the untruncated family has length ``2^i |J|``.
    """
    xi, xi2 = Fraction(xi), Fraction(xi2)
    if not xi < xi2:
        raise ValueError("maximal_partition needs xi < xi2")
    k_min = _scale_at_least((xi2 - xi) / 2**depth_cap)
    probe = k_min - 3
    for end in (xi, xi2):
        if is_dyadic_endpoint(end, probe):
            raise ValueError(f"{end} is an endpoint of a dyadic interval of length >= 2^{probe}")
    deep = _maximal_family(xi, xi2, probe)
    by_right = {J.right: J for J in deep}
    out = []
    for J in deep:
        if J.scale < k_min:
            continue
        left = by_right.get(J.left)
        if left is None:
            raise AssertionError(f"no left neighbour for {J}")
        i = left.scale - J.scale
        if i not in (-1, 0, 1):
            raise AssertionError(f"neighbour size ratio 2^{i} outside {{1/2, 1, 2}}")
        out.append((J, i))
    return out


def uncovered_measure(parts: Sequence[tuple[DyadicInterval, int]], xi, xi2) -> Fraction:
    """Length of ``(xi, xi2)`` not covered by the returned partition."""
    return Fraction(xi2) - Fraction(xi) - sum((J.length() for J, _ in parts), Fraction(0))


def partition_sum(parts: Sequence[tuple[DyadicInterval, int]], eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    total = np.zeros_like(eta)
    for J, i in parts:
        total += phi_J_i(J, i, eta)
    return total


# ---------------------------------------------------------------------------
# multitile index set


@dataclass(frozen=True, order=True)
class RhoIndex:
    cls: int
    m: int
    n: int
    side: str
    i_rho: int = 0

    def __post_init__(self):
        if self.cls not in (1, 2, 3) or not 1 <= self.m <= 4 or not 1 <= self.n <= 4:
            raise ValueError(f"invalid multitile index {self}")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.i_rho not in (-1, 0, 1):
            raise ValueError("i_rho must be -1, 0 or 1")

    @property
    def key(self) -> tuple:
        return (self.cls, self.m, self.n, self.side)

    def to_json(self) -> list:
        return [self.cls, self.m, self.n, self.side]

    def matches(self, J: DyadicInterval, xi, xi2) -> bool:
        """Class predicate: is ``J`` sorted into this index for the pair ``(xi, xi2)``?"""
        if J.is_left_child() != (self.side == "left"):
            return False
        a, b, s = J.left, J.right, J.length()
        if not (xi < a and b < xi2):
            return False
        if self.cls in (1, 2):
            low_ok = a - (self.m + 1) * s <= xi < b - (self.m + 1) * s
        else:
            low_ok = a - xi > self.m * s
        if self.cls in (1, 3):
            high_ok = a + (self.n + 1) * s <= xi2 < b + (self.n + 1) * s
        else:
            high_ok = xi2 - b >= self.n * s
        return low_ok and high_ok


# i_rho: size exponent of the left neighbour, shared by every J sorted into the class
R = (
    RhoIndex(1, 2, 1, "left", 0),
    RhoIndex(1, 2, 2, "left", 0),
    RhoIndex(1, 3, 1, "left", 0),
    RhoIndex(1, 3, 2, "left", 0),
    RhoIndex(2, 1, 1, "left", -1),
    RhoIndex(2, 1, 1, "right", -1),
    RhoIndex(2, 2, 1, "right", 0),
    RhoIndex(3, 4, 1, "left", 1),
    RhoIndex(3, 3, 1, "right", 0),
    RhoIndex(3, 4, 2, "left", 1),
)

_R_BY_KEY = {rho.key: rho for rho in R}


def rho_from_key(key) -> RhoIndex:
    cls, m, n, side = key
    key = (int(cls), int(m), int(n), str(side))
    if key in _R_BY_KEY:
        return _R_BY_KEY[key]
    return RhoIndex(*key)


def classify(J: DyadicInterval, xi, xi2, indices: Sequence[RhoIndex] = R) -> list[RhoIndex]:
    return [rho for rho in indices if rho.matches(J, xi, xi2)]


# ---------------------------------------------------------------------------
# multitiles


@dataclass(frozen=True)
class Tile:
    I: DyadicInterval
    omega: DyadicInterval

    def __post_init__(self):
        if self.I.scale + self.omega.scale != -1:
            raise ValueError("a tile needs |I| |omega| = 1/2")


@dataclass(frozen=True)
class Multitile:
    I: DyadicInterval
    omega_u: DyadicInterval
    omega_l: Interval
    omega_h: Interval
    rho: RhoIndex
    reflected: bool = False

    @property
    def upper(self) -> Interval:
        return Interval.of(self.omega_u)

    @property
    def omega_m(self) -> Interval:
        """Convex hull of the doubled upper and lower frequency intervals."""
        return self.upper.dilate(C2).hull(self.omega_l.dilate(C2))

    def to_json(self) -> dict:
        out = {"I": self.I.to_json(), "omega_u": self.omega_u.to_json(), "rho": self.rho.to_json()}
        if self.reflected:
            out["reflected"] = True
        return out


def build_multitile(I: DyadicInterval, omega_u: DyadicInterval, rho: RhoIndex, reflected: bool = False) -> Multitile:
    """Attach the lower and higher frequency intervals dictated by ``rho`` to ``I x omega_u``."""
    if I.scale + omega_u.scale != -1:
        raise ValueError("a multitile needs |I| |omega_u| = 1/2")
    if omega_u.is_left_child() != (rho.side == "left"):
        raise ValueError(f"omega_u is not the {rho.side}-child of its parent")
    a, b, s = omega_u.left, omega_u.right, omega_u.length()
    up = Interval(a, b)
    if rho.cls == 3:
        low = Interval(-math.inf, b - (rho.m + 1) * s)
    else:
        low = up.shift(-(rho.m + 1) * s)
    if rho.cls == 2:
        high = Interval(a + (rho.n + 1) * s, math.inf)
    else:
        high = up.shift((rho.n + 1) * s)
    return Multitile(I, omega_u, low, high, rho, reflected)


def multitile_from_json(obj: dict) -> Multitile:
    I = DyadicInterval(int(obj["I"]["k"]), int(obj["I"]["m"]))
    omega_u = DyadicInterval(int(obj["omega_u"]["k"]), int(obj["omega_u"]["m"]))
    return build_multitile(I, omega_u, rho_from_key(obj["rho"]), bool(obj.get("reflected", False)))


def dumps_multitiles(tiles: Iterable[Multitile]) -> str:
    """One JSON object per line."""
    return "".join(json.dumps(P.to_json()) + "\n" for P in tiles)


def loads_multitiles(text: str) -> list[Multitile]:
    return [multitile_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def _mirror(J: DyadicInterval) -> DyadicInterval:
    return DyadicInterval(J.scale, -J.index - 1)


def reflect_multitile(P: Multitile) -> Multitile:
    """Mirror time and frequency; 2- and 3-indices trade places and the side flips."""
    cls = {1: 1, 2: 3, 3: 2}[P.rho.cls]
    side = "right" if P.rho.side == "left" else "left"
    rho = rho_from_key((cls, P.rho.n, P.rho.m, side))
    rho = RhoIndex(rho.cls, rho.m, rho.n, rho.side, P.rho.i_rho)
    return build_multitile(_mirror(P.I), _mirror(P.omega_u), rho, not P.reflected)


def constant_block_violations(P: Multitile) -> list[str]:
    """Frequency-geometry requirements on a multitile; class-3 tiles are checked after reflection."""
    if P.rho.cls == 3:
        return constant_block_violations(reflect_multitile(P))
    up = P.upper
    out = []
    if up.dilate(C2).intersects(P.omega_l.dilate(C2)):
        out.append("C2 omega_u meets C2 omega_l")
    if up.dilate(C2).intersects(P.omega_h):
        out.append("C2 omega_u meets omega_h")
    if not up.dilate(C1).contains_interval(P.omega_l.dilate(C2)):
        out.append("C2 omega_l not inside C1 omega_u")
    if not P.omega_l.dilate(C1).contains_interval(up.dilate(C2)):
        out.append("C2 omega_u not inside C1 omega_l")
    lo, hi = BUMP_SUPPORT
    c, s = up.center, up.length
    if not up.dilate(C3).contains_interval(Interval(c + lo * s, c + hi * s)):
        out.append("packet spectrum leaves C3 omega_u")
    return out


def separation_split(tiles: Sequence[Multitile]) -> list[list[Multitile]]:
    """Sort tiles by frequency scale mod 5 and same-scale position mod 13.

    Within a class, distinct scales differ by at least 2^5 and distinct
    equal-length upper intervals have disjoint 12-fold dilates.
    """
    classes: dict[tuple[int, int], list[Multitile]] = {}
    for P in tiles:
        key = (P.omega_u.scale % 5, P.omega_u.index % 13)
        classes.setdefault(key, []).append(P)
    return [classes[k] for k in sorted(classes)]


# ---------------------------------------------------------------------------
# wave packets on a periodic box


def _box(grid) -> tuple[Compact, int]:
    if isinstance(grid, SampledFunction):
        dom, n = grid.domain, grid.grid_count
    else:
        dom, n = grid
    if not isinstance(dom, Compact):
        raise ValueError("wave packets live on a compact box")
    return dom, int(n)


def box_frequencies(grid) -> np.ndarray:
    """FFT-ordered frequencies ``k / |box|`` of the periodic box."""
    dom, n = _box(grid)
    return np.fft.fftfreq(n, d=(dom.right - dom.left) / n)


def box_spectrum(f: SampledFunction) -> np.ndarray:
    """``sum_j f_j exp(-2 pi i xi_k x_j) dx`` in FFT order."""
    dom, n = _box(f)
    xi = box_frequencies(f)
    return np.fft.fft(f.samples) * f.spacing * np.exp(-2j * np.pi * xi * dom.left)


def _check_band(J: DyadicInterval, grid):
    dom, n = _box(grid)
    nyquist = (n // 2 - 1) / (dom.right - dom.left)
    reach = Interval.of(J).dilate(C3)
    if float(reach.lo) < -nyquist or float(reach.hi) > nyquist:
        raise ValueError(f"grid band limit {nyquist} does not cover the packet spectrum of {J}")


def packet_transform(P: Multitile, xi) -> np.ndarray:
    """``sqrt|I| sqrt(phi_J(xi)) exp(-2 pi i c(I) xi)``."""
    xi = np.asarray(xi, dtype=float)
    root = np.sqrt(phi_J_i(P.omega_u, P.rho.i_rho, xi, P.reflected))
    return math.sqrt(float(P.I.length())) * root * np.exp(-2j * np.pi * float(P.I.center) * xi)


def _synthesize(transform: np.ndarray, grid) -> np.ndarray:
    dom, n = _box(grid)
    xi = box_frequencies(grid)
    return np.fft.ifft(transform * np.exp(2j * np.pi * xi * dom.left)) * n / (dom.right - dom.left)


def wave_packet(P: Multitile, grid) -> SampledFunction:
    """Samples of the wave packet of ``P`` on a box treated as periodic."""
    _check_band(P.omega_u, grid)
    dom, n = _box(grid)
    return SampledFunction(_synthesize(packet_transform(P, box_frequencies(grid)), grid), dom)


def packet_coefficient(f: SampledFunction, P: Multitile, spectrum: np.ndarray | None = None) -> complex:
    """``<f, phi_P>`` by discrete Parseval on the box."""
    _check_band(P.omega_u, f)
    if spectrum is None:
        spectrum = box_spectrum(f)
    xi = box_frequencies(f)
    return complex(np.sum(spectrum * np.conj(packet_transform(P, xi))) / f.length)


def time_intervals(length_scale: int, center: Fraction, radius: int) -> list[DyadicInterval]:
    """``2 * radius`` consecutive dyadic intervals of length ``2^length_scale`` around ``center``."""
    m0 = math.floor(Fraction(center) / Fraction(2) ** length_scale)
    return [DyadicInterval(length_scale, m) for m in range(m0 - radius, m0 + radius)]


def reconstruct_check(J: DyadicInterval, i: int, f: SampledFunction, I_range) -> float:
    """Relative L2 error of the wave-packet expansion of ``f^ phi_J`` on the box frequencies.

    ``I_range`` is either an explicit list of time intervals of length
    ``1/(2|J|)`` or a radius, meaning that many intervals on each side of the
    box centre.  When ``f^ phi_J`` vanishes the absolute error is returned.
    """
    dom, n = _box(f)
    scale = -1 - J.scale
    if isinstance(I_range, int):
        centre = (Fraction(dom.left) + Fraction(dom.right)) / 2
        I_range = time_intervals(scale, centre, I_range)
    side = "left" if J.is_left_child() else "right"
    rho = RhoIndex(1, 1, 1, side, i)
    xi = box_frequencies(f)
    spec = box_spectrum(f)
    lhs = np.zeros(n, dtype=complex)
    for I in I_range:
        P = Multitile(I, J, Interval.of(J), Interval.of(J), rho)
        hat = packet_transform(P, xi)
        lhs += np.sum(spec * np.conj(hat)) / f.length * hat
    rhs = spec * phi_J_i(J, i, xi)
    err = float(np.linalg.norm(lhs - rhs))
    ref = float(np.linalg.norm(rhs))
    return err / ref if ref > 1e-12 * max(float(np.linalg.norm(spec)), 1e-300) else err


# ---------------------------------------------------------------------------
# linearised model operators


@dataclass(frozen=True)
class LinearizationData:
    """Per grid point frequency chains and dual coefficients.

    ``xi[j]`` holds ``xi_0 < ... < xi_K`` at grid point ``j`` and ``a[j]`` holds
    ``a_1 .. a_K``; shorter chains are padded with ``nan`` frequencies and zero
    coefficients.
    """

    xi: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        a = np.asarray(self.a, dtype=complex)
        if xi.ndim != 2 or a.shape != (xi.shape[0], xi.shape[1] - 1):
            raise ValueError("xi must be (points, K+1) and a must be (points, K)")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "a", a)

    @property
    def K(self) -> int:
        return self.a.shape[1]

    def coefficient_mass(self, r: float) -> np.ndarray:
        rconj = r / (r - 1.0)
        return np.sum(np.abs(self.a) ** rconj, axis=1)

    def jump_frequencies(self):
        """``(xi_{k-1}, xi_k, a_k)`` as three (points, K) arrays."""
        return self.xi[:, :-1], self.xi[:, 1:], self.a


def _membership(values: np.ndarray, interval: Interval) -> np.ndarray:
    lo, hi = float(interval.lo), float(interval.hi)
    with np.errstate(invalid="ignore"):
        return (values >= lo) & (values < hi)


def tile_coefficient_field(P: Multitile, lin: LinearizationData) -> np.ndarray:
    """``a_P(x)``: the coefficient of the unique jump with ends in ``omega_l`` and ``omega_h``."""
    start, stop, a = lin.jump_frequencies()
    hit = _membership(start, P.omega_l) & _membership(stop, P.omega_h)
    counts = hit.sum(axis=1)
    if np.any(counts > 1):
        raise ValueError(f"two jumps select multitile {P.to_json()} at one point")
    return np.where(hit, a, 0).sum(axis=1)


def model_operator(tiles: Sequence[Multitile], f: SampledFunction, lin: LinearizationData, E=None) -> SampledFunction:
    """``sum_P <f, phi_P> phi_P(x) a_P(x)``, optionally restricted to ``E``."""
    dom, n = _box(f)
    if lin.xi.shape[0] != n:
        raise ValueError("linearization must be sampled on the grid of f")
    keys = {(P.rho.key, P.rho.i_rho, P.reflected) for P in tiles}
    if len(keys) > 1:
        raise ValueError("model_operator expects tiles of a single index")
    out = np.zeros(n, dtype=complex)
    if not tiles:
        return SampledFunction(out, dom)
    spec = box_spectrum(f)
    xi = box_frequencies(f)
    for P in tiles:
        _check_band(P.omega_u, f)
        weight = tile_coefficient_field(P, lin)
        if not np.any(weight):
            continue
        hat = packet_transform(P, xi)
        coef = np.sum(spec * np.conj(hat)) / f.length
        if coef == 0:
            continue
        out += coef * _synthesize(hat, f) * weight
    if E is not None:
        mask = E.samples.real if isinstance(E, SampledFunction) else np.asarray(E)
        out = out * (mask != 0)
    return SampledFunction(out, dom)
