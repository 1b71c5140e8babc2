"""Energy and density of multitile collections and the greedy tree selections built on them.

Top frequencies live on a finite lattice fixed by the input collection, so
every supremum below is an exact maximum over finitely many candidate tops.
Lattice points are handled as integers in units of the lattice step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import sparse

from .core_grid import Compact, DyadicInterval, SampledFunction
from .timefreq import (
    C1,
    C2,
    C3,
    R,
    Interval,
    LinearizationData,
    Multitile,
    box_spectrum,
    build_multitile,
    constant_block_violations,
    model_operator,
    packet_coefficient,
)

LATTICE_PAD = 10
# int64 headroom for lattice units C1 * 2^(2M + 20)
MAX_FRAME_SCALE = 19
_CHUNK = 1 << 22


# ---------------------------------------------------------------------------
# top-frequency lattice


def _pow2(k: int) -> Fraction:
    return Fraction(2) ** k


@dataclass(frozen=True)
class TopFrame:
    """Admissible tops: ``I_T`` inside ``[-2^M, 2^M)``, ``xi_T`` a multiple of ``2^-(M+10)`` below ``C1 2^(M+10)``."""

    M: int

    def __post_init__(self):
        if self.M > MAX_FRAME_SCALE:
            raise ValueError(f"frame scale {self.M} exceeds {MAX_FRAME_SCALE}; lattice units would overflow")

    @classmethod
    def of(cls, tiles: Sequence[Multitile]) -> "TopFrame":
        """Smallest ``M`` with every tile inside the square ``[-2^M, 2^M]^2``."""
        reach = Fraction(0)
        for P in tiles:
            for v in (P.I.left, P.I.right, P.omega_u.left, P.omega_u.right):
                reach = max(reach, abs(v))
        if reach == 0:
            return cls(0)
        M = math.ceil(math.log2(reach))
        while _pow2(M) < reach:
            M += 1
        while _pow2(M - 1) >= reach:
            M -= 1
        return cls(M)

    @property
    def step(self) -> Fraction:
        return _pow2(-self.M - LATTICE_PAD)

    @property
    def bound(self) -> int:
        return math.floor(C1 * _pow2(self.M + LATTICE_PAD) / self.step)

    def units(self, x) -> int:
        q = Fraction(x) / self.step
        if q.denominator != 1:
            raise ValueError(f"{x} is not on the top-frequency lattice")
        return q.numerator

    def frequency(self, n: int) -> Fraction:
        return n * self.step

    def half_width(self, I_T: DyadicInterval) -> int:
        """``(C2 - 1) / (4 |I_T|)`` in lattice units."""
        return self.units(Fraction(C2 - 1) / (4 * I_T.length()))

    def admits(self, I_T: DyadicInterval, xi) -> bool:
        box = Interval(-_pow2(self.M), _pow2(self.M))
        q = Fraction(xi) / self.step
        return box.contains_interval(Interval.of(I_T)) and q.denominator == 1 and abs(q) <= self.bound


# ---------------------------------------------------------------------------
# trees


KINDS = ("any", "l_overlapping", "l_lacunary", "l_plus", "l_minus")


def top_window(I_T: DyadicInterval, xi_T) -> Interval:
    h = Fraction(C2 - 1) / (4 * I_T.length())
    return Interval(Fraction(xi_T) - h, Fraction(xi_T) + h)


@dataclass
class Tree:
    tiles: list
    I_T: DyadicInterval
    xi_T: Fraction
    kind: str = "any"
    ids: tuple = ()
    energy_contrib: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tree kind {self.kind!r}")
        self.xi_T = Fraction(self.xi_T)

    @property
    def omega_T(self) -> Interval:
        return top_window(self.I_T, self.xi_T)

    def overlap_flags(self) -> list[bool]:
        return [P.omega_l.dilate(C2).contains(self.xi_T) for P in self.tiles]

    def actual_kind(self) -> str:
        flags = self.overlap_flags()
        if flags and all(flags):
            return "l_overlapping"
        if not any(flags):
            return "l_lacunary"
        return "any"

    def split(self) -> tuple["Tree", "Tree"]:
        """The l-overlapping and l-lacunary parts, both with this top."""
        flags = self.overlap_flags()
        ids = self.ids or (None,) * len(self.tiles)
        over = [(P, i) for P, i, f in zip(self.tiles, ids, flags) if f]
        lac = [(P, i) for P, i, f in zip(self.tiles, ids, flags) if not f]

        def make(pairs, kind):
            keep = tuple(i for _, i in pairs) if self.ids else ()
            return Tree([P for P, _ in pairs], self.I_T, self.xi_T, kind, keep)

        return make(over, "l_overlapping"), make(lac, "l_lacunary")

    def union(self, other: "Tree") -> "Tree":
        if (self.I_T, self.xi_T) != (other.I_T, other.xi_T):
            raise ValueError("only trees with identical top data can be merged")
        kind = self.kind if self.kind == other.kind else "any"
        return Tree(self.tiles + other.tiles, self.I_T, self.xi_T, kind, self.ids + other.ids)

    def to_json(self) -> dict:
        out = {
            "top": {"I_T": self.I_T.to_json(), "xi_T": str(self.xi_T)},
            "kind": self.kind,
            "tile_ids": [int(i) for i in self.ids],
        }
        if self.energy_contrib is not None:
            out["energy_contrib"] = self.energy_contrib
        return out


def tree_violations(T: Tree, frame: TopFrame | None = None) -> list[str]:
    """Failures of the tree axioms and of the declared kind."""
    out = []
    window = T.omega_T
    for P in T.tiles:
        if not T.I_T.contains_interval(P.I):
            out.append(f"time interval {P.I} not inside {T.I_T}")
        if not P.omega_m.contains_interval(window):
            out.append(f"top window not inside omega_m of {P.to_json()}")
    flags = T.overlap_flags()
    if T.kind == "l_overlapping" and not all(flags):
        out.append("declared l-overlapping but xi_T misses some C2 omega_l")
    if T.kind == "l_lacunary" and any(flags):
        out.append("declared l-lacunary but xi_T meets some C2 omega_l")
    if frame is not None and not frame.admits(T.I_T, T.xi_T):
        out.append("top data outside the admissible lattice")
    return out


def separation_violations(T: Tree) -> list[str]:
    """Separation consequences for a tree, checked on its overlapping and lacunary parts."""
    out = []
    over, lac = T.split()
    for part, overlapping in ((over, True), (lac, False)):
        for P in part.tiles:
            for Q in part.tiles:
                if Q.omega_u.length() < P.omega_u.length():
                    if overlapping and P.upper.dilate(C3).intersects(Q.upper.dilate(C2)):
                        out.append(f"overlapping tiles {P.to_json()} / {Q.to_json()} meet in frequency")
                    if not overlapping and P.omega_l.dilate(C3).intersects(Q.omega_l.dilate(C3)):
                        out.append(f"lacunary tiles {P.to_json()} / {Q.to_json()} share lower frequencies")
    for a, P in enumerate(T.tiles):
        for Q in T.tiles[a + 1 :]:
            if P != Q and P.omega_u.scale == Q.omega_u.scale and P.I.intersects(Q.I):
                out.append(f"equal-scale tiles {P.to_json()} / {Q.to_json()} overlap in time")
    return out


def singleton_tree(P: Multitile, frame: TopFrame, tile_id: int | None = None) -> Tree:
    """A valid tree holding one tile, topped by its own time interval."""
    H = frame.half_width(P.I)
    n = frame.units(P.omega_m.lo) + H
    return Tree([P], P.I, frame.frequency(n), "any", (tile_id,) if tile_id is not None else ())


# ---------------------------------------------------------------------------
# candidate tops


class _Geometry:
    """Integer lattice data for a fixed tile list and frame."""

    def __init__(self, tiles: Sequence[Multitile], frame: TopFrame):
        for P in tiles:
            if P.rho.cls == 3:
                raise ValueError("tree selection takes 1- and 2-indices; reflect 3-index tiles first")
        self.tiles = list(tiles)
        self.frame = frame
        N = len(self.tiles)
        self.scale = np.array([P.I.scale for P in tiles], dtype=np.int64)
        self.index = np.array([P.I.index for P in tiles], dtype=np.int64)
        mid = [P.omega_m for P in tiles]
        low = [P.omega_l.dilate(C2) for P in tiles]
        self.lm = np.array([frame.units(w.lo) for w in mid], dtype=np.int64)
        self.hm = np.array([frame.units(w.hi) for w in mid], dtype=np.int64)
        self.ll = np.array([frame.units(w.lo) for w in low], dtype=np.int64)
        self.hl = np.array([frame.units(w.hi) for w in low], dtype=np.int64)
        tops = set()
        for P in tiles:
            if P.I.scale > frame.M:
                raise ValueError(f"tile {P.to_json()} is larger than the frame")
            tops.update(P.I.ancestor(s) for s in range(P.I.scale, frame.M + 1))
        self.tops = sorted(tops, key=lambda J: (-J.scale, J.index))
        self.top_scale = np.array([J.scale for J in self.tops], dtype=np.int64)
        self.top_index = np.array([J.index for J in self.tops], dtype=np.int64)
        self.top_length = np.array([float(J.length()) for J in self.tops])
        self.top_center = np.array([float(J.center) for J in self.tops])
        self.H = np.array([frame.half_width(J) for J in self.tops], dtype=np.int64)
        if N:
            shift = self.top_scale[:, None] - self.scale[None, :]
            self.inside = (shift >= 0) & ((self.index[None, :] >> np.maximum(shift, 0)) == self.top_index[:, None])
        else:
            self.inside = np.zeros((len(self.tops), 0), dtype=bool)

    def __len__(self):
        return len(self.tiles)

    def intervals(self, rows, overlapping: bool):
        """Inclusive lattice ranges of ``xi_T`` for which each tile joins a tree topped at ``rows``."""
        H = self.H[rows][:, None]
        lo = self.lm[None, :] + H
        hi = self.hm[None, :] - H
        if overlapping:
            lo = np.maximum(lo, self.ll[None, :])
            hi = np.minimum(hi, self.hl[None, :] - 1)
        B = self.frame.bound
        return np.maximum(lo, -B), np.minimum(hi, B)

    def members(self, row: int, n: int, active: np.ndarray, overlapping: bool = False) -> np.ndarray:
        H = self.H[row]
        ok = self.inside[row] & active & (self.lm + H <= n) & (n <= self.hm - H)
        if overlapping:
            ok &= (self.ll <= n) & (n < self.hl)
        return np.flatnonzero(ok)

    def chunks(self, per_row: int):
        step = max(1, _CHUNK // max(per_row, 1))
        for start in range(0, len(self.tops), step):
            yield np.arange(start, min(len(self.tops), start + step))


def _hits(lo, hi, valid, cand):
    """``hit[c, j, p]``: tile ``p`` is admitted at candidate ``cand[c, j]``."""
    return valid[:, None, :] & (lo[:, None, :] <= cand[:, :, None]) & (cand[:, :, None] <= hi[:, None, :])


# ---------------------------------------------------------------------------
# energy


def packet_coefficients(tiles: Sequence[Multitile], f: SampledFunction) -> np.ndarray:
    spec = box_spectrum(f)
    return np.array([packet_coefficient(f, P, spec) for P in tiles], dtype=complex)


@dataclass
class _EnergyScan:
    best: np.ndarray  # per top, max of (1/|I_T|) sum over an l-overlapping tree
    top_n: np.ndarray  # per top, largest n reaching the threshold (or None)


def _energy_scan(geom: _Geometry, active: np.ndarray, mass: np.ndarray, threshold: float | None = None) -> _EnergyScan:
    C, N = len(geom.tops), len(geom)
    best = np.zeros(C)
    top_n = np.full(C, np.iinfo(np.int64).min, dtype=np.int64)
    if N == 0:
        return _EnergyScan(best, top_n)
    for rows in geom.chunks(2 * N * N):
        lo, hi = geom.intervals(rows, overlapping=True)
        valid = geom.inside[rows] & active[None, :] & (lo <= hi)
        # the score only changes at range ends, so those are the candidates
        cand = np.concatenate([lo, hi], axis=1)
        cand_ok = np.concatenate([valid, valid], axis=1)
        score = _hits(lo, hi, valid, cand).astype(float) @ mass
        score = np.where(cand_ok, score, -np.inf) / geom.top_length[rows][:, None]
        best[rows] = np.maximum(score.max(axis=1), 0.0)
        if threshold is not None:
            ok = score >= threshold
            masked = np.where(ok, cand, np.iinfo(np.int64).min)
            top_n[rows] = masked.max(axis=1)
    return _EnergyScan(best, top_n)


def energy(tiles: Sequence[Multitile], f: SampledFunction, frame: TopFrame | None = None, coefficients=None) -> float:
    """Exact supremum over l-overlapping trees of ``sqrt((1/|I_T|) sum |<f, phi_P>|^2)``."""
    if not tiles:
        return 0.0
    frame = frame or TopFrame.of(tiles)
    geom = _Geometry(tiles, frame)
    c = packet_coefficients(tiles, f) if coefficients is None else np.asarray(coefficients)
    scan = _energy_scan(geom, np.ones(len(tiles), dtype=bool), np.abs(c) ** 2)
    return math.sqrt(float(scan.best.max()))


# ---------------------------------------------------------------------------
# density


def _conjugate(r: float) -> float:
    if not 1 < r < math.inf:
        raise ValueError(f"density needs 1 < r < inf, got {r}")
    return r / (r - 1.0)


class _DensityField:
    """Jump mass ``1_E |a_k|^{r'} dx`` bucketed by the lattice cell of ``xi_{k-1}``."""

    def __init__(self, geom: _Geometry, domain: Compact, grid_count: int, E, lin: LinearizationData, r: float):
        self.geom = geom
        self.rconj = _conjugate(r)
        n = grid_count
        if lin.xi.shape[0] != n:
            raise ValueError("linearization must be sampled on the tile grid")
        dx = (domain.right - domain.left) / n
        self.x = domain.left + dx * np.arange(n)
        mask = _as_mask(E, n)
        start = lin.xi[:, :-1]
        amp = np.abs(lin.a) ** self.rconj
        keep = mask[:, None] & (amp > 0) & np.isfinite(start)
        rows, cols = np.nonzero(keep)
        step = float(geom.frame.step)
        cells = np.floor(start[rows, cols] / step).astype(np.int64)
        self.cells, inverse = np.unique(cells, return_inverse=True)
        self.mass = sparse.csc_matrix((amp[rows, cols] * dx, (rows, inverse)), shape=(n, self.cells.size))

    def _weight(self, row: int) -> np.ndarray:
        L = self.geom.top_length[row]
        return (1.0 + np.abs(self.x - self.geom.top_center[row]) / L) ** -4 / L

    def scan(self, active: np.ndarray, threshold: float | None = None):
        """Max windowed mass per top and the smallest lattice point exceeding ``threshold``.

        For one top the window sum only rises where a cell enters the window
        or where a feasible range starts, so those points are the candidates.
        """
        geom = self.geom
        C = len(geom.tops)
        best = np.zeros(C)
        first = np.full(C, np.iinfo(np.int64).max, dtype=np.int64)
        if len(geom) == 0 or self.cells.size == 0:
            return best, first
        lo_all, hi_all = geom.intervals(np.arange(C), overlapping=False)
        valid_all = geom.inside & active[None, :] & (lo_all <= hi_all)
        for row in np.flatnonzero(valid_all.any(axis=1)):
            keep = valid_all[row]
            starts, ends = _merge(lo_all[row, keep], hi_all[row, keep])
            H = int(geom.H[row])
            ia = np.searchsorted(self.cells, starts[0] - H, side="left")
            ib = np.searchsorted(self.cells, ends[-1] + H - 1, side="right")
            if ia == ib:
                continue
            cells = self.cells[ia:ib]
            W = self.mass[:, ia:ib].T @ self._weight(row)
            cum = np.concatenate([[0.0], np.cumsum(W)])
            cand = np.concatenate([cells - H + 1, starts])
            slot = np.searchsorted(starts, cand, side="right") - 1
            cand = cand[(slot >= 0) & (cand <= ends[np.maximum(slot, 0)])]
            upper = np.searchsorted(cells, cand + H - 1, side="right")
            lower = np.searchsorted(cells, cand - H - 1, side="right")
            value = cum[upper] - cum[lower]
            best[row] = max(float(value.max()), 0.0)
            if threshold is not None:
                over = cand[value > threshold]
                if over.size:
                    first[row] = over.min()
        return best, first


def _merge(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Union of inclusive integer ranges as sorted disjoint ``(starts, ends)``."""
    order = np.argsort(lo, kind="stable")
    starts, ends = [], []
    for a, b in zip(lo[order].tolist(), hi[order].tolist()):
        if starts and a <= ends[-1] + 1:
            ends[-1] = max(ends[-1], b)
        else:
            starts.append(a)
            ends.append(b)
    return np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64)


def _as_mask(E, n: int) -> np.ndarray:
    if E is None:
        return np.ones(n, dtype=bool)
    if isinstance(E, SampledFunction):
        E = E.samples.real
    mask = np.asarray(E) != 0
    if mask.shape != (n,):
        raise ValueError("E must be a mask on the tile grid")
    return mask


def density(tiles: Sequence[Multitile], E, lin: LinearizationData, r: float, grid, frame: TopFrame | None = None) -> float:
    """Exact supremum over nonempty trees of the weighted jump mass, to the power ``1/r'``.

    ``grid`` is the sampled function (or ``(domain, n)``) that ``E`` and ``lin``
    live on.
    """
    if not tiles:
        return 0.0
    frame = frame or TopFrame.of(tiles)
    geom = _Geometry(tiles, frame)
    field_ = _DensityField(geom, *_grid_of(grid), E, lin, r)
    best, _ = field_.scan(np.ones(len(tiles), dtype=bool))
    return float(best.max()) ** (1.0 / field_.rconj)


def _grid_of(grid) -> tuple[Compact, int]:
    if isinstance(grid, SampledFunction):
        return grid.domain, grid.grid_count
    dom, n = grid
    return dom, int(n)


# ---------------------------------------------------------------------------
# selections


@dataclass
class SelectionReport:
    trees: list
    residual: list
    sum_top_lengths: float
    iterations: int
    residual_ids: list = field(default_factory=list)
    selectors: list = field(default_factory=list)
    triples: list = field(default_factory=list)
    frame: TopFrame | None = None
    level: float | None = None
    tops_disjoint: bool | None = None

    def is_partition_of(self, tiles: Sequence[Multitile]) -> bool:
        ids = sorted([i for T in self.trees for i in T.ids] + list(self.residual_ids))
        return ids == list(range(len(tiles)))

    def to_json(self) -> dict:
        out = {
            "trees": [T.to_json() for T in self.trees],
            "residual_ids": [int(i) for i in self.residual_ids],
            "sum_top_lengths": self.sum_top_lengths,
            "iterations": self.iterations,
        }
        if self.level is not None:
            out["level"] = self.level
        return out


def _report(tiles, trees, active, iterations, **extra) -> SelectionReport:
    rest = [int(i) for i in np.flatnonzero(active)]
    total = float(sum(T.I_T.length() for T in trees))
    return SelectionReport(trees, [tiles[i] for i in rest], total, iterations, rest, **extra)


def _tree_at(geom: _Geometry, row: int, n: int, ids, kind: str) -> Tree:
    ids = [int(i) for i in ids]
    return Tree([geom.tiles[i] for i in ids], geom.tops[row], geom.frame.frequency(n), kind, tuple(ids))


def energy_increment(
    tiles: Sequence[Multitile],
    f: SampledFunction,
    level: float,
    frame: TopFrame | None = None,
    coefficients=None,
    selector: str = "maximal",
) -> SelectionReport:
    """Remove maximal trees until the residual energy is at most ``level / 2``.

    Each round takes, among l-overlapping trees carrying normalised mass at
    least ``level^2 / 4``, one with the largest top frequency (ties: longer
    ``I_S``, then smaller centre) and removes the maximal tree with that top.
    ``selector="minimal"`` records the smallest heaviest-first subtree reaching
    the threshold instead of the whole qualifying tree.
    """
    if selector not in ("maximal", "minimal"):
        raise ValueError("selector must be 'maximal' or 'minimal'")
    tiles = list(tiles)
    frame = frame or TopFrame.of(tiles)
    active = np.ones(len(tiles), dtype=bool)
    if not tiles:
        return _report(tiles, [], active, 0, frame=frame, level=level)
    geom = _Geometry(tiles, frame)
    c = packet_coefficients(tiles, f) if coefficients is None else np.asarray(coefficients)
    mass = np.abs(c) ** 2
    threshold = level**2 / 4
    trees, selectors = [], []
    last_xi = None
    iterations = 0
    while active.any():
        scan = _energy_scan(geom, active, mass, threshold)
        if scan.best.max() <= threshold:
            break
        live = [row for row, n in enumerate(scan.top_n) if n != np.iinfo(np.int64).min]
        # largest top frequency; ties prefer the longer, then the leftmost interval
        row = min(live, key=lambda k: (-int(scan.top_n[k]), -geom.top_length[k], geom.top_center[k]))
        n = int(scan.top_n[row])
        picked = geom.members(row, n, active, overlapping=True)
        if selector == "minimal":
            heavy = picked[np.argsort(-mass[picked], kind="stable")]
            need = np.searchsorted(np.cumsum(mass[heavy]) / geom.top_length[row], threshold) + 1
            picked = np.sort(heavy[:need])
        S = _tree_at(geom, row, n, picked, "l_overlapping")
        S.energy_contrib = float(mass[picked].sum() / geom.top_length[row])
        removed = geom.members(row, n, active)
        T = _tree_at(geom, row, n, removed, "any")
        T.kind = T.actual_kind()
        T.energy_contrib = S.energy_contrib
        if last_xi is not None and S.xi_T > last_xi:
            raise AssertionError("selected top frequencies must not increase")
        last_xi = S.xi_T
        active[removed] = False
        trees.append(T)
        selectors.append(S)
        iterations += 1
    return _report(tiles, trees, active, iterations, selectors=selectors, frame=frame, level=level)


def _tops_overlap(a: Tree, b: Tree) -> bool:
    return a.I_T.intersects(b.I_T) and a.omega_T.intersects(b.omega_T)


def density_increment(
    tiles: Sequence[Multitile],
    E,
    lin: LinearizationData,
    r: float,
    mu: float,
    grid,
    frame: TopFrame | None = None,
) -> SelectionReport:
    """Remove tree triples until the residual density is at most ``mu / 2``.

    Each round takes a nonempty tree whose weighted mass exceeds
    ``(mu/2)^{r'}`` with the longest top interval (ties: smaller top frequency,
    then smaller centre), then removes the maximal trees at that top and at the
    two tops shifted by ``(C2 - 1) / (2 |I_T|)``.  Empty shifted trees are kept
    in ``triples`` but not in ``trees``.
    """
    tiles = list(tiles)
    frame = frame or TopFrame.of(tiles)
    active = np.ones(len(tiles), dtype=bool)
    if not tiles:
        return _report(tiles, [], active, 0, frame=frame, level=mu, tops_disjoint=True)
    geom = _Geometry(tiles, frame)
    field_ = _DensityField(geom, *_grid_of(grid), E, lin, r)
    threshold = (mu / 2) ** field_.rconj
    trees, triples, mains = [], [], []
    iterations = 0
    while active.any():
        best, first = field_.scan(active, threshold)
        if best.max() <= threshold:
            break
        live = [row for row in range(len(geom.tops)) if first[row] != np.iinfo(np.int64).max]
        row = min(live, key=lambda k: (-geom.top_scale[k], int(first[k]), geom.top_center[k]))
        n = int(first[row])
        shift = 2 * int(geom.H[row])
        triple = []
        for kind, m in (("any", n), ("l_plus", n + shift), ("l_minus", n - shift)):
            ids = geom.members(row, m, active)
            T = _tree_at(geom, row, m, ids, kind)
            active[ids] = False
            triple.append(T)
        triples.append(tuple(triple))
        mains.append(triple[0])
        trees.extend(T for T in triple if T.tiles)
        iterations += 1
    disjoint = all(not _tops_overlap(a, b) for i, a in enumerate(mains) for b in mains[i + 1 :])
    return _report(tiles, trees, active, iterations, triples=triples, frame=frame, level=mu, tops_disjoint=disjoint)


# ---------------------------------------------------------------------------
# multi-level decomposition


@dataclass
class Decomposition:
    """Trees per level ``j`` (and per ``(j, k)`` after the refining pass)."""

    levels: dict
    C0: float
    F_measure: float
    r: float
    frame: TopFrame
    refined: dict | None = None

    def energy_level(self, j: int, k: int = 0) -> float:
        return self.C0 * 2.0 ** (-(j + k) / 2) * math.sqrt(self.F_measure)

    def density_level(self, j: int) -> float:
        return self.C0 * 2.0 ** (-j / _conjugate(self.r))

    def interval_sums(self) -> dict:
        return {j: float(sum(T.I_T.length() for T in trees)) for j, trees in self.levels.items()}


def _support_measure(f: SampledFunction) -> float:
    return float(np.count_nonzero(f.samples) * f.spacing)


def _next_level(j: int, value: float, at_level) -> int | None:
    """Smallest ``j' >= j`` with ``value > at_level(j') / 2``, or None for a zero value."""
    if value <= 0:
        return None
    while value <= at_level(j) / 2:
        j += 1
    return j


def full_decomposition(
    tiles: Sequence[Multitile],
    f: SampledFunction,
    E,
    lin: LinearizationData,
    r: float,
    C0: float | None = None,
    F_measure: float | None = None,
    refine: bool = False,
    max_levels: int = 200,
) -> Decomposition:
    """Split ``tiles`` into tree collections with geometrically decreasing energy and density.

    Level ``j`` uses energy bound ``C0 2^{-j/2} |F|^{1/2}`` and density bound
    ``C0 2^{-j/r'}``.  ``C0`` defaults to the larger of the measured initial
    energy (over ``|F|^{1/2}``) and density.  Tiles left with zero energy and
    zero density become single-tile trees on the last level.
    """
    tiles = list(tiles)
    frame = TopFrame.of(tiles)
    F = _support_measure(f) if F_measure is None else float(F_measure)
    if not tiles:
        return Decomposition({}, C0 or 0.0, F, r, frame, {} if refine else None)
    if F <= 0:
        raise ValueError("|F| must be positive")
    coeffs = packet_coefficients(tiles, f)
    e0 = energy(tiles, f, frame, coeffs)
    d0 = density(tiles, E, lin, r, f, frame)
    if C0 is None:
        C0 = max(e0 / math.sqrt(F), d0, 1e-300)
    dec = Decomposition({}, C0, F, r, frame)
    ids = np.arange(len(tiles))
    j = 0
    for _ in range(max_levels):
        if ids.size == 0:
            break
        sub = [tiles[i] for i in ids]
        e = energy(sub, f, frame, coeffs[ids])
        d = density(sub, E, lin, r, f, frame)
        je = _next_level(j, e, dec.energy_level)
        jd = _next_level(j, d, dec.density_level)
        if je is None and jd is None:
            dec.levels.setdefault(j, []).extend(singleton_tree(tiles[i], frame, int(i)) for i in ids)
            ids = ids[:0]
            break
        j = min(x for x in (je, jd) if x is not None)
        rep_e = energy_increment(sub, f, dec.energy_level(j), frame, coeffs[ids])
        level_trees = [_relabel(T, ids) for T in rep_e.trees]
        ids = ids[rep_e.residual_ids]
        sub = [tiles[i] for i in ids]
        rep_d = density_increment(sub, E, lin, r, dec.density_level(j), f, frame)
        level_trees += [_relabel(T, ids) for T in rep_d.trees]
        ids = ids[rep_d.residual_ids]
        dec.levels[j] = level_trees
        j += 1
    else:
        raise RuntimeError(f"decomposition did not finish within {max_levels} levels")
    if refine:
        dec.refined = refine_levels(dec, tiles, f, coeffs, max_levels)
    return dec


def _relabel(T: Tree, ids: np.ndarray) -> Tree:
    return Tree(T.tiles, T.I_T, T.xi_T, T.kind, tuple(int(ids[i]) for i in T.ids), T.energy_contrib)


def refine_levels(dec: Decomposition, tiles, f: SampledFunction, coeffs=None, max_levels: int = 200) -> dict:
    """Second energy pass: split each level ``j`` into ``(j, k)`` with energy ``C0 2^{-(j+k)/2} |F|^{1/2}``."""
    coeffs = packet_coefficients(tiles, f) if coeffs is None else coeffs
    out = {}
    for j, trees in dec.levels.items():
        ids = np.array(sorted(i for T in trees for i in T.ids), dtype=np.int64)
        k = 0
        for _ in range(max_levels):
            if ids.size == 0:
                break
            sub = [tiles[i] for i in ids]
            e = energy(sub, f, dec.frame, coeffs[ids])
            k_next = _next_level(k, e, lambda kk: dec.energy_level(j, kk))
            if k_next is None:
                out.setdefault((j, k), []).extend(singleton_tree(tiles[i], dec.frame, int(i)) for i in ids)
                break
            k = k_next
            rep = energy_increment(sub, f, dec.energy_level(j, k), dec.frame, coeffs[ids])
            out[(j, k)] = [_relabel(T, ids) for T in rep.trees]
            ids = ids[rep.residual_ids]
            k += 1
        else:
            raise RuntimeError(f"refinement of level {j} did not finish within {max_levels} steps")
    return out


# ---------------------------------------------------------------------------
# counting functions, maximal averages and the tree estimate


def _dilated(T: Tree, ell: int) -> tuple[Fraction, Fraction]:
    half = T.I_T.length() * _pow2(ell) / 2
    return T.I_T.center - half, T.I_T.center + half


def counting_function(trees: Sequence[Tree], ell: int):
    """``sum_T 1_{2^ell I_T}`` as a step function: ``(left, resolution, values)``."""
    spans = [_dilated(T, ell) for T in trees]
    res = min(T.I_T.length() for T in trees) / 2
    reach = max(max(abs(a), abs(b)) for a, b in spans)
    K = math.ceil(math.log2(reach)) if reach > 0 else 0
    while _pow2(K) < reach:
        K += 1
    left = -_pow2(K)
    cells = (2 * _pow2(K)) / res
    if cells.denominator != 1 or cells > 1 << 24:
        raise ValueError("counting function needs too fine a grid")
    diff = np.zeros(int(cells) + 1, dtype=np.int64)
    for a, b in spans:
        diff[int((a - left) / res)] += 1
        diff[int((b - left) / res)] -= 1
    return left, res, np.cumsum(diff[:-1])


def _mean_oscillation(values: np.ndarray, block: int) -> float:
    v = values.reshape(-1, block).astype(float)
    return float(np.max(np.mean(np.abs(v - v.mean(axis=1, keepdims=True)), axis=1)))


def dyadic_bmo(left: Fraction, res: Fraction, values: np.ndarray) -> float:
    """Sup over dyadic ``J`` of the mean oscillation of a step function on ``[left, -left)``.

    Dyadic intervals longer than the window are ``[0, 2^L)`` or ``[-2^L, 0)``;
    their oscillation is evaluated in closed form from the half they contain.
    """
    n = values.size
    best = 0.0
    block = 1
    while block <= n // 2:
        best = max(best, _mean_oscillation(values, block))
        block *= 2
    half = n // 2
    for part in (values[:half], values[half:]):
        total = float(part.sum())
        size = float(half)
        for _ in range(64):
            size *= 2
            mean = total / size
            osc = (np.abs(part - mean).sum() + (size - half) * mean) / size
            best = max(best, float(osc))
            if 2 * total / size < best * 1e-6:
                break
    return best


def bmo_check(trees: Sequence[Tree], ell: int, energy_level: float | None = None) -> float:
    """Dyadic BMO norm of ``sum_T 1_{2^ell I_T}``; a ratio to ``2^{2 ell} / level^2`` when a level is given."""
    if not trees:
        return 0.0
    norm = dyadic_bmo(*counting_function(trees, ell))
    if energy_level is None:
        return norm
    return norm / (4.0**ell / energy_level**2)


def dyadic_maximal(f: SampledFunction) -> SampledFunction:
    """Largest mean of ``|f|`` over dyadic intervals containing each grid cell."""
    n = f.grid_count
    if not f.is_power_of_two:
        raise ValueError("dyadic averages need a power-of-two grid")
    step = Fraction(f.spacing)
    if step.numerator != 1 or step.denominator & (step.denominator - 1):
        raise ValueError("grid spacing must be a power of two")
    left = Fraction(f.domain.left)
    a = np.abs(f.samples)
    out = a.copy()
    block = 2
    while block <= n:
        if (left / (block * step)).denominator != 1:
            break
        means = a.reshape(-1, block).mean(axis=1)
        out = np.maximum(out, np.repeat(means, block))
        block *= 2
    return f.with_samples(out)


def tree_estimate_probe(T: Tree, f: SampledFunction, E, lin: LinearizationData, q: float, r: float, frame=None):
    """``(lhs, rhs, ratio)`` for the ``L^q`` norm of the model operator restricted to one tree."""
    if not 1 <= q <= 2:
        raise ValueError("the tree estimate is probed for 1 <= q <= 2")
    if not T.tiles:
        return 0.0, 0.0, 0.0
    frame = frame or TopFrame.of(T.tiles)
    mask = _as_mask(E, f.grid_count)
    out = model_operator(T.tiles, f, lin, mask.astype(float))
    lhs = out.lp_norm(q)
    e = energy(T.tiles, f, frame)
    d = density(T.tiles, mask, lin, r, f, frame)
    rhs = e * d ** min(1.0, _conjugate(r) / q) * float(T.I_T.length()) ** (1.0 / q)
    return lhs, rhs, (lhs / rhs if rhs > 0 else math.inf if lhs > 0 else 0.0)


# ---------------------------------------------------------------------------
# random instances


BOX = Compact(-16.0, 16.0)
BOX_GRID = 4096
# frequency scales 2^-5, 2^0, 2^5: any two differ by more than 2 C1 / (C2 - C3)
FREQUENCY_SCALES = (-5, 0, 5)
LEAD_MASS_REST = 0.1


@dataclass
class TreeInstance:
    tiles: list
    f: SampledFunction
    E: np.ndarray
    lin: LinearizationData
    r: float
    F_measure: float
    E_measure: float
    trees: list  # a known tree family whose union is the tile set
    rho: object


def _fits(P: Multitile, I_T: DyadicInterval, xi) -> bool:
    return P.omega_m.contains_interval(top_window(I_T, xi))


def _nyquist_ok(J: DyadicInterval) -> bool:
    nyquist = (BOX_GRID // 2 - 1) / (BOX.right - BOX.left)
    reach = Interval.of(J).dilate(C3)
    return -nyquist <= float(reach.lo) and float(reach.hi) <= nyquist


def _channel_pools(rng, rho, halves) -> tuple[list, list]:
    """Three spaced channels and, per channel and scale, one admissible upper-interval index."""
    while True:
        channels = []
        while len(channels) < 3:
            xi0 = Fraction(int(rng.integers(-40 * 64, 40 * 64)), 64)
            if all(abs(xi0 - c) >= 14 for c in channels):
                channels.append(xi0)
        used: dict[int, set] = {k: set() for k in FREQUENCY_SCALES}
        pools = []
        for ci, xi0 in enumerate(channels):
            for k in FREQUENCY_SCALES:
                centre = math.floor(xi0 / _pow2(k))
                options = []
                for m in range(centre - 8, centre + 9):
                    J = DyadicInterval(k, m)
                    if J.is_left_child() != (rho.side == "left") or not _nyquist_ok(J):
                        continue
                    if _fits(build_multitile(DyadicInterval(-1 - k, 0), J, rho), halves[0], xi0):
                        options.append(m)
                if not options:
                    continue
                m = options[int(rng.integers(0, len(options)))]
                # equal-scale upper intervals must coincide or keep their C1-dilates apart
                if m not in used[k] and any(abs(m - other) < C1 for other in used[k]):
                    continue
                used[k].add(m)
                pools.append((ci, k, m))
        if any(p[:2] == (0, 0) for p in pools):
            return channels, pools


def random_instance(seed: int, n_tiles: int = 50, r: float = 3.0, K: int = 6) -> TreeInstance:
    """A separated tile set on the box ``[-16, 16)`` built as a union of known trees.

    Three frequency channels ``xi_0`` carry, at each of three scales, one upper
    interval whose tiles accept the top ``([-16,0) or [0,16), xi_0)``.  Three
    fifths of the tiles form a focus family at unit frequency scale in the
    first channel; ``f`` is a pure frequency in that family's upper interval,
    restricted to the union ``F`` of the family's time intervals.  ``E`` fills
    half of the unit half-cells.  Every grid point gets ``K`` jumps; the first
    starts at the channel of its unit cell and carries 90% of the mass.
    """
    rng = np.random.default_rng(seed)
    rho = [p for p in R if p.cls in (1, 2)][int(rng.integers(0, 7))]
    halves = (DyadicInterval(4, -1), DyadicInterval(4, 0))
    channels, pools = _channel_pools(rng, rho, halves)
    focus = next(p for p in pools if p[:2] == (0, 0))
    chosen: dict[tuple, int] = {}
    n_focus = (3 * n_tiles) // 5
    for slot in rng.choice(64, size=min(n_focus, 64), replace=False):
        chosen[(DyadicInterval(-1, int(slot) - 32), DyadicInterval(0, focus[2]))] = 0
    others = [p for p in pools if p != focus]
    attempts = 0
    while len(chosen) < n_tiles and others and attempts < 50 * n_tiles:
        attempts += 1
        ci, k, m = others[int(rng.integers(0, len(others)))]
        count = int(32 / float(_pow2(-1 - k)))
        I = DyadicInterval(-1 - k, int(rng.integers(0, count)) - count // 2)
        chosen.setdefault((I, DyadicInterval(k, m)), ci)
    tiles, owner = [], []
    for (I, J), ci in chosen.items():
        tiles.append(build_multitile(I, J, rho))
        owner.append(ci)
    trees = []
    for ci, xi0 in enumerate(channels):
        for half in halves:
            ids = tuple(i for i, (P, o) in enumerate(zip(tiles, owner)) if o == ci and half.contains_interval(P.I))
            if ids:
                trees.append(Tree([tiles[i] for i in ids], half, xi0, "any", ids))
    n = BOX_GRID
    dx = (BOX.right - BOX.left) / n
    x = BOX.left + dx * np.arange(n)
    half_cell = np.floor(2 * (x - BOX.left)).astype(int)
    F_cells = np.zeros(64, dtype=bool)
    for (I, J), ci in chosen.items():
        if J.scale == 0 and ci == 0:
            F_cells[I.index + 32] = True
    E_cells = np.zeros(64, dtype=bool)
    E_cells[rng.choice(64, size=32, replace=False)] = True
    xi_f = float(DyadicInterval(0, focus[2]).center)
    f = SampledFunction(F_cells[half_cell] * np.exp(2j * np.pi * xi_f * x), BOX)
    E = E_cells[half_cell]
    # the first jump starts at the channel of the unit cell and carries most of the mass
    start = np.array([float(c) for c in channels])[rng.integers(0, 3, size=32)][np.floor(x - BOX.left).astype(int)]
    start = start + rng.uniform(-1, 1, size=n) / 256
    rest = np.sort(rng.uniform(start[:, None] + 1, 62, size=(n, K)), axis=1)
    picks = np.concatenate([start[:, None], rest], axis=1)
    rconj = r / (r - 1)
    tail = rng.random((n, K - 1)) + 1e-3
    tail *= (LEAD_MASS_REST / tail.sum(axis=1, keepdims=True))
    mass = np.concatenate([np.full((n, 1), 1 - LEAD_MASS_REST), tail], axis=1)
    amp = mass ** (1 / rconj)
    phases = np.exp(2j * np.pi * rng.random((n, K)))
    lin = LinearizationData(picks, amp * phases)
    return TreeInstance(tiles, f, E, lin, r, F_cells.sum() / 2.0, E_cells.sum() / 2.0, trees, rho)
