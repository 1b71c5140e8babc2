"""Sampled functions on uniform grids, exact dyadic intervals and Lorentz norms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Periodic:
    """The unit circle, parametrised by [0, 1)."""

    period: float = 1.0

    @property
    def left(self) -> float:
        return 0.0

    @property
    def right(self) -> float:
        return self.period

    def to_json(self) -> dict:
        return {"kind": "periodic", "period": self.period}


@dataclass(frozen=True)
class Compact:
    """A bounded interval [left, right) carrying compactly supported data."""

    left: float
    right: float

    def __post_init__(self):
        if not self.left < self.right:
            raise ValueError(f"compact domain needs left < right, got [{self.left}, {self.right})")

    def to_json(self) -> dict:
        return {"kind": "compact", "left": self.left, "right": self.right}


Domain = Union[Periodic, Compact]


def domain_from_json(obj: dict) -> Domain:
    kind = obj.get("kind")
    if kind == "periodic":
        return Periodic(float(obj.get("period", 1.0)))
    if kind == "compact":
        return Compact(float(obj["left"]), float(obj["right"]))
    raise ValueError(f"unknown domain kind {kind!r}")


class SampledFunction:
    """Complex samples at the left endpoints of a uniform grid.

    Parameters
    ----------
    samples : array_like
        Values at ``domain.left + j * spacing`` for ``j = 0 .. grid_count - 1``.
    domain : Periodic or Compact
        The underlying interval.
    """

    __slots__ = ("_samples", "domain")

    def __init__(self, samples, domain: Domain = Periodic()):
        arr = np.array(samples, dtype=complex).reshape(-1)
        if arr.size < 2:
            raise ValueError("a sampled function needs at least two grid points")
        arr.setflags(write=False)
        self._samples = arr
        self.domain = domain

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def grid_count(self) -> int:
        return self._samples.size

    @property
    def length(self) -> float:
        return self.domain.right - self.domain.left

    @property
    def spacing(self) -> float:
        return self.length / self.grid_count

    @property
    def grid(self) -> np.ndarray:
        return self.domain.left + self.spacing * np.arange(self.grid_count)

    @property
    def is_power_of_two(self) -> bool:
        n = self.grid_count
        return n & (n - 1) == 0

    @classmethod
    def from_callable(cls, func, grid_count: int, domain: Domain = Periodic()) -> "SampledFunction":
        x = domain.left + (domain.right - domain.left) / grid_count * np.arange(grid_count)
        return cls(func(x), domain)

    def with_samples(self, samples) -> "SampledFunction":
        return SampledFunction(samples, self.domain)

    def abs(self) -> "SampledFunction":
        return SampledFunction(np.abs(self._samples), self.domain)

    def integral(self) -> complex:
        return complex(self._samples.sum() * self.spacing)

    def lp_norm(self, p: float) -> float:
        a = np.abs(self._samples)
        if math.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.spacing) ** (1.0 / p))

    def to_json(self) -> dict:
        return {
            "domain": self.domain.to_json(),
            "samples": [[float(z.real), float(z.imag)] for z in self._samples],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SampledFunction":
        pairs = np.asarray(obj["samples"], dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0] + 1j * pairs[:, 1], domain_from_json(obj["domain"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def __repr__(self) -> str:
        return f"SampledFunction(grid_count={self.grid_count}, domain={self.domain})"


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """The half-open interval [2^scale * index, 2^scale * (index + 1))."""

    scale: int
    index: int

    @property
    def left(self) -> Fraction:
        return _pow2(self.scale) * self.index

    @property
    def right(self) -> Fraction:
        return _pow2(self.scale) * (self.index + 1)

    def length(self) -> Fraction:
        return _pow2(self.scale)

    @property
    def center(self) -> Fraction:
        return _pow2(self.scale) * (2 * self.index + 1) / 2

    def parent(self) -> "DyadicInterval":
        return DyadicInterval(self.scale + 1, self.index // 2)

    def ancestor(self, scale: int) -> "DyadicInterval":
        if scale < self.scale:
            raise ValueError("ancestor scale must not be finer")
        return DyadicInterval(scale, self.index >> (scale - self.scale))

    def is_left_child(self) -> bool:
        return self.index % 2 == 0

    def contains_interval(self, other: "DyadicInterval") -> bool:
        if other.scale > self.scale:
            return False
        return other.index >> (self.scale - other.scale) == self.index

    def intersects(self, other: "DyadicInterval") -> bool:
        return self.contains_interval(other) or other.contains_interval(self)

    def contains_point(self, x) -> bool:
        return self.left <= x < self.right

    def as_floats(self) -> tuple[float, float]:
        return float(self.left), float(self.right)

    def to_json(self) -> dict:
        return {"k": self.scale, "m": self.index}


def _pow2(k: int) -> Fraction:
    return Fraction(2) ** k


def dyadic_children(J: DyadicInterval) -> tuple[DyadicInterval, DyadicInterval]:
    return DyadicInterval(J.scale - 1, 2 * J.index), DyadicInterval(J.scale - 1, 2 * J.index + 1)


@dataclass(frozen=True)
class LorentzParams:
    p: float
    s: float = math.inf

    def __post_init__(self):
        if not self.p > 0 or math.isinf(self.p):
            raise ValueError(f"Lorentz exponent p must be finite and positive, got {self.p}")
        if not self.s > 0:
            raise ValueError(f"Lorentz exponent s must be positive, got {self.s}")


def decreasing_rearrangement(f: SampledFunction) -> np.ndarray:
    return np.sort(np.abs(f.samples))[::-1]


def lorentz_norm(f: SampledFunction, lp: LorentzParams) -> float:
    """Lorentz quasinorm of ``|f|`` viewed as a step function on the grid.

    The rearrangement is constant on each cell ``[j, j+1) * spacing``, so the
    weight ``t^{s/p - 1}`` is integrated exactly cell by cell and the origin
    singularity never enters.  For ``s = inf`` the supremum over a cell is
    attained at its right end ``t = (j + 1) * spacing``.
    """
    if not isinstance(lp, LorentzParams):
        lp = LorentzParams(*lp)
    fstar = decreasing_rearrangement(f)
    dt = f.spacing
    edges = dt * np.arange(fstar.size + 1)
    if math.isinf(lp.s):
        return float(np.max(edges[1:] ** (1.0 / lp.p) * fstar))
    q = lp.s / lp.p
    cell_weight = np.diff(edges**q) / q
    return float(np.sum(fstar**lp.s * cell_weight) ** (1.0 / lp.s))
