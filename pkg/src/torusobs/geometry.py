"""Flat-torus geometry: half-open box unions, translations, exact Fourier data.

The ambient space is the flat torus with unit period per coordinate and total
measure one.  Observation sets are finite disjoint unions of half-open boxes
prod_i [a_i, b_i) taken mod 1.  Endpoints are kept as exact rationals
(`fractions.Fraction`; floats convert exactly, strings such as "1/4" parse
exactly), so translation, wrap splitting, disjointness and measure bookkeeping
involve no rounding at all.  Only the Fourier/phase evaluations use floats.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence, Union

import numpy as np

ScalarLike = Union[int, float, str, Fraction]

#: one half-open interval on an axis, 0 <= a < b <= 1 after normalization
AxisInterval = tuple[Fraction, Fraction]
#: one box: an AxisInterval per axis
Box = tuple[AxisInterval, ...]

TWO_PI = 2.0 * math.pi


def _as_fraction(value: ScalarLike) -> Fraction:
    """Convert an endpoint/shift component to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite coordinate {value!r}")
        return Fraction(value)  # exact binary expansion
    raise TypeError(f"cannot interpret {value!r} as a torus coordinate")


def _mod1(x: Fraction) -> Fraction:
    return x - (x // 1)


@dataclass(frozen=True)
class TorusSpace:
    """Flat torus of dimension 1 or 2, unit period, total measure one."""

    dim: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"torus dimension must be 1 or 2, got {self.dim}")

    def identity(self) -> "GroupElement":
        """The zero translation."""
        return GroupElement((Fraction(0),) * self.dim)


@dataclass(frozen=True)
class GroupElement:
    """A translation of the torus, stored as exact per-axis shifts mod 1."""

    shift: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "shift", tuple(_mod1(_as_fraction(s)) for s in self.shift))

    @classmethod
    def of(cls, *components: ScalarLike) -> "GroupElement":
        return cls(tuple(_as_fraction(c) for c in components))

    @property
    def dim(self) -> int:
        return len(self.shift)

    def as_floats(self) -> np.ndarray:
        return np.array([float(s) for s in self.shift], dtype=float)

    def compose(self, other: "GroupElement") -> "GroupElement":
        """Group law: componentwise addition mod 1 (exact)."""
        if other.dim != self.dim:
            raise ValueError("group elements of different dimension")
        return GroupElement(tuple(a + b for a, b in zip(self.shift, other.shift)))

    def inverse(self) -> "GroupElement":
        return GroupElement(tuple(-s for s in self.shift))

    def __add__(self, other: "GroupElement") -> "GroupElement":
        return self.compose(other)


def _normalize_axis(a: Fraction, b: Fraction) -> list[AxisInterval]:
    """Reduce [a, b) mod 1 to one or two non-wrapping intervals.

    The length b - a must lie in (0, 1].  Length exactly 1 covers the axis.
    """
    length = b - a
    if length <= 0:
        raise ValueError(f"empty or inverted interval [{a}, {b})")
    if length > 1:
        raise ValueError(f"interval [{a}, {b}) longer than the period")
    a0 = _mod1(a)
    if length == 1:
        return [(Fraction(0), Fraction(1))]
    end = a0 + length
    if end <= 1:
        return [(a0, end)]
    return [(a0, Fraction(1)), (Fraction(0), end - 1)]


def _boxes_overlap(p: Box, q: Box) -> bool:
    return all(a1 < b2 and a2 < b1 for (a1, b1), (a2, b2) in zip(p, q))


@dataclass(frozen=True)
class PrototypeSet:
    """Finite disjoint union of half-open boxes mod 1 on a flat torus.

    `pieces` are normalized: every axis interval satisfies 0 <= a < b <= 1,
    so no stored box wraps.  Wrapping input boxes are split at construction.
    """

    space: TorusSpace
    pieces: tuple[Box, ...]

    def __post_init__(self) -> None:
        if not self.pieces:
            raise ValueError("prototype set needs at least one box")
        d = self.space.dim
        for box in self.pieces:
            if len(box) != d:
                raise ValueError(f"box {box} does not match dimension {d}")
            for a, b in box:
                if not (0 <= a < b <= 1):
                    raise ValueError(f"axis interval [{a}, {b}) is not normalized")
        n = len(self.pieces)
        for i in range(n):
            for j in range(i + 1, n):
                if _boxes_overlap(self.pieces[i], self.pieces[j]):
                    raise ValueError(f"pieces {i} and {j} overlap")
        if self.measure_exact > 1:
            raise ValueError("total measure exceeds the torus measure")

    @classmethod
    def from_boxes(
        cls, space: TorusSpace, boxes: Iterable[Sequence[Sequence[ScalarLike]]]
    ) -> "PrototypeSet":
        """Build from raw per-axis (a, b) pairs; wrapping boxes are split.

        For dim 1 a box may be given as a bare (a, b) pair.
        """
        pieces: list[Box] = []
        for raw in boxes:
            if space.dim == 1 and len(raw) == 2 and not isinstance(raw[0], (list, tuple)):
                raw = [raw]  # bare (a, b) on the line
            if len(raw) != space.dim:
                raise ValueError(f"box {raw!r} does not match dimension {space.dim}")
            per_axis = [
                _normalize_axis(_as_fraction(a), _as_fraction(b)) for a, b in raw
            ]
            for combo in product(*per_axis):
                pieces.append(tuple(combo))
        return cls(space, tuple(pieces))

    @property
    def measure_exact(self) -> Fraction:
        total = Fraction(0)
        for box in self.pieces:
            vol = Fraction(1)
            for a, b in box:
                vol *= b - a
            total += vol
        return total

    @property
    def measure(self) -> float:
        return float(self.measure_exact)

    def translate(self, g: GroupElement) -> "PrototypeSet":
        """Translate by g mod 1 (exact; boxes pushed over 1 are re-split)."""
        if g.dim != self.space.dim:
            raise ValueError("shift dimension does not match the torus")
        raw = [
            [(a + s, b + s) for (a, b), s in zip(box, g.shift)]
            for box in self.pieces
        ]
        return PrototypeSet.from_boxes(self.space, raw)

    def contains(self, point: Sequence[float]) -> bool:
        """Membership of a float point (reduced mod 1); used by oracles."""
        p = [x % 1.0 for x in point]
        for box in self.pieces:
            if all(float(a) <= x < float(b) for (a, b), x in zip(box, p)):
                return True
        return False

    def fourier_coefficient(self, freq: Sequence[int]) -> complex:
        """Exact value of the integral of e^{-2 pi i n.y} over the set.

        Per axis, for n != 0 the factor is
        (e^{-2 pi i n a} - e^{-2 pi i n b}) / (2 pi i n), and b - a for n = 0.
        An axis interval of full length contributes 0 for n != 0.
        """
        if len(freq) != self.space.dim:
            raise ValueError("frequency dimension does not match the torus")
        total = 0.0 + 0.0j
        for box in self.pieces:
            factor = 1.0 + 0.0j
            for (a, b), n in zip(box, freq):
                if n == 0:
                    factor *= float(b - a)
                elif b - a == 1:
                    factor = 0.0j
                    break
                else:
                    fa, fb = float(a), float(b)
                    factor *= (
                        cmath.exp(-1j * TWO_PI * n * fa) - cmath.exp(-1j * TWO_PI * n * fb)
                    ) / (1j * TWO_PI * n)
            total += factor
        return total


def translate_set(s: PrototypeSet, g: GroupElement) -> PrototypeSet:
    return s.translate(g)


def set_measure(s: PrototypeSet) -> float:
    return s.measure


def indicator_fourier_coefficient(s: PrototypeSet, freq: Sequence[int]) -> complex:
    return s.fourier_coefficient(freq)
