"""Exact rational linear algebra on top of python-flint.

Domain values are kept as :class:`fractions.Fraction` so they hash, compare and serialize
without surprises. Matrix work (determinants, solves, ranks) is delegated to flint's
``fmpq_mat``/``fmpz_mat``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import TYPE_CHECKING

from flint import fmpq, fmpq_mat, fmpz_mat

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    Vector = tuple[Fraction, ...]


def to_fmpq(c: Fraction | int) -> fmpq:
    c = Fraction(c)
    return fmpq(c.numerator, c.denominator)


def fmpq_to_fraction(c: fmpq) -> Fraction:
    return Fraction(int(c.p), int(c.q))


def fmpq_matrix(rows: Sequence[Sequence[Fraction | int]]) -> fmpq_mat:
    n_rows = len(rows)
    n_cols = len(rows[0]) if n_rows else 0
    return fmpq_mat(n_rows, n_cols, [to_fmpq(c) for row in rows for c in row])


def det(rows: Sequence[Sequence[Fraction | int]]) -> Fraction:
    """Exact determinant of a square rational matrix."""
    if all(Fraction(c).denominator == 1 for row in rows for c in row):
        return Fraction(int(fmpz_mat([[int(c) for c in row] for row in rows]).det()))
    return fmpq_to_fraction(fmpq_matrix(rows).det())


def solve(rows: Sequence[Sequence[Fraction | int]], rhs: Sequence[Fraction | int]) -> Vector | None:
    """Solve ``rows @ x = rhs`` exactly, returning None when the matrix is singular."""
    if det(rows) == 0:
        return None
    b = fmpq_mat(len(rhs), 1, [to_fmpq(c) for c in rhs])
    x = fmpq_matrix(rows).solve(b)
    return tuple(fmpq_to_fraction(x[i, 0]) for i in range(len(rhs)))


def rank(rows: Sequence[Sequence[Fraction | int]]) -> int:
    if not rows:
        return 0
    _, r = fmpq_matrix(rows).rref()
    return int(r)


def affine_rank(points: Sequence[Sequence[Fraction | int]]) -> int:
    """Dimension of the affine hull of ``points`` (-1 for the empty set)."""
    if not points:
        return -1
    base = points[0]
    return rank([[Fraction(p) - Fraction(q) for p, q in zip(point, base, strict=True)] for point in points[1:]])


def dot(u: Iterable[Fraction | int], v: Iterable[Fraction | int]) -> Fraction:
    return sum((Fraction(a) * b for a, b in zip(u, v, strict=True)), Fraction(0))


def primitive(v: Sequence[int]) -> tuple[int, ...]:
    """Divide an integer vector by the gcd of its entries."""
    g = math.gcd(*v)
    if g == 0:
        raise ValueError("The zero vector has no primitive direction")
    return tuple(c // g for c in v)


def as_integer_vector(v: Sequence[Fraction]) -> tuple[int, ...] | None:
    if any(c.denominator != 1 for c in v):
        return None
    return tuple(int(c) for c in v)


def rational_sqrt(c: Fraction) -> Fraction | None:
    """Exact square root of a non-negative rational, None if it is not a perfect square."""
    if c < 0:
        return None
    p, q = math.isqrt(c.numerator), math.isqrt(c.denominator)
    if p * p != c.numerator or q * q != c.denominator:
        return None
    return Fraction(p, q)


def fraction_str(c: Fraction | int) -> str:
    """Serialize an exact rational as ``"p/q"`` (always with a denominator)."""
    c = Fraction(c)
    return f"{c.numerator}/{c.denominator}"


def parse_fraction(value: str | int | Fraction) -> Fraction:
    return Fraction(value)
