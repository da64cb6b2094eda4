from __future__ import annotations

import functools
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

from toricding import exact
from toricding.catalog import catalog_entry
from toricding.duality import LogSumExpPotential
from toricding.functional import random_pl

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from toricding.invariants import PLConvexFunction
    from toricding.polytope import ReflexivePolytope

CENTRALLY_SYMMETRIC = ("P1xP1", "Bl3P2", "P1xP1xP1")


@functools.lru_cache
def polytope(key: str) -> ReflexivePolytope:
    return catalog_entry(key).polytope


def random_unimodular(dim: int, rng: np.random.Generator, moves: int = 6) -> list[list[int]]:
    """Product of random elementary shears and a random signed permutation."""
    matrix = np.eye(dim, dtype=np.int64)
    for _ in range(moves if dim > 1 else 0):
        i, j = rng.choice(dim, size=2, replace=False)
        shear = np.eye(dim, dtype=np.int64)
        shear[i, j] = rng.integers(-2, 3)
        matrix = shear @ matrix
    permutation = np.eye(dim, dtype=np.int64)[rng.permutation(dim)] * rng.choice([-1, 1], size=(dim, 1))
    matrix = permutation @ matrix
    rows = matrix.tolist()
    assert abs(exact.det(rows)) == 1
    return rows


def random_pl_functions(polytope: ReflexivePolytope, count: int, seed: int = 0) -> list[PLConvexFunction]:
    rng = np.random.default_rng(seed)
    return [random_pl(polytope, rng, pieces=int(rng.integers(2, 6))) for _ in range(count)]


def fubini_study(xi: NDArray[np.float64]) -> NDArray[np.float64]:
    """``2 log(2 cosh(xi/2))``, the solution on the projective line."""
    return 2 * np.logaddexp(xi / 2, -xi / 2)


def fubini_study_potential() -> LogSumExpPotential:
    """Exact log-sum-exp form: ``e^-xi + 2 + e^xi = (2 cosh(xi/2))^2``."""
    return LogSumExpPotential.from_polytope(polytope("P1"), 1, [0.0, np.log(2.0), 0.0])


def random_potential(
    polytope: ReflexivePolytope, rng: np.random.Generator, refinement: int = 1, scale: float = 0.5
) -> LogSumExpPotential:
    phi = LogSumExpPotential.from_polytope(polytope, refinement)
    return phi.with_theta(rng.normal(scale=scale, size=len(phi.sample)))


def shoelace_moments(
    vertices: list[tuple[int, int]],
) -> tuple[Fraction, tuple[Fraction, Fraction], list[list[Fraction]]]:
    """Area, first and second moments of a counter-clockwise polygon by Green's theorem."""
    area = Fraction(0)
    mx = my = Fraction(0)
    mxx = myy = mxy = Fraction(0)
    for (x0, y0), (x1, y1) in zip(vertices, [*vertices[1:], vertices[0]], strict=True):
        cross = Fraction(x0 * y1 - x1 * y0)
        area += cross / 2
        mx += (x0 + x1) * cross / 6
        my += (y0 + y1) * cross / 6
        mxx += (x0 * x0 + x0 * x1 + x1 * x1) * cross / 12
        myy += (y0 * y0 + y0 * y1 + y1 * y1) * cross / 12
        mxy += (x0 * y1 + 2 * x0 * y0 + 2 * x1 * y1 + x1 * y0) * cross / 24
    return area, (mx, my), [[mxx, mxy], [mxy, myy]]
