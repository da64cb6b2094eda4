"""Ding invariants of a reflexive Delzant polytope.

The affine function ``l`` is fixed by ``int l dx = 1`` and ``int x_i l dx = 0``. From it follow the invariant
``alpha = max(1 - |P| l)``, the stability verdict ``alpha < 1`` and the relative Ding-Futaki invariant
``I(u) = -u(0) + int u l dx`` of convex test functions. Integrals of piecewise linear functions are exact: the
polytope is cut into the cells where a single piece is active and every cell is triangulated.
"""

from __future__ import annotations

import functools
import math
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from toricding import exact
from toricding.constants import WEDGE_SHRINK
from toricding.errors import ToricDingError
from toricding.guillemin import GuilleminPotential
from toricding.polytope import (
    HalfSpace,
    LatticePoint,
    RationalMoments,
    ReflexivePolytope,
    Simplex,
    Vector,
    enumerate_vertices,
    pulling_triangulation,
    simplex_moments,
)
from toricding.utils import time_it

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger()

Piece = tuple[Vector, Fraction]


class InvariantError(ToricDingError): ...


class SingularMoments(InvariantError): ...


class NonConvexInput(InvariantError): ...


class DegenerateWedge(InvariantError): ...


def _vector(values: Sequence[Fraction | int]) -> Vector:
    return tuple(Fraction(v) for v in values)


@dataclass(frozen=True)
class AffineLinear:
    """The function ``a + <b, x>`` with exact rational coefficients."""

    a: Fraction
    b: Vector

    @property
    def dim(self) -> int:
        return len(self.b)

    def __call__(self, x: Sequence[Fraction | int]) -> Fraction:
        return self.a + exact.dot(self.b, x)

    def evaluate(self, x: ArrayLike) -> NDArray[np.float64]:
        return float(self.a) + np.asarray(x, dtype=float) @ np.array(self.b, dtype=float)

    def integral(self, mom: RationalMoments) -> Fraction:
        return self.a * mom.volume + exact.dot(self.b, mom.first)

    def first_moments(self, mom: RationalMoments) -> Vector:
        return tuple(self.a * mi + exact.dot(row, self.b) for mi, row in zip(mom.first, mom.second, strict=True))

    def as_floats(self) -> tuple[float, NDArray[np.float64]]:
        return float(self.a), np.array(self.b, dtype=float)


@dataclass(frozen=True)
class PLConvexFunction:
    """``max_j (<c_j, x> + d_j)``, optionally plus the normalized Guillemin potential of the polytope.

    Pieces are stored deduplicated and sorted, so equal functions given in different orders compare equal.
    """

    pieces: tuple[Piece, ...]
    guillemin: bool = False

    def __post_init__(self) -> None:
        if not self.pieces:
            raise ValueError("A piecewise linear function needs at least one piece")
        pieces = tuple(sorted({(_vector(c), Fraction(d)) for c, d in self.pieces}))
        if len({len(c) for c, _ in pieces}) != 1:
            raise ValueError("All pieces must have the same dimension")
        object.__setattr__(self, "pieces", pieces)

    @property
    def dim(self) -> int:
        return len(self.pieces[0][0])

    @classmethod
    def affine(cls, c: Sequence[Fraction | int], d: Fraction | int = 0) -> PLConvexFunction:
        return cls(((_vector(c), Fraction(d)),))

    @classmethod
    def zero(cls, dim: int) -> PLConvexFunction:
        return cls.affine((0,) * dim)

    @classmethod
    def from_tangents(
        cls,
        f: Callable[[Vector], Fraction],
        gradient: Callable[[Vector], Vector],
        points: Sequence[Sequence[Fraction | int]],
    ) -> PLConvexFunction:
        """Envelope of the tangent planes of a smooth convex function at the given points."""
        pieces = []
        for p in points:
            x = _vector(p)
            g = _vector(gradient(x))
            pieces.append((g, Fraction(f(x)) - exact.dot(g, x)))
        return cls(tuple(pieces))

    @classmethod
    def from_grid_values(
        cls, points: Sequence[Sequence[Fraction | int]], values: Sequence[Fraction | int]
    ) -> PLConvexFunction:
        """Convex interpolant of (point, value) data, certified exactly.

        Pieces come from the lower facets of the lifted point cloud. Every data point must lie on the
        resulting envelope; otherwise the data is not convex.

        Raises:
            NonConvexInput: a data value lies strictly above the convex envelope
        """
        xs = [_vector(p) for p in points]
        ys = [Fraction(v) for v in values]
        lifted = [(*x, y) for x, y in zip(xs, ys, strict=True)]
        dim = len(xs[0])
        if exact.affine_rank(xs) < dim:
            raise NonConvexInput("Data points do not span the full dimension")
        if exact.affine_rank(lifted) <= dim:
            simplex_idx = _affinely_independent(xs)
            pieces = [_interpolating_piece([xs[i] for i in simplex_idx], [ys[i] for i in simplex_idx])]
        else:
            try:
                hull = ConvexHull(np.array(lifted, dtype=float))
            except QhullError as exc:
                raise NonConvexInput(f"Cannot build the lower hull: {exc}") from exc
            pieces = [
                _interpolating_piece([xs[i] for i in simplex], [ys[i] for i in simplex])
                for simplex, equation in zip(hull.simplices, hull.equations, strict=True)
                if equation[dim] < -1e-12
            ]
        u = cls(tuple(p for p in pieces if p is not None))
        for x, y in zip(xs, ys, strict=True):
            if u(x) != y:
                raise NonConvexInput(f"Value {y} at {x} is not on the convex envelope ({u(x)})")
        return u

    def __call__(self, x: Sequence[Fraction | int]) -> Fraction:
        """Exact value of the piecewise linear part."""
        return max(exact.dot(c, x) + d for c, d in self.pieces)

    def evaluate(self, x: ArrayLike, polytope: ReflexivePolytope | None = None) -> NDArray[np.float64]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        gradients = np.array([c for c, _ in self.pieces], dtype=float)
        offsets = np.array([d for _, d in self.pieces], dtype=float)
        values = np.max(x @ gradients.T + offsets, axis=1)
        if self.guillemin:
            if polytope is None:
                raise ValueError("The polytope is needed to evaluate the Guillemin part")
            values = values + GuilleminPotential(polytope).value(x)
        return values

    def scaled(self, factor: Fraction | int) -> PLConvexFunction:
        factor = Fraction(factor)
        if factor <= 0 or self.guillemin:
            raise ValueError("Only the piecewise linear part can be scaled, by a positive factor")
        return PLConvexFunction(tuple((tuple(factor * ci for ci in c), factor * d) for c, d in self.pieces))

    def active_pieces(self, x: Sequence[Fraction | int]) -> list[Piece]:
        value = self(x)
        return [(c, d) for c, d in self.pieces if exact.dot(c, x) + d == value]


def _affinely_independent(points: Sequence[Vector]) -> list[int]:
    chosen = [0]
    for i in range(1, len(points)):
        if exact.affine_rank([points[j] for j in [*chosen, i]]) == len(chosen):
            chosen.append(i)
    return chosen


def _interpolating_piece(points: Sequence[Vector], values: Sequence[Fraction]) -> Piece | None:
    """The affine function through (point, value) pairs of n + 1 affinely independent points."""
    dim = len(points[0])
    solution = exact.solve([[*p, Fraction(1)] for p in points], values)
    if solution is None:
        return None
    return solution[:dim], solution[dim]


@dataclass(frozen=True)
class PLCell:
    """Part of the polytope where one piece of a piecewise linear function is active."""

    piece: Piece
    simplices: tuple[Simplex, ...]
    vertices: tuple[Vector, ...]
    moments: RationalMoments = field(repr=False)


@functools.lru_cache(maxsize=1024)
def decompose(polytope: ReflexivePolytope, u: PLConvexFunction) -> tuple[PLCell, ...]:
    """Exact cell decomposition of the polytope along the pieces of u."""
    cells = []
    for j, (c, d) in enumerate(u.pieces):
        halfspaces = list(polytope.halfspaces)
        dominated = False
        for k, (ck, dk) in enumerate(u.pieces):
            if k == j:
                continue
            normal = tuple(a - b for a, b in zip(c, ck, strict=True))
            if all(v == 0 for v in normal):
                dominated = dominated or d < dk
                continue
            halfspaces.append(HalfSpace(normal, d - dk))
        if dominated:
            continue
        vertices, tight = enumerate_vertices(halfspaces, polytope.dim)
        if exact.affine_rank(vertices) < polytope.dim:
            continue
        simplices = tuple(
            tuple(vertices[i] for i in s)
            for s in pulling_triangulation(vertices, tight, frozenset(range(len(vertices))), polytope.dim)
        )
        total = RationalMoments.zero(polytope.dim)
        for s in simplices:
            total += simplex_moments(s)
        cells.append(PLCell((c, d), simplices, tuple(vertices), total))
    return tuple(cells)


def cell_vertices(polytope: ReflexivePolytope, u: PLConvexFunction) -> list[Vector]:
    """All vertices of the cells of u, the points where its Legendre transform is attained."""
    return sorted({v for cell in decompose(polytope, u) for v in cell.vertices})


def integrate_pl(polytope: ReflexivePolytope, u: PLConvexFunction, weight: AffineLinear | None = None) -> Fraction:
    """Exact integral of the piecewise linear part of u times an affine weight (1 when None)."""
    a, b = (Fraction(1), (Fraction(0),) * polytope.dim) if weight is None else (weight.a, weight.b)
    return sum(
        (cell.moments.integrate_affine_product(cell.piece[0], cell.piece[1], b, a) for cell in decompose(polytope, u)),
        Fraction(0),
    )


def integral(polytope: ReflexivePolytope, u: PLConvexFunction, weight: AffineLinear | None = None) -> Fraction | float:
    """Integral of u times an affine weight; exact unless u carries the Guillemin part."""
    value = integrate_pl(polytope, u, weight)
    if not u.guillemin:
        return value
    a, b = (1.0, None) if weight is None else weight.as_floats()
    return float(value) + GuilleminPotential(polytope).integrate(a, b)


def solve_l(mom: RationalMoments) -> AffineLinear:
    """The affine function with unit integral and vanishing first moments.

    Raises:
        SingularMoments: the Gram matrix of 1, x_1, ..., x_n is singular
    """
    n = mom.dim
    solution = exact.solve(mom.gram(), [Fraction(1)] + [Fraction(0)] * n)
    if solution is None:
        raise SingularMoments("Gram matrix of the moments is singular")
    l = AffineLinear(solution[0], tuple(solution[1:]))
    if l.integral(mom) != 1 or any(l.first_moments(mom)):
        raise RuntimeError(f"Moment conditions fail for {l}")
    if l.a <= 0:
        raise SingularMoments(f"Constant term {l.a} of l is not positive; moments are not those of a polytope")
    return l


def vertex_values(polytope: ReflexivePolytope, l: AffineLinear) -> dict[LatticePoint, Fraction]:
    return {v: l(v) for v in polytope.vertices}


def alpha_invariant(polytope: ReflexivePolytope, l: AffineLinear) -> Fraction:
    volume = polytope.volume
    return max(1 - volume * value for value in vertex_values(polytope, l).values())


def ding_futaki_I(polytope: ReflexivePolytope, l: AffineLinear, u: PLConvexFunction) -> Fraction | float:  # noqa: N802
    """Relative Ding-Futaki invariant ``-u(0) + int u l dx``, exact for piecewise linear u."""
    origin = (Fraction(0),) * polytope.dim
    return integral(polytope, u, l) - u(origin)


@dataclass(frozen=True)
class Wedge:
    """Member of the wedge family at a vertex.

    Supported on the corner simplex ``{sigma <= cut}`` where ``sigma(x) = 1^T E^-1 (x - p)`` for the
    primitive edge matrix E at p; its peak value ``height`` sits at p and its integral is ``mass``.
    """

    vertex: LatticePoint
    cut: Fraction
    height: Fraction
    mass: Fraction
    function: PLConvexFunction

    @property
    def index(self) -> Fraction:
        """Peak value in units of the mass."""
        return self.height / self.mass


def _edge_functional(polytope: ReflexivePolytope, vertex: int) -> Vector:
    """Coefficients g with ``<g, e> = 1`` for every primitive edge direction e at the vertex."""
    solution = exact.solve(polytope.edge_directions(vertex), [Fraction(1)] * polytope.dim)
    if solution is None:
        raise RuntimeError(f"Edge directions at {polytope.vertices[vertex]} are dependent")
    return solution


def max_cut(polytope: ReflexivePolytope, vertex: int) -> Fraction:
    """Largest cut keeping the corner simplex inside the polytope and the wedge zero at the origin."""
    p = polytope.vertices[vertex]
    sigma_origin = -exact.dot(_edge_functional(polytope, vertex), p)
    return min(Fraction(min(polytope.edge_lengths(vertex))), sigma_origin)


def wedge(polytope: ReflexivePolytope, vertex: int, cut: Fraction, mass: Fraction = Fraction(1)) -> Wedge:
    """Wedge at a vertex with the given cut depth and integral.

    Raises:
        DegenerateWedge: the corner simplex leaves the polytope or covers the origin
    """
    cut, mass = Fraction(cut), Fraction(mass)
    if cut <= 0 or mass <= 0:
        raise DegenerateWedge("cut and mass must be positive")
    limit = max_cut(polytope, vertex)
    if cut > limit:
        raise DegenerateWedge(f"Cut {cut} at {polytope.vertices[vertex]} exceeds {limit}")
    dim = polytope.dim
    g = _edge_functional(polytope, vertex)
    p = polytope.vertices[vertex]
    height = mass * math.factorial(dim + 1) / cut**dim
    slope = height / cut
    peak = (tuple(-slope * gi for gi in g), height + slope * exact.dot(g, p))
    function = PLConvexFunction((((Fraction(0),) * dim, Fraction(0)), peak))
    return Wedge(p, cut, height, mass, function)


def wedge_family(
    polytope: ReflexivePolytope,
    vertex: int,
    mass: Fraction = Fraction(1),
    steps: int = 50,
    initial_cut: Fraction | None = None,
    shrink: tuple[int, int] = WEDGE_SHRINK,
) -> list[Wedge]:
    """Wedges with geometrically shrinking cuts ``t_j = t_0 (p/q)^(j-1)`` of fixed integral."""
    cut = max_cut(polytope, vertex) if initial_cut is None else Fraction(initial_cut)
    ratio = Fraction(*shrink)
    family = []
    for _ in range(steps):
        family.append(wedge(polytope, vertex, cut, mass))
        cut *= ratio
    return family


def wedge_probe(
    polytope: ReflexivePolytope,
    l: AffineLinear,
    vertex: int,
    mass: Fraction = Fraction(1),
    steps: int = 50,
    initial_cut: Fraction | None = None,
) -> list[float]:
    """Ratios ``I(w)/int w dx`` along the wedge family at a vertex; they tend to l at the vertex."""
    ratios = []
    for member in wedge_family(polytope, vertex, mass, steps, initial_cut):
        ratio = ding_futaki_I(polytope, l, member.function) / integral(polytope, member.function)
        ratios.append(float(ratio))
    p = polytope.vertices[vertex]
    logger.debug("Wedge probe at %s: last ratio %f, l(p) = %f", p, ratios[-1], float(l(p)))
    return ratios


@dataclass(frozen=True)
class StabilityReport:
    """Stability data of a polytope.

    ``lambda_`` is the certified lower-bound constant ``(1 - alpha)/|P|`` of the stability inequality, equal
    to the minimum of l over the polytope; it is not claimed to be sharp.
    """

    name: str
    l: AffineLinear
    vertex_values: dict[LatticePoint, Fraction]
    alpha: Fraction
    stable: bool
    lambda_: Fraction
    volume: Fraction
    probe_ratios: dict[LatticePoint, tuple[float, ...]] = field(default_factory=dict)


@time_it
def stability_report(
    polytope: ReflexivePolytope,
    l: AffineLinear | None = None,
    probe_steps: int = 0,
    probe_mass: Fraction = Fraction(1),
) -> StabilityReport:
    """Compute l, alpha and the verdict; optionally run the wedge probe at every vertex.

    Args:
        polytope: validated polytope
        l: affine function to use instead of the one solved from the moments
        probe_steps: number of wedge family members per vertex (no probe when 0)
        probe_mass: integral of every wedge
    """
    l = solve_l(polytope.rational_moments) if l is None else l
    values = vertex_values(polytope, l)
    alpha = alpha_invariant(polytope, l)
    volume = polytope.volume
    lambda_ = (1 - alpha) / volume
    stable = alpha < 1
    if lambda_ != min(values.values()) or stable != all(v > 0 for v in values.values()):
        raise RuntimeError(f"{polytope.name}: alpha {alpha} is inconsistent with the vertex values of l")
    ratios = {}
    if probe_steps > 0:
        ratios = {
            v: tuple(wedge_probe(polytope, l, i, probe_mass, probe_steps)) for i, v in enumerate(polytope.vertices)
        }
    if not stable:
        logger.warning("%s is not uniformly relatively Ding stable: alpha = %s", polytope.name, alpha)
    return StabilityReport(polytope.name, l, values, alpha, stable, lambda_, volume, ratios)
