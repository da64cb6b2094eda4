"""Exact lattice polytope geometry: reflexive Delzant validation, triangulations and rational moments."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
from flint import fmpz_mat
from scipy.spatial import ConvexHull

from toricding import exact
from toricding.constants import HULL_CHECK_MAX_DIMENSION, MAX_DIMENSION
from toricding.errors import ToricDingError
from toricding.utils import time_it

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import ArrayLike, NDArray

LatticePoint = tuple[int, ...]
Vector = tuple[Fraction, ...]
Simplex = tuple[Vector, ...]

logger = logging.getLogger()


class PolytopeError(ToricDingError):
    """Input is not a reflexive Delzant polytope."""


class NotFullDimensional(PolytopeError): ...


class NotReflexive(PolytopeError): ...


class NotDelzant(PolytopeError): ...


class OriginNotInterior(PolytopeError): ...


class NotUnimodular(PolytopeError): ...


class RedundantVertex(PolytopeError): ...


class DimensionTooLarge(PolytopeError): ...


@dataclass(frozen=True)
class HalfSpace:
    """The closed half space ``<normal, x> + offset >= 0``."""

    normal: Vector
    offset: Fraction

    def slack(self, x: Sequence[Fraction | int]) -> Fraction:
        return exact.dot(self.normal, x) + self.offset


@dataclass(frozen=True)
class RationalMoments:
    volume: Fraction
    first: Vector
    second: tuple[Vector, ...]

    @property
    def dim(self) -> int:
        return len(self.first)

    def __add__(self, other: RationalMoments) -> RationalMoments:
        return RationalMoments(
            self.volume + other.volume,
            tuple(a + b for a, b in zip(self.first, other.first, strict=True)),
            tuple(
                tuple(a + b for a, b in zip(row, other_row, strict=True))
                for row, other_row in zip(self.second, other.second, strict=True)
            ),
        )

    @classmethod
    def zero(cls, dim: int) -> RationalMoments:
        return cls(Fraction(0), (Fraction(0),) * dim, ((Fraction(0),) * dim,) * dim)

    def gram(self) -> list[list[Fraction]]:
        """Gram matrix of the functions 1, x_1, ..., x_n on the polytope."""
        return [[self.volume, *self.first]] + [[m, *row] for m, row in zip(self.first, self.second, strict=True)]

    @property
    def is_valid(self) -> bool:
        """Volume positive and Gram matrix positive definite (leading principal minors)."""
        gram = self.gram()
        return self.volume > 0 and all(exact.det([row[:k] for row in gram[:k]]) > 0 for k in range(1, len(gram) + 1))

    def integrate_affine_product(
        self, c: Sequence[Fraction], d: Fraction, b: Sequence[Fraction], a: Fraction
    ) -> Fraction:
        """Integral of ``(<c, x> + d) * (<b, x> + a)`` over the region these moments describe."""
        cross = sum(
            (ci * mij * bj for ci, row in zip(c, self.second, strict=True) for mij, bj in zip(row, b, strict=True)),
            Fraction(0),
        )
        linear = exact.dot(self.first, [d * bi + a * ci for ci, bi in zip(c, b, strict=True)])
        return d * a * self.volume + linear + cross


def simplex_volume(simplex: Simplex) -> Fraction:
    n = len(simplex) - 1
    base = simplex[0]
    edges = [[p - q for p, q in zip(v, base, strict=True)] for v in simplex[1:]]
    return abs(exact.det(edges)) / math.factorial(n) if n else Fraction(1)


def simplex_moments(simplex: Simplex) -> RationalMoments:
    """Closed form volume, first and second moments of an n-simplex."""
    n = len(simplex) - 1
    volume = simplex_volume(simplex)
    sums = [sum((v[i] for v in simplex), Fraction(0)) for i in range(n)]
    first = tuple(volume * s / (n + 1) for s in sums)
    scale = volume / ((n + 1) * (n + 2))
    second = tuple(
        tuple(scale * (sum((v[i] * v[j] for v in simplex), Fraction(0)) + sums[i] * sums[j]) for j in range(n))
        for i in range(n)
    )
    return RationalMoments(volume, first, second)


def enumerate_vertices(halfspaces: Sequence[HalfSpace], dim: int) -> tuple[list[Vector], list[frozenset[int]]]:
    """Vertices of a bounded H-polytope and, per vertex, the set of tight half spaces."""
    vertices: list[Vector] = []
    for combo in itertools.combinations(range(len(halfspaces)), dim):
        rows = [halfspaces[i].normal for i in combo]
        x = exact.solve(rows, [-halfspaces[i].offset for i in combo])
        if x is None or x in vertices:
            continue
        if all(h.slack(x) >= 0 for h in halfspaces):
            vertices.append(x)
    vertices.sort()
    tight = [frozenset(i for i, h in enumerate(halfspaces) if h.slack(v) == 0) for v in vertices]
    return vertices, tight


def pulling_triangulation(
    points: Sequence[Vector],
    tight: Sequence[frozenset[int]],
    face: frozenset[int],
    dim: int,
    apex: int | None = None,
) -> list[tuple[int, ...]]:
    """Triangulate a face by coning from an apex over the triangulations of the faces avoiding it.

    Args:
        points: coordinates, indexed by the integers used in ``face``
        tight: for every point, the half spaces it lies on
        face: indices of the vertices of the face to triangulate
        dim: affine dimension of the face
        apex: index of the cone point; the first vertex of the face when None. An apex outside
            ``face`` (the origin, for instance) cones over every facet of the face.
    """
    if dim == 0:
        return [(min(face),)]
    apex = min(face) if apex is None else apex
    constraints = set().union(*(tight[i] for i in face))
    facets: list[frozenset[int]] = []
    for h in sorted(constraints):
        sub = frozenset(i for i in face if h in tight[i])
        if apex in sub or sub in facets:
            continue
        if exact.affine_rank([points[i] for i in sorted(sub)]) == dim - 1:
            facets.append(sub)
    simplices = []
    for sub in facets:
        simplices.extend((apex, *s) for s in pulling_triangulation(points, tight, sub, dim - 1))
    return simplices


def triangulate_halfspaces(halfspaces: Sequence[HalfSpace], dim: int) -> list[Simplex]:
    """Triangulation of a bounded H-polytope; empty when it is not full dimensional."""
    vertices, tight = enumerate_vertices(halfspaces, dim)
    if exact.affine_rank(vertices) < dim:
        return []
    cells = pulling_triangulation(vertices, tight, frozenset(range(len(vertices))), dim)
    return [tuple(vertices[i] for i in cell) for cell in cells]


def _as_lattice_points(vertices: Iterable[Sequence[int]]) -> list[LatticePoint]:
    points = []
    for v in vertices:
        if any(isinstance(c, bool) or int(c) != c for c in v):
            raise NotReflexive(f"Vertex {tuple(v)} is not a lattice point")
        points.append(tuple(int(c) for c in v))
    return points


def _supporting_hyperplanes(vertices: Sequence[LatticePoint]) -> list[tuple[tuple[int, ...], int]]:
    """Exact facet hyperplanes ``<a, x> + a0 >= 0`` through affinely independent vertex subsets."""
    dim = len(vertices[0])
    found: dict[frozenset[int], tuple[tuple[int, ...], int]] = {}
    for combo in itertools.combinations(range(len(vertices)), dim):
        kernel, nullity = fmpz_mat([[*vertices[i], 1] for i in combo]).nullspace()
        if int(nullity) != 1:
            continue
        coeffs = exact.primitive([int(kernel[i, 0]) for i in range(dim + 1)])
        values = [sum(a * c for a, c in zip(coeffs[:dim], v, strict=True)) + coeffs[dim] for v in vertices]
        if all(value <= 0 for value in values):
            coeffs, values = tuple(-c for c in coeffs), [-value for value in values]
        elif not all(value >= 0 for value in values):
            continue
        tight = frozenset(i for i, value in enumerate(values) if value == 0)
        found.setdefault(tight, (coeffs[:dim], coeffs[dim]))
    return list(found.values())


def _check_against_hull(vertices: Sequence[LatticePoint], n_facets: int) -> None:
    dim = len(vertices[0])
    if not 2 <= dim <= HULL_CHECK_MAX_DIMENSION:
        return
    hull = ConvexHull(np.array(vertices, dtype=float))
    n_hull = len({tuple(np.round(eq, 9)) for eq in hull.equations})
    if n_hull != n_facets:
        raise RuntimeError(f"Exact facet enumeration found {n_facets} facets, Qhull found {n_hull}")


@dataclass(frozen=True)
class ReflexivePolytope:
    """A validated reflexive Delzant polytope.

    Facets are stored by their primitive inward normals ``n_F``; the facet inequality reads
    ``<n_F, x> >= -1``. Simplices of the triangulation index into ``triangulation_points``,
    which are the vertices followed by the origin.
    """

    name: str
    dim: int
    vertices: tuple[LatticePoint, ...]
    facets: tuple[LatticePoint, ...]
    triangulation: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def origin_index(self) -> int:
        return len(self.vertices)

    @property
    def triangulation_points(self) -> tuple[Vector, ...]:
        origin = (Fraction(0),) * self.dim
        return (*(tuple(Fraction(c) for c in v) for v in self.vertices), origin)

    @property
    def halfspaces(self) -> tuple[HalfSpace, ...]:
        return tuple(HalfSpace(tuple(Fraction(c) for c in n), Fraction(1)) for n in self.facets)

    @cached_property
    def vertex_facets(self) -> tuple[frozenset[int], ...]:
        """Indices of the facets through each vertex."""
        return tuple(
            frozenset(f for f, n in enumerate(self.facets) if sum(a * b for a, b in zip(n, v, strict=True)) == -1)
            for v in self.vertices
        )

    @cached_property
    def edges(self) -> tuple[tuple[int, ...], ...]:
        """For each vertex, the indices of the vertices joined to it by an edge."""
        neighbours = []
        for i, tight in enumerate(self.vertex_facets):
            joined = []
            for j, other in enumerate(self.vertex_facets):
                common = tight & other
                if i != j and exact.rank([self.facets[f] for f in sorted(common)]) == self.dim - 1:
                    joined.append(j)
            neighbours.append(tuple(joined))
        return tuple(neighbours)

    def edge_directions(self, vertex: int) -> tuple[LatticePoint, ...]:
        """Primitive edge directions leaving a vertex (the columns of its cone matrix)."""
        p = self.vertices[vertex]
        return tuple(
            exact.primitive([a - b for a, b in zip(self.vertices[j], p, strict=True)]) for j in self.edges[vertex]
        )

    def edge_lengths(self, vertex: int) -> tuple[int, ...]:
        """Lattice lengths of the edges leaving a vertex."""
        p = self.vertices[vertex]
        return tuple(math.gcd(*(a - b for a, b in zip(self.vertices[j], p, strict=True))) for j in self.edges[vertex])

    def contains(self, x: Sequence[Fraction | int], strict: bool = False) -> bool:
        slacks = [h.slack(x) for h in self.halfspaces]
        return all(s > 0 for s in slacks) if strict else all(s >= 0 for s in slacks)

    @property
    def vertex_array(self) -> NDArray[np.float64]:
        return np.array(self.vertices, dtype=float)

    @property
    def normal_array(self) -> NDArray[np.float64]:
        return np.array(self.facets, dtype=float)

    @property
    def inradius(self) -> float:
        """Distance from the origin to the nearest facet hyperplane, the minimum of h on the unit sphere."""
        return float(1.0 / np.max(np.linalg.norm(self.normal_array, axis=1)))

    @cached_property
    def rational_moments(self) -> RationalMoments:
        return moments(self)

    @property
    def volume(self) -> Fraction:
        return self.rational_moments.volume

    @cached_property
    def polar_volume(self) -> Fraction:
        """Volume of the polar polytope ``{xi : h(xi) <= 1}``, the convex hull of the negated facet normals.

        ``int exp(-h(xi)) dxi = n! * polar_volume``.
        """
        polar = from_vertices(f"{self.name}*", [tuple(-c for c in n) for n in self.facets], smooth=False)
        return polar.volume

    def __str__(self) -> str:
        return f"<ReflexivePolytope {self.name}: dim {self.dim}, {len(self.vertices)} vertices>"


def from_vertices(name: str, vertices: Sequence[Sequence[int]], smooth: bool = True) -> ReflexivePolytope:
    """Validate lattice vertices as a reflexive Delzant polytope.

    With ``smooth=False`` only reflexivity is checked (used for polar polytopes).

    Raises:
        NotFullDimensional: vertices span a proper affine subspace
        OriginNotInterior: the origin is on the boundary or outside
        NotReflexive: a facet is not at lattice distance one from the origin
        NotDelzant: a vertex cone is not simple or not unimodular
        RedundantVertex: an input point is not a vertex of the hull
        DimensionTooLarge: dimension above the supported range
    """
    points = sorted(set(_as_lattice_points(vertices)))
    if not points or len(points[0]) < 1:
        raise NotFullDimensional("At least one coordinate is needed")
    dim = len(points[0])
    if any(len(p) != dim for p in points):
        raise NotFullDimensional("Vertices have different dimensions")
    if dim > MAX_DIMENSION:
        raise DimensionTooLarge(f"Dimension {dim} exceeds the supported maximum {MAX_DIMENSION}")
    if exact.affine_rank(points) < dim:
        raise NotFullDimensional(f"{name}: vertices span less than {dim} dimensions")

    normals = []
    for coeffs, offset in _supporting_hyperplanes(points):
        if offset <= 0:
            raise OriginNotInterior(f"{name}: facet {coeffs}.x + {offset} >= 0 does not have the origin inside")
        normal = exact.as_integer_vector([Fraction(c, offset) for c in coeffs])
        if normal is None:
            raise NotReflexive(f"{name}: facet {coeffs}.x >= {-offset} is not at lattice distance 1")
        normals.append(normal)
    normals.sort()
    _check_against_hull(points, len(normals))

    polytope = ReflexivePolytope(name, dim, tuple(points), tuple(normals), ())
    for i, tight in enumerate(polytope.vertex_facets):
        if exact.rank([normals[f] for f in sorted(tight)]) < dim:
            raise RedundantVertex(f"{name}: {points[i]} is not a vertex")
    for i, p in enumerate(points if smooth else ()):
        directions = polytope.edge_directions(i)
        if len(directions) != dim:
            raise NotDelzant(f"{name}: vertex {p} is not simple ({len(directions)} edges)")
        det = exact.det(directions)
        if abs(det) != 1:
            raise NotDelzant(f"{name}: vertex cone at {p} has determinant {det}")

    cells = triangulate(polytope)
    return ReflexivePolytope(name, dim, tuple(points), tuple(normals), tuple(cells))


def triangulate(polytope: ReflexivePolytope, apex: int | None = None) -> list[tuple[int, ...]]:
    """Star triangulation of the facets, coned over the origin (default) or over a vertex.

    Indices refer to ``polytope.triangulation_points``.
    """
    points = polytope.triangulation_points
    tight = [*polytope.vertex_facets, frozenset()]
    face = frozenset(range(len(polytope.vertices)))
    return pulling_triangulation(points, tight, face, polytope.dim, polytope.origin_index if apex is None else apex)


def simplices(polytope: ReflexivePolytope, cells: Iterable[tuple[int, ...]] | None = None) -> list[Simplex]:
    points = polytope.triangulation_points
    return [tuple(points[i] for i in cell) for cell in (polytope.triangulation if cells is None else cells)]


@time_it
def moments(polytope: ReflexivePolytope, cells: Iterable[tuple[int, ...]] | None = None) -> RationalMoments:
    """Exact volume, first and second moments summed over a triangulation."""
    total = RationalMoments.zero(polytope.dim)
    for simplex in simplices(polytope, cells):
        total += simplex_moments(simplex)
    return total


def volume_by_facets(polytope: ReflexivePolytope) -> Fraction:
    """Volume as the sum of the cones over the facets, from facet areas and heights 1/|n_F|.

    Facet areas come from Gram determinants; ``area/|n_F|`` is rational for lattice facets, so the
    computation stays exact without using the cone triangulation.
    """
    dim = polytope.dim
    points = polytope.triangulation_points
    tight = [*polytope.vertex_facets, frozenset()]
    total = Fraction(0)
    for f, normal in enumerate(polytope.facets):
        face = frozenset(i for i, facets in enumerate(polytope.vertex_facets) if f in facets)
        norm_sq = sum(c * c for c in normal)
        for cell in pulling_triangulation(points, tight, face, dim - 1):
            base = points[cell[0]]
            edges = [[a - b for a, b in zip(points[i], base, strict=True)] for i in cell[1:]]
            gram = [[exact.dot(e, g) for g in edges] for e in edges]
            ratio = exact.rational_sqrt((exact.det(gram) if edges else Fraction(1)) / norm_sq)
            if ratio is None:
                raise RuntimeError(f"Facet {normal} of {polytope.name} has an irrational lattice area")
            total += ratio / (math.factorial(dim - 1) * dim)
    return total


def support_function(polytope: ReflexivePolytope, xi: ArrayLike) -> NDArray[np.float64] | float:
    """h(xi) = max over vertices of <v, xi>; accepts a single direction or an array of them."""
    xi = np.asarray(xi, dtype=float)
    values = np.max(np.atleast_2d(xi) @ polytope.vertex_array.T, axis=1)
    return float(values[0]) if xi.ndim <= 1 else values


def unimodular_transform(polytope: ReflexivePolytope, matrix: Sequence[Sequence[int]]) -> ReflexivePolytope:
    """Image of the polytope under an integer matrix of determinant +-1."""
    if len(matrix) != polytope.dim or any(len(row) != polytope.dim for row in matrix):
        raise NotUnimodular(f"Expected a {polytope.dim}x{polytope.dim} matrix")
    det = exact.det(matrix)
    if abs(det) != 1:
        raise NotUnimodular(f"Matrix has determinant {det}")
    image = [tuple(sum(a * c for a, c in zip(row, v, strict=True)) for row in matrix) for v in polytope.vertices]
    return from_vertices(polytope.name, image)


def lattice_points(polytope: ReflexivePolytope, refinement: int = 1) -> list[Vector]:
    """Points of the polytope in the refined lattice (1/k)Z^n, including all vertices."""
    if refinement < 1:
        raise ValueError("refinement must be a positive integer")
    lo = refinement * np.min(polytope.vertex_array, axis=0).astype(int)
    hi = refinement * np.max(polytope.vertex_array, axis=0).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi, strict=True)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, polytope.dim)
    inside = np.all(grid @ np.array(polytope.facets, dtype=np.int64).T >= -refinement, axis=1)
    return sorted(tuple(Fraction(int(c), refinement) for c in y) for y in grid[inside])
