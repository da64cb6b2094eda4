import itertools
from fractions import Fraction

import numpy as np
import pytest

import tests.t_utils.common as t_common
from toricding.polytope import (
    DimensionTooLarge,
    HalfSpace,
    NotDelzant,
    NotFullDimensional,
    NotReflexive,
    NotUnimodular,
    OriginNotInterior,
    PolytopeError,
    RedundantVertex,
    ReflexivePolytope,
    from_vertices,
    lattice_points,
    moments,
    simplex_moments,
    simplex_volume,
    support_function,
    triangulate,
    triangulate_halfspaces,
    unimodular_transform,
    volume_by_facets,
)

KEYS = ["P1", "P2", "P1xP1", "F1", "Bl2P2", "Bl3P2", "P1xP2", "P3", "P1xP1xP1"]


@pytest.mark.parametrize("key", KEYS)
def test_catalog_entries_are_reflexive(key: str):
    polytope = t_common.polytope(key)
    assert polytope.contains((0,) * polytope.dim, strict=True)
    for v, facets in zip(polytope.vertices, polytope.vertex_facets, strict=True):
        assert len(facets) == polytope.dim
        assert all(sum(a * b for a, b in zip(polytope.facets[f], v, strict=True)) == -1 for f in facets)


@pytest.mark.parametrize("key", KEYS)
def test_volume_independent_of_pipeline(key: str):
    polytope = t_common.polytope(key)
    assert volume_by_facets(polytope) == polytope.volume


@pytest.mark.parametrize("key", ["P2", "F1", "Bl2P2", "P1xP2"])
def test_moments_independent_of_apex(key: str):
    polytope = t_common.polytope(key)
    for apex in range(len(polytope.vertices)):
        assert moments(polytope, triangulate(polytope, apex)) == polytope.rational_moments


def test_p2_volume(p2: ReflexivePolytope):
    assert p2.volume == Fraction(9, 2)
    assert p2.rational_moments.first == (0, 0)


def test_f1_moments_match_shoelace(f1: ReflexivePolytope):
    area, first, second = t_common.shoelace_moments([(-1, -1), (0, -1), (2, 1), (-1, 1)])
    mom = f1.rational_moments
    assert mom.volume == area == 4
    assert mom.first == first
    assert [list(row) for row in mom.second] == second


def test_moments_are_valid(catalog):
    assert all(entry.polytope.rational_moments.is_valid for entry in catalog)


def test_polar_volume():
    # The polar of the P2 polytope is the triangle (1,0), (0,1), (-1,-1) of area 3/2
    assert t_common.polytope("P2").polar_volume == Fraction(3, 2)
    assert t_common.polytope("P1").polar_volume == 2


def test_support_function(p2: ReflexivePolytope):
    assert support_function(p2, [1.0, 0.0]) == 2.0
    values = support_function(p2, np.array([[1.0, 0.0], [-1.0, -1.0]]))
    np.testing.assert_allclose(values, [2.0, 2.0])


def test_inradius_bounds_support_function(f1: ReflexivePolytope):
    rng = np.random.default_rng(1)
    directions = rng.normal(size=(200, 2))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    assert np.all(support_function(f1, directions) >= f1.inradius - 1e-12)


@pytest.mark.parametrize(("key", "refinement", "count"), [("P1", 1, 3), ("P1", 2, 5), ("P2", 1, 10), ("F1", 1, 9)])
def test_lattice_points(key: str, refinement: int, count: int):
    points = lattice_points(t_common.polytope(key), refinement)
    assert len(points) == count
    assert all(t_common.polytope(key).contains(p) for p in points)


@pytest.mark.parametrize("key", ["P2", "F1", "Bl2P2", "P1xP2"])
def test_unimodular_images(key: str):
    polytope = t_common.polytope(key)
    rng = np.random.default_rng(7)
    for _ in range(20):
        matrix = t_common.random_unimodular(polytope.dim, rng)
        image = unimodular_transform(polytope, matrix)
        assert image.volume == polytope.volume
        assert len(image.facets) == len(polytope.facets)


def test_unimodular_transform_rejects_other_matrices(p2: ReflexivePolytope):
    with pytest.raises(NotUnimodular):
        unimodular_transform(p2, [[2, 0], [0, 1]])


@pytest.mark.parametrize(
    ("vertices", "error"),
    [
        ([(-1, 0), (1, 0)], NotFullDimensional),
        ([(-1, -1), (1, -1), (-1, 1)], OriginNotInterior),
        ([(-1, -1), (3, -1), (-1, 3)], NotReflexive),
        ([(1, 0), (0, 1), (-1, -1)], NotDelzant),
        ([(1, 1), (1, -1), (-1, 1), (-1, -1), (0, 1)], RedundantVertex),
        ([(1,) * 7, (-1,) * 7], DimensionTooLarge),
        ([(0.5, 0), (-1, 0)], NotReflexive),
    ],
)
def test_invalid_polytopes(vertices: list[tuple[int, ...]], error: type[PolytopeError]):
    with pytest.raises(error):
        from_vertices("bad", vertices)


def test_non_smooth_reflexive_polytope_is_accepted_without_delzant_check():
    polar = from_vertices("P2*", [(1, 0), (0, 1), (-1, -1)], smooth=False)
    assert polar.volume == Fraction(3, 2)


def test_vertex_order_does_not_matter(f1: ReflexivePolytope):
    shuffled = from_vertices("F1", [(2, 1), (-1, 1), (0, -1), (-1, -1)])
    assert shuffled == f1


def test_triangulate_halfspaces_of_unit_square():
    halfspaces = [
        HalfSpace((Fraction(1), Fraction(0)), Fraction(0)),
        HalfSpace((Fraction(0), Fraction(1)), Fraction(0)),
        HalfSpace((Fraction(-1), Fraction(0)), Fraction(1)),
        HalfSpace((Fraction(0), Fraction(-1)), Fraction(1)),
    ]
    cells = triangulate_halfspaces(halfspaces, 2)
    assert len(cells) == 2
    flat = [*halfspaces[:3], HalfSpace((Fraction(0), Fraction(-1)), Fraction(0))]
    assert triangulate_halfspaces(flat, 2) == []


def _quadratic_rule(simplex, f) -> Fraction:
    """Degree 2 exact rule: edge midpoints (weights 1/3) on triangles, vertices and edge midpoints on tetrahedra."""
    n = len(simplex) - 1
    midpoints = [tuple((a + b) / 2 for a, b in zip(p, q, strict=True)) for p, q in itertools.combinations(simplex, 2)]
    if n == 2:  # noqa: PLR2004
        total = sum((f(m) for m in midpoints), Fraction(0)) / 3
    else:
        total = sum((f(m) for m in midpoints), Fraction(0)) / 5 - sum((f(v) for v in simplex), Fraction(0)) / 20
    return simplex_volume(simplex) * total


@pytest.mark.parametrize("dim", [2, 3])
def test_simplex_moments_match_quadrature(dim: int):
    rng = np.random.default_rng(dim)
    checked = 0
    while checked < 50:
        simplex = tuple(tuple(Fraction(int(c)) for c in row) for row in rng.integers(-4, 5, size=(dim + 1, dim)))
        if simplex_volume(simplex) == 0:
            continue
        result = simplex_moments(simplex)
        assert result.volume == _quadratic_rule(simplex, lambda _x: Fraction(1))
        for i in range(dim):
            assert result.first[i] == _quadratic_rule(simplex, lambda x, i=i: x[i])
            for j in range(dim):
                assert result.second[i][j] == _quadratic_rule(simplex, lambda x, i=i, j=j: x[i] * x[j])
        checked += 1


def test_support_function_of_f1(f1: ReflexivePolytope):
    assert support_function(f1, [1.0, 1.0]) == 3.0
    assert support_function(f1, [0.0, 0.0]) == 0.0


@pytest.mark.parametrize("key", KEYS)
def test_support_function_is_positively_homogeneous(key: str):
    polytope = t_common.polytope(key)
    rng = np.random.default_rng(2)
    xi = rng.normal(size=(100, polytope.dim))
    scale = rng.uniform(0, 10, size=100)
    np.testing.assert_allclose(
        support_function(polytope, xi * scale[:, None]), scale * support_function(polytope, xi), rtol=1e-12
    )
