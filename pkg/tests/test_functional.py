import logging
from fractions import Fraction

import numpy as np
import pytest

import tests.t_utils.common as t_common
from toricding.duality import LogSumExpPotential
from toricding.functional import (
    DegenerateFamily,
    NonNormalizedDensity,
    PushforwardDensity,
    QuadratureSpec,
    TailBoundViolated,
    ding_of_symplectic,
    evaluate_on_grid,
    grad_theta,
    modified_ding,
    nonlinear_term,
    prekopa_check,
    prekopa_gap,
    probe_family,
    properness_probe,
    tail_mass,
    tail_radius,
)
from toricding.invariants import AffineLinear, PLConvexFunction, integral, solve_l
from toricding.polytope import ReflexivePolytope


@pytest.mark.parametrize(("c", "dim"), [(1.0, 1), (0.5, 2), (1 / 3, 3)])
def test_tail_radius_meets_tail_mass(c: float, dim: int):
    radius = tail_radius(c, dim, 1e-10)
    assert tail_mass(c, radius, dim) == pytest.approx(1e-10, rel=1e-6)
    assert tail_mass(c, 0.9 * radius, dim) > 1e-10


def test_tail_radius_of_loose_bound_is_zero():
    assert tail_radius(1.0, 1, 10.0) == 0.0


def test_doubled_keeps_spacing():
    spec = QuadratureSpec.for_radius(2.0)
    doubled = spec.doubled(3)
    assert doubled.radius == 16.0
    assert doubled.spacing == spec.spacing


def test_nonlinear_term_of_fubini_study():
    # int exp(-phi) = int dxi / (4 cosh^2(xi/2)) = 1
    assert nonlinear_term(t_common.fubini_study_potential()) == pytest.approx(0.0, abs=1e-9)


def test_fubini_study_is_critical(p1: ReflexivePolytope):
    phi = t_common.fubini_study_potential()
    evaluation = evaluate_on_grid(phi, solve_l(p1.rational_moments), QuadratureSpec.for_potential(phi))
    np.testing.assert_allclose(evaluation.gradient, 0.0, atol=1e-9)
    assert evaluation.value.pushforward_mass == pytest.approx(1.0, abs=1e-6)
    assert evaluation.residual_sup < 1e-8


def test_functional_ignores_constants(p2: ReflexivePolytope):
    phi = t_common.random_potential(p2, np.random.default_rng(1))
    shifted = phi.with_theta(phi.theta + 3.7)
    q = QuadratureSpec.for_potential(phi)
    assert modified_ding(shifted, q=q).total == pytest.approx(modified_ding(phi, q=q).total, abs=1e-10)


@pytest.mark.parametrize("offset", [-4.0, 0.0, 4.0])
def test_grid_pass_matches_nonlinear_term(f1: ReflexivePolytope, offset: float):
    phi = t_common.random_potential(f1, np.random.default_rng(9))
    phi = phi.with_theta(phi.theta + offset)
    q = QuadratureSpec.for_potential(phi)
    evaluation = evaluate_on_grid(phi, solve_l(f1.rational_moments), q)
    assert evaluation.value.nonlinear == pytest.approx(nonlinear_term(phi, q), abs=1e-12)


def _central_differences(phi: LogSumExpPotential, q: QuadratureSpec, h: float = 1e-5) -> np.ndarray:
    differences = []
    for i in range(len(phi.sample)):
        step = np.zeros(len(phi.sample))
        step[i] = h
        upper = modified_ding(phi.with_theta(phi.theta + step), q=q).total
        lower = modified_ding(phi.with_theta(phi.theta - step), q=q).total
        differences.append((upper - lower) / (2 * h))
    return np.array(differences)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_central_differences(p1: ReflexivePolytope, seed: int):
    phi = t_common.random_potential(p1, np.random.default_rng(seed), refinement=10)
    assert len(phi.sample) == 21
    q = QuadratureSpec.for_potential(phi, margin=3.0)
    gradient = grad_theta(phi, q=q)
    np.testing.assert_allclose(_central_differences(phi, q), gradient, rtol=1e-5, atol=1e-7)
    assert gradient.sum() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_central_differences_on_f1(f1: ReflexivePolytope, seed: int):
    phi = t_common.random_potential(f1, np.random.default_rng(100 + seed))
    q = QuadratureSpec.for_potential(phi, margin=1.0)
    np.testing.assert_allclose(_central_differences(phi, q), grad_theta(phi, q=q), rtol=1e-5, atol=1e-7)


def test_gradient_in_the_lowest_vertex_weight(f1: ReflexivePolytope):
    phi = t_common.random_potential(f1, np.random.default_rng(7))
    q = QuadratureSpec.for_potential(phi, margin=1.0)
    vertices = np.flatnonzero(phi.vertex_mask)
    vertex = vertices[np.argmin(phi.theta[vertices])]
    step = np.zeros(len(phi.sample))
    step[vertex] = 1e-6
    # raising the lowest vertex weight moves the shift used inside the quadrature
    upper = modified_ding(phi.with_theta(phi.theta + step), q=q).total
    lower = modified_ding(phi.with_theta(phi.theta - step), q=q).total
    assert (upper - lower) / 2e-6 == pytest.approx(grad_theta(phi, q=q)[vertex], rel=1e-4, abs=1e-6)


def test_prekopa_on_random_pairs(p1: ReflexivePolytope):
    rng = np.random.default_rng(4)
    for _ in range(100):
        phi0 = t_common.random_potential(p1, rng, refinement=2)
        phi1 = t_common.random_potential(p1, rng, refinement=2)
        assert prekopa_check(phi0, phi1, float(rng.uniform()))


def test_prekopa_on_random_pairs_on_f1(f1: ReflexivePolytope):
    rng = np.random.default_rng(8)
    for _ in range(100):
        phi0 = t_common.random_potential(f1, rng)
        phi1 = t_common.random_potential(f1, rng)
        assert prekopa_check(phi0, phi1, float(rng.uniform()))


def test_prekopa_gap_vanishes_on_translations(p2: ReflexivePolytope):
    phi0 = t_common.random_potential(p2, np.random.default_rng(5))
    # theta + <b, m> + c is the same potential translated in xi and shifted
    phi1 = phi0.with_theta(phi0.theta + phi0.points @ np.array([0.5, -0.25]) + 1.0)
    assert prekopa_gap(phi0, phi1, 0.5) == pytest.approx(0.0, abs=1e-9)


def test_prekopa_rejects_different_samples(p1: ReflexivePolytope):
    with pytest.raises(ValueError, match="same sample"):
        prekopa_gap(LogSumExpPotential.from_polytope(p1, 1), LogSumExpPotential.from_polytope(p1, 2), 0.5)


def test_potential_is_critical_for_its_own_pushforward(f1: ReflexivePolytope):
    psi = t_common.random_potential(f1, np.random.default_rng(6))
    q = QuadratureSpec.for_potential(psi)
    density = PushforwardDensity.of(psi, q)
    np.testing.assert_allclose(grad_theta(psi, density, q), 0.0, atol=1e-9)


def test_affine_density_must_be_normalized(p1: ReflexivePolytope):
    with pytest.raises(NonNormalizedDensity):
        modified_ding(t_common.fubini_study_potential(), AffineLinear(Fraction(1), (Fraction(0),)))


def test_small_box_violates_tail_bound():
    with pytest.raises(TailBoundViolated):
        nonlinear_term(t_common.fubini_study_potential(), QuadratureSpec.for_radius(2.0))


def _trapezoid_of_abs(h: float) -> float:
    """-log of the trapezoidal sum of exp(-|xi|) on the full lattice hZ."""
    return -np.log(h * (1 + np.exp(-h)) / (1 - np.exp(-h)))


def test_ding_of_zero_function(p1: ReflexivePolytope):
    value = ding_of_symplectic(p1, PLConvexFunction.zero(1))
    assert value == pytest.approx(_trapezoid_of_abs(0.25), rel=1e-9)
    assert value == pytest.approx(-np.log(2.0), rel=1e-2)


def test_ding_of_symplectic_retries_with_larger_box(p1: ReflexivePolytope, caplog: pytest.LogCaptureFixture):
    caplog.set_level(logging.INFO)
    q = QuadratureSpec.for_radius(2.0)
    value = ding_of_symplectic(p1, PLConvexFunction.zero(1), q=q, retry_attempts=5)
    assert value == pytest.approx(_trapezoid_of_abs(0.25), rel=1e-9)
    messages = [msg for msg in caplog.messages if msg.startswith("Quadrature:")]
    assert len(messages) == 4
    assert "Attempt 1 ended with" in messages[0]


def test_ding_of_symplectic_gives_up(p1: ReflexivePolytope):
    with pytest.raises(TailBoundViolated):
        ding_of_symplectic(p1, PLConvexFunction.zero(1), q=QuadratureSpec.for_radius(2.0), retry_attempts=2)


def test_properness_fit_frame(p1: ReflexivePolytope):
    family = [u for u in t_common.random_pl_functions(p1, 12, seed=7) if integral(p1, u) > 0][:6]
    fit = properness_probe(p1, family=family)
    df = fit.to_frame()
    assert len(df) == len(family)
    assert set(df["kind"]) == {"given"}
    assert np.all(fit.margins >= -1e-9)


def test_properness_rejects_unnormalized_members(p1: ReflexivePolytope):
    family = [PLConvexFunction.affine((1,), 1), PLConvexFunction.zero(1)]
    with pytest.raises(ValueError, match="not normalized"):
        properness_probe(p1, family=family)


def test_properness_needs_distinct_integrals(p1: ReflexivePolytope):
    with pytest.raises(DegenerateFamily):
        properness_probe(p1, family=[PLConvexFunction.zero(1), PLConvexFunction.zero(1)])


def test_probe_family_size(f1: ReflexivePolytope):
    family = probe_family(f1, size=24, wedges_per_vertex=2)
    assert len(family) == 24
    assert sum(m.kind == "wedge" for m in family) == 8


@pytest.mark.slow
def test_f1_is_proper(f1: ReflexivePolytope):
    fit = properness_probe(f1, family=probe_family(f1, size=50, wedges_per_vertex=2))
    assert fit.proper
    assert np.all(fit.margins >= -1e-8)
