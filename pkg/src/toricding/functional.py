"""The modified Ding functional and its property probes.

For a potential phi with symplectic potential u and a density A on the polytope (A = l by default)

    D_A(phi) = -log int exp(-phi) dxi + int u A dx.

The second integral is pulled back to R^n through the moment map: with ``rho = A(grad phi) det hess phi`` it
reads ``int (<grad phi, xi> - phi) rho dxi``. Both integrals use the same trapezoidal grid on a box whose
radius is chosen from an explicit bound on the neglected mass of exp(-phi).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import tenacity
from scipy.spatial import ConvexHull, QhullError
from scipy.special import gammainccinv, gammaincc, logsumexp

from toricding.constants import CHUNK_SIZE, DEFAULT_SPACING, EPS_PUSHFORWARD, EPS_TAIL
from toricding.data_models import PropernessProbeDataFrame
from toricding.duality import (
    Grid,
    LogSumExpPotential,
    invert_moment_map,
    is_normalized,
    legendre_to_phi,
    normalize,
    softmax_geometry,
)
from toricding.errors import ToricDingError
from toricding.invariants import AffineLinear, PLConvexFunction, cell_vertices, integral, solve_l, wedge_family
from toricding.retry_cb import RetryCallback
from toricding.utils import time_it

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

    from toricding.polytope import ReflexivePolytope
    from toricding.retry_cb import RetryCallbackFactory

logger = logging.getLogger()


class QuadratureError(ToricDingError): ...


class TailBoundViolated(QuadratureError): ...


class NonNormalizedDensity(QuadratureError): ...


class DegenerateFamily(ToricDingError):
    """A properness family whose members all have the same integral cannot be fitted."""


def sphere_area(dim: int) -> float:
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def tail_mass(c: float, radius: float, dim: int) -> float:
    """``int_{|xi| > R} exp(-c |xi|) dxi``, which bounds the mass outside the box [-R, R]^n."""
    return sphere_area(dim) * math.gamma(dim) * float(gammaincc(dim, c * radius)) / c**dim


def tail_radius(c: float, dim: int, eps: float) -> float:
    """Smallest R with ``tail_mass(c, R, dim) <= eps``."""
    y = eps * c**dim / (sphere_area(dim) * math.gamma(dim))
    return 0.0 if y >= 1 else float(gammainccinv(dim, y)) / c


def log_partition(values: NDArray[np.float64], weights: NDArray[np.float64]) -> float:
    """log of the trapezoidal quadrature of exp(-values)."""
    return float(logsumexp(-values, b=weights))


def potential_tail_bound(phi: LogSumExpPotential, radius: float) -> float:
    """Bound on ``int_{outside box} exp(-phi)`` from ``phi >= h + min over vertices of theta`` and ``h >= c |xi|``."""
    return tail_mass(phi.polytope.inradius, radius, phi.dim) * math.exp(-phi.min_vertex_theta)


def pl_tail_bound(points: NDArray[np.float64], values: NDArray[np.float64], radius: float) -> float:
    """Tail bound for ``phi = max_x (<x, xi> - u(x))`` over candidate points x.

    For every level U, phi is at least the support function of the points with ``u <= U`` minus U, which
    grows like the inradius of their hull. The best level wins.
    """
    dim = points.shape[1]
    best = math.inf
    for level in np.unique(values):
        subset = points[values <= level]
        if dim == 1:
            c = min(float(subset.max()), float(-subset.min()))
        else:
            try:
                hull = ConvexHull(subset)
            except (QhullError, ValueError):
                continue
            c = float(np.min(-hull.equations[:, -1]))
        if c > 0:
            best = min(best, math.exp(float(level)) * tail_mass(c, radius, dim))
    return best


@dataclass(frozen=True)
class QuadratureSpec:
    """Box ``[-radius, radius]^n`` with ``nodes`` trapezoidal nodes per axis.

    ``eps_tail`` bounds the neglected mass of exp(-phi) relative to the computed mass; this keeps the bound
    invariant under adding constants to phi.
    """

    radius: float
    nodes: int
    eps_tail: float = EPS_TAIL

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.nodes < 3 or self.eps_tail <= 0:  # noqa: PLR2004
            raise ValueError("Quadrature needs a positive radius, at least 3 nodes and a positive eps_tail")

    @property
    def spacing(self) -> float:
        return 2 * self.radius / (self.nodes - 1)

    def grid(self, dim: int) -> Grid:
        return Grid(self.radius, self.nodes, dim)

    def doubled(self, times: int = 1) -> QuadratureSpec:
        """The radius doubled ``times`` times at the same spacing."""
        spec = self
        for _ in range(times):
            spec = QuadratureSpec(2 * spec.radius, 2 * spec.nodes - 1, spec.eps_tail)
        return spec

    @classmethod
    def for_radius(cls, radius: float, spacing: float = DEFAULT_SPACING, eps_tail: float = EPS_TAIL) -> QuadratureSpec:
        half = max(math.ceil(radius / spacing), 1)
        return cls(half * spacing, 2 * half + 1, eps_tail)

    @classmethod
    def for_potential(
        cls,
        phi: LogSumExpPotential,
        spacing: float = DEFAULT_SPACING,
        eps_tail: float = EPS_TAIL,
        eps_pushforward: float = EPS_PUSHFORWARD,
        margin: float = 0.0,
    ) -> QuadratureSpec:
        """Box for a log-sum-exp potential, allowing its weights to move by ``margin``.

        The radius is the larger of the tail-bound radius and the radius where the pushforward density,
        decaying like ``exp(-|xi| / (k max |n_F|))``, has relative mass below ``eps_pushforward``.
        """
        polytope = phi.polytope
        spread = float(np.ptp(phi.theta)) + 2 * margin
        # int exp(-phi) >= exp(-max theta - log |sample|) n! |polar|
        log_lower = (
            -float(np.max(phi.theta)) - margin - math.log(len(phi.sample))
            + math.log(math.factorial(phi.dim) * float(polytope.polar_volume))
        )
        scale = math.exp(-(phi.min_vertex_theta - margin) - log_lower)
        r_tail = tail_radius(polytope.inradius, phi.dim, eps_tail / scale)
        max_normal = float(np.max(np.linalg.norm(polytope.normal_array, axis=1)))
        r_push = phi.refinement * max_normal * (math.log(1 / eps_pushforward) + spread)
        return cls.for_radius(max(r_tail, r_push, 1.0), spacing, eps_tail)

    @classmethod
    def for_polytope(
        cls, polytope: ReflexivePolytope, refinement: int = 1, spacing: float = DEFAULT_SPACING, margin: float = 5.0
    ) -> QuadratureSpec:
        return cls.for_potential(LogSumExpPotential.from_polytope(polytope, refinement), spacing, margin=margin)

    @classmethod
    def for_pl(
        cls,
        polytope: ReflexivePolytope,
        u: PLConvexFunction,
        spacing: float = DEFAULT_SPACING,
        eps_tail: float = EPS_TAIL,
    ) -> QuadratureSpec:
        """Box for the transform of a normalized convex function, for which ``int exp(-phi) >= n! |polar|``."""
        points = np.array(cell_vertices(polytope, u), dtype=float)
        values = u.evaluate(points, polytope)
        target = eps_tail * math.factorial(polytope.dim) * float(polytope.polar_volume)
        radius = 4.0
        while pl_tail_bound(points, values, radius) > target:
            radius *= 2
        return cls.for_radius(radius, spacing, eps_tail)


@dataclass(frozen=True)
class FunctionalValue:
    nonlinear: float
    linear: float
    total: float
    tail_bound: float
    pushforward_mass: float


@dataclass(frozen=True, eq=False)
class PushforwardDensity:
    """Density A on the polytope for which ``grad psi`` pushes ``exp(-psi)/Z`` forward to ``A dx``.

    ``A(x) = exp(-psi(xi))/Z / det hess psi(xi)`` at ``xi = (grad psi)^-1(x)``; psi is a critical point of D_A.
    """

    potential: LogSumExpPotential
    log_z: float

    @classmethod
    def of(cls, psi: LogSumExpPotential, q: QuadratureSpec) -> PushforwardDensity:
        grid = q.grid(psi.dim)
        values = np.concatenate([psi(grid.points(part)) for part in grid.chunks()])
        return cls(psi, log_partition(values, grid.weights()))

    def evaluate(self, x: ArrayLike, initial: ArrayLike | None = None) -> NDArray[np.float64]:
        xi = invert_moment_map(self.potential, x, initial)
        geometry = softmax_geometry(self.potential, xi)
        return np.exp(-geometry.value - self.log_z) / np.linalg.det(geometry.hessian)


Density = AffineLinear | PushforwardDensity


def _density_values(density: Density, moment: NDArray[np.float64], nodes: NDArray[np.float64]) -> NDArray[np.float64]:
    if isinstance(density, PushforwardDensity):
        return density.evaluate(moment, initial=nodes)
    return density.evaluate(moment)


def check_density(polytope: ReflexivePolytope, density: Density) -> None:
    """Affine densities must integrate to 1 exactly; a pushforward density has mass 1 by construction."""
    if isinstance(density, AffineLinear):
        mass = density.integral(polytope.rational_moments)
        if abs(float(mass) - 1) > 1e-12:  # noqa: PLR2004
            raise NonNormalizedDensity(f"Density integrates to {mass}, not 1")


@dataclass(frozen=True, eq=False)
class GridEvaluation:
    """Everything one pass over the quadrature grid yields for a log-sum-exp potential.

    Per node: ``source = exp(-phi)/Z``, ``target = A(grad phi) det hess phi`` and the moment map image.
    """

    value: FunctionalValue
    gradient: NDArray[np.float64]
    source: NDArray[np.float64] = field(repr=False)
    target: NDArray[np.float64] = field(repr=False)
    moment: NDArray[np.float64] = field(repr=False)
    weights: NDArray[np.float64] = field(repr=False)

    @property
    def residual(self) -> NDArray[np.float64]:
        return self.source - self.target

    @property
    def residual_l1(self) -> float:
        return float(np.sum(self.weights * np.abs(self.residual)))

    @property
    def residual_sup(self) -> float:
        return float(np.max(np.abs(self.residual)))


def _tail_check(tail: float, log_z: float, q: QuadratureSpec) -> float:
    relative = tail * math.exp(-log_z)
    if relative > q.eps_tail:
        raise TailBoundViolated(f"Tail bound {relative:.3g} exceeds {q.eps_tail:.3g} at radius {q.radius}")
    return relative


def evaluate_on_grid(phi: LogSumExpPotential, density: Density, q: QuadratureSpec) -> GridEvaluation:
    """Single pass computing D_A, its gradient in theta and the Monge-Ampere residual field.

    Node contributions of exp(-phi) are shifted by the minimum vertex weight (phi is at least that), so
    every term is at most 1. Chunks are accumulated in a fixed order.
    """
    grid = q.grid(phi.dim)
    shift = phi.min_vertex_theta
    mass_exp = 0.0
    mass_push = 0.0
    linear_raw = 0.0
    grad_exp = np.zeros(len(phi.sample))
    grad_push = np.zeros(len(phi.sample))
    exp_nodes = np.empty(grid.size)
    push_nodes = np.empty(grid.size)
    moment = np.empty((grid.size, phi.dim))
    weights = np.empty(grid.size)
    for part in grid.chunks(CHUNK_SIZE):
        nodes = grid.points(part)
        w = grid.weights(part)
        geometry = softmax_geometry(phi, nodes)
        e = w * np.exp(-(geometry.value - shift))
        rho = _density_values(density, geometry.gradient, nodes) * np.linalg.det(geometry.hessian)
        u = np.einsum("gi,gi->g", geometry.gradient, nodes) - geometry.value
        mass_exp += float(np.sum(e))
        mass_push += float(np.sum(w * rho))
        linear_raw += float(np.sum(w * rho * u))
        grad_exp += geometry.weights.T @ e
        grad_push += geometry.weights.T @ (w * rho)
        exp_nodes[part] = e
        push_nodes[part] = rho
        moment[part] = geometry.gradient
        weights[part] = w
    log_z = math.log(mass_exp) - shift
    tail = _tail_check(potential_tail_bound(phi, q.radius), log_z, q)
    nonlinear = -log_z
    linear = linear_raw / mass_push
    value = FunctionalValue(nonlinear, linear, nonlinear + linear, tail, mass_push)
    gradient = grad_exp / mass_exp - grad_push / mass_push
    return GridEvaluation(value, gradient, exp_nodes / weights / mass_exp, push_nodes, moment, weights)


def _defaults(
    phi: LogSumExpPotential, density: Density | None, q: QuadratureSpec | None
) -> tuple[Density, QuadratureSpec]:
    density = solve_l(phi.polytope.rational_moments) if density is None else density
    check_density(phi.polytope, density)
    return density, QuadratureSpec.for_potential(phi) if q is None else q


def nonlinear_term(phi: LogSumExpPotential, q: QuadratureSpec | None = None) -> float:
    """``-log int exp(-phi) dxi`` by trapezoidal quadrature.

    Raises:
        TailBoundViolated: the box is too small for this potential
    """
    q = QuadratureSpec.for_potential(phi) if q is None else q
    grid = q.grid(phi.dim)
    values = np.concatenate([phi(grid.points(part)) for part in grid.chunks()])
    log_z = log_partition(values, grid.weights())
    _tail_check(potential_tail_bound(phi, q.radius), log_z, q)
    return -log_z


def modified_ding(
    phi: LogSumExpPotential, density: Density | None = None, q: QuadratureSpec | None = None
) -> FunctionalValue:
    """D_A(phi); A defaults to the affine function l of the polytope.

    Raises:
        TailBoundViolated: the box is too small for this potential
        NonNormalizedDensity: an affine A does not integrate to 1
    """
    density, q = _defaults(phi, density, q)
    return evaluate_on_grid(phi, density, q).value


def grad_theta(
    phi: LogSumExpPotential, density: Density | None = None, q: QuadratureSpec | None = None
) -> NDArray[np.float64]:
    """Derivative of D_A in the weights: ``int p_m (exp(-phi)/Z - A(grad phi) det hess phi) dxi``."""
    density, q = _defaults(phi, density, q)
    return evaluate_on_grid(phi, density, q).gradient


def prekopa_gap(
    phi0: LogSumExpPotential, phi1: LogSumExpPotential, t: float, q: QuadratureSpec | None = None
) -> float:
    """``(1-t) N(phi0) + t N(phi1) - N(phi_t)`` for the nonlinear term N along the weight interpolation.

    The family is jointly convex in (theta, xi), so by Prekopa's theorem the gap is non-negative.
    """
    if phi0.sample != phi1.sample:
        raise ValueError("Both potentials must use the same sample points")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    phi_t = phi0.with_theta((1 - t) * phi0.theta + t * phi1.theta)
    if q is None:
        q = max((QuadratureSpec.for_potential(p) for p in (phi0, phi1, phi_t)), key=lambda s: s.radius)
    return (1 - t) * nonlinear_term(phi0, q) + t * nonlinear_term(phi1, q) - nonlinear_term(phi_t, q)


def prekopa_check(
    phi0: LogSumExpPotential,
    phi1: LogSumExpPotential,
    t: float,
    q: QuadratureSpec | None = None,
    slack: float = 1e-8,
) -> bool:
    return prekopa_gap(phi0, phi1, t, q) >= -slack


def _pl_value(polytope: ReflexivePolytope, l: AffineLinear, u: PLConvexFunction, q: QuadratureSpec) -> float:
    phi = legendre_to_phi(polytope, u, q.grid(polytope.dim))
    log_z = log_partition(phi.values, phi.grid.weights())
    points = np.array(cell_vertices(polytope, u), dtype=float)
    _tail_check(pl_tail_bound(points, u.evaluate(points, polytope), q.radius), log_z, q)
    return -log_z + float(integral(polytope, u, l))


def ding_of_symplectic(
    polytope: ReflexivePolytope,
    u: PLConvexFunction,
    l: AffineLinear | None = None,
    q: QuadratureSpec | None = None,
    retry_attempts: int = 3,
    retry_callback_factory: RetryCallbackFactory = RetryCallback,
) -> float:
    """D(u) = -log int exp(-phi_u) + int u l dx for a normalized convex u, phi_u its exact transform.

    A violated tail bound is retried with the box radius doubled.
    """
    l = solve_l(polytope.rational_moments) if l is None else l
    spec = QuadratureSpec.for_pl(polytope, u) if q is None else q
    retry_cb = retry_callback_factory()
    retry_cb.pre_call(f"D(u) with {len(u.pieces)} pieces")

    value = math.nan
    for attempt in tenacity.Retrying(
        stop=tenacity.stop_after_attempt(retry_attempts),
        retry=tenacity.retry_if_exception_type(TailBoundViolated),
        before=retry_cb.before,
        after=retry_cb.after,
        reraise=True,
    ):
        with attempt:
            value = _pl_value(polytope, l, u, spec.doubled(attempt.retry_state.attempt_number - 1))
    return value


@dataclass(frozen=True)
class ProbeMember:
    kind: str
    function: PLConvexFunction


@dataclass(frozen=True, eq=False)
class PropernessFit:
    """Best linear lower bound ``D >= delta * int u - constant`` over a family."""

    delta: float
    constant: float
    integrals: NDArray[np.float64]
    values: NDArray[np.float64]
    kinds: tuple[str, ...]

    @property
    def margins(self) -> NDArray[np.float64]:
        return self.values - (self.delta * self.integrals - self.constant)

    @property
    def proper(self) -> bool:
        return self.delta > 0

    def to_frame(self) -> PropernessProbeDataFrame:
        df = pd.DataFrame(
            {
                "member": np.arange(len(self.kinds)),
                "kind": list(self.kinds),
                "integral": self.integrals,
                "value": self.values,
                "margin": self.margins,
            }
        )
        return PropernessProbeDataFrame(df)


def random_pl(
    polytope: ReflexivePolytope, rng: np.random.Generator, pieces: int = 4, slope: int = 3
) -> PLConvexFunction:
    """Normalized max of a few affine functions with small integer slopes and rational offsets."""
    dim = polytope.dim
    raw = [
        (
            tuple(Fraction(int(c)) for c in rng.integers(-slope, slope + 1, size=dim)),
            Fraction(int(rng.integers(-4, 1)), int(rng.integers(1, 5))),
        )
        for _ in range(pieces)
    ]
    return normalize(PLConvexFunction(tuple(raw)), polytope)


def probe_family(
    polytope: ReflexivePolytope, size: int = 50, wedges_per_vertex: int = 5, seed: int = 0
) -> list[ProbeMember]:
    """Wedges at every vertex plus random normalized convex functions at doubling scales."""
    members = [
        ProbeMember("wedge", w.function)
        for vertex in range(len(polytope.vertices))
        for w in wedge_family(polytope, vertex, steps=wedges_per_vertex)
    ][:size]
    rng = np.random.default_rng(seed)
    while len(members) < size:
        u = random_pl(polytope, rng)
        if integral(polytope, u) == 0:
            continue
        members.append(ProbeMember("random", u.scaled(2 ** int(rng.integers(0, 4)))))
    return members


@time_it
def properness_probe(
    polytope: ReflexivePolytope,
    l: AffineLinear | None = None,
    family: Sequence[ProbeMember | PLConvexFunction] | None = None,
    q: QuadratureSpec | None = None,
) -> PropernessFit:
    """Fit ``D(u) >= delta * int u dx - C`` over a family of normalized convex functions.

    delta is the least squares slope of D against ``int u dx``; C is the smallest constant making every
    margin non-negative.

    Raises:
        ValueError: a member is not normalized
        DegenerateFamily: all members have the same integral (an affine family normalizes to 0)
    """
    l = solve_l(polytope.rational_moments) if l is None else l
    family = probe_family(polytope) if family is None else family
    members = [m if isinstance(m, ProbeMember) else ProbeMember("given", m) for m in family]
    integrals, values = [], []
    for member in members:
        if not is_normalized(polytope, member.function):
            raise ValueError(f"Family member {member.kind} is not normalized")
        integrals.append(float(integral(polytope, member.function)))
        values.append(ding_of_symplectic(polytope, member.function, l, q))
    s, d = np.array(integrals), np.array(values)
    if len(s) < 2 or np.ptp(s) == 0:  # noqa: PLR2004
        raise DegenerateFamily("Family members must have different integrals")
    delta = float(np.polyfit(s, d, 1)[0])
    constant = float(np.max(delta * s - d))
    fit = PropernessFit(delta, constant, s, d, tuple(m.kind for m in members))
    logger.info("Properness fit on %s: delta = %f, C = %f", polytope.name, delta, constant)
    return fit
