"""Legendre duality between potentials on R^n and symplectic potentials on the polytope."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import pandas as pd
from scipy.optimize import linprog
from scipy.special import logsumexp, softmax

from toricding.constants import BOUNDARY_TOL, CHUNK_SIZE, NEWTON_MAX_STEPS, NEWTON_TOL
from toricding.data_models import GridDumpDataFrame
from toricding.errors import ToricDingError
from toricding.invariants import PLConvexFunction, cell_vertices
from toricding.polytope import ReflexivePolytope, Vector, lattice_points

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger()


class DualityError(ToricDingError): ...


class BoundaryPoint(DualityError): ...


class OriginNotInDomain(DualityError): ...


@dataclass(frozen=True, eq=False)
class LogSumExpPotential:
    """``phi(xi) = log sum_m exp(<m, xi> + theta_m)`` over rational sample points m of the polytope.

    The sample must contain every vertex, so the gradient image is the interior of the polytope.
    """

    polytope: ReflexivePolytope
    sample: tuple[Vector, ...]
    theta: NDArray[np.float64]
    refinement: int = 1

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if theta.shape != (len(self.sample),):
            raise ValueError(f"Expected {len(self.sample)} weights, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("Weights must be finite")
        missing = {tuple(Fraction(c) for c in v) for v in self.polytope.vertices} - set(self.sample)
        if missing:
            raise ValueError(f"Sample misses the vertices {sorted(missing)}")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_polytope(
        cls, polytope: ReflexivePolytope, refinement: int = 1, theta: ArrayLike | None = None
    ) -> LogSumExpPotential:
        sample = tuple(lattice_points(polytope, refinement))
        theta = np.zeros(len(sample)) if theta is None else theta
        return cls(polytope, sample, theta, refinement)

    def with_theta(self, theta: ArrayLike) -> LogSumExpPotential:
        return LogSumExpPotential(self.polytope, self.sample, np.asarray(theta, dtype=float), self.refinement)

    @property
    def dim(self) -> int:
        return self.polytope.dim

    @cached_property
    def points(self) -> NDArray[np.float64]:
        return np.array(self.sample, dtype=float)

    @cached_property
    def vertex_mask(self) -> NDArray[np.bool_]:
        vertices = {tuple(Fraction(c) for c in v) for v in self.polytope.vertices}
        return np.array([m in vertices for m in self.sample])

    @property
    def min_vertex_theta(self) -> float:
        return float(np.min(self.theta[self.vertex_mask]))

    def __call__(self, xi: ArrayLike) -> NDArray[np.float64]:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return logsumexp(xi @ self.points.T + self.theta, axis=1)


class SoftmaxGeometry(NamedTuple):
    value: NDArray[np.float64]
    gradient: NDArray[np.float64]
    hessian: NDArray[np.float64]
    weights: NDArray[np.float64]


def softmax_geometry(phi: LogSumExpPotential, xi: ArrayLike) -> SoftmaxGeometry:
    """Value, gradient, Hessian and softmax weights at one point or a batch of points.

    The Hessian is the covariance of the sample points under the softmax weights, accumulated around the
    mean so that it stays accurate where the weights concentrate.
    """
    single = np.ndim(xi) <= 1
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    z = xi @ phi.points.T + phi.theta
    value = logsumexp(z, axis=1)
    weights = softmax(z, axis=1)
    gradient = weights @ phi.points
    centered = phi.points[None, :, :] - gradient[:, None, :]
    hessian = np.einsum("gs,gsi,gsj->gij", weights, centered, centered)
    if single:
        return SoftmaxGeometry(value[0], gradient[0], hessian[0], weights[0])
    return SoftmaxGeometry(value, gradient, hessian, weights)


def _dual_objective(phi: LogSumExpPotential, xi: NDArray[np.float64], x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.einsum("gi,gi->g", x, xi) - phi(xi)


def invert_moment_map(
    phi: LogSumExpPotential, x: ArrayLike, initial: ArrayLike | None = None
) -> NDArray[np.float64]:
    """Solve ``grad phi(xi) = x`` for a batch of interior points by damped Newton on the concave dual objective.

    Raises:
        DualityError: Newton did not reach the gradient tolerance within the step limit
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.zeros_like(x) if initial is None else np.array(np.atleast_2d(initial), dtype=float)
    active = np.ones(len(x), dtype=bool)
    for _ in range(NEWTON_MAX_STEPS):
        geometry = softmax_geometry(phi, xi[active])
        residual = x[active] - geometry.gradient
        done = np.max(np.abs(residual), axis=1) <= NEWTON_TOL
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            return xi
        keep = ~done
        step = np.linalg.solve(geometry.hessian[keep], residual[keep][..., None])[..., 0]
        current = xi[idx[keep]]
        target = x[idx[keep]]
        base = geometry.value[keep]
        objective = np.einsum("gi,gi->g", target, current) - base
        scale = np.ones(len(current))
        for _ in range(NEWTON_MAX_STEPS):
            trial = current + scale[:, None] * step
            worse = _dual_objective(phi, trial, target) < objective - 1e-15 * np.abs(objective)
            if not worse.any():
                break
            scale[worse] *= 0.5
        xi[idx[keep]] = current + scale[:, None] * step
    raise DualityError(f"Moment map inversion did not converge for {int(active.sum())} points")


def legendre_dual_on_polytope(phi: LogSumExpPotential, x: Sequence[float]) -> float:
    """``u(x) = sup_xi (<x, xi> - phi(xi))`` at an interior point of the polytope.

    Raises:
        BoundaryPoint: x is on (or within tolerance of) the boundary, where the supremum is not attained
    """
    x = np.asarray(x, dtype=float)
    slack = np.min(phi.polytope.normal_array @ x + 1.0)
    if slack <= BOUNDARY_TOL:
        raise BoundaryPoint(f"{x.tolist()} is not an interior point (slack {slack:.3g})")
    xi = invert_moment_map(phi, x)[0]
    return float(x @ xi - phi(xi)[0])


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``[-radius, radius]^dim`` with trapezoidal weights."""

    radius: float
    nodes: int
    dim: int

    def __post_init__(self) -> None:
        if self.radius <= 0 or self.nodes < 3 or self.dim < 1:  # noqa: PLR2004
            raise ValueError("Grid needs a positive radius and at least 3 nodes per axis")

    @property
    def spacing(self) -> float:
        return 2 * self.radius / (self.nodes - 1)

    @property
    def size(self) -> int:
        return self.nodes**self.dim

    @cached_property
    def axis(self) -> NDArray[np.float64]:
        return np.linspace(-self.radius, self.radius, self.nodes)

    @cached_property
    def axis_weights(self) -> NDArray[np.float64]:
        weights = np.full(self.nodes, self.spacing)
        weights[[0, -1]] *= 0.5
        return weights

    def chunks(self, chunk_size: int = CHUNK_SIZE) -> Iterator[slice]:
        for start in range(0, self.size, chunk_size):
            yield slice(start, min(start + chunk_size, self.size))

    def points(self, part: slice | None = None) -> NDArray[np.float64]:
        """Node coordinates in C order (last axis fastest)."""
        index = np.arange(self.size)[part if part is not None else slice(None)]
        digits = np.stack(np.unravel_index(index, (self.nodes,) * self.dim), axis=-1)
        return self.axis[digits]

    def weights(self, part: slice | None = None) -> NDArray[np.float64]:
        index = np.arange(self.size)[part if part is not None else slice(None)]
        digits = np.stack(np.unravel_index(index, (self.nodes,) * self.dim), axis=-1)
        return np.prod(self.axis_weights[digits], axis=1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: NDArray[np.float64]
    gradient: NDArray[np.float64] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"Expected {self.grid.size} values, got {self.values.shape}")

    def to_frame(self) -> GridDumpDataFrame:
        points = self.grid.points()
        columns = {f"xi_{i}": points[:, i] for i in range(self.grid.dim)}
        return GridDumpDataFrame(pd.DataFrame({**columns, "value": self.values}))


def legendre_to_phi(
    polytope: ReflexivePolytope, u: PLConvexFunction, grid: Grid, sample_refinement: int = 8
) -> GridFunction:
    """``phi(xi) = max_x (<x, xi> - u(x))`` on a grid.

    For piecewise linear u the maximum over the cell vertices is the exact transform. With the Guillemin
    part the refined lattice points are added to the candidate set. The gradient carries the maximizers.
    """
    candidates = cell_vertices(polytope, u)
    if u.guillemin:
        candidates = sorted(set(candidates) | set(lattice_points(polytope, sample_refinement)))
    xs = np.array(candidates, dtype=float)
    us = u.evaluate(xs, polytope)
    values = np.empty(grid.size)
    maximizers = np.empty((grid.size, grid.dim))
    for part in grid.chunks():
        scores = grid.points(part) @ xs.T - us
        best = np.argmax(scores, axis=1)
        values[part] = scores[np.arange(len(best)), best]
        maximizers[part] = xs[best]
    return GridFunction(grid, values, maximizers)


def grid_legendre_dual(phi: GridFunction, x: ArrayLike) -> NDArray[np.float64]:
    """``u(x) = max over grid nodes of (<x, xi> - phi(xi))``, the transform back to the polytope."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    result = np.full(len(x), -np.inf)
    for part in phi.grid.chunks():
        result = np.maximum(result, np.max(x @ phi.grid.points(part).T - phi.values[part], axis=1))
    return result


def _origin_is_minimum(u: PLConvexFunction, polytope: ReflexivePolytope | None) -> bool:
    """Whether 0 is a subgradient of u at the origin, i.e. u attains its minimum there."""
    origin = (Fraction(0),) * u.dim
    if polytope is not None:
        value = u(origin)
        return all(u(v) >= value for v in cell_vertices(polytope, u))
    gradients = np.array([[float(ci) for ci in c] for c, _ in u.active_pieces(origin)])
    # feasibility of lambda >= 0, sum lambda = 1, gradients.T @ lambda = 0
    equality = np.vstack([gradients.T, np.ones(len(gradients))])
    target = np.append(np.zeros(u.dim), 1.0)
    return linprog(np.zeros(len(gradients)), A_eq=equality, b_eq=target, bounds=(0, None)).status == 0


def normalize(u: PLConvexFunction, polytope: ReflexivePolytope | None = None) -> PLConvexFunction:
    """Subtract the supporting affine function at the origin so that ``u >= u(0) = 0``.

    Normalized functions are returned unchanged. When the origin minimizes u only the constant is
    removed; otherwise the subgradient used is the mean of the gradients of the pieces active at 0.

    Raises:
        OriginNotInDomain: the origin is not an interior point of the polytope
    """
    dim = u.dim
    origin = (Fraction(0),) * dim
    if polytope is not None and not polytope.contains(origin, strict=True):
        raise OriginNotInDomain(f"The origin is not interior to {polytope.name}")
    if polytope is not None and is_normalized(polytope, u):
        return u
    if _origin_is_minimum(u, polytope):
        slope = origin
    else:
        active = u.active_pieces(origin)
        slope = tuple(sum((c[i] for c, _ in active), Fraction(0)) / len(active) for i in range(dim))
    value = u(origin)
    pieces = tuple((tuple(ci - si for ci, si in zip(c, slope, strict=True)), d - value) for c, d in u.pieces)
    return PLConvexFunction(pieces, u.guillemin)


def is_normalized(polytope: ReflexivePolytope, u: PLConvexFunction) -> bool:
    """Exact check of ``u >= u(0) = 0`` for the piecewise linear part (its minimum sits at cell vertices)."""
    origin = (Fraction(0),) * polytope.dim
    if u(origin) != 0:
        return False
    return all(u(v) >= 0 for v in cell_vertices(polytope, u))
