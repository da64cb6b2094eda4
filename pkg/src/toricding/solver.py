"""Minimization of the modified Ding functional over log-sum-exp potentials.

A critical point of D over the full space of potentials solves

    exp(-phi) / int exp(-phi) = l(grad phi) det hess phi,

so the residual of this equation measures how well the finite family approximates the solution. The
one-dimensional monotone rearrangement oracle solves the same equation on a grid without the family.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol

import numpy as np
import pandas as pd
import tenacity
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.stats import wasserstein_distance

from toricding.config import Optimizer, SolverConfig
from toricding.constants import MAX_SOLVE_DIMENSION, ORACLE_MAX_SWEEPS, ORACLE_TOLERANCE
from toricding.data_models import ConvergenceDataFrame, MetricTableDataFrame
from toricding.duality import Grid, GridFunction, LogSumExpPotential, softmax_geometry
from toricding.errors import ToricDingError
from toricding.functional import (
    Density,
    FunctionalValue,
    GridEvaluation,
    NonNormalizedDensity,
    QuadratureSpec,
    TailBoundViolated,
    check_density,
    evaluate_on_grid,
)
from toricding.invariants import AffineLinear, alpha_invariant, solve_l
from toricding.utils import time_it

if TYPE_CHECKING:
    from fractions import Fraction

    from numpy.typing import ArrayLike, NDArray

    from toricding.polytope import ReflexivePolytope

logger = logging.getLogger()

MAX_LINE_SEARCH_STEPS = 60
MAX_THETA_STEP = 10.0
ROUNDOFF = 1e-14


class SolverError(ToricDingError): ...


class UnstablePolytope(SolverError):
    def __init__(self, name: str, alpha: Fraction) -> None:
        self.alpha = alpha
        super().__init__(f"{name} has alpha = {alpha} >= 1: it is not uniformly relatively Ding stable, no solution")


class NonPositiveDensity(SolverError): ...


class NoConvergence(SolverError): ...


class DensityFunction(Protocol):
    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]: ...


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    value: float
    grad_norm: float
    residual_l1: float
    step: float


@dataclass(frozen=True, eq=False)
class SolverReport:
    """Result of :func:`solve`.

    ``grad_norm`` is the norm of the gauge-projected gradient; ``converged`` means it reached the tolerance.
    The residual fields measure the equation itself and have a floor that depends on the refinement.
    """

    name: str
    potential: LogSumExpPotential
    ding_value: float
    grad_norm: float
    residual_l1: float
    residual_sup: float
    pushforward_w1: float
    pushforward_mass: float
    iterations: int
    converged: bool
    tolerance: float
    quadrature: QuadratureSpec
    history: tuple[IterationRecord, ...] = field(repr=False)

    @property
    def theta_star(self) -> NDArray[np.float64]:
        return self.potential.theta

    def convergence_frame(self) -> ConvergenceDataFrame:
        df = pd.DataFrame([vars(record) for record in self.history], columns=list(IterationRecord.__annotations__))
        return ConvergenceDataFrame(df)


def gauge_basis(phi: LogSumExpPotential) -> NDArray[np.float64]:
    """Orthonormal basis of the weight directions that leave D unchanged.

    Adding a constant to every weight shifts phi by that constant; adding ``<m, c>`` translates phi by c.
    """
    directions = np.column_stack([np.ones(len(phi.sample)), phi.points])
    q, r = np.linalg.qr(directions)
    return q[:, np.abs(np.diag(r)) > 1e-12]  # noqa: PLR2004


def gauge_project(vector: NDArray[np.float64], basis: NDArray[np.float64]) -> NDArray[np.float64]:
    return vector - basis @ (basis.T @ vector)


def accept_at_roundoff(value: FunctionalValue, trial_value: float, trial_grad_norm: float, grad_norm: float) -> bool:
    """Accept a step that raises D by at most its roundoff while shrinking the gradient.

    The roundoff of D is relative to the size of its two terms, which can be far larger than D itself.
    """
    scale = abs(value.nonlinear) + abs(value.linear)
    if trial_value - value.total > ROUNDOFF * scale or trial_grad_norm >= grad_norm:
        return False
    logger.debug("Accepted step at roundoff level: D %.17g -> %.17g", value.total, trial_value)
    return True


class _Minimizer:
    """Iteration state of one solve; a retry with a larger box continues from the current weights."""

    def __init__(self, phi: LogSumExpPotential, density: Density, cfg: SolverConfig) -> None:
        self.phi = phi
        self.density = density
        self.cfg = cfg
        self.basis = gauge_basis(phi)
        self.theta = gauge_project(phi.theta, self.basis)
        self.inverse_hessian = np.eye(len(self.theta))
        self.history: list[IterationRecord] = []
        self.evaluation: GridEvaluation | None = None
        self.quadrature: QuadratureSpec | None = None
        self.converged = False
        self.scaled = False

    @property
    def iterations(self) -> int:
        return self.history[-1].iteration if self.history else 0

    def _evaluate(self, theta: NDArray[np.float64], q: QuadratureSpec) -> GridEvaluation:
        return evaluate_on_grid(self.phi.with_theta(theta), self.density, q)

    def _record(self, evaluation: GridEvaluation, grad_norm: float, step: float) -> None:
        iteration = self.iterations + 1 if self.history else 0
        record = IterationRecord(iteration, evaluation.value.total, grad_norm, evaluation.residual_l1, step)
        self.history.append(record)
        if iteration % self.cfg.log_every == 0:
            logger.info(
                "Iteration %d: D = %.12f, |grad| = %.3e, residual = %.3e",
                iteration,
                record.value,
                grad_norm,
                record.residual_l1,
            )

    def _direction(self, gradient: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.cfg.optimizer is Optimizer.GRADIENT_DESCENT:
            return -gradient
        direction = gauge_project(-self.inverse_hessian @ gradient, self.basis)
        if gradient @ direction >= 0:
            self.inverse_hessian = np.eye(len(gradient))
            direction = -gradient
        return direction

    def _update(self, s: NDArray[np.float64], y: NDArray[np.float64]) -> None:
        """BFGS update of the inverse Hessian, skipped when the curvature condition is not met."""
        ys = float(y @ s)
        if ys <= math.sqrt(np.finfo(float).eps) * np.linalg.norm(s) * np.linalg.norm(y):
            return
        if not self.scaled:
            self.inverse_hessian *= ys / float(y @ y)
            self.scaled = True
        rho = 1.0 / ys
        left = np.eye(len(s)) - rho * np.outer(s, y)
        self.inverse_hessian = left @ self.inverse_hessian @ left.T + rho * np.outer(s, s)

    def run(self, q: QuadratureSpec) -> None:
        cfg = self.cfg
        self.quadrature = q
        current = self._evaluate(self.theta, q)
        gradient = gauge_project(current.gradient, self.basis)
        self.evaluation = current
        self._record(current, float(np.linalg.norm(gradient)), 0.0)
        while self.iterations < cfg.max_iterations:
            grad_norm = float(np.linalg.norm(gradient))
            if grad_norm <= cfg.tolerance:
                self.converged = True
                return
            direction = self._direction(gradient)
            slope = float(gradient @ direction)
            step = min(1.0, MAX_THETA_STEP / float(np.max(np.abs(direction))))
            f = current.value.total
            accepted = None
            for _ in range(MAX_LINE_SEARCH_STEPS):
                trial_theta = self.theta + step * direction
                trial = self._evaluate(trial_theta, q)
                trial_gradient = gauge_project(trial.gradient, self.basis)
                if trial.value.total <= f + cfg.armijo * step * slope:
                    accepted = trial
                    break
                trial_norm = float(np.linalg.norm(trial_gradient))
                if accept_at_roundoff(current.value, trial.value.total, trial_norm, grad_norm):
                    accepted = trial
                    break
                step *= cfg.backtrack
            if accepted is None:
                logger.warning("Line search failed at iteration %d with |grad| = %.3e", self.iterations, grad_norm)
                return
            self._update(trial_theta - self.theta, trial_gradient - gradient)
            self.theta = trial_theta
            current, gradient = accepted, trial_gradient
            self.evaluation = current
            self._record(current, float(np.linalg.norm(gradient)), step)
        self.converged = float(np.linalg.norm(gradient)) <= cfg.tolerance


def initial_theta(phi: LogSumExpPotential, seed: int | None) -> NDArray[np.float64]:
    """Zero weights, perturbed reproducibly when a seed is given."""
    if seed is None:
        return np.zeros(len(phi.sample))
    return np.random.default_rng(seed).normal(scale=0.1, size=len(phi.sample))


@time_it
def solve(polytope: ReflexivePolytope, l: AffineLinear | None = None, cfg: SolverConfig | None = None) -> SolverReport:
    """Minimize D over the log-sum-exp potentials on the refined lattice points of the polytope.

    Raises:
        UnstablePolytope: alpha >= 1, in which case no solution exists and nothing is iterated
        SolverError: the dimension is too large for grid quadrature
        TailBoundViolated: the box stayed too small after all retries
    """
    cfg = SolverConfig() if cfg is None else cfg
    l = solve_l(polytope.rational_moments) if l is None else l
    alpha = alpha_invariant(polytope, l)
    if alpha >= 1:
        raise UnstablePolytope(polytope.name, alpha)
    if polytope.dim > MAX_SOLVE_DIMENSION:
        raise SolverError(f"Solving in dimension {polytope.dim} is not supported (at most {MAX_SOLVE_DIMENSION})")
    check_density(polytope, l)

    phi = LogSumExpPotential.from_polytope(polytope, cfg.refinement)
    phi = phi.with_theta(initial_theta(phi, cfg.seed))
    spec = cfg.quadrature or QuadratureSpec.for_potential(phi, cfg.spacing, margin=5.0)
    logger.info(
        "Solving on %s: %d weights, box radius %.2f with %d nodes per axis",
        polytope.name,
        len(phi.sample),
        spec.radius,
        spec.nodes,
    )
    minimizer = _Minimizer(phi, l, cfg)
    retry_cb = cfg.retry_callback_factory()
    retry_cb.pre_call(f"solve on {polytope.name}")

    for attempt in tenacity.Retrying(
        stop=tenacity.stop_after_attempt(cfg.retry_attempts),
        retry=tenacity.retry_if_exception_type(TailBoundViolated),
        before=retry_cb.before,
        after=retry_cb.after,
        reraise=True,
    ):
        with attempt:
            minimizer.run(spec.doubled(attempt.retry_state.attempt_number - 1))

    evaluation = minimizer.evaluation
    if not minimizer.converged:
        logger.warning(
            "%s: no convergence after %d iterations, |grad| = %.3e",
            polytope.name,
            minimizer.iterations,
            minimizer.history[-1].grad_norm,
        )
    return SolverReport(
        name=polytope.name,
        potential=phi.with_theta(minimizer.theta),
        ding_value=evaluation.value.total,
        grad_norm=minimizer.history[-1].grad_norm,
        residual_l1=evaluation.residual_l1,
        residual_sup=evaluation.residual_sup,
        pushforward_w1=sliced_w1(evaluation),
        pushforward_mass=evaluation.value.pushforward_mass,
        iterations=minimizer.iterations,
        converged=minimizer.converged,
        tolerance=cfg.tolerance,
        quadrature=minimizer.quadrature,
        history=tuple(minimizer.history),
    )


def sliced_w1(evaluation: GridEvaluation) -> float:
    """Mean over coordinates of the 1-Wasserstein distance between the marginals of the pushforward of
    ``exp(-phi)/Z`` and of ``l dx``, both carried by the moment image of the grid nodes.
    """
    source = evaluation.weights * evaluation.source
    target = evaluation.weights * evaluation.target
    distances = [
        wasserstein_distance(evaluation.moment[:, i], evaluation.moment[:, i], source, target)
        for i in range(evaluation.moment.shape[1])
    ]
    return float(np.mean(distances))


def pushforward_w1(phi: LogSumExpPotential, l: AffineLinear | None = None, q: QuadratureSpec | None = None) -> float:
    l = solve_l(phi.polytope.rational_moments) if l is None else l
    q = QuadratureSpec.for_potential(phi) if q is None else q
    return sliced_w1(evaluate_on_grid(phi, l, q))


def residual(
    phi: LogSumExpPotential, l: AffineLinear | None = None, q: QuadratureSpec | None = None
) -> tuple[float, float, GridFunction]:
    """``r = exp(-phi)/Z - l(grad phi) det hess phi`` on the quadrature grid: (L1 norm, sup norm, field).

    Raises:
        TailBoundViolated: the box is too small for this potential
    """
    l = solve_l(phi.polytope.rational_moments) if l is None else l
    check_density(phi.polytope, l)
    q = QuadratureSpec.for_potential(phi) if q is None else q
    evaluation = evaluate_on_grid(phi, l, q)
    residual_field = GridFunction(q.grid(phi.dim), evaluation.residual, evaluation.moment)
    return evaluation.residual_l1, evaluation.residual_sup, residual_field


def export_metric(phi: LogSumExpPotential, points: Grid | ArrayLike) -> MetricTableDataFrame:
    """Gradient (moment map) and Hessian (metric in log coordinates) of phi at the given points."""
    xi = points.points() if isinstance(points, Grid) else np.atleast_2d(np.asarray(points, dtype=float))
    geometry = softmax_geometry(phi, xi)
    # raises LinAlgError for a Hessian that is not positive definite
    np.linalg.cholesky(geometry.hessian)
    dim = phi.dim
    columns: dict[str, NDArray[np.float64]] = {f"xi_{i}": xi[:, i] for i in range(dim)}
    columns |= {f"grad_{i}": geometry.gradient[:, i] for i in range(dim)}
    columns |= {f"hess_{i}_{j}": geometry.hessian[:, i, j] for i in range(dim) for j in range(dim)}
    return MetricTableDataFrame(pd.DataFrame(columns))


def _interval_cdf(density: DensityFunction, nodes: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    x = np.linspace(-1.0, 1.0, nodes)
    values = density.evaluate(x[:, None]) if isinstance(density, AffineLinear) else np.asarray(density(x), dtype=float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise NonPositiveDensity(f"Density must be positive on [-1, 1], minimum is {np.min(values):.3g}")
    cdf = cumulative_trapezoid(values, x, initial=0.0)
    if abs(cdf[-1] - 1) > 1e-6:  # noqa: PLR2004
        raise NonNormalizedDensity(f"Density integrates to {cdf[-1]:.9g}, not 1")
    barycenter = trapezoid(x * values, x)
    if abs(barycenter) > 1e-6:  # noqa: PLR2004
        raise NonNormalizedDensity(f"Density has barycenter {barycenter:.3g}; only 0 admits a solution")
    return x, cdf / cdf[-1]


def _grid_cdf(derivative: NDArray[np.float64], xi: NDArray[np.float64]) -> NDArray[np.float64]:
    phi = cumulative_trapezoid(derivative, xi, initial=0.0)
    cdf = cumulative_trapezoid(np.exp(-(phi - phi.min())), xi, initial=0.0)
    return cdf / cdf[-1]


@time_it
def solve_1d_pushforward(
    density: DensityFunction,
    radius: float = 20.0,
    nodes: int = 20_001,
    x_nodes: int = 20_001,
    tolerance: float = ORACLE_TOLERANCE,
    max_sweeps: int = ORACLE_MAX_SWEEPS,
) -> GridFunction:
    """Grid potential on [-radius, radius] whose derivative pushes ``exp(-phi)/Z`` to ``density dx`` on [-1, 1].

    Each sweep replaces phi' by the monotone rearrangement ``L^-1(F)``, with L the distribution function of the
    density and F that of ``exp(-phi)``. Translates of a solution are solutions; each sweep recentres F so
    that ``exp(-phi)`` has its median at 0. The result is normalized to ``int exp(-phi) = 1``.

    Raises:
        NonPositiveDensity: the density is not positive on [-1, 1]
        NonNormalizedDensity: the density does not integrate to 1 or has a non-zero barycenter
        NoConvergence: the sweeps did not settle within ``max_sweeps``
    """
    x, cdf = _interval_cdf(density, x_nodes)
    grid = Grid(radius, nodes, 1)
    xi = grid.axis
    derivative = np.tanh(xi)
    for sweep in range(1, max_sweeps + 1):
        distribution = _grid_cdf(derivative, xi)
        median = float(np.interp(0.5, distribution, xi))
        updated = np.interp(np.interp(xi + median, xi, distribution), cdf, x)
        change = float(np.max(np.abs(updated - derivative)))
        derivative = updated
        if change <= tolerance:
            logger.debug("Pushforward oracle settled after %d sweeps", sweep)
            break
    else:
        raise NoConvergence(f"Pushforward oracle did not settle in {max_sweeps} sweeps")
    phi = cumulative_trapezoid(derivative, xi, initial=0.0)
    phi += math.log(trapezoid(np.exp(-phi), xi))
    return GridFunction(grid, phi, derivative[:, None])


def cdf_residual(solution: GridFunction, density: DensityFunction, x_nodes: int = 20_001) -> float:
    """``sup |L(phi') - F|``: how far the derivative of a 1-d grid potential is from pushing F to L."""
    x, cdf = _interval_cdf(density, x_nodes)
    derivative = solution.gradient[:, 0]
    return float(np.max(np.abs(np.interp(derivative, x, cdf) - _grid_cdf(derivative, solution.grid.axis))))
