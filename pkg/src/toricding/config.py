"""Solver and output configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import TYPE_CHECKING

from toricding import constants
from toricding.retry_cb import RetryCallback, RetryCallbackFactory

if TYPE_CHECKING:
    from toricding.functional import QuadratureSpec


class Optimizer(StrEnum):
    QUASI_NEWTON = "quasi-newton"
    GRADIENT_DESCENT = "gradient-descent"


class OutputFormat(StrEnum):
    JSON = "json"
    CSV = "csv"
    TEXT = "text"


@dataclass(frozen=True)
class SolverConfig:
    """Configuration of a modified Ding minimization.

    Args:
        refinement: sample points of the potential family are the polytope's points in (1/k)Z^n
        optimizer: search direction rule, see :class:`Optimizer`
        max_iterations: iterations before giving up (the best iterate is still reported)
        tolerance: convergence threshold on the gauge-projected gradient norm
        armijo: sufficient decrease constant of the backtracking line search
        backtrack: step shrink factor of the line search
        seed: when set, the initial weights get a small reproducible random perturbation
        quadrature: fixed quadrature box; chosen from the tail bound when None
        spacing: node spacing of the automatically chosen box
        retry_attempts: quadrature attempts, doubling the box radius when the tail bound fails
        log_every: progress is logged at INFO every this many iterations
    """

    refinement: int = field(default=int(os.getenv("TORICDING_REFINEMENT", str(constants.DEFAULT_REFINEMENT))))
    optimizer: Optimizer = Optimizer.QUASI_NEWTON
    max_iterations: int = constants.SOLVER_MAX_ITERATIONS
    tolerance: float = constants.SOLVER_TOLERANCE
    armijo: float = constants.ARMIJO
    backtrack: float = constants.BACKTRACK
    seed: int | None = None
    quadrature: QuadratureSpec | None = None
    spacing: float = constants.DEFAULT_SPACING
    retry_attempts: int = 3
    log_every: int = 50
    retry_callback_factory: RetryCallbackFactory = field(default=RetryCallback)

    def __post_init__(self) -> None:
        if self.refinement < 1:
            raise ValueError("refinement must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        try:
            object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        except ValueError:
            raise ValueError(f"optimizer must be one of {[o.value for o in Optimizer]}") from None
        if not 0 < self.armijo < 1 or not 0 < self.backtrack < 1:
            raise ValueError("armijo and backtrack must lie in (0, 1)")
        if self.max_iterations < 0 or self.retry_attempts < 1 or self.spacing <= 0:
            raise ValueError("max_iterations, retry_attempts and spacing must be positive")


@dataclass(frozen=True)
class OutputConfig:
    output_dir: Path = field(default=Path(os.getenv("TORICDING_OUTPUT_DIR", "toricding-out")))
    output_format: OutputFormat = OutputFormat.TEXT
    plot: bool = False

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "output_format", OutputFormat(self.output_format))
        except ValueError:
            raise ValueError(f"output_format must be one of {[f.value for f in OutputFormat]}") from None
