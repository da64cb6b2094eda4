"""Static SVG artifacts."""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING

import numpy as np
from matplotlib.figure import Figure

if TYPE_CHECKING:
    from pathlib import Path

    from toricding.invariants import StabilityReport
    from toricding.polytope import ReflexivePolytope
    from toricding.solver import SolverReport

logger = logging.getLogger()


def _boundary(polytope: ReflexivePolytope) -> np.ndarray:
    vertices = polytope.vertex_array
    angles = np.arctan2(vertices[:, 1], vertices[:, 0])
    ordered = vertices[np.argsort(angles)]
    return np.vstack([ordered, ordered[:1]])


def plot_polytope(polytope: ReflexivePolytope, report: StabilityReport, path: Path) -> Path:
    """The polytope, the zero line of l and the value of l at every vertex (dimension 1 and 2)."""
    if polytope.dim > 2:  # noqa: PLR2004
        raise ValueError(f"Cannot draw a polytope of dimension {polytope.dim}")
    a, b = report.l.a, report.l.b
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    if polytope.dim == 1:
        ax.plot([-1, 1], [0, 0], color="black")
        if b[0] != 0:
            ax.axvline(float(-a / b[0]), color="tab:red", linestyle="--", label="l = 0")
        points = polytope.vertex_array[:, 0], np.zeros(len(polytope.vertices))
    else:
        boundary = _boundary(polytope)
        ax.fill(boundary[:, 0], boundary[:, 1], alpha=0.2)
        ax.plot(boundary[:, 0], boundary[:, 1], color="black")
        span = float(np.max(np.abs(polytope.vertex_array))) + 1
        if any(b):
            t = np.linspace(-span, span, 2)
            if b[1] != 0:
                ax.plot(t, (-float(a) - float(b[0]) * t) / float(b[1]), "--", color="tab:red", label="l = 0")
            else:
                ax.axvline(float(-a / b[0]), color="tab:red", linestyle="--", label="l = 0")
        ax.set_xlim(-span, span)
        ax.set_ylim(-span, span)
        ax.set_aspect("equal")
        points = polytope.vertex_array[:, 0], polytope.vertex_array[:, 1]
    ax.scatter(*points, color="black", zorder=3)
    for (x, y), v in zip(zip(*points, strict=True), polytope.vertices, strict=True):
        ax.annotate(str(report.vertex_values[v]), (x, y), textcoords="offset points", xytext=(6, 6))
    ax.set_title(f"{polytope.name}: alpha = {report.alpha}")
    ax.grid(visible=True)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.savefig(path, format="svg")
    logger.info("Wrote %s", path)
    return path


def plot_convergence(report: SolverReport, path: Path) -> Path:
    """Gradient norm and equation residual against the iteration number."""
    frame = report.convergence_frame()
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    positive = frame[frame["grad_norm"] > 0]
    ax.semilogy(positive["iteration"], positive["grad_norm"], label="|grad D|")
    ax.semilogy(frame["iteration"], frame["residual_l1"].clip(lower=math.ulp(1.0)), label="residual L1")
    ax.axhline(report.tolerance, color="gray", linestyle=":", label="tolerance")
    ax.set_xlabel("iteration")
    ax.set_title(f"{report.name}: D = {report.ding_value:.10f}")
    ax.grid(visible=True)
    ax.legend()
    fig.savefig(path, format="svg")
    logger.info("Wrote %s", path)
    return path
