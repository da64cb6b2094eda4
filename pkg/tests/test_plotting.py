import pathlib

import pytest

import tests.t_utils.common as t_common
from toricding.config import SolverConfig
from toricding.invariants import stability_report
from toricding.plotting import plot_convergence, plot_polytope
from toricding.solver import solve


@pytest.mark.parametrize("key", ["P1", "P2", "F1", "Bl3P2"])
def test_plot_polytope(key: str, tmp_path: pathlib.Path):
    polytope = t_common.polytope(key)
    path = plot_polytope(polytope, stability_report(polytope), tmp_path / f"{key}.svg")
    assert "<svg" in path.read_text()


def test_plot_polytope_refuses_three_dimensions(tmp_path: pathlib.Path):
    polytope = t_common.polytope("P3")
    with pytest.raises(ValueError, match="dimension 3"):
        plot_polytope(polytope, stability_report(polytope), tmp_path / "P3.svg")


def test_plot_convergence(tmp_path: pathlib.Path):
    report = solve(t_common.polytope("P1"), cfg=SolverConfig(refinement=1))
    path = plot_convergence(report, tmp_path / "convergence.svg")
    assert "<svg" in path.read_text()
