"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 invalid polytope, 3 solve refused (alpha >= 1), 4 solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from pydantic import ValidationError

from toricding.catalog import UnknownPolytope, builtin_catalog, load_polytope, read_polytope
from toricding.config import Optimizer, OutputConfig, OutputFormat, SolverConfig
from toricding.data_models import ScanSummaryDataFrame
from toricding.duality import Grid, LogSumExpPotential
from toricding.functional import QuadratureSpec, prekopa_gap, properness_probe
from toricding.invariants import stability_report, wedge_family
from toricding.plotting import plot_convergence, plot_polytope
from toricding.polytope import PolytopeError
from toricding.reports import (
    AlphaReport,
    CatalogDocument,
    InfoReport,
    PolytopeDocument,
    PrekopaSummary,
    ProbeDocument,
    SolverDocument,
    StabilityDocument,
    ToricDingBaseModel,
)
from toricding.solver import UnstablePolytope, export_metric, solve
from toricding.utils import atomic_write, time_it

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger()


class ExitCode(IntEnum):
    OK = 0
    USAGE = 1
    INVALID_POLYTOPE = 2
    REFUSED = 3
    NOT_CONVERGED = 4


class UsageError(Exception): ...


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _emit(text: str) -> None:
    sys.stdout.write(text)


def _render(document: ToricDingBaseModel, fmt: OutputFormat, frame: pd.DataFrame | None = None) -> str:
    if fmt == OutputFormat.JSON:
        return document.to_json()
    if fmt == OutputFormat.CSV:
        return frame.to_csv(index=False) if frame is not None else document.to_csv()
    return document.to_text()


def _output_config(args: argparse.Namespace) -> OutputConfig:
    kwargs = {"output_format": OutputFormat(args.format), "plot": args.plot == "svg"}
    if args.out is not None:
        kwargs["output_dir"] = Path(args.out)
    return OutputConfig(**kwargs)


def cmd_catalog(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    rows = [
        CatalogDocument(key=e.key, notes=e.notes, **PolytopeDocument.from_polytope(e.polytope).model_dump())
        for e in builtin_catalog()
    ]
    if out.output_format == OutputFormat.JSON:
        _emit("[" + ",".join(row.model_dump_json() for row in rows) + "]\n")
    elif out.output_format == OutputFormat.CSV:
        _emit(pd.DataFrame([row.model_dump() for row in rows]).to_csv(index=False))
    else:
        _emit("".join(f"{r.key:<10} dim {r.dim}  {len(r.vertices):>2} vertices  {r.notes}\n" for r in rows))
    return ExitCode.OK


def cmd_info(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    polytope = load_polytope(args.polytope)
    _emit(_render(InfoReport.from_polytope(polytope), out.output_format))
    return ExitCode.OK


def alpha_document(source: str | Path) -> AlphaReport:
    return AlphaReport.from_stability(stability_report(load_polytope(source)))


def cmd_alpha(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    _emit(_render(alpha_document(args.polytope), out.output_format))
    return ExitCode.OK


def cmd_stability(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    polytope = load_polytope(args.polytope)
    mass = Fraction(args.mass)
    report = stability_report(polytope, probe_steps=args.steps, probe_mass=mass)
    indices = {}
    if args.steps > 0:
        indices = {
            v: [float(w.index) for w in wedge_family(polytope, i, mass, args.steps)]
            for i, v in enumerate(polytope.vertices)
        }
    document = StabilityDocument.from_stability(report, indices)
    _emit(_render(document, out.output_format, document.to_frame() if args.steps > 0 else None))
    if out.plot and polytope.dim <= 2:  # noqa: PLR2004
        out.output_dir.mkdir(parents=True, exist_ok=True)
        plot_polytope(polytope, report, out.output_dir / f"{polytope.name}-polytope.svg")
    return ExitCode.OK


def cmd_probe(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    polytope = load_polytope(args.polytope)
    fit = properness_probe(polytope)
    prekopa = None
    if args.pairs > 0:
        rng = np.random.default_rng(args.seed)
        phi = LogSumExpPotential.from_polytope(polytope)
        size = len(phi.sample)
        gaps = [
            prekopa_gap(phi.with_theta(rng.normal(size=size)), phi.with_theta(rng.normal(size=size)), 0.5)
            for _ in range(args.pairs)
        ]
        prekopa = PrekopaSummary(pairs=args.pairs, min_gap=min(gaps), passed=min(gaps) >= -1e-8)  # noqa: PLR2004
    document = ProbeDocument.from_fit(polytope.name, fit, prekopa)
    _emit(_render(document, out.output_format, fit.to_frame()))
    return ExitCode.OK


def cmd_solve(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    polytope = load_polytope(args.polytope)
    quadrature = QuadratureSpec.for_radius(args.grid_radius, args.spacing) if args.grid_radius else None
    cfg = SolverConfig(
        refinement=args.refine,
        optimizer=Optimizer(args.optimizer),
        max_iterations=args.max_iter,
        tolerance=args.tol,
        seed=args.seed,
        quadrature=quadrature,
        spacing=args.spacing,
    )
    try:
        report = solve(polytope, cfg=cfg)
    except UnstablePolytope as exc:
        logger.error("Refusing to solve: %s", exc)  # noqa: TRY400
        sys.stderr.write(f"refused: {exc}\n")
        return ExitCode.REFUSED
    document = SolverDocument.from_report(report)
    directory = out.output_dir
    atomic_write(directory / f"{polytope.name}-solver.json", document.to_json())
    atomic_write(directory / f"{polytope.name}-convergence.csv", report.convergence_frame().to_csv(index=False))
    metric_grid = Grid(5.0, 11, polytope.dim)
    atomic_write(
        directory / f"{polytope.name}-metric.csv", export_metric(report.potential, metric_grid).to_csv(index=False)
    )
    if out.plot:
        plot_convergence(report, directory / f"{polytope.name}-convergence.svg")
    _emit(_render(document, out.output_format))
    return ExitCode.OK if report.converged else ExitCode.NOT_CONVERGED


def scan_file(path: Path, output_dir: Path) -> dict[str, object]:
    """Alpha document of one polytope file, written next to the summary; errors become summary rows."""
    row: dict[str, object] = {"file": path.name}
    try:
        document = AlphaReport.from_stability(stability_report(read_polytope(path)))
    except (PolytopeError, ValueError) as exc:
        logger.warning("Skipping %s: %s", path, exc)
        return row | {"error": f"{type(exc).__name__}: {exc}"}
    atomic_write(output_dir / f"{path.stem}.alpha.json", document.to_json())
    return row | {
        "name": document.name,
        "dim": document.dim,
        "alpha": document.alpha,
        "alpha_f": document.alpha_f,
        "stable": str(document.stable).lower(),
        "lambda": document.lambda_,
        "lambda_f": document.lambda_f,
    }


@time_it
def scan(directory: Path, output_dir: Path, workers: int = 1) -> ScanSummaryDataFrame:
    """Alpha of every ``*.json`` polytope in a directory; rows are in sorted file order."""
    files = sorted(Path(directory).glob("*.json"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(scan_file, files, [output_dir] * len(files)))
    else:
        rows = [scan_file(path, output_dir) for path in files]
    columns = ["file", "name", "dim", "alpha", "alpha_f", "stable", "lambda", "lambda_f", "error"]
    summary = ScanSummaryDataFrame(pd.DataFrame(rows, columns=columns))
    atomic_write(output_dir / "scan-summary.csv", summary.to_csv(index=False))
    unstable = summary[summary["stable"] == "false"]
    for name in unstable["name"]:
        logger.warning("Found a polytope with alpha >= 1: %s", name)
    return summary


def cmd_scan(args: argparse.Namespace, out: OutputConfig) -> ExitCode:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory")
    summary = scan(directory, out.output_dir, args.workers)
    if out.output_format == OutputFormat.JSON:
        _emit(summary.to_json(orient="records") + "\n")
    elif out.output_format == OutputFormat.CSV:
        _emit(summary.to_csv(index=False))
    else:
        _emit(summary.to_string(index=False) + "\n")
    return ExitCode.INVALID_POLYTOPE if summary["error"].notna().any() else ExitCode.OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.TEXT.value)
    common.add_argument("--plot", choices=["svg"], default=None, help="write SVG plots to the output directory")
    common.add_argument("--out", default=None, help="output directory, $TORICDING_OUTPUT_DIR by default")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = _Parser(prog="toricding", description="Ding stability and Monge-Ampere solves for toric Fano polytopes")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    catalog = commands.add_parser("catalog", parents=[common], help="built-in polytopes")
    catalog.add_argument("action", choices=["list"])
    catalog.set_defaults(handler=cmd_catalog)

    for name, handler, text in (
        ("info", cmd_info, "validation, facets and moments"),
        ("alpha", cmd_alpha, "l, alpha and lambda"),
        ("stability", cmd_stability, "stability report with wedge probes"),
        ("probe", cmd_probe, "properness fit and Prekopa checks"),
        ("solve", cmd_solve, "minimize the modified Ding functional"),
    ):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("polytope", help="catalog key or polytope JSON file")
        sub.set_defaults(handler=handler)
        if name == "stability":
            sub.add_argument("--steps", type=int, default=50, help="wedge family members per vertex")
            sub.add_argument("--mass", default="1", help="integral of every wedge (rational)")
        if name == "probe":
            sub.add_argument("--pairs", type=int, default=100, help="random weight pairs for the Prekopa check")
            sub.add_argument("--seed", type=int, default=0)
        if name == "solve":
            sub.add_argument("--refine", type=int, default=SolverConfig().refinement, help="refinement k")
            sub.add_argument("--tol", type=float, default=SolverConfig().tolerance)
            sub.add_argument("--max-iter", type=int, default=SolverConfig().max_iterations)
            sub.add_argument("--grid-radius", type=float, default=None, help="quadrature box radius")
            sub.add_argument("--spacing", type=float, default=SolverConfig().spacing)
            sub.add_argument("--optimizer", choices=[o.value for o in Optimizer], default=Optimizer.QUASI_NEWTON.value)
            sub.add_argument("--seed", type=int, default=None)

    scan_parser = commands.add_parser("scan", parents=[common], help="alpha for every polytope JSON in a directory")
    scan_parser.add_argument("directory")
    scan_parser.add_argument("--workers", type=int, default=1)
    scan_parser.set_defaults(handler=cmd_scan)
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format="%(asctime)s %(levelname)s %(message)s",
        )
        return int(args.handler(args, _output_config(args)))
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return ExitCode.USAGE
    except UnknownPolytope as exc:
        sys.stderr.write(f"{exc}\n")
        return ExitCode.USAGE
    except (PolytopeError, ValidationError) as exc:
        sys.stderr.write(f"invalid polytope: {exc}\n")
        return ExitCode.INVALID_POLYTOPE
    except SystemExit as exc:
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run_cli())
