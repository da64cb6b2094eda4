"""Pydantic documents for polytope input and report output.

Exact rationals are serialized as ``"p/q"`` strings; each has a float duplicate with the suffix ``_f``.
"""

from __future__ import annotations

from fractions import Fraction
from typing import TYPE_CHECKING, Annotated, Any

import pandas as pd
from polyfactory.decorators import post_generated
from polyfactory.factories import pydantic_factory
from pydantic import BaseModel, ConfigDict, Field, model_validator

from toricding.data_models import ProbeRatioDataFrame
from toricding.exact import fraction_str
from toricding.polytope import ReflexivePolytope, from_vertices, lattice_points

if TYPE_CHECKING:
    from typing import Self

    from toricding.functional import PropernessFit, QuadratureSpec
    from toricding.invariants import StabilityReport
    from toricding.solver import SolverReport

FRACTION_PATTERN = r"^-?\d+/[1-9]\d*$"

Rational = Annotated[str, Field(pattern=FRACTION_PATTERN)]


def _rational(value: Fraction | int) -> str:
    return fraction_str(value)


class ToricDingBaseModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True) + "\n"

    def to_text(self) -> str:
        """``key: value`` lines; an exact value is followed by its decimal duplicate."""
        data = self.model_dump(by_alias=True)
        lines = []
        for key, value in data.items():
            if key.endswith("_f") and key[:-2] in data:
                continue
            if f"{key}_f" in data:
                lines.append(f"{key}: {_plain(value)} ({_plain(data[f'{key}_f'])})")
            else:
                lines.append(f"{key}: {_plain(value)}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        return pd.json_normalize(self.model_dump(by_alias=True)).to_csv(index=False)


def _plain(value: Any) -> str:  # noqa: ANN401
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, list):
        return "[" + ", ".join(_plain(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_plain(v)}" for k, v in value.items()) + "}"
    return str(value)


class PolytopeDocument(ToricDingBaseModel):
    """Polytope JSON input: ``{"name": ..., "dim": n, "vertices": [[int, ...], ...]}``."""

    name: str
    dim: int = Field(ge=1)
    vertices: list[list[int]] = Field(min_length=1)

    @model_validator(mode="after")
    def vertices_match_dimension(self) -> Self:
        for vertex in self.vertices:
            if len(vertex) != self.dim:
                raise ValueError(f"Vertex {vertex} does not have {self.dim} coordinates")
        return self

    def to_polytope(self) -> ReflexivePolytope:
        return from_vertices(self.name, self.vertices)

    @classmethod
    def from_polytope(cls, polytope: ReflexivePolytope) -> Self:
        return cls(name=polytope.name, dim=polytope.dim, vertices=[list(v) for v in polytope.vertices])


class CatalogDocument(PolytopeDocument):
    key: str
    notes: str = ""


class InfoReport(PolytopeDocument):
    facets: list[list[int]]
    volume: Rational
    volume_f: float
    first_moments: list[Rational]
    first_moments_f: list[float]
    second_moments: list[list[Rational]]
    second_moments_f: list[list[float]]
    simplices: int
    lattice_points: int

    @classmethod
    def from_polytope(cls, polytope: ReflexivePolytope) -> Self:
        mom = polytope.rational_moments
        return cls(
            name=polytope.name,
            dim=polytope.dim,
            vertices=[list(v) for v in polytope.vertices],
            facets=[list(n) for n in polytope.facets],
            volume=_rational(mom.volume),
            volume_f=float(mom.volume),
            first_moments=[_rational(c) for c in mom.first],
            first_moments_f=[float(c) for c in mom.first],
            second_moments=[[_rational(c) for c in row] for row in mom.second],
            second_moments_f=[[float(c) for c in row] for row in mom.second],
            simplices=len(polytope.triangulation),
            lattice_points=len(lattice_points(polytope)),
        )


class VertexValue(ToricDingBaseModel):
    vertex: list[int]
    value: Rational
    value_f: float


class AlphaReport(ToricDingBaseModel):
    alpha: Rational
    stable: bool
    alpha_f: float
    lambda_: Rational = Field(alias="lambda")
    lambda_f: float
    name: str
    dim: int
    volume: Rational
    volume_f: float
    l: list[Rational] = Field(description="constant term followed by the linear coefficients")
    l_f: list[float]
    vertex_values: list[VertexValue]

    @classmethod
    def from_stability(cls, report: StabilityReport) -> Self:
        coefficients = [report.l.a, *report.l.b]
        return cls(
            alpha=_rational(report.alpha),
            stable=report.stable,
            alpha_f=float(report.alpha),
            lambda_=_rational(report.lambda_),
            lambda_f=float(report.lambda_),
            name=report.name,
            dim=report.l.dim,
            volume=_rational(report.volume),
            volume_f=float(report.volume),
            l=[_rational(c) for c in coefficients],
            l_f=[float(c) for c in coefficients],
            vertex_values=[
                VertexValue(vertex=list(v), value=_rational(value), value_f=float(value))
                for v, value in report.vertex_values.items()
            ],
        )


class WedgeProbeRow(ToricDingBaseModel):
    vertex: list[int]
    step: int = Field(ge=1)
    index: float
    ratio: float
    l_vertex: float


class StabilityDocument(AlphaReport):
    probes: list[WedgeProbeRow] = Field(default_factory=list)

    @classmethod
    def from_stability(cls, report: StabilityReport, indices: dict[tuple[int, ...], list[float]] | None = None) -> Self:
        """``indices`` holds the index of every wedge family member; the step number is used when missing."""
        base = AlphaReport.from_stability(report).model_dump()
        indices = indices or {}
        rows = [
            WedgeProbeRow(
                vertex=list(v),
                step=step,
                index=indices[v][step - 1] if v in indices else float(step),
                ratio=ratio,
                l_vertex=float(report.vertex_values[v]),
            )
            for v, ratios in report.probe_ratios.items()
            for step, ratio in enumerate(ratios, start=1)
        ]
        return cls(**base, probes=rows)

    def to_frame(self) -> ProbeRatioDataFrame:
        df = pd.DataFrame(
            [
                {
                    "vertex": str(tuple(row.vertex)),
                    "step": row.step,
                    "index": row.index,
                    "ratio": row.ratio,
                    "l_vertex": row.l_vertex,
                }
                for row in self.probes
            ],
            columns=["vertex", "step", "index", "ratio", "l_vertex"],
        )
        return ProbeRatioDataFrame(df)


class PrekopaSummary(ToricDingBaseModel):
    pairs: int
    min_gap: float
    passed: bool


class ProbeDocument(ToricDingBaseModel):
    name: str
    proper: bool
    delta: float
    constant: float
    members: int
    min_margin: float
    prekopa: PrekopaSummary | None = None

    @classmethod
    def from_fit(cls, name: str, fit: PropernessFit, prekopa: PrekopaSummary | None = None) -> Self:
        return cls(
            name=name,
            proper=fit.proper,
            delta=fit.delta,
            constant=fit.constant,
            members=len(fit.kinds),
            min_margin=float(fit.margins.min()),
            prekopa=prekopa,
        )


class QuadratureDocument(ToricDingBaseModel):
    radius: float = Field(gt=0)
    nodes: int = Field(ge=3)
    eps_tail: float = Field(gt=0)

    @classmethod
    def from_spec(cls, spec: QuadratureSpec) -> Self:
        return cls(radius=spec.radius, nodes=spec.nodes, eps_tail=spec.eps_tail)


class SolverDocument(ToricDingBaseModel):
    name: str
    converged: bool
    iterations: int = Field(ge=0)
    ding_value: float = Field(alias="D_value")
    grad_norm: float = Field(ge=0)
    tolerance: float = Field(gt=0)
    residual_l1: float = Field(ge=0)
    residual_sup: float = Field(ge=0)
    pushforward_w1: float = Field(ge=0)
    pushforward_mass: float
    refinement: int = Field(ge=1)
    sample: list[list[Rational]]
    theta_star: list[float]
    quadrature: QuadratureDocument

    @model_validator(mode="after")
    def converged_within_tolerance(self) -> Self:
        if self.converged and self.grad_norm > self.tolerance:
            raise ValueError(f"Converged report with gradient norm {self.grad_norm} above {self.tolerance}")
        if len(self.sample) != len(self.theta_star):
            raise ValueError("One weight per sample point is required")
        return self

    @classmethod
    def from_report(cls, report: SolverReport) -> Self:
        phi = report.potential
        return cls(
            name=report.name,
            converged=report.converged,
            iterations=report.iterations,
            ding_value=report.ding_value,
            grad_norm=report.grad_norm,
            tolerance=report.tolerance,
            residual_l1=report.residual_l1,
            residual_sup=report.residual_sup,
            pushforward_w1=report.pushforward_w1,
            pushforward_mass=report.pushforward_mass,
            refinement=phi.refinement,
            sample=[[_rational(c) for c in m] for m in phi.sample],
            theta_star=phi.theta.tolist(),
            quadrature=QuadratureDocument.from_spec(report.quadrature),
        )


class AlphaReportFactory(pydantic_factory.ModelFactory[AlphaReport]):
    @post_generated
    @classmethod
    def alpha_f(cls, alpha: str) -> float:
        return float(Fraction(alpha))


class SolverDocumentFactory(pydantic_factory.ModelFactory[SolverDocument]):
    converged = False

    @post_generated
    @classmethod
    def theta_star(cls, sample: list[list[str]]) -> list[float]:
        return [0.0] * len(sample)
