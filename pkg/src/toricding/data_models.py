"""Data models used to describe and validate tabular outputs of toricding."""

from typing import Self

import pandas as pd
import pandera as pa
from pandera.api.pandas.model_config import BaseConfig
from pandera.typing import DataFrame, Series


class CoercingSchema(pa.DataFrameModel):
    """Base schema that configures coercing."""

    class Config(BaseConfig):
        """Pandas DataFrameSchema options."""

        coerce = True


class ProbeRatioSchema(CoercingSchema):
    """Wedge probe: one row per vertex and family member."""

    vertex: Series[str]
    step: Series[int] = pa.Field(ge=1)
    index: Series[float] = pa.Field(gt=0)
    ratio: Series[float]
    l_vertex: Series[float]


ProbeRatioDataFrame = DataFrame[ProbeRatioSchema]


class PropernessProbeSchema(CoercingSchema):
    member: Series[int] = pa.Field(ge=0, unique=True)
    kind: Series[str]
    integral: Series[float] = pa.Field(ge=0)
    value: Series[float]
    margin: Series[float]


PropernessProbeDataFrame = DataFrame[PropernessProbeSchema]


class ConvergenceSchema(CoercingSchema):
    """Solver history, one row per accepted iteration."""

    iteration: Series[int] = pa.Field(ge=0, unique=True)
    value: Series[float]
    grad_norm: Series[float] = pa.Field(ge=0)
    residual_l1: Series[float] = pa.Field(ge=0)
    step: Series[float] = pa.Field(ge=0)

    @pa.dataframe_check
    def iterations_increase(cls, df: DataFrame[Self]) -> bool:
        return df["iteration"].is_monotonic_increasing


ConvergenceDataFrame = DataFrame[ConvergenceSchema]


class GridDumpSchema(CoercingSchema):
    xi: Series[float] = pa.Field(alias=r"^xi_\d+$", regex=True)
    value: Series[float]


GridDumpDataFrame = DataFrame[GridDumpSchema]


class MetricTableSchema(CoercingSchema):
    """Potential gradient and Hessian (the metric in log coordinates) at sample points."""

    xi: Series[float] = pa.Field(alias=r"^xi_\d+$", regex=True)
    moment: Series[float] = pa.Field(alias=r"^grad_\d+$", regex=True)
    metric: Series[float] = pa.Field(alias=r"^hess_\d+_\d+$", regex=True)


MetricTableDataFrame = DataFrame[MetricTableSchema]


class ScanSummarySchema(CoercingSchema):
    file: Series[str] = pa.Field(unique=True)
    name: Series[str] = pa.Field(nullable=True)
    dim: Series[pd.Int64Dtype] = pa.Field(nullable=True)
    alpha: Series[str] = pa.Field(nullable=True)
    alpha_f: Series[float] = pa.Field(nullable=True)
    stable: Series[str] = pa.Field(nullable=True)
    lambda_: Series[str] = pa.Field(alias="lambda", nullable=True)
    lambda_f: Series[float] = pa.Field(nullable=True)
    error: Series[str] = pa.Field(nullable=True)


ScanSummaryDataFrame = DataFrame[ScanSummarySchema]
