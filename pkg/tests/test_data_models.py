import numpy as np
import pandas as pd
import pandera as pa
import pytest

from toricding.data_models import ConvergenceDataFrame, ConvergenceSchema, ScanSummaryDataFrame


def test_empty_convergence_frame():
    schema = ConvergenceSchema.to_schema()
    columns = list(schema.columns.keys())
    convergence = ConvergenceDataFrame(columns=columns)

    # Check that the values are correctly casted from object to np.float64
    assert convergence.dtypes.to_dict()["grad_norm"] == np.float64


def test_iterations_must_increase():
    df = pd.DataFrame(
        {"iteration": [1, 0], "value": [0.0, 0.0], "grad_norm": [1.0, 0.5], "residual_l1": [0.1, 0.1], "step": [1, 1]}
    )
    with pytest.raises(pa.errors.SchemaError):
        ConvergenceDataFrame(df)


def test_scan_summary_allows_failed_rows():
    df = pd.DataFrame(
        {
            "file": ["a.json", "b.json"],
            "name": ["F1", None],
            "dim": [2, None],
            "alpha": ["5/11", None],
            "alpha_f": [5 / 11, None],
            "stable": ["True", None],
            "lambda": ["3/22", None],
            "lambda_f": [3 / 22, None],
            "error": [None, "NotReflexive: ..."],
        }
    )
    summary = ScanSummaryDataFrame(df)
    assert summary["dim"].isna().sum() == 1
