import os
import math

import pandas as pd
import pytest

from limitforge.parsers.table_parser import (
    TABLE_COLUMNS,
    dataframe_from_array_of_dicts,
    dataframe_to_csv,
    report_to_pandas,
    rows_from_report,
    table_row,
    write_atomic,
    write_csv,
)
from limitforge.schemas.reports import ConvergenceReport


@pytest.fixture
def report():
    return ConvergenceReport(
        checkpoints=[10, 20, 50],
        ratios=[1.1, 1.05, 1.01],
        final_ratio=1.01,
        trend="converging",
        tolerance_used=0.02,
        values=[11.0, 21.0, 50.5],
        predictions=[10.0, 20.0, 50.0],
    )


def test_table_row():
    assert table_row(10, 2.0, 4.0) == {
        "n": 10,
        "value": 2.0,
        "prediction": 4.0,
        "ratio": 0.5,
        "abs_ratio_err": 0.5,
    }
    row = table_row(10, 2.0)
    assert math.isnan(row["prediction"]) and math.isnan(row["ratio"])


def test_rows_from_report_keep_ratios(report):
    rows = rows_from_report(report)
    assert [r["n"] for r in rows] == [10, 20, 50]
    # ratios are copied from the report, not recomputed
    assert [r["ratio"] for r in rows] == report.ratios
    assert rows[-1]["abs_ratio_err"] == pytest.approx(0.01)


def test_report_to_pandas_columns(report):
    df = report_to_pandas(rows_from_report(report))
    assert list(df.columns) == TABLE_COLUMNS
    assert len(df) == 3


def test_dataframe_from_array_of_dicts():
    df = dataframe_from_array_of_dicts([{"n": 1, "value": 0.5}, {"n": 2, "value": 0.25}])
    assert list(df.columns) == ["n", "value"]
    assert isinstance(df, pd.DataFrame)


def test_csv_keeps_full_precision():
    df = report_to_pandas([table_row(3, 1.0 / 3.0, 0.1)])
    text = dataframe_to_csv(df)
    header, line = text.splitlines()
    assert header == "n,value,prediction,ratio,abs_ratio_err"
    fields = line.split(",")
    assert fields[0] == "3"
    assert float(fields[1]) == 1.0 / 3.0
    assert float(fields[2]) == 0.1
    assert text.endswith("\n") and "\r" not in text


def test_write_atomic_leaves_no_temporary_files(tmpdir):
    target = os.path.join(str(tmpdir), "nested", "out.csv")
    assert write_atomic(target, "a,b\n") == target
    assert write_atomic(target, "c,d\n") == target
    assert os.listdir(os.path.dirname(target)) == ["out.csv"]
    with open(target) as f:
        assert f.read() == "c,d\n"


def test_write_csv(tmpdir, report):
    path = write_csv(report_to_pandas(rows_from_report(report)), str(tmpdir.join("r.csv")))
    df = pd.read_csv(path)
    assert list(df["n"]) == [10, 20, 50]
    assert list(df["ratio"]) == pytest.approx(report.ratios, rel=1e-15)
