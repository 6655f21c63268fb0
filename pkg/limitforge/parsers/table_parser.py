import os
import math
import tempfile
import logging
from typing import List, Optional, Sequence

import pandas as pd

from ..schemas.reports import ConvergenceReport

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["n", "value", "prediction", "ratio", "abs_ratio_err"]


def dataframe_from_array_of_dicts(array: list, columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Returns a pandas DataFrame from an array of dictionaries.
    """
    try:
        return pd.DataFrame.from_dict(array, orient="columns").reindex(columns=columns)
    except Exception as e:
        logger.error(
            "An error occurred while converting the array of type %s into a DataFrame: %s",
            type(array),
            e,
        )
        raise


def table_row(n: int, value: float, prediction: Optional[float] = None) -> dict:
    ratio = value / prediction if prediction else math.nan
    return {
        "n": int(n),
        "value": value,
        "prediction": prediction if prediction is not None else math.nan,
        "ratio": ratio,
        "abs_ratio_err": abs(ratio - 1.0),
    }


def rows_from_report(report: ConvergenceReport) -> List[dict]:
    """One row per checkpoint; the ratio column is the report's ratio verbatim."""
    predictions = report.predictions or [math.nan] * len(report.checkpoints)
    values = report.values or [math.nan] * len(report.checkpoints)
    return [
        {
            "n": int(n),
            "value": v,
            "prediction": p,
            "ratio": r,
            "abs_ratio_err": abs(r - 1.0),
        }
        for n, v, p, r in zip(report.checkpoints, values, predictions, report.ratios)
    ]


def report_to_pandas(rows: List[dict]) -> pd.DataFrame:
    return dataframe_from_array_of_dicts(rows, columns=TABLE_COLUMNS)


# %% Atomic writers
def write_atomic(path: str, text: str) -> str:
    """Writes text to a temporary file in the target directory, then renames it over path."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug("Wrote %s", path)
    return path


def dataframe_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def write_csv(df: pd.DataFrame, path: str) -> str:
    return write_atomic(path, dataframe_to_csv(df))
