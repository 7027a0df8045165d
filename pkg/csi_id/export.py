import logging
import os
from typing import Any, Dict, List, Union

import pandas as pd

from csi_id.bench import REPORT_COLUMNS

logger = logging.getLogger(__name__)

Rows = Union[pd.DataFrame, List[Dict[str, Any]]]


def _frame(rows: Rows) -> pd.DataFrame:
    if isinstance(rows, pd.DataFrame):
        return rows
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def format_as_csv(rows: Rows) -> str:
    """
    Format benchmark rows as a CSV string.

    Args:
        rows: Report rows (DataFrame or list of dicts)

    Returns:
        CSV-formatted string, empty when there are no rows
    """
    df = _frame(rows)
    if df.empty:
        return ""
    return df.to_csv(index=False, lineterminator='\n')


def export_to_csv(rows: Rows, filename: str) -> None:
    """
    Export benchmark rows to a CSV file.

    Args:
        rows: Report rows
        filename: Output filename
    """
    df = _frame(rows)
    if df.empty:
        logger.warning("No results to export")
        return

    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(filename, 'w', encoding='utf-8', newline='') as handle:
        handle.write(format_as_csv(df))
    logger.info(f"Results exported to {filename}")


def print_csv(rows: Rows) -> None:
    """
    Print benchmark rows as CSV to stdout.

    Args:
        rows: Report rows
    """
    df = _frame(rows)
    if df.empty:
        logger.warning("No results to print")
        return
    print(format_as_csv(df), end='')
