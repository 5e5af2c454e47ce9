from pathlib import Path

import pandas as pd

from Utilities.errors import DatasetError


def write_table(table: pd.DataFrame, path: str | Path) -> Path:
    """Writes a DataFrame as a comma-separated file with a header row.

    Args:
        table (DataFrame): The rows to write.
        path (str | Path): Destination file; parent directories are created.

    Returns:
        Path: The written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed float format keeps repeated runs byte-identical.
    table.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path


def read_table(path: str | Path) -> pd.DataFrame:
    """Reads a comma-separated file written by ``write_table``.

    Args:
        path (str | Path): The file to read.

    Returns:
        DataFrame: Pandas DataFrame containing the CSV data.
    """
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise DatasetError(f"Failed to read the table at {path}: {e}") from e
