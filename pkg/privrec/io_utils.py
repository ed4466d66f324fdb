"""
Tabular I/O for experiment reports.

Reports and aggregates are pandas DataFrames written as CSV (the default) or
Parquet. The format is detected from the file extension, so callers only pick
a path.

Supported formats:
- CSV (.csv)
- Parquet (.parquet, .pq)
"""

from __future__ import annotations

import inspect
import json
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd

SUPPORTED_FORMATS = ("csv", "parquet")


def _filter_kwargs(func: callable, kwargs: Dict[str, Any]) -> Dict[str, Any]:
    """
    Keep only the keyword arguments accepted by ``func``.

    Parameters
    ----------
    func : callable
        The pandas reader or writer the kwargs are destined for.
    kwargs : Dict[str, Any]
        Candidate keyword arguments.

    Returns
    -------
    Dict[str, Any]
        The subset ``func`` accepts (all of them if ``func`` takes ``**kwargs``).
    """
    try:
        sig = inspect.signature(func)
    except (TypeError, ValueError):
        return kwargs
    if any(p.kind == inspect.Parameter.VAR_KEYWORD for p in sig.parameters.values()):
        return kwargs
    return {k: v for k, v in kwargs.items() if k in sig.parameters}


def get_file_format(file_path: Union[str, Path]) -> str:
    """
    Get the report format from a file path.

    Parameters
    ----------
    file_path : str or Path
        Path to the file.

    Returns
    -------
    str
        ``"csv"`` or ``"parquet"``.

    Raises
    ------
    ValueError
        If the extension is not a supported report format.

    Examples
    --------
    >>> get_file_format("out/report.csv")
    'csv'
    >>> get_file_format("out/report.pq")
    'parquet'
    """
    ext = Path(file_path).suffix.lower().lstrip(".")
    if ext == "csv":
        return "csv"
    if ext in ("parquet", "pq"):
        return "parquet"
    raise ValueError(
        f"Unsupported file format: '.{ext}'. Supported formats: .csv, .parquet, .pq"
    )


def read_data(file_path: Union[str, Path], **kwargs: Any) -> pd.DataFrame:
    """
    Read a report table, detecting the format from the extension.

    Parameters
    ----------
    file_path : str or Path
        Path to a ``.csv`` or ``.parquet`` file.
    **kwargs : Any
        Passed to the pandas reader. ``usecols`` is mapped to ``columns`` for
        Parquet; unsupported kwargs are dropped.

    Returns
    -------
    pd.DataFrame

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ValueError
        If the extension is not supported.
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")

    fmt = get_file_format(file_path)
    if fmt == "csv":
        return pd.read_csv(file_path, **_filter_kwargs(pd.read_csv, kwargs))

    mapped = dict(kwargs)
    if "usecols" in mapped and "columns" not in mapped:
        mapped["columns"] = mapped.pop("usecols")
    return pd.read_parquet(file_path, **_filter_kwargs(pd.read_parquet, mapped))


def write_data(df: pd.DataFrame, file_path: Union[str, Path], **kwargs: Any) -> None:
    """
    Write a report table, detecting the format from the extension.

    CSV output has a header row, no index, '.' decimals and empty cells for
    missing values, so two runs with the same inputs produce identical bytes.

    Parameters
    ----------
    df : pd.DataFrame
        Table to write.
    file_path : str or Path
        Destination; parent directories are created.
    **kwargs : Any
        Passed to the pandas writer.

    Raises
    ------
    ValueError
        If the extension is not supported.

    Examples
    --------
    >>> write_data(report.rows, "out/report.csv")
    >>> write_data(report.rows, "out/report.parquet")
    """
    file_path = Path(file_path)
    fmt = get_file_format(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)

    if fmt == "csv":
        write_kwargs = {"index": False, "na_rep": "", "lineterminator": "\n"}
        write_kwargs.update(kwargs)
        df.to_csv(file_path, **write_kwargs)
    else:
        write_kwargs = {"index": False}
        write_kwargs.update(kwargs)
        df.to_parquet(file_path, **write_kwargs)


def write_json(payload: Dict[str, Any], file_path: Union[str, Path]) -> None:
    """Write ``payload`` as indented JSON with sorted keys."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    file_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(file_path: Union[str, Path]) -> Dict[str, Any]:
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")
    return json.loads(file_path.read_text())
