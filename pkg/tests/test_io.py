"""
Tests for the report I/O utilities in privrec.io_utils.

Tests cover:
- Format detection
- CSV and Parquet round trips
- Byte-stable CSV output
- Kwargs passing to underlying pandas functions
- JSON sidecars
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from privrec.io_utils import get_file_format, read_data, read_json, write_data, write_json


@pytest.fixture
def sample_dataframe():
    """A small report-shaped table with a missing value."""
    return pd.DataFrame(
        {
            "raw_id": [3, 7, 12, 40],
            "degree": [1, 4, 2, 9],
            "acc_exp": [0.25, 0.5, np.nan, 0.125],
            "ceiling": [0.9, 0.75, 1.0, 0.5],
        }
    )


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


class TestGetFileFormat:
    def test_csv_format(self):
        assert get_file_format("report.csv") == "csv"
        assert get_file_format(Path("/out/report.CSV")) == "csv"

    def test_parquet_formats(self):
        assert get_file_format("report.parquet") == "parquet"
        assert get_file_format("report.pq") == "parquet"

    @pytest.mark.parametrize("name", ["report.xlsx", "report.dta", "report"])
    def test_unsupported(self, name):
        with pytest.raises(ValueError, match="Unsupported file format"):
            get_file_format(name)


class TestCsv:
    def test_round_trip(self, sample_dataframe, temp_dir):
        path = temp_dir / "report.csv"
        write_data(sample_dataframe, path)
        pd.testing.assert_frame_equal(read_data(path), sample_dataframe)

    def test_missing_values_are_empty_cells(self, sample_dataframe, temp_dir):
        path = temp_dir / "report.csv"
        write_data(sample_dataframe, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "raw_id,degree,acc_exp,ceiling"
        assert lines[3] == "12,2,,1.0"

    def test_identical_bytes(self, sample_dataframe, temp_dir):
        write_data(sample_dataframe, temp_dir / "a.csv")
        write_data(sample_dataframe.copy(), temp_dir / "b.csv")
        assert (temp_dir / "a.csv").read_bytes() == (temp_dir / "b.csv").read_bytes()

    def test_creates_parent_directories(self, sample_dataframe, temp_dir):
        path = temp_dir / "nested" / "eps0.1" / "report.csv"
        write_data(sample_dataframe, path)
        assert path.exists()

    def test_usecols(self, sample_dataframe, temp_dir):
        path = temp_dir / "report.csv"
        write_data(sample_dataframe, path)
        assert list(read_data(path, usecols=["raw_id", "ceiling"]).columns) == ["raw_id", "ceiling"]


class TestParquet:
    def test_round_trip(self, sample_dataframe, temp_dir):
        path = temp_dir / "report.parquet"
        write_data(sample_dataframe, path)
        pd.testing.assert_frame_equal(read_data(path), sample_dataframe)

    def test_usecols_maps_to_columns(self, sample_dataframe, temp_dir):
        path = temp_dir / "report.pq"
        write_data(sample_dataframe, path)
        assert list(read_data(path, usecols=["degree"]).columns) == ["degree"]


class TestErrors:
    def test_read_missing(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            read_data(temp_dir / "absent.csv")

    def test_write_unsupported(self, sample_dataframe, temp_dir):
        with pytest.raises(ValueError):
            write_data(sample_dataframe, temp_dir / "report.xlsx")
        assert not (temp_dir / "report.xlsx").exists()


class TestJson:
    def test_round_trip(self, temp_dir):
        payload = {"epsilon": 0.1, "utility": {"kind": "cn"}, "skipped": [3, 5]}
        path = temp_dir / "config.json"
        write_json(payload, path)
        assert read_json(path) == payload

    def test_sorted_keys(self, temp_dir):
        path = temp_dir / "config.json"
        write_json({"b": 1, "a": 2}, path)
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_read_missing(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            read_json(temp_dir / "config.json")
