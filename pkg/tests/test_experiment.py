"""
Tests for privrec.experiment.

Tests cover:
- Experiment configuration validation and argparse wiring
- Per-node evaluation against hand-computed accuracies
- Worker-count independence and seeded reproducibility
- Report writing/reading (CSV and Parquet) and the aggregates
- Report comparison
"""

from __future__ import annotations

import argparse
import math

import numpy as np
import pandas as pd
import pytest

from privrec.errors import ConfigurationError, DomainError
from privrec.experiment import (
    REPORT_COLUMNS,
    SMOOTHING_COLUMN,
    AccuracyReport,
    ExperimentConfig,
    accuracy_by_rank,
    accuracy_cdf,
    accuracy_vs_degree,
    compare_reports,
    concentration_summary,
    evaluate_node,
    fraction_above,
    resolve_worker_count,
    run_experiment,
)
from privrec.graph import Graph
from privrec.mechanisms import Mechanism
from privrec.utility import UtilityFunctionSpec
from .data_generators import random_graph

ALL_MECHANISMS = ("exp", "lap", "smooth")


@pytest.fixture(scope="module")
def lonely_pair():
    """0 - 1 - 2 plus isolated 3, 4, 5."""
    return Graph.from_edges(6, [(0, 1), (1, 2)])


@pytest.fixture(scope="module")
def medium_graph():
    return random_graph(40, 0.12, seed=4)


def _synthetic_report(skipped=(7,)):
    rows = pd.DataFrame(
        {
            "raw_id": [1, 2, 3, 4],
            "degree": [1, 2, 3, 5],
            "candidates": [10, 10, 10, 10],
            "k": [1, 2, 1, 3],
            "u_max": [1.0, 2.0, 1.0, 3.0],
            "acc_exp": [0.2, 0.5, 1.0, 0.4],
            "acc_lap": [0.25, 0.45, 1.0, 0.4],
            "acc_lap_se": [0.01, 0.01, 0.0, 0.02],
            "ceiling": [0.6, 0.9, 1.0, 0.9],
        },
        columns=REPORT_COLUMNS,
    )
    return AccuracyReport(rows=rows, skipped=list(skipped), config={"epsilon": 0.5})


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig(epsilon=0.1)
        assert cfg.mechanisms == (Mechanism.EXPONENTIAL, Mechanism.LAPLACE)
        assert cfg.laplace_trials == 1000
        assert cfg.c_grid == (1.0,)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon": 0.0},
            {"epsilon": 0.1, "laplace_trials": 0},
            {"epsilon": 0.1, "worker_count": 0},
            {"epsilon": 0.1, "mechanisms": ("gauss",)},
            {"epsilon": 0.1, "mechanisms": ()},
            {"epsilon": 0.1, "c_grid": (0.0, 1.0)},
            {"epsilon": 0.1, "c_grid": ()},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kwargs)

    def test_mechanisms_deduplicated(self):
        cfg = ExperimentConfig(epsilon=0.1, mechanisms=("lap", "exp", "lap"))
        assert cfg.mechanisms == (Mechanism.LAPLACE, Mechanism.EXPONENTIAL)

    def test_from_args(self):
        args = argparse.Namespace(
            utility="wp",
            gamma=0.01,
            max_length=3,
            epsilon=0.5,
            mechanism=["exp", "smooth"],
            trials=50,
            seed=9,
            c_grid=[0.5, 1.0],
            workers=2,
        )
        cfg = ExperimentConfig.from_args(args)
        assert cfg.utility == UtilityFunctionSpec("wp", 0.01, 3)
        assert cfg.mechanisms == (Mechanism.EXPONENTIAL, Mechanism.SMOOTHING)
        assert (cfg.laplace_trials, cfg.seed, cfg.c_grid, cfg.worker_count) == (50, 9, (0.5, 1.0), 2)

    def test_to_dict(self):
        cfg = ExperimentConfig(epsilon=0.5, seed=3)
        assert cfg.to_dict() == {
            "epsilon": 0.5,
            "utility": {"kind": "cn"},
            "mechanisms": ["exp", "lap"],
            "laplace_trials": 1000,
            "seed": 3,
            "c_grid": [1.0],
        }


class TestWorkers:
    def test_explicit_request(self):
        assert resolve_worker_count(3) == 3

    def test_automatic(self):
        assert resolve_worker_count() >= 1

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            resolve_worker_count(0)


class TestEvaluateNode:
    def test_hand_values(self, lonely_pair):
        cfg = ExperimentConfig(epsilon=0.5, mechanisms=ALL_MECHANISMS, laplace_trials=500)
        row = evaluate_node(lonely_pair, 0, cfg)
        assert (row["raw_id"], row["degree"], row["candidates"], row["k"]) == (0, 1, 4, 1)
        assert row["u_max"] == 1.0

        e = math.exp(0.5)
        assert row["acc_exp"] == pytest.approx(e / (e + 3), rel=1e-12)
        x = math.expm1(0.5) / (math.expm1(0.5) + 4)
        assert row[SMOOTHING_COLUMN] == pytest.approx((1 - x) / 4 + x, rel=1e-12)
        assert row["ceiling"] == pytest.approx(1 - 3 / (3 + 2 * math.exp(1.5)), rel=1e-12)
        assert 0.0 <= row["acc_lap"] <= 1.0
        assert 0.0 <= row["acc_lap_se"] <= 0.5 / math.sqrt(500)

    def test_zero_utility_node_skipped(self, lonely_pair):
        assert evaluate_node(lonely_pair, 1, ExperimentConfig(epsilon=0.5)) is None

    def test_unselected_mechanisms_are_nan(self, lonely_pair):
        row = evaluate_node(lonely_pair, 0, ExperimentConfig(epsilon=0.5, mechanisms=("exp",)))
        assert math.isnan(row["acc_lap"])
        assert math.isnan(row["acc_lap_se"])
        assert SMOOTHING_COLUMN not in row

    def test_weighted_paths_reports_raw_u_max(self, lonely_pair):
        cfg = ExperimentConfig(epsilon=0.5, utility=UtilityFunctionSpec("wp", 0.1, 3), mechanisms=("exp",))
        row = evaluate_node(lonely_pair, 0, cfg)
        assert row["u_max"] == pytest.approx(0.1)


class TestRunExperiment:
    def test_rows_and_skipped(self, lonely_pair):
        report = run_experiment(lonely_pair, ExperimentConfig(epsilon=0.5, worker_count=1), progress=False)
        assert report.rows["raw_id"].tolist() == [0, 2]
        assert report.skipped == [1, 3, 4, 5]
        assert report.evaluable == 2
        assert list(report.rows.columns) == REPORT_COLUMNS
        assert report.rows["degree"].dtype == np.int64

    def test_smoothing_column(self, lonely_pair):
        cfg = ExperimentConfig(epsilon=0.5, mechanisms=ALL_MECHANISMS, laplace_trials=50, worker_count=1)
        report = run_experiment(lonely_pair, cfg, progress=False)
        assert list(report.rows.columns) == REPORT_COLUMNS + [SMOOTHING_COLUMN]

    def test_independent_of_worker_count(self, medium_graph):
        base = dict(epsilon=0.3, mechanisms=ALL_MECHANISMS, laplace_trials=200, seed=11)
        single = run_experiment(medium_graph, ExperimentConfig(worker_count=1, **base), progress=False)
        pooled = run_experiment(medium_graph, ExperimentConfig(worker_count=4, **base), progress=False)
        pd.testing.assert_frame_equal(single.rows, pooled.rows, check_exact=True)
        assert single.skipped == pooled.skipped

    def test_seed_controls_laplace_estimates(self, medium_graph):
        run = lambda seed: run_experiment(
            medium_graph,
            ExperimentConfig(epsilon=0.3, laplace_trials=200, seed=seed, worker_count=1),
            progress=False,
        ).rows
        pd.testing.assert_frame_equal(run(5), run(5), check_exact=True)
        assert not np.allclose(run(5)["acc_lap"], run(6)["acc_lap"])

    def test_accuracies_within_ceiling(self):
        for seed in range(3):
            g = random_graph(30, 0.15, seed)
            cfg = ExperimentConfig(epsilon=0.5, mechanisms=ALL_MECHANISMS, laplace_trials=400, seed=seed, worker_count=1)
            rows = run_experiment(g, cfg, progress=False).rows
            assert (rows["acc_exp"] <= rows["ceiling"] + 1e-9).all()
            assert (rows[SMOOTHING_COLUMN] <= rows["ceiling"] + 1e-9).all()
            assert (rows["acc_lap"] <= rows["ceiling"] + 4 * rows["acc_lap_se"] + 1e-9).all()

    def test_fast_path_agrees_with_naive(self, medium_graph):
        def run(fast_path):
            cfg = ExperimentConfig(epsilon=0.3, laplace_trials=2000, worker_count=1, fast_path=fast_path)
            return run_experiment(medium_graph, cfg, progress=False).rows

        naive, grouped = run(False), run(True)
        se = np.sqrt(naive["acc_lap_se"] ** 2 + grouped["acc_lap_se"] ** 2)
        assert ((naive["acc_lap"] - grouped["acc_lap"]).abs() <= 5 * se + 1e-9).all()


class TestReportFiles:
    def test_csv_round_trip(self, lonely_pair, tmp_path):
        report = run_experiment(lonely_pair, ExperimentConfig(epsilon=0.5, worker_count=1), progress=False)
        paths = report.write(tmp_path / "out")
        for name in ("report", "cdf", "by_degree", "by_rank", "config"):
            assert paths[name].exists()

        loaded = AccuracyReport.read(tmp_path / "out")
        pd.testing.assert_frame_equal(loaded.rows, report.rows)
        assert loaded.skipped == [1, 3, 4, 5]
        assert loaded.config["epsilon"] == 0.5

    def test_csv_is_deterministic(self, lonely_pair, tmp_path):
        cfg = ExperimentConfig(epsilon=0.5, worker_count=1)
        run_experiment(lonely_pair, cfg, progress=False).write(tmp_path / "a")
        run_experiment(lonely_pair, cfg, progress=False).write(tmp_path / "b")
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()

    def test_parquet(self, lonely_pair, tmp_path):
        report = run_experiment(lonely_pair, ExperimentConfig(epsilon=0.5, worker_count=1), progress=False)
        paths = report.write(tmp_path, fmt="parquet")
        assert paths["report"].suffix == ".parquet"
        loaded = AccuracyReport.read(paths["report"])
        pd.testing.assert_frame_equal(loaded.rows, report.rows)

    def test_bad_format(self, tmp_path):
        with pytest.raises(ConfigurationError):
            _synthetic_report().write(tmp_path, fmt="xlsx")

    def test_read_without_sidecar(self, tmp_path):
        report = _synthetic_report()
        report.write(tmp_path)
        (tmp_path / "config.json").unlink()
        loaded = AccuracyReport.read(tmp_path / "report.csv")
        assert loaded.skipped == []
        assert loaded.config == {}

    def test_read_missing_directory_report(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            AccuracyReport.read(tmp_path)


class TestAggregates:
    def test_cdf(self):
        cdf = accuracy_cdf(_synthetic_report(), "exp")
        assert list(cdf.columns) == ["threshold", "fraction"]
        assert len(cdf) == 101
        lookup = dict(zip(cdf["threshold"], cdf["fraction"]))
        assert lookup[0.0] == 1.0
        assert lookup[0.5] == pytest.approx(0.5)
        assert lookup[1.0] == pytest.approx(0.25)

    def test_cdf_denominator_all(self):
        cdf = accuracy_cdf(_synthetic_report(), "acc_exp", denominator="all")
        assert dict(zip(cdf["threshold"], cdf["fraction"]))[0.0] == pytest.approx(0.8)

    def test_cdf_errors(self):
        with pytest.raises(ConfigurationError):
            accuracy_cdf(_synthetic_report(), "gauss")
        with pytest.raises(ConfigurationError):
            accuracy_cdf(_synthetic_report(), "exp", denominator="some")

    def test_fraction_above(self):
        report = _synthetic_report()
        assert fraction_above(report, "exp", 0.4) == pytest.approx(0.5)
        assert fraction_above(report, "exp", 0.4, strict=False) == pytest.approx(0.75)
        assert fraction_above(report, "exp", 0.4, denominator="all") == pytest.approx(0.4)

    def test_by_degree(self):
        table = accuracy_vs_degree(_synthetic_report())
        assert table["degree_bucket"].tolist() == [1, 2, 4]
        assert table["nodes"].tolist() == [1, 2, 1]
        assert table["mean_acc_exp"].tolist() == pytest.approx([0.2, 0.75, 0.4])
        assert "mean_ceiling" in table.columns

    def test_by_rank(self):
        ranked = accuracy_by_rank(_synthetic_report())
        assert ranked.columns[0] == "rank"
        assert ranked["rank"].tolist() == [1, 2, 3, 4]
        assert ranked["raw_id"].tolist() == [3, 2, 4, 1]

    def test_bound_violations(self):
        report = _synthetic_report()
        assert report.bound_violations().empty
        report.rows.loc[0, "acc_lap"] = 0.7
        violations = report.bound_violations()
        assert violations["raw_id"].tolist() == [1]
        assert violations["series"].tolist() == ["acc_lap"]

    def test_empty_series(self):
        report = _synthetic_report()
        report.rows["acc_lap"] = np.nan
        with pytest.raises(DomainError):
            accuracy_cdf(report, "lap")


class TestCompareReports:
    def test_identical(self):
        summary = compare_reports(_synthetic_report(), _synthetic_report(), "acc_exp", "acc_exp")
        assert summary["nodes_compared"] == 4
        assert summary["mean_abs_diff"] == 0.0
        assert summary["fraction_within_tolerance"] == 1.0

    def test_exp_vs_lap(self):
        summary = compare_reports(_synthetic_report(), _synthetic_report())
        assert summary["left_series"] == "acc_exp"
        assert summary["right_series"] == "acc_lap"
        assert summary["max_abs_diff"] == pytest.approx(0.05)
        assert summary["mean_diff"] == pytest.approx(0.0)

    def test_disjoint(self):
        other = _synthetic_report()
        other.rows["raw_id"] = [11, 12, 13, 14]
        with pytest.raises(DomainError):
            compare_reports(_synthetic_report(), other)

    def test_accepts_frames(self):
        frame = _synthetic_report().rows
        assert compare_reports(frame, frame, "exp", "exp")["nodes_compared"] == 4


class TestConcentrationSummary:
    def test_lonely_pair(self, lonely_pair):
        table = concentration_summary(lonely_pair, UtilityFunctionSpec())
        assert table["raw_id"].tolist() == [0, 2]
        assert table["beta"].tolist() == [1, 1]
