"""
Per-node accuracy experiment.

For every node of the graph the harness computes the utility vector, the
exact accuracy of the exponential mechanism, a Monte Carlo estimate of the
Laplace mechanism's accuracy, optionally the accuracy of linear smoothing over
the argmax baseline, and the theoretical ceiling. Nodes whose candidates all
have zero utility are skipped. Aggregates (CDF, accuracy by degree, rank
order) are derived from the per-node table.

Results are independent of the number of worker threads: every node draws its
randomness from a generator keyed by ``(seed, node id)`` and rows are sorted
by node id before they are returned.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd
import psutil
from tqdm import tqdm

from .bounds import DEFAULT_C_GRID, node_accuracy_ceiling
from .errors import ConfigurationError, DomainError
from .graph import Graph
from .io_utils import SUPPORTED_FORMATS, read_data, read_json, write_data, write_json
from .mechanisms import (
    Mechanism,
    MechanismParams,
    argmax_distribution,
    derive_rng,
    expected_accuracy,
    exponential_distribution,
    laplace_selection_indices,
    linear_smoothing,
    smoothing_param_for_epsilon,
)
from .utility import (
    UtilityFunctionSpec,
    concentration_beta,
    scale_to_unit_sensitivity,
    utility_vector,
)

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 1000
DEFAULT_MECHANISMS = (Mechanism.EXPONENTIAL, Mechanism.LAPLACE)
# Rough peak memory of one worker evaluating a node of the full graph
GB_PER_WORKER = 0.5

REPORT_COLUMNS = [
    "raw_id",
    "degree",
    "candidates",
    "k",
    "u_max",
    "acc_exp",
    "acc_lap",
    "acc_lap_se",
    "ceiling",
]
SMOOTHING_COLUMN = "acc_smooth"

_SERIES_ALIASES = {
    "exp": "acc_exp",
    "exponential": "acc_exp",
    "lap": "acc_lap",
    "laplace": "acc_lap",
    "smooth": SMOOTHING_COLUMN,
    "smoothing": SMOOTHING_COLUMN,
    "ceiling": "ceiling",
}
ACCURACY_COLUMNS = ("acc_exp", "acc_lap", SMOOTHING_COLUMN)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Settings of one experiment run.

    Parameters
    ----------
    epsilon : float
        Privacy parameter, > 0.
    utility : UtilityFunctionSpec
        Utility family and parameters.
    mechanisms : tuple of Mechanism
        Mechanisms whose accuracy is measured.
    laplace_trials : int, default 1000
        Monte Carlo trials per node for the Laplace mechanism.
    seed : int, default 0
        Root seed; node ``r`` uses the stream keyed by ``(seed, r)``.
    c_grid : tuple of float, default (1.0,)
        Thresholds tried by the ceiling.
    worker_count : int, optional
        Worker threads; derived from available memory and CPUs when None.
    fast_path : bool, optional
        Force (True) or forbid (False) grouped Laplace sampling; automatic
        when None.
    """

    epsilon: float
    utility: UtilityFunctionSpec = field(default_factory=UtilityFunctionSpec)
    mechanisms: tuple = DEFAULT_MECHANISMS
    laplace_trials: int = DEFAULT_TRIALS
    seed: int = 0
    c_grid: tuple = DEFAULT_C_GRID
    worker_count: Optional[int] = None
    fast_path: Optional[bool] = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.laplace_trials < 1:
            raise ConfigurationError(f"laplace_trials must be at least 1, got {self.laplace_trials}")
        if self.worker_count is not None and self.worker_count < 1:
            raise ConfigurationError(f"worker_count must be at least 1, got {self.worker_count}")
        try:
            mechanisms = tuple(dict.fromkeys(Mechanism(m) for m in self.mechanisms))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if not mechanisms:
            raise ConfigurationError("at least one mechanism is required")
        c_grid = tuple(float(c) for c in self.c_grid)
        if not c_grid or any(not (0.0 < c <= 1.0) for c in c_grid):
            raise ConfigurationError(f"c_grid values must lie in (0, 1], got {c_grid}")
        object.__setattr__(self, "mechanisms", mechanisms)
        object.__setattr__(self, "c_grid", c_grid)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_args(cls, args: Any) -> "ExperimentConfig":
        """Build a config from an ``argparse`` namespace of the ``evaluate`` command."""
        utility = UtilityFunctionSpec(
            kind=args.utility,
            gamma=args.gamma,
            max_length=args.max_length,
        )
        return cls(
            epsilon=args.epsilon,
            utility=utility,
            mechanisms=tuple(getattr(args, "mechanism", None) or DEFAULT_MECHANISMS),
            laplace_trials=getattr(args, "trials", DEFAULT_TRIALS),
            seed=args.seed,
            c_grid=tuple(getattr(args, "c_grid", None) or DEFAULT_C_GRID),
            worker_count=getattr(args, "workers", None),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "utility": self.utility.to_dict(),
            "mechanisms": [m.value for m in self.mechanisms],
            "laplace_trials": self.laplace_trials,
            "seed": self.seed,
            "c_grid": list(self.c_grid),
        }


@dataclass
class AccuracyReport:
    """
    Per-node results of :func:`run_experiment`.

    Attributes
    ----------
    rows : pd.DataFrame
        One row per evaluable node in node-id order, columns
        :data:`REPORT_COLUMNS` (plus ``acc_smooth`` when smoothing ran).
    skipped : list of int
        Raw ids of nodes whose maximum utility is zero.
    config : dict
        Provenance echo of the :class:`ExperimentConfig`.
    """

    rows: pd.DataFrame
    skipped: List[int] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def evaluable(self) -> int:
        return int(len(self.rows))

    def bound_violations(self, tolerance: float = 1e-9) -> pd.DataFrame:
        """Rows where a measured accuracy exceeds the ceiling by more than ``tolerance``."""
        frames = []
        for column in ACCURACY_COLUMNS:
            if column not in self.rows or self.rows[column].isna().all():
                continue
            over = self.rows[self.rows[column] > self.rows["ceiling"] + tolerance]
            if len(over):
                frames.append(over[["raw_id", column, "ceiling"]].rename(columns={column: "accuracy"}).assign(series=column))
        if not frames:
            return pd.DataFrame(columns=["raw_id", "accuracy", "ceiling", "series"])
        return pd.concat(frames, ignore_index=True)

    def write(self, output_dir: Union[str, Path], fmt: str = "csv") -> Dict[str, Path]:
        """
        Write the report, its aggregates and the config sidecar.

        Files: ``report``, ``cdf``, ``by_degree`` and ``by_rank`` tables in
        ``fmt`` plus ``config.json``.

        Returns
        -------
        dict
            Name to written path.
        """
        if fmt not in SUPPORTED_FORMATS:
            raise ConfigurationError(f"Unsupported report format {fmt!r}; expected one of {SUPPORTED_FORMATS}")
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)

        paths = {
            "report": output_dir / f"report.{fmt}",
            "cdf": output_dir / f"cdf.{fmt}",
            "by_degree": output_dir / f"by_degree.{fmt}",
            "by_rank": output_dir / f"by_rank.{fmt}",
            "config": output_dir / "config.json",
        }
        write_data(self.rows, paths["report"])
        if self.evaluable:
            write_data(cdf_table(self), paths["cdf"])
            write_data(accuracy_vs_degree(self), paths["by_degree"])
            write_data(accuracy_by_rank(self), paths["by_rank"])
        write_json({**self.config, "skipped": [int(s) for s in self.skipped]}, paths["config"])
        logger.info(f"💾 Wrote report to {output_dir}")
        return paths

    @classmethod
    def read(cls, path: Union[str, Path]) -> "AccuracyReport":
        """
        Load a report written by :meth:`write`.

        ``path`` may be the report file or the directory holding it. The
        ``config.json`` sidecar is optional.
        """
        path = Path(path)
        if path.is_dir():
            matches = [path / f"report.{fmt}" for fmt in SUPPORTED_FORMATS if (path / f"report.{fmt}").exists()]
            if not matches:
                raise FileNotFoundError(f"No report.csv or report.parquet in {path}")
            path = matches[0]
        rows = read_data(path)
        sidecar = path.parent / "config.json"
        config = read_json(sidecar) if sidecar.exists() else {}
        skipped = [int(s) for s in config.pop("skipped", [])]
        return cls(rows=rows, skipped=skipped, config=config)


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------
def resolve_worker_count(requested: Optional[int] = None) -> int:
    """
    Number of worker threads to use.

    An explicit request wins. Otherwise the count is limited by 70% of the
    available memory at :data:`GB_PER_WORKER` each and by the CPU count.
    """
    if requested is not None:
        if requested < 1:
            raise ConfigurationError(f"worker count must be at least 1, got {requested}")
        return int(requested)
    try:
        available_gb = psutil.virtual_memory().available / (1024**3)
        usable_gb = available_gb * 0.7
        by_memory = int(usable_gb / GB_PER_WORKER)
        by_cpu = psutil.cpu_count(logical=True) or os.cpu_count() or 1
        workers = max(1, min(by_memory, by_cpu))
        logger.debug(
            f"🧮 Memory-aware worker calculation: {available_gb:.1f} GB available, "
            f"{by_memory} by memory, {by_cpu} by CPU -> {workers}"
        )
        if by_memory < 1:
            logger.warning(f"⚠️  Limited memory available ({available_gb:.1f} GB), using 1 worker")
        return workers
    except Exception as exc:  # psutil can fail inside restricted containers
        logger.warning(f"⚠️  Could not inspect system resources ({exc}); using 1 worker")
        return 1


def _report_columns(cfg: ExperimentConfig) -> List[str]:
    if Mechanism.SMOOTHING in cfg.mechanisms:
        return REPORT_COLUMNS + [SMOOTHING_COLUMN]
    return list(REPORT_COLUMNS)


def evaluate_node(g: Graph, r: int, cfg: ExperimentConfig) -> Optional[Dict[str, Any]]:
    """
    Report row for target ``r``, or ``None`` when every candidate has zero utility.

    Accuracies of mechanisms not in ``cfg.mechanisms`` are NaN.
    """
    raw = utility_vector(g, r, cfg.utility)
    if raw.u_max <= 0:
        return None
    uv = scale_to_unit_sensitivity(raw)
    params = MechanismParams(epsilon=cfg.epsilon, delta_f=1.0, seed=cfg.seed)
    bound = node_accuracy_ceiling(g, r, cfg.utility, cfg.epsilon, cfg.c_grid, uv=raw)

    row: Dict[str, Any] = {
        "raw_id": g.raw_label(r),
        "degree": g.degree(r),
        "candidates": len(uv),
        "k": bound.k_used,
        "u_max": raw.u_max,
        "acc_exp": math.nan,
        "acc_lap": math.nan,
        "acc_lap_se": math.nan,
        "ceiling": bound.accuracy_ceiling,
    }

    if Mechanism.EXPONENTIAL in cfg.mechanisms:
        row["acc_exp"] = expected_accuracy(exponential_distribution(uv, params), uv)

    if Mechanism.LAPLACE in cfg.mechanisms:
        rng = derive_rng(cfg.seed, r)
        picks = laplace_selection_indices(uv, params, rng, cfg.laplace_trials, cfg.fast_path)
        ratios = uv.values[picks] / uv.u_max
        row["acc_lap"] = float(ratios.mean())
        row["acc_lap_se"] = float(ratios.std() / math.sqrt(ratios.size))

    if Mechanism.SMOOTHING in cfg.mechanisms:
        x = smoothing_param_for_epsilon(cfg.epsilon, len(uv))
        row[SMOOTHING_COLUMN] = expected_accuracy(linear_smoothing(argmax_distribution(uv), x), uv)

    return row


def run_experiment(g: Graph, cfg: ExperimentConfig, progress: bool = True) -> AccuracyReport:
    """
    Evaluate every node of ``g``.

    Parameters
    ----------
    g : Graph
    cfg : ExperimentConfig
    progress : bool, default True
        Show a tqdm progress bar.

    Returns
    -------
    AccuracyReport
        Rows in node-id order; identical for any worker count.
    """
    workers = resolve_worker_count(cfg.worker_count)
    # build the shared sparse matrix once, before threads race to cache it
    g.adjacency_matrix()

    logger.info(
        f"🔄 Evaluating {g.n:,} nodes (ε={cfg.epsilon}, utility={cfg.utility.kind.value}, "
        f"mechanisms={[m.value for m in cfg.mechanisms]}, workers={workers})"
    )
    results: Dict[int, Optional[Dict[str, Any]]] = {}
    if workers == 1:
        for r in tqdm(range(g.n), desc="Evaluating nodes", unit="node", disable=not progress):
            results[r] = evaluate_node(g, r, cfg)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(evaluate_node, g, r, cfg): r for r in range(g.n)}
            for fut in tqdm(
                as_completed(futures),
                total=len(futures),
                desc="Evaluating nodes",
                unit="node",
                disable=not progress,
            ):
                results[futures[fut]] = fut.result()

    rows = [results[r] for r in range(g.n) if results[r] is not None]
    skipped = [g.raw_label(r) for r in range(g.n) if results[r] is None]
    frame = pd.DataFrame(rows, columns=_report_columns(cfg))
    frame = frame.astype({"raw_id": "int64", "degree": "int64", "candidates": "int64", "k": "int64"})
    logger.info(f"✅ Evaluation complete: {len(rows):,} evaluable, {len(skipped):,} skipped")
    return AccuracyReport(rows=frame, skipped=skipped, config=cfg.to_dict())


# ----------------------------------------------------------------------
# Aggregates
# ----------------------------------------------------------------------
def _series_column(report: AccuracyReport, series: str) -> str:
    column = _SERIES_ALIASES.get(series, series)
    if column not in report.rows.columns:
        raise ConfigurationError(f"Report has no series {series!r}")
    return column


def _series_values(report: AccuracyReport, series: str) -> np.ndarray:
    values = report.rows[_series_column(report, series)].dropna().to_numpy(dtype=np.float64)
    if values.size == 0:
        raise DomainError(f"Report has no values for series {series!r}")
    return values


def _denominator(report: AccuracyReport, evaluated: int, denominator: str) -> int:
    if denominator == "evaluable":
        return evaluated
    if denominator == "all":
        return evaluated + len(report.skipped)
    raise ConfigurationError(f"denominator must be 'evaluable' or 'all', got {denominator!r}")


def accuracy_cdf(report: AccuracyReport, series: str, denominator: str = "evaluable") -> pd.DataFrame:
    """
    Fraction of nodes reaching each accuracy threshold on a 0.01 grid.

    Parameters
    ----------
    report : AccuracyReport
    series : str
        ``exp``, ``lap``, ``smooth``, ``ceiling`` or a column name.
    denominator : {"evaluable", "all"}
        Divide by the evaluable nodes or by all nodes including skipped ones.

    Returns
    -------
    pd.DataFrame
        Columns ``threshold`` and ``fraction`` (nodes with accuracy >= threshold).
    """
    values = _series_values(report, series)
    thresholds = np.round(np.arange(101) * 0.01, 2)
    counts = (values[None, :] >= thresholds[:, None] - 1e-12).sum(axis=1)
    total = _denominator(report, values.size, denominator)
    return pd.DataFrame({"threshold": thresholds, "fraction": counts / total})


def cdf_table(report: AccuracyReport) -> pd.DataFrame:
    """CDFs of every populated series side by side, keyed by threshold."""
    table = None
    for column in (*ACCURACY_COLUMNS, "ceiling"):
        if column not in report.rows or report.rows[column].isna().all():
            continue
        cdf = accuracy_cdf(report, column).rename(columns={"fraction": column})
        table = cdf if table is None else table.merge(cdf, on="threshold")
    return table


def fraction_above(
    report: AccuracyReport,
    series: str,
    threshold: float,
    denominator: str = "evaluable",
    strict: bool = True,
) -> float:
    """Fraction of nodes whose accuracy is above (or, with ``strict=False``, at least) ``threshold``."""
    values = _series_values(report, series)
    hits = np.count_nonzero(values > threshold if strict else values >= threshold)
    return hits / _denominator(report, values.size, denominator)


def accuracy_vs_degree(report: AccuracyReport) -> pd.DataFrame:
    """
    Mean accuracy and ceiling per power-of-two degree bucket.

    Node of degree ``d >= 1`` falls into bucket ``2^floor(log2 d)``; degree 0
    falls into bucket 0.
    """
    rows = report.rows
    degrees = rows["degree"].to_numpy(dtype=np.int64)
    buckets = np.where(degrees > 0, 2 ** np.floor(np.log2(np.maximum(degrees, 1))), 0).astype(np.int64)
    columns = [c for c in (*ACCURACY_COLUMNS, "ceiling") if c in rows and not rows[c].isna().all()]
    grouped = rows.assign(degree_bucket=buckets).groupby("degree_bucket", sort=True)
    table = grouped.agg(nodes=("raw_id", "size"), **{f"mean_{c}": (c, "mean") for c in columns})
    return table.reset_index()


def accuracy_by_rank(report: AccuracyReport) -> pd.DataFrame:
    """Rows ordered by ceiling (descending) then raw id, with a 1-based ``rank`` column."""
    ranked = report.rows.sort_values(["ceiling", "raw_id"], ascending=[False, True], kind="mergesort")
    ranked = ranked.reset_index(drop=True)
    ranked.insert(0, "rank", np.arange(1, len(ranked) + 1))
    return ranked


def compare_reports(
    left: Union[AccuracyReport, pd.DataFrame],
    right: Union[AccuracyReport, pd.DataFrame],
    left_series: str = "acc_exp",
    right_series: str = "acc_lap",
) -> Dict[str, Any]:
    """
    Summary of ``right - left`` over the nodes present in both reports.

    A node counts as agreeing when ``|diff| <= max(0.05, 4·se)``, where
    ``se`` combines the Laplace standard errors of whichever sides are
    Monte Carlo estimates.
    """
    left = left if isinstance(left, AccuracyReport) else AccuracyReport(left)
    right = right if isinstance(right, AccuracyReport) else AccuracyReport(right)
    lcol = _series_column(left, left_series)
    rcol = _series_column(right, right_series)

    def side(report: AccuracyReport, column: str, tag: str) -> pd.DataFrame:
        frame = pd.DataFrame({"raw_id": report.rows["raw_id"], tag: report.rows[column]})
        se = report.rows["acc_lap_se"] if column == "acc_lap" and "acc_lap_se" in report.rows else 0.0
        return frame.assign(**{f"{tag}_se": se})

    merged = side(left, lcol, "left").merge(side(right, rcol, "right"), on="raw_id").dropna()
    if merged.empty:
        raise DomainError("the reports share no evaluated nodes")

    diff = merged["right"] - merged["left"]
    se = np.sqrt(merged["left_se"] ** 2 + merged["right_se"] ** 2)
    within = diff.abs() <= np.maximum(0.05, 4.0 * se)
    return {
        "left_series": lcol,
        "right_series": rcol,
        "nodes_compared": int(len(merged)),
        "mean_diff": float(diff.mean()),
        "mean_abs_diff": float(diff.abs().mean()),
        "max_abs_diff": float(diff.abs().max()),
        "fraction_within_tolerance": float(within.mean()),
    }


def concentration_summary(
    g: Graph, spec: UtilityFunctionSpec, fraction: float = 0.5, nodes: Optional[Iterable[int]] = None
) -> pd.DataFrame:
    """Concentration parameter ``β`` of every evaluable node."""
    rows = []
    for r in range(g.n) if nodes is None else nodes:
        uv = utility_vector(g, r, spec)
        try:
            beta = concentration_beta(uv, fraction)
        except DomainError:
            continue
        rows.append({"raw_id": g.raw_label(r), "candidates": len(uv), "beta": beta})
    return pd.DataFrame(rows, columns=["raw_id", "candidates", "beta"])
