"""
Command-line interface.

Subcommands::

    privrec ingest    --input wiki-Vote.txt.gz --output wiki-Vote.prgc
    privrec stats     --input wiki-Vote.prgc
    privrec recommend --input wiki-Vote.prgc --target 30 --mechanism exp --epsilon 0.5
    privrec evaluate  --input wiki-Vote.prgc --output-dir out/eps0.1 --epsilon 0.1
    privrec bounds    --input wiki-Vote.prgc --epsilon 0.1 --utility cn
    privrec compare   --left out/eps0.1 --right out/eps0.1
    privrec audit     --mechanism exp --epsilon 0.5 --max-nodes 6

Exit codes: 0 success, 1 usage error, 2 data error (missing file, malformed
edge list or cache, unknown node).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .audit import privacy_audit, rewiring_audit
from .bounds import ceiling_table
from .errors import (
    CapacityError,
    ConfigurationError,
    DomainError,
    EdgeListParseError,
    GraphCacheError,
    NodeDomainError,
)
from .experiment import (
    DEFAULT_TRIALS,
    AccuracyReport,
    ExperimentConfig,
    compare_reports,
    concentration_summary,
    run_experiment,
)
from .graph import Graph, graph_stats, read_graph, write_graph_cache
from .io_utils import write_data
from .mechanisms import (
    QUADRATURE_MAX_CANDIDATES,
    Mechanism,
    MechanismParams,
    RecommendationDistribution,
    argmax_distribution,
    derive_rng,
    exponential_distribution,
    laplace_recommend,
    laplace_recommend_batch,
    laplace_selection_probabilities,
    linear_smoothing,
    sample,
    smoothing_param_for_epsilon,
)
from .utility import (
    DEFAULT_GAMMA,
    DEFAULT_MAX_LENGTH,
    UtilityFunctionSpec,
    scale_to_unit_sensitivity,
    utility_vector,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

EXPLAIN_TOP = 10
EXPLAIN_TRIALS = 100_000

_DATA_ERRORS = (FileNotFoundError, EdgeListParseError, GraphCacheError, NodeDomainError, CapacityError)
_USAGE_ERRORS = (ConfigurationError, DomainError)


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the usage-error code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def get_log_file() -> Path:
    """Crash log path from ``PRIVREC_LOG_FILE`` or ``~/.privrec.log``."""
    log_path = os.environ.get("PRIVREC_LOG_FILE")
    if log_path:
        return Path(log_path)
    return Path.home() / ".privrec.log"


def log_error(error_msg: str, exception: Optional[BaseException] = None) -> None:
    """Append a timestamped error (and traceback) to the crash log."""
    try:
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        with open(get_log_file(), "a", encoding="utf-8") as f:
            f.write(f"\n{'=' * 70}\n")
            f.write(f"[{timestamp}] privrec error\n")
            f.write(f"{'=' * 70}\n")
            f.write(f"{error_msg}\n")
            if exception is not None:
                f.write("\nTraceback:\n")
                f.write("".join(traceback.format_exception(type(exception), exception, exception.__traceback__)))
            f.write(f"{'=' * 70}\n")
    except OSError:
        pass


def _default_seed() -> int:
    raw = os.environ.get("PRIVREC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"⚠️  Ignoring non-integer PRIVREC_SEED={raw!r}")
        return 0


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------
def _add_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--input",
        required=True,
        help="Graph file: SNAP edge list (optionally .gz) or .prgc cache",
    )


def _add_utility(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--utility",
        choices=["cn", "wp"],
        default="cn",
        help="Utility function: cn (common neighbours) or wp (weighted paths) (default: cn)",
    )
    parser.add_argument(
        "--gamma",
        type=float,
        default=DEFAULT_GAMMA,
        help=f"Weighted-paths decay γ in (0, 1) (default: {DEFAULT_GAMMA})",
    )
    parser.add_argument(
        "--max-length",
        type=int,
        default=DEFAULT_MAX_LENGTH,
        help=f"Longest walk counted by weighted paths, >= 2 (default: {DEFAULT_MAX_LENGTH})",
    )


def _add_epsilon(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, required=True, help="Privacy parameter ε > 0")


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=_default_seed(),
        help="Root random seed (default: $PRIVREC_SEED or 0)",
    )


def _add_c_grid(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--c-grid",
        type=float,
        nargs="+",
        default=[1.0],
        metavar="C",
        help="Threshold fractions in (0, 1] tried by the ceiling (default: 1.0)",
    )


def _create_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser."""
    parser = _Parser(
        prog="privrec",
        description="Differentially private social recommendations: mechanisms, bounds and experiments.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log debug messages")
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and hide progress bars")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    ingest = commands.add_parser("ingest", help="Validate an edge list and write the binary cache")
    _add_input(ingest)
    ingest.add_argument("--output", required=True, help="Destination .prgc cache file")

    stats = commands.add_parser("stats", help="Print graph statistics as JSON")
    _add_input(stats)

    recommend = commands.add_parser("recommend", help="Run one private recommendation")
    _add_input(recommend)
    recommend.add_argument("--target", type=int, required=True, help="Raw id of the node receiving the recommendation")
    recommend.add_argument(
        "--mechanism",
        choices=[m.value for m in Mechanism],
        default=Mechanism.EXPONENTIAL.value,
        help="exp (exponential), lap (Laplace noisy max) or smooth (linear smoothing) (default: exp)",
    )
    _add_epsilon(recommend)
    _add_seed(recommend)
    _add_utility(recommend)
    recommend.add_argument(
        "--explain",
        action="store_true",
        help=f"Also print the top-{EXPLAIN_TOP} selection probabilities as CSV",
    )

    evaluate = commands.add_parser("evaluate", help="Measure accuracy for every node and write CSV reports")
    _add_input(evaluate)
    evaluate.add_argument("--output-dir", required=True, help="Directory for report, aggregates, concentration and config.json")
    _add_epsilon(evaluate)
    _add_utility(evaluate)
    evaluate.add_argument(
        "--mechanism",
        choices=[m.value for m in Mechanism],
        nargs="+",
        default=[Mechanism.EXPONENTIAL.value, Mechanism.LAPLACE.value],
        help="Mechanisms to evaluate (default: exp lap)",
    )
    evaluate.add_argument(
        "--trials",
        type=int,
        default=DEFAULT_TRIALS,
        help=f"Laplace Monte Carlo trials per node (default: {DEFAULT_TRIALS})",
    )
    _add_seed(evaluate)
    _add_c_grid(evaluate)
    evaluate.add_argument("--workers", type=int, default=None, help="Worker threads (default: from memory and CPUs)")
    evaluate.add_argument(
        "--report-format",
        choices=["csv", "parquet"],
        default="csv",
        help="Format of the report tables (default: csv)",
    )

    bounds = commands.add_parser("bounds", help="Write per-node accuracy ceilings as CSV")
    _add_input(bounds)
    _add_epsilon(bounds)
    _add_utility(bounds)
    _add_c_grid(bounds)
    bounds.add_argument("--output", default=None, help="CSV destination (default: stdout)")

    compare = commands.add_parser("compare", help="Compare two evaluate outputs and print a JSON summary")
    compare.add_argument("--left", required=True, help="Report file or evaluate output directory")
    compare.add_argument("--right", required=True, help="Report file or evaluate output directory")
    compare.add_argument("--left-series", default="acc_exp", help="Column of the left report (default: acc_exp)")
    compare.add_argument("--right-series", default="acc_lap", help="Column of the right report (default: acc_lap)")

    audit = commands.add_parser("audit", help="Exhaustive privacy audit over small graphs")
    audit.add_argument(
        "--mechanism",
        choices=[m.value for m in Mechanism],
        default=Mechanism.EXPONENTIAL.value,
        help="Mechanism to audit (default: exp)",
    )
    audit.add_argument("--epsilon", type=float, default=0.5, help="Privacy parameter ε > 0 (default: 0.5)")
    audit.add_argument("--max-nodes", type=int, default=5, help="Largest graph size enumerated (default: 5)")
    audit.add_argument(
        "--smoothing-x",
        type=float,
        default=None,
        help="Fixed smoothing weight to audit (default: calibrated per instance to ε)",
    )
    audit.add_argument(
        "--rewiring",
        action="store_true",
        help="Audit the common-neighbours rewiring construction instead of a mechanism",
    )
    return parser


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet


def _utility_spec(args: argparse.Namespace) -> UtilityFunctionSpec:
    return UtilityFunctionSpec(kind=args.utility, gamma=args.gamma, max_length=args.max_length)


def _cmd_ingest(args: argparse.Namespace) -> int:
    g = read_graph(args.input)
    g.validate()
    write_graph_cache(g, args.output)
    print(json.dumps({"nodes": g.n, "edges": g.m, "output": str(args.output)}))
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    print(json.dumps(graph_stats(read_graph(args.input))))
    return EXIT_OK


def _explain(g: Graph, dist: RecommendationDistribution, values: np.ndarray) -> None:
    by_node = dict(zip(dist.candidates.tolist(), values.tolist()))
    rows = [
        {"raw_id": g.raw_label(node), "utility": by_node[node], "probability": p}
        for node, p in dist.top(EXPLAIN_TOP)
    ]
    pd.DataFrame(rows, columns=["raw_id", "utility", "probability"]).to_csv(
        sys.stdout, index=False, lineterminator="\n"
    )


def _cmd_recommend(args: argparse.Namespace) -> int:
    g = read_graph(args.input)
    r = g.node_of(args.target)
    uv = scale_to_unit_sensitivity(utility_vector(g, r, _utility_spec(args)))
    if len(uv) == 0:
        raise NodeDomainError(f"node {args.target} is adjacent to every other node; nothing to recommend")
    params = MechanismParams(epsilon=args.epsilon, seed=args.seed)
    rng = derive_rng(params.seed, r)
    mechanism = Mechanism(args.mechanism)

    if mechanism is Mechanism.LAPLACE:
        choice = laplace_recommend(uv, params, rng)
        dist = None
        if args.explain:
            if len(uv) <= QUADRATURE_MAX_CANDIDATES:
                dist = laplace_selection_probabilities(uv, params)
            else:
                picks = laplace_recommend_batch(uv, params, derive_rng(params.seed, r, 1), EXPLAIN_TRIALS)
                counts = np.searchsorted(uv.candidates, picks)
                freq = np.bincount(counts, minlength=len(uv)) / EXPLAIN_TRIALS
                dist = RecommendationDistribution(uv.candidates, freq)
    else:
        if mechanism is Mechanism.EXPONENTIAL:
            dist = exponential_distribution(uv, params)
        else:
            dist = linear_smoothing(argmax_distribution(uv), smoothing_param_for_epsilon(args.epsilon, len(uv)))
        choice = sample(dist, rng)

    print(g.raw_label(choice))
    if args.explain and dist is not None:
        _explain(g, dist, uv.values)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_args(args)
    g = read_graph(args.input)
    report = run_experiment(g, cfg, progress=_progress(args))
    report.config["input"] = Path(args.input).name
    paths = report.write(args.output_dir, fmt=args.report_format)
    paths["concentration"] = Path(args.output_dir) / f"concentration.{args.report_format}"
    write_data(concentration_summary(g, cfg.utility), paths["concentration"])
    violations = report.bound_violations()
    if len(violations):
        logger.warning(f"⚠️  {len(violations)} measured accuracies exceed their ceiling")
    logger.info(f"📄 Report: {paths['report']}")
    return EXIT_OK


def _cmd_bounds(args: argparse.Namespace) -> int:
    spec = _utility_spec(args)
    if not args.epsilon >= 0:
        raise ConfigurationError(f"epsilon must be nonnegative, got {args.epsilon}")
    if any(not (0.0 < c <= 1.0) for c in args.c_grid):
        raise ConfigurationError(f"c-grid values must lie in (0, 1], got {args.c_grid}")
    g = read_graph(args.input)
    table = ceiling_table(g, spec, args.epsilon, tuple(args.c_grid), progress=_progress(args))
    if args.output:
        write_data(table, args.output)
    else:
        table.to_csv(sys.stdout, index=False, lineterminator="\n")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    summary = compare_reports(
        AccuracyReport.read(args.left),
        AccuracyReport.read(args.right),
        args.left_series,
        args.right_series,
    )
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_audit(args: argparse.Namespace) -> int:
    if args.rewiring:
        result = rewiring_audit(args.max_nodes, progress=_progress(args))
    else:
        result = privacy_audit(
            Mechanism(args.mechanism),
            args.epsilon,
            args.max_nodes,
            smoothing_x=args.smoothing_x,
            progress=_progress(args),
        )
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "stats": _cmd_stats,
    "recommend": _cmd_recommend,
    "evaluate": _cmd_evaluate,
    "bounds": _cmd_bounds,
    "compare": _cmd_compare,
    "audit": _cmd_audit,
}


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)


def dispatch(args: argparse.Namespace, parser: Optional[argparse.ArgumentParser] = None) -> int:
    """
    Run the subcommand selected in ``args``.

    Returns
    -------
    int
        Exit code.
    """
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_DATA
    except _USAGE_ERRORS as exc:
        if parser is not None:
            parser.print_usage(sys.stderr)
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the ``privrec`` command."""
    parser = _create_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        return dispatch(args, parser)
    except Exception as exc:
        log_error(f"Unhandled error in 'privrec {args.command}'", exc)
        logger.error(f"❌ Unexpected error; details appended to {get_log_file()}")
        raise


if __name__ == "__main__":
    sys.exit(main())
