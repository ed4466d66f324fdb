"""
Privacy/accuracy trade-off bounds.

Any monotone ε-private recommender must leave accuracy on the table whenever a
low-utility candidate can be turned into the best one by ``t`` edge changes.
This module evaluates the resulting formulas:

- :func:`accuracy_upper_bound` - best achievable accuracy for given
  ``(n, k, t, c, ε)``
- :func:`epsilon_lower_bound` - smallest ε compatible with accuracy ``1 - δ``
- :func:`epsilon_lower_bound_concentration` - the finite-n form for
  utilities concentrated on ``β`` nodes
- :func:`t_generic`, :func:`t_common_neighbors`, :func:`t_weighted_paths` -
  edge-alteration budgets
- :func:`node_accuracy_ceiling` - the per-node ceiling reported next to the
  measured accuracies
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import optimize, special
from tqdm import tqdm

from .errors import (
    DomainError,
    InfeasibleBoundError,
    PreconditionError,
    UndefinedAccuracyError,
)
from .graph import EdgeFlip, FlipDirection, Graph, candidate_set, common_neighbor_count
from .utility import UtilityFunctionSpec, UtilityKind, UtilityVector, utility_vector

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = (1.0,)


@dataclass(frozen=True)
class BoundInputs:
    """
    Inputs of the trade-off formulas.

    Parameters
    ----------
    n : int
        Candidate count.
    k : int
        Candidates with utility above ``(1 - c) · u_max``; 0 is allowed.
    t : int
        Edge-alteration budget, at least 1.
    c : float
        Threshold fraction in (0, 1].
    epsilon : float
        Privacy parameter, nonnegative (``math.inf`` allowed).
    beta : int, default 1
        Concentration parameter.
    delta : float, optional
        Accuracy loss in (0, c); only :func:`epsilon_lower_bound` reads it.
    """

    n: int
    k: int
    t: int
    c: float = 1.0
    epsilon: float = 0.0
    beta: int = 1
    delta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DomainError(f"n must be at least 1, got {self.n}")
        if not (0 <= self.k <= self.n):
            raise DomainError(f"k must lie in [0, n], got k={self.k}, n={self.n}")
        if self.t < 1:
            raise DomainError(f"t must be at least 1, got {self.t}")
        if not (0.0 < self.c <= 1.0):
            raise DomainError(f"c must lie in (0, 1], got {self.c}")
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.beta < 1:
            raise DomainError(f"beta must be at least 1, got {self.beta}")


@dataclass(frozen=True)
class NodeBound:
    target: int
    accuracy_ceiling: float
    t_used: int
    k_used: int
    c_used: float


# ----------------------------------------------------------------------
# Formulas
# ----------------------------------------------------------------------
def accuracy_upper_bound(b: BoundInputs) -> float:
    """
    ``1 - c·(n - k) / ((n - k) + (k + 1)·e^(εt))``, clamped to [0, 1].

    Returns 1 when ``n == k`` (no low-utility group to move mass from).

    Examples
    --------
    >>> round(accuracy_upper_bound(BoundInputs(n=101, k=1, t=3, c=1.0, epsilon=0.0)), 4)
    0.0196
    """
    low = b.n - b.k
    if low == 0:
        return 1.0
    # c / (1 + (k+1)/(n-k) · e^(εt)) written as a logistic for large εt
    exponent = b.epsilon * b.t + math.log((b.k + 1) / low)
    loss = b.c * float(special.expit(-exponent))
    return min(max(1.0 - loss, 0.0), 1.0)


def epsilon_lower_bound(b: BoundInputs) -> float:
    """
    ``(1/t)·(ln((c - δ)/δ) + ln((n - k)/(k + 1)))``.

    Raises
    ------
    DomainError
        If ``δ`` is missing or outside (0, c), or ``n == k``.
    """
    if b.delta is None or not (0.0 < b.delta < b.c):
        raise DomainError(f"delta must lie in (0, c={b.c}), got {b.delta}")
    if b.n == b.k:
        raise DomainError("no low-utility candidates: the bound is vacuous")
    return (math.log((b.c - b.delta) / b.delta) + math.log((b.n - b.k) / (b.k + 1))) / b.t


def epsilon_lower_bound_concentration(n: int, beta: int, t: int) -> float:
    """
    ``(ln n - ln β - ln ln n) / t`` (natural logarithms).

    Examples
    --------
    >>> round(epsilon_lower_bound_concentration(10**6, 1, 1), 4)
    11.1897
    """
    if n < 3:
        raise DomainError(f"n must be at least 3, got {n}")
    if beta < 1 or t < 1:
        raise DomainError(f"beta and t must be at least 1, got beta={beta}, t={t}")
    log_n = math.log(n)
    return (log_n - math.log(beta) - math.log(log_n)) / t


def epsilon_lower_bound_asymptotic_shape(alpha: float, n: int, beta: int) -> float:
    """
    ``(1/α)·(1/4)·(1 - (ln β + ln ln n)/ln n)``.

    The concentration bound with the generic budget ``t = 4·α·ln n`` of a
    graph whose maximum degree is ``α·ln n``.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    log_n = math.log(n)
    return (1.0 / alpha) * 0.25 * (1.0 - (math.log(beta) + math.log(log_n)) / log_n)


# ----------------------------------------------------------------------
# Edge-alteration budgets
# ----------------------------------------------------------------------
def t_generic(g: Graph) -> int:
    """``4 · d_max``: enough swaps to exchange any two nodes' neighbourhoods."""
    if g.n == 0:
        raise DomainError("t_generic needs a nonempty graph")
    return 4 * g.max_degree


def t_common_neighbors(g: Graph, r: int) -> int:
    """``degree(r) + 2``."""
    return g.degree(r) + 2


def _smallest_feasible_c(s: float) -> float:
    """Smallest ``c >= 1`` with ``c - 1 >= s·(c + 1)²``."""
    if s < 0:
        raise DomainError(f"s must be nonnegative, got {s}")
    if s == 0:
        return 1.0
    # s·c² + (2s - 1)·c + (s + 1) has real roots iff 1 - 8s >= 0
    if 1.0 - 8.0 * s < 0:
        raise InfeasibleBoundError(f"no c satisfies the rewiring condition for s={s:.6g}")
    vertex = (1.0 - 2.0 * s) / (2.0 * s)

    def slack(c: float) -> float:
        return (c - 1.0) - s * (c + 1.0) ** 2

    if slack(vertex) <= 0:
        return vertex
    return float(optimize.brentq(slack, 1.0, vertex, xtol=1e-12))


def weighted_paths_epsilon_shape(s: float) -> tuple[float, float]:
    """
    Smallest feasible ``c`` for ``s = γ·d_max/(1 - γ·d_max)`` and the factor ``1/(2c - 1)``.

    The factor scales the common-neighbours lower bound when weighted paths
    replace common neighbours.
    """
    c = _smallest_feasible_c(s)
    return c, 1.0 / (2.0 * c - 1.0)


def t_weighted_paths(g: Graph, r: int, gamma: float) -> int:
    """
    ``⌈d_r + 2·(c - 1)·d_r⌉`` for the smallest feasible ``c``.

    Raises
    ------
    InfeasibleBoundError
        If ``γ·d_max >= 1`` or no ``c`` satisfies the rewiring condition.
    """
    d_r = g.degree(r)
    q = gamma * g.max_degree
    if q >= 1.0:
        raise InfeasibleBoundError(f"gamma·d_max = {q:.6g} >= 1")
    c = _smallest_feasible_c(q / (1.0 - q))
    return int(math.ceil(d_r + 2.0 * (c - 1.0) * d_r - 1e-9))


def _budget(g: Graph, r: int, spec: UtilityFunctionSpec) -> int:
    if spec.kind is UtilityKind.COMMON_NEIGHBORS:
        return t_common_neighbors(g, r)
    try:
        t = t_weighted_paths(g, r, spec.gamma)
    except InfeasibleBoundError as exc:
        logger.debug(f"Node {r}: {exc}; falling back to the generic budget")
        t = t_generic(g)
    return max(t, 1)


def node_accuracy_ceiling(
    g: Graph,
    r: int,
    spec: UtilityFunctionSpec,
    epsilon: float,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    uv: Optional[UtilityVector] = None,
) -> NodeBound:
    """
    Tightest accuracy ceiling for target ``r`` over the thresholds in ``c_grid``.

    Parameters
    ----------
    g : Graph
    r : int
    spec : UtilityFunctionSpec
    epsilon : float
    c_grid : sequence of float, default (1.0,)
        Thresholds to try; the minimum ceiling wins (first ``c`` on ties).
    uv : UtilityVector, optional
        Precomputed utilities of ``r`` (saves a recomputation in the harness).

    Raises
    ------
    UndefinedAccuracyError
        If every candidate of ``r`` has zero utility.
    """
    if not c_grid:
        raise DomainError("c_grid must contain at least one value")
    if uv is None:
        uv = utility_vector(g, r, spec)
    if uv.u_max <= 0:
        raise UndefinedAccuracyError(f"target {r} has zero maximum utility")

    t = _budget(g, r, spec)
    n = len(uv)
    best: Optional[NodeBound] = None
    for c in c_grid:
        k = uv.k(c)
        ceiling = accuracy_upper_bound(BoundInputs(n=n, k=k, t=t, c=float(c), epsilon=epsilon))
        if best is None or ceiling < best.accuracy_ceiling:
            best = NodeBound(int(r), ceiling, t, k, float(c))
    return best


def exp_mech_ratio_floor(k: int, flat_top: bool = False) -> float:
    """Guaranteed fraction of the ceiling reached by the exponential mechanism."""
    if k < 1:
        raise DomainError(f"k must be at least 1, got {k}")
    return k / (k + 1) if flat_top else 1.0 / (k + 1)


def ceiling_table(
    g: Graph,
    spec: UtilityFunctionSpec,
    epsilon: float,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    progress: bool = True,
) -> pd.DataFrame:
    """
    Ceilings of every node with positive maximum utility.

    Returns
    -------
    pd.DataFrame
        Columns ``raw_id, degree, k, t, c_star, ceiling`` ordered by node id.
    """
    rows = []
    for r in tqdm(range(g.n), desc="Bounds", unit="node", disable=not progress):
        try:
            bound = node_accuracy_ceiling(g, r, spec, epsilon, c_grid)
        except UndefinedAccuracyError:
            continue
        rows.append(
            {
                "raw_id": g.raw_label(r),
                "degree": g.degree(r),
                "k": bound.k_used,
                "t": bound.t_used,
                "c_star": bound.c_used,
                "ceiling": bound.accuracy_ceiling,
            }
        )
    return pd.DataFrame(rows, columns=["raw_id", "degree", "k", "t", "c_star", "ceiling"])


# ----------------------------------------------------------------------
# Common-neighbours rewiring
# ----------------------------------------------------------------------
def rewire_to_top(g: Graph, r: int, x: int) -> list[EdgeFlip]:
    """
    Edge additions that lift a zero-utility candidate ``x`` to the top.

    ``x`` is joined to every neighbour of ``r``, which gives it ``d_r``
    common neighbours with ``r``. If another candidate still matches it, a
    node ``z`` outside ``N(r) ∪ {r, x}`` is joined to both ``r`` and ``x``;
    ``z`` is chosen to be adjacent to as few of the remaining rivals as
    possible (smallest id on ties). At most ``d_r + 2`` flips.

    ``x`` always ends with maximum common-neighbours utility; it is the
    unique maximum unless every possible ``z`` is adjacent to a rival.

    Raises
    ------
    PreconditionError
        If ``x`` is not a candidate of ``r`` or has positive utility.
    """
    r = g.check_node(r)
    x = g.check_node(x)
    neighbours_r = g.neighbors(r)
    if x == r or x in set(neighbours_r.tolist()):
        raise PreconditionError(f"node {x} is not a candidate of {r}")
    if common_neighbor_count(g, x, r) != 0:
        raise PreconditionError(f"candidate {x} already has common neighbours with {r}")

    adjacency = g.adjacency_matrix()
    flips = [EdgeFlip(x, int(a), FlipDirection.ADD) for a in neighbours_r]
    d_r = neighbours_r.size

    in_nr = np.zeros(g.n, dtype=bool)
    in_nr[neighbours_r] = True
    # after joining x to N(r), every candidate other than x keeps its old count
    counts = adjacency @ in_nr.astype(np.float64)
    rivals = np.zeros(g.n, dtype=bool)
    rivals[candidate_set(g, r)] = True
    rivals[x] = False
    rivals &= counts >= d_r
    if not rivals.any():
        return flips

    outside = ~in_nr
    outside[[r, x]] = False
    options = np.flatnonzero(outside)
    if options.size == 0:
        return flips

    # rivals adjacent to z would gain a common neighbour along with x
    scores = (adjacency @ rivals.astype(np.float64))[options]
    z = int(options[int(np.argmin(scores))])
    flips.append(EdgeFlip(r, z, FlipDirection.ADD))
    if not g.has_edge(x, z):
        flips.append(EdgeFlip(x, z, FlipDirection.ADD))
    return flips
