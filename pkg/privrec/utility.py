"""
Recommendation utilities.

Two families are supported:

- common neighbours: ``u_i = |N(i) ∩ N(r)|``
- weighted paths: ``u_i = Σ_{l=2..L} γ^(l-1) · W_l(r, i)`` where ``W_l`` counts
  length-``l`` walks, computed by repeated sparse adjacency products

Every :class:`UtilityVector` records its sensitivity (the largest change of a
single coordinate caused by flipping one edge not incident on the target), and
:func:`scale_to_unit_sensitivity` rescales so mechanisms can assume ``Δf = 1``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

import numpy as np

from .errors import ConfigurationError, DomainError, PreconditionError
from .graph import Graph, candidate_set

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.005
DEFAULT_MAX_LENGTH = 4


class UtilityKind(str, Enum):
    COMMON_NEIGHBORS = "cn"
    WEIGHTED_PATHS = "wp"


@dataclass(frozen=True)
class UtilityFunctionSpec:
    """
    Which utility to compute and its parameters.

    Parameters
    ----------
    kind : UtilityKind or str
        ``"cn"`` (common neighbours) or ``"wp"`` (weighted paths).
    gamma : float, default 0.005
        Per-step decay of weighted paths, in (0, 1).
    max_length : int, default 4
        Longest walk counted by weighted paths, at least 2.
    """

    kind: UtilityKind = UtilityKind.COMMON_NEIGHBORS
    gamma: float = DEFAULT_GAMMA
    max_length: int = DEFAULT_MAX_LENGTH

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", UtilityKind(self.kind))
        except ValueError:
            raise ConfigurationError(
                f"Unknown utility kind {self.kind!r}; expected 'cn' or 'wp'"
            ) from None
        if not (0.0 < self.gamma < 1.0):
            raise ConfigurationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if int(self.max_length) != self.max_length or self.max_length < 2:
            raise ConfigurationError(f"max_length must be an integer >= 2, got {self.max_length}")
        object.__setattr__(self, "max_length", int(self.max_length))

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is UtilityKind.WEIGHTED_PATHS:
            out.update(gamma=self.gamma, max_length=self.max_length)
        return out


@dataclass(frozen=True, eq=False)
class UtilityVector:
    """
    Utilities of recommending each candidate to ``target``.

    ``candidates`` is ascending and ``values`` is aligned with it.
    ``u_max`` is 0 for an empty vector.
    """

    target: int
    candidates: np.ndarray
    values: np.ndarray
    sensitivity: float = 1.0
    u_max: float = field(init=False)

    def __post_init__(self) -> None:
        candidates = np.asarray(self.candidates, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if candidates.size != values.size:
            raise PreconditionError(
                f"{candidates.size} candidates but {values.size} utility values"
            )
        if values.size and (not np.all(np.isfinite(values)) or values.min() < 0):
            raise DomainError("utility values must be finite and nonnegative")
        if not (self.sensitivity > 0 and math.isfinite(self.sensitivity)):
            raise DomainError(f"sensitivity must be positive, got {self.sensitivity}")
        candidates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "target", int(self.target))
        object.__setattr__(self, "candidates", candidates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sensitivity", float(self.sensitivity))
        object.__setattr__(self, "u_max", float(values.max()) if values.size else 0.0)

    def __len__(self) -> int:
        return int(self.candidates.size)

    def k(self, c: float = 1.0) -> int:
        """Number of high-utility candidates, ``|{i : u_i > (1 - c) · u_max}|``."""
        if not (0.0 < c <= 1.0):
            raise DomainError(f"c must lie in (0, 1], got {c}")
        return int(np.count_nonzero(self.values > (1.0 - c) * self.u_max))

    def normalized(self) -> "UtilityVector":
        """Values divided by their sum (sensitivity scaled alike)."""
        total = float(self.values.sum())
        if total <= 0:
            raise DomainError("cannot normalise an all-zero utility vector")
        return UtilityVector(self.target, self.candidates, self.values / total, self.sensitivity / total)


def utility_vector_from_values(
    target: int,
    candidates: Iterable[int],
    values: Iterable[float],
    sensitivity: float = 1.0,
) -> UtilityVector:
    """Build a :class:`UtilityVector` directly from aligned candidates and values."""
    return UtilityVector(
        target,
        np.asarray(list(candidates), dtype=np.int64),
        np.asarray(list(values), dtype=np.float64),
        sensitivity,
    )


def weighted_paths_sensitivity(gamma: float, max_length: int, d_max: int) -> float:
    """
    Per-coordinate sensitivity of truncated weighted paths.

    ``Δf = Σ_{l=2..L} γ^(l-1) · (l-1) · d_max^(l-2)``: a flipped edge can sit
    at any of the ``l - 1`` interior positions of a length-``l`` walk from
    ``r`` and the remaining steps have at most ``d_max`` choices each. Bounded
    below by ``γ``, the length-2 term.
    """
    d = max(int(d_max), 1)
    return float(
        sum(gamma ** (l - 1) * (l - 1) * d ** (l - 2) for l in range(2, max_length + 1))
    )


def utility_vector(g: Graph, r: int, spec: UtilityFunctionSpec) -> UtilityVector:
    """
    Utilities of every candidate of ``r``.

    Parameters
    ----------
    g : Graph
    r : int
        Target node id.
    spec : UtilityFunctionSpec

    Returns
    -------
    UtilityVector
        Common neighbours carry sensitivity 1; weighted paths carry
        :func:`weighted_paths_sensitivity` for the graph's maximum degree.

    Examples
    --------
    >>> g = Graph.from_edges(3, [(0, 1), (1, 2)])
    >>> utility_vector(g, 0, UtilityFunctionSpec("cn")).values
    array([1.])
    """
    if not isinstance(spec, UtilityFunctionSpec):
        raise ConfigurationError(f"Expected a UtilityFunctionSpec, got {type(spec).__name__}")
    r = g.check_node(r)
    candidates = candidate_set(g, r)
    adjacency = g.adjacency_matrix()

    walks = adjacency[r].toarray().ravel()
    if spec.kind is UtilityKind.COMMON_NEIGHBORS:
        scores = adjacency @ walks
        sensitivity = 1.0
    else:
        scores = np.zeros(g.n, dtype=np.float64)
        for length in range(2, spec.max_length + 1):
            walks = adjacency @ walks
            scores += spec.gamma ** (length - 1) * walks
        sensitivity = weighted_paths_sensitivity(spec.gamma, spec.max_length, g.max_degree)

    return UtilityVector(r, candidates, scores[candidates], sensitivity)


def scale_to_unit_sensitivity(uv: UtilityVector) -> UtilityVector:
    """Divide the values by ``uv.sensitivity`` so the result has sensitivity 1."""
    if uv.sensitivity == 1.0:
        return uv
    return UtilityVector(uv.target, uv.candidates, uv.values / uv.sensitivity, 1.0)


def concentration_beta(uv: UtilityVector, fraction: float = 0.5) -> int:
    """
    Smallest ``β`` whose ``β`` largest utilities hold ``fraction`` of the total.

    Raises
    ------
    DomainError
        If ``fraction`` is outside (0, 1] or every utility is zero.
    """
    if not (0.0 < fraction <= 1.0):
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    total = float(uv.values.sum())
    if total <= 0:
        raise DomainError("concentration is undefined for an all-zero utility vector")
    prefix = np.cumsum(np.sort(uv.values)[::-1])
    # relative slack absorbs rounding in the running sum
    beta = int(np.searchsorted(prefix, fraction * total * (1.0 - 1e-12), side="left")) + 1
    return min(beta, len(uv))


def exchangeability_check(
    g: Graph,
    r: int,
    spec: UtilityFunctionSpec,
    permutation: Union[Iterable[int], np.ndarray],
) -> bool:
    """
    Whether utilities commute with relabelling the graph by ``permutation``.

    Computes the utility vector on ``g`` and on ``g.relabel(permutation)`` and
    checks that candidate ``i`` of the former has the same value as candidate
    ``permutation[i]`` of the latter.

    Raises
    ------
    PreconditionError
        If ``permutation`` moves ``r`` or is not a bijection.
    """
    perm = np.asarray(list(permutation) if not isinstance(permutation, np.ndarray) else permutation, dtype=np.int64)
    r = g.check_node(r)
    if perm.shape != (g.n,) or perm[r] != r:
        raise PreconditionError(f"permutation must fix the target node {r}")
    permuted = g.relabel(perm)

    original = utility_vector(g, r, spec)
    moved = utility_vector(permuted, r, spec)
    mapped = perm[original.candidates]
    order = np.argsort(mapped)
    if not np.array_equal(mapped[order], moved.candidates):
        return False
    return bool(np.allclose(original.values[order], moved.values, rtol=1e-12, atol=1e-12))
