"""
Private recommendation mechanisms.

- Exponential: ``p_i ∝ exp(ε · u_i / Δf)``.
- Laplace (report-noisy-max): add Laplace(Δf/ε) noise to every utility and
  recommend the noisy argmax.
- Linear smoothing ``A_S(x)``: mix a base distribution with the uniform one,
  weight ``x`` on the base.

Besides sampling, the module exposes exact selection probabilities (closed
form for the exponential mechanism, adaptive quadrature for Laplace), the
two-candidate closed forms and the smoothing privacy/parameter formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import (
    CapacityError,
    DomainError,
    PreconditionError,
    QuadratureError,
    UndefinedAccuracyError,
)
from .utility import UtilityVector


QUADRATURE_MAX_CANDIDATES = 64
QUADRATURE_WINDOW = 20.0
QUADRATURE_TOLERANCE = 1e-6
# Candidate count above which laplace sampling switches to the grouped path
FAST_PATH_THRESHOLD = 32

_SEED_MASK = (1 << 64) - 1


class Mechanism(str, Enum):
    EXPONENTIAL = "exp"
    LAPLACE = "lap"
    SMOOTHING = "smooth"


@dataclass(frozen=True)
class MechanismParams:
    """
    Privacy parameter, sensitivity and randomness root.

    Parameters
    ----------
    epsilon : float
        Privacy parameter, > 0.
    delta_f : float, default 1.0
        Sensitivity of the utility vector the mechanism is applied to.
    seed : int, default 0
        Root seed; reduced modulo 2**64.
    """

    epsilon: float
    delta_f: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if not self.delta_f > 0:
            raise DomainError(f"delta_f must be positive, got {self.delta_f}")
        object.__setattr__(self, "seed", int(self.seed) & _SEED_MASK)

    @property
    def laplace_scale(self) -> float:
        return self.delta_f / self.epsilon


@dataclass(frozen=True, eq=False)
class RecommendationDistribution:
    """Probability of recommending each candidate, aligned with ``candidates``."""

    candidates: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        candidates = np.asarray(self.candidates, dtype=np.int64).ravel()
        probabilities = np.asarray(self.probabilities, dtype=np.float64).ravel()
        if candidates.size != probabilities.size:
            raise PreconditionError(
                f"{candidates.size} candidates but {probabilities.size} probabilities"
            )
        if candidates.size == 0:
            raise DomainError("a distribution needs at least one candidate")
        if probabilities.min() < 0:
            raise DomainError("probabilities must be nonnegative")
        if abs(probabilities.sum() - 1.0) > 1e-9:
            raise DomainError(f"probabilities sum to {probabilities.sum()!r}, not 1")
        candidates.setflags(write=False)
        probabilities.setflags(write=False)
        object.__setattr__(self, "candidates", candidates)
        object.__setattr__(self, "probabilities", probabilities)

    def __len__(self) -> int:
        return int(self.candidates.size)

    def probability_of(self, node: int) -> float:
        pos = np.searchsorted(self.candidates, node)
        if pos < self.candidates.size and self.candidates[pos] == node:
            return float(self.probabilities[pos])
        return 0.0

    def top(self, count: int = 10) -> list[tuple[int, float]]:
        """The ``count`` most likely candidates, ties broken by smaller id."""
        order = np.lexsort((self.candidates, -self.probabilities))[:count]
        return [(int(self.candidates[i]), float(self.probabilities[i])) for i in order]


# ----------------------------------------------------------------------
# Randomness
# ----------------------------------------------------------------------
def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent generator for ``(seed, *keys)``.

    Streams depend only on the key tuple, so per-node draws do not depend on
    which worker thread evaluates the node or in which order.
    """
    sequence = np.random.SeedSequence(
        entropy=int(seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in keys)
    )
    return np.random.default_rng(sequence)


class AliasTable:
    """
    Vose alias table: O(n) construction, O(1) draws.

    Parameters
    ----------
    probabilities : array-like
        Nonnegative weights; normalised internally.
    """

    def __init__(self, probabilities: Sequence[float]):
        weights = np.asarray(probabilities, dtype=np.float64)
        if weights.size == 0 or weights.min() < 0 or weights.sum() <= 0:
            raise DomainError("alias table needs nonnegative weights with a positive sum")
        n = weights.size
        scaled = weights * (n / weights.sum())

        self._prob = np.ones(n, dtype=np.float64)
        self._alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            lo = small.pop()
            hi = large.pop()
            self._prob[lo] = scaled[lo]
            self._alias[lo] = hi
            scaled[hi] = (scaled[hi] + scaled[lo]) - 1.0
            (small if scaled[hi] < 1.0 else large).append(hi)
        # leftovers are 1 up to rounding and keep prob 1, alias self

    def __len__(self) -> int:
        return int(self._prob.size)

    def draw(self, rng: np.random.Generator, size: Optional[int] = None):
        """Column indices distributed per the table's weights."""
        n = self._prob.size
        if size is None:
            column = int(rng.integers(n))
            return column if rng.random() < self._prob[column] else int(self._alias[column])
        columns = rng.integers(n, size=size)
        keep = rng.random(size) < self._prob[columns]
        return np.where(keep, columns, self._alias[columns])


def sample(dist: RecommendationDistribution, rng: np.random.Generator) -> int:
    """Draw one candidate from ``dist`` using ``rng``."""
    return int(dist.candidates[AliasTable(dist.probabilities).draw(rng)])


# ----------------------------------------------------------------------
# Exponential mechanism and baselines
# ----------------------------------------------------------------------
def _check_sensitivity(uv: UtilityVector, params: MechanismParams) -> None:
    if not math.isclose(uv.sensitivity, params.delta_f, rel_tol=1e-12):
        raise PreconditionError(
            f"utility sensitivity {uv.sensitivity} does not match delta_f {params.delta_f}; "
            "scale the vector or pass the matching delta_f"
        )


def exponential_distribution(uv: UtilityVector, params: MechanismParams) -> RecommendationDistribution:
    """
    Exact output distribution of the exponential mechanism.

    Raises
    ------
    DomainError
        If ``uv`` has no candidates.
    PreconditionError
        If ``uv.sensitivity`` differs from ``params.delta_f``.

    Examples
    --------
    >>> uv = utility_vector_from_values(0, [1, 2], [1.0, 0.0])
    >>> exponential_distribution(uv, MechanismParams(epsilon=1.0)).probabilities
    array([0.73105858, 0.26894142])
    """
    if len(uv) == 0:
        raise DomainError(f"target {uv.target} has no candidates")
    _check_sensitivity(uv, params)
    probabilities = special.softmax(params.epsilon * uv.values / params.delta_f)
    return RecommendationDistribution(uv.candidates, probabilities)


def argmax_distribution(uv: UtilityVector) -> RecommendationDistribution:
    """Non-private optimum: uniform over the candidates of maximum utility."""
    if len(uv) == 0:
        raise DomainError(f"target {uv.target} has no candidates")
    winners = uv.values == uv.u_max
    return RecommendationDistribution(uv.candidates, winners / winners.sum())


def linear_smoothing(dist: RecommendationDistribution, x: float) -> RecommendationDistribution:
    """``p''_i = (1 - x)/n + x · p_i``."""
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"smoothing weight must lie in [0, 1], got {x}")
    n = len(dist)
    return RecommendationDistribution(dist.candidates, (1.0 - x) / n + x * dist.probabilities)


def smoothing_privacy(x: float, n: int) -> float:
    """
    Privacy level ``ln(1 + n·x/(1 - x))`` guaranteed by ``A_S(x)`` over ``n`` candidates.

    Returns ``math.inf`` for ``x = 1`` (no smoothing, no guarantee).
    """
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"smoothing weight must lie in [0, 1], got {x}")
    if n < 1:
        raise DomainError(f"candidate count must be at least 1, got {n}")
    if x == 1.0:
        return math.inf
    return math.log1p(n * x / (1.0 - x))


def smoothing_param_for_epsilon(epsilon: float, n: int) -> float:
    """Smoothing weight ``x`` with ``smoothing_privacy(x, n) == epsilon``."""
    if epsilon < 0:
        raise DomainError(f"epsilon must be nonnegative, got {epsilon}")
    if n < 1:
        raise DomainError(f"candidate count must be at least 1, got {n}")
    if math.isinf(epsilon):
        return 1.0
    grown = math.expm1(epsilon)
    return grown / (grown + n)


def smoothing_param_for_privacy(c: float, n: int) -> float:
    """
    ``x = (n^(2c) - 1)/(n^(2c) - 1 + n)``: the weight giving ``2ε``-privacy for ``ε = c·ln n``.

    Examples
    --------
    >>> round(smoothing_param_for_privacy(0.5, 10), 5)
    0.47368
    """
    if c < 0:
        raise DomainError(f"c must be nonnegative, got {c}")
    if n < 2:
        raise DomainError(f"candidate count must be at least 2, got {n}")
    return smoothing_param_for_epsilon(2.0 * c * math.log(n), n)


# ----------------------------------------------------------------------
# Laplace mechanism
# ----------------------------------------------------------------------
def laplace_selection_indices(
    uv: UtilityVector,
    params: MechanismParams,
    rng: np.random.Generator,
    trials: int = 1,
    fast_path: Optional[bool] = None,
) -> np.ndarray:
    """
    Positions (into ``uv.candidates``) picked by ``trials`` independent runs.

    The naive path draws one noise value per candidate and takes the first
    maximum, so exact ties go to the smallest id. The grouped path draws, for
    every group of ``z`` equal utilities, the group's maximum noise directly
    as ``F^-1(U^(1/z))`` and then a uniform member of the winning group; the
    two are equal in distribution. ``fast_path=None`` picks the grouped path
    for more than :data:`FAST_PATH_THRESHOLD` candidates.
    """
    if len(uv) == 0:
        raise DomainError(f"target {uv.target} has no candidates")
    if trials < 1:
        raise DomainError(f"trials must be at least 1, got {trials}")
    _check_sensitivity(uv, params)
    n = len(uv)
    if n == 1:
        return np.zeros(trials, dtype=np.int64)

    scale = params.laplace_scale
    if fast_path is None:
        fast_path = n > FAST_PATH_THRESHOLD

    if not fast_path:
        noisy = uv.values + rng.laplace(0.0, scale, size=(trials, n))
        return np.argmax(noisy, axis=1).astype(np.int64)

    group_values, inverse, counts = np.unique(uv.values, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    members = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    u = rng.random((trials, group_values.size))
    with np.errstate(divide="ignore"):
        tail = -np.expm1(np.log(u) / counts)
    group_max = group_values + stats.laplace.isf(tail, scale=scale)
    winner = np.argmax(group_max, axis=1)
    offset = rng.integers(0, counts[winner])
    return members[starts[winner] + offset].astype(np.int64)


def laplace_recommend_batch(
    uv: UtilityVector,
    params: MechanismParams,
    rng: np.random.Generator,
    trials: int,
    fast_path: Optional[bool] = None,
) -> np.ndarray:
    """Candidate ids recommended by ``trials`` independent Laplace runs."""
    return uv.candidates[laplace_selection_indices(uv, params, rng, trials, fast_path)]


def laplace_recommend(
    uv: UtilityVector,
    params: MechanismParams,
    rng: np.random.Generator,
    fast_path: Optional[bool] = None,
) -> int:
    """One Laplace (report-noisy-max) recommendation."""
    return int(laplace_recommend_batch(uv, params, rng, 1, fast_path)[0])


def laplace_two_node_win_prob(u1: float, u2: float, epsilon: float) -> float:
    """
    Probability that the first of two candidates wins under Laplace noise.

    With ``d = u1 - u2`` and unit sensitivity this is
    ``1 - e^(-εd) · (1/2 + εd/4)``.

    Raises
    ------
    PreconditionError
        If ``u1 < u2``.
    """
    if u1 < u2:
        raise PreconditionError(f"expected u1 >= u2, got {u1} < {u2}")
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    x = epsilon * (u1 - u2)
    return 1.0 - math.exp(-x) * (0.5 + x / 4.0)


def laplace_selection_probabilities(
    uv: UtilityVector, params: MechanismParams
) -> RecommendationDistribution:
    """
    Exact Laplace selection probabilities by adaptive quadrature.

    ``p_i = ∫ f(y - u_i) Π_{j≠i} F(y - u_j) dy`` over
    ``[u_min - 20b, u_max + 20b]`` with ``b = Δf/ε``. Candidates with equal
    utilities share one integral.

    Raises
    ------
    CapacityError
        For more than 64 candidates.
    QuadratureError
        If the probabilities miss 1 by more than ``QUADRATURE_TOLERANCE``.
    """
    n = len(uv)
    if n == 0:
        raise DomainError(f"target {uv.target} has no candidates")
    if n > QUADRATURE_MAX_CANDIDATES:
        raise CapacityError(
            f"quadrature oracle supports at most {QUADRATURE_MAX_CANDIDATES} candidates, got {n}"
        )
    _check_sensitivity(uv, params)
    if n == 1:
        return RecommendationDistribution(uv.candidates, [1.0])

    b = params.laplace_scale
    values = uv.values
    lo = float(values.min()) - QUADRATURE_WINDOW * b
    hi = float(values.max()) + QUADRATURE_WINDOW * b
    unique_values = np.unique(values)
    breakpoints = [float(v) for v in unique_values if lo < v < hi]

    def log_cdf(z: np.ndarray) -> np.ndarray:
        return np.where(
            z < 0,
            math.log(0.5) + np.minimum(z, 0.0) / b,
            np.log1p(-0.5 * np.exp(-np.maximum(z, 0.0) / b)),
        )

    def integrand(y: float, u_i: float) -> float:
        z = y - values
        total = log_cdf(z).sum()
        z_i = y - u_i
        own_cdf = float(log_cdf(np.array([z_i]))[0])
        log_pdf = -abs(z_i) / b - math.log(2.0 * b)
        return math.exp(log_pdf + total - own_cdf)

    per_value = {}
    for u_i in unique_values:
        result, _ = integrate.quad(
            integrand,
            lo,
            hi,
            args=(float(u_i),),
            points=breakpoints or None,
            epsabs=1e-11,
            epsrel=1e-10,
            limit=200,
        )
        per_value[float(u_i)] = max(result, 0.0)

    probabilities = np.array([per_value[float(v)] for v in values])
    total = probabilities.sum()
    if abs(total - 1.0) > QUADRATURE_TOLERANCE:
        raise QuadratureError(
            f"quadrature probabilities for target {uv.target} sum to {total:.9f}"
        )
    return RecommendationDistribution(uv.candidates, probabilities / total)


# ----------------------------------------------------------------------
# Accuracy and closed forms
# ----------------------------------------------------------------------
def expected_accuracy(dist: RecommendationDistribution, uv: UtilityVector) -> float:
    """
    ``Σ_i u_i · p_i / u_max``.

    Raises
    ------
    UndefinedAccuracyError
        If every utility is zero.
    PreconditionError
        If ``dist`` and ``uv`` are over different candidates.
    """
    if not np.array_equal(dist.candidates, uv.candidates):
        raise PreconditionError("distribution and utility vector have different candidates")
    if uv.u_max <= 0:
        raise UndefinedAccuracyError(f"target {uv.target} has zero maximum utility")
    accuracy = float(np.dot(dist.probabilities, uv.values) / uv.u_max)
    return min(max(accuracy, 0.0), 1.0)


def exponential_expected_utility_two_node(u1: float, u2: float, epsilon: float) -> float:
    """``U_E = (u1·e^(εu1) + u2·e^(εu2)) / (e^(εu1) + e^(εu2))``."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    p1 = special.expit(epsilon * (u1 - u2))
    return float(p1 * u1 + (1.0 - p1) * u2)


def laplace_expected_utility_two_node(u1: float, u2: float, epsilon: float) -> float:
    """``U_L = p·u1 + (1 - p)·u2`` with ``p`` from :func:`laplace_two_node_win_prob`."""
    hi, lo = (u1, u2) if u1 >= u2 else (u2, u1)
    p = laplace_two_node_win_prob(hi, lo, epsilon)
    return p * hi + (1.0 - p) * lo


def max_ln_ratio(p: np.ndarray, q: np.ndarray) -> float:
    """
    ``max_i |ln(p_i / q_i)|`` over two aligned probability vectors.

    Coordinates zero in both are ignored; a coordinate zero in only one gives
    ``math.inf``.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise PreconditionError("probability vectors are not aligned")
    both = (p > 0) & (q > 0)
    if np.any((p > 0) != (q > 0)):
        return math.inf
    if not np.any(both):
        return 0.0
    return float(np.max(np.abs(np.log(p[both]) - np.log(q[both]))))
