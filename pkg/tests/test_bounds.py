"""
Tests for privrec.bounds.

Tests cover:
- The accuracy ceiling and epsilon lower bounds (hand values, inverse pair)
- Edge-alteration budgets, including the weighted-paths feasibility root
- Per-node ceilings and the ceiling table
- The common-neighbours rewiring construction
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from privrec.bounds import (
    BoundInputs,
    _smallest_feasible_c,
    accuracy_upper_bound,
    ceiling_table,
    rewire_to_top,
    epsilon_lower_bound,
    epsilon_lower_bound_asymptotic_shape,
    epsilon_lower_bound_concentration,
    exp_mech_ratio_floor,
    node_accuracy_ceiling,
    t_common_neighbors,
    t_generic,
    t_weighted_paths,
    weighted_paths_epsilon_shape,
)
from privrec.errors import (
    DomainError,
    InfeasibleBoundError,
    PreconditionError,
    UndefinedAccuracyError,
)
from privrec.graph import Graph, apply_flip
from privrec.mechanisms import MechanismParams, expected_accuracy, exponential_distribution
from privrec.utility import UtilityFunctionSpec, utility_vector
from .data_generators import random_graph

CN = UtilityFunctionSpec("cn")


@pytest.fixture(scope="module")
def lonely_pair():
    """0 - 1 - 2 plus isolated 3, 4, 5: target 0 has candidates 2..5 with utilities 1, 0, 0, 0."""
    return Graph.from_edges(6, [(0, 1), (1, 2)])


class TestBoundInputs:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n": 0, "k": 0, "t": 1},
            {"n": 5, "k": 6, "t": 1},
            {"n": 5, "k": -1, "t": 1},
            {"n": 5, "k": 1, "t": 0},
            {"n": 5, "k": 1, "t": 1, "c": 0.0},
            {"n": 5, "k": 1, "t": 1, "c": 1.5},
            {"n": 5, "k": 1, "t": 1, "epsilon": -0.1},
            {"n": 5, "k": 1, "t": 1, "beta": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            BoundInputs(**kwargs)

    def test_zero_k_and_epsilon_allowed(self):
        BoundInputs(n=5, k=0, t=1, epsilon=0.0)


class TestAccuracyUpperBound:
    def test_hand_value(self):
        b = BoundInputs(n=101, k=1, t=3, c=1.0, epsilon=0.0)
        assert accuracy_upper_bound(b) == pytest.approx(1 - 100 / 102, abs=1e-12)

    def test_no_low_group(self):
        assert accuracy_upper_bound(BoundInputs(n=4, k=4, t=2, epsilon=0.3)) == 1.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 5000))
            k = int(rng.integers(0, n))
            t = int(rng.integers(1, 30))
            c = float(rng.uniform(0.05, 1.0))
            eps = float(rng.uniform(0.0, 1.0))
            direct = 1 - c * (n - k) / ((n - k) + (k + 1) * math.exp(eps * t))
            assert accuracy_upper_bound(BoundInputs(n, k, t, c, eps)) == pytest.approx(direct, abs=1e-12)

    def test_large_exponent_does_not_overflow(self):
        assert accuracy_upper_bound(BoundInputs(n=10, k=1, t=1000, epsilon=10.0)) == pytest.approx(1.0)

    def test_infinite_epsilon(self):
        assert accuracy_upper_bound(BoundInputs(n=10, k=1, t=3, epsilon=math.inf)) == 1.0

    def test_increases_with_epsilon(self):
        values = [accuracy_upper_bound(BoundInputs(1000, 3, 5, 1.0, eps)) for eps in (0.0, 0.1, 0.5, 1.0)]
        assert values == sorted(values)


class TestEpsilonLowerBound:
    def test_hand_value(self):
        b = BoundInputs(n=1001, k=0, t=5, c=1.0, delta=0.1)
        assert epsilon_lower_bound(b) == pytest.approx((math.log(9) + math.log(1001)) / 5, rel=1e-12)

    def test_inverse_of_ceiling(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 10_000))
            k = int(rng.integers(0, n))
            t = int(rng.integers(1, 20))
            c = float(rng.uniform(0.1, 1.0))
            delta = float(rng.uniform(0.01, 0.99)) * c
            eps = epsilon_lower_bound(BoundInputs(n, k, t, c, delta=delta))
            if eps < 0:
                continue
            ceiling = accuracy_upper_bound(BoundInputs(n, k, t, c, eps))
            assert ceiling == pytest.approx(1 - delta, abs=1e-9)

    def test_delta_domain(self):
        with pytest.raises(DomainError):
            epsilon_lower_bound(BoundInputs(n=10, k=1, t=1))
        with pytest.raises(DomainError):
            epsilon_lower_bound(BoundInputs(n=10, k=1, t=1, c=0.5, delta=0.5))
        with pytest.raises(DomainError):
            epsilon_lower_bound(BoundInputs(n=10, k=10, t=1, delta=0.1))

    def test_concentration_hand_value(self):
        value = epsilon_lower_bound_concentration(10**6, 1, 1)
        assert value == pytest.approx(math.log(10**6) - math.log(math.log(10**6)), rel=1e-12)
        assert value == pytest.approx(11.1897, abs=1e-4)

    def test_concentration_with_large_beta(self):
        n = 10**6
        beta = int(n / math.log(n))
        for t in (1, 3):
            assert epsilon_lower_bound_concentration(n, beta, t) <= 2 * math.log(math.log(n)) / t

    def test_concentration_domain(self):
        with pytest.raises(DomainError):
            epsilon_lower_bound_concentration(2, 1, 1)
        with pytest.raises(DomainError):
            epsilon_lower_bound_concentration(100, 0, 1)

    def test_asymptotic_shape_matches_generic_budget(self):
        n, beta, alpha = 10**5, 3, 2.0
        t = 4 * alpha * math.log(n)
        assert epsilon_lower_bound_asymptotic_shape(alpha, n, beta) == pytest.approx(
            epsilon_lower_bound_concentration(n, beta, t), rel=1e-12
        )


class TestBudgets:
    def test_generic(self, star3):
        assert t_generic(star3) == 12

    def test_generic_empty_graph(self):
        with pytest.raises(DomainError):
            t_generic(Graph.from_edges(0, []))

    def test_common_neighbors(self, star3):
        assert t_common_neighbors(star3, 0) == 5
        assert t_common_neighbors(Graph.from_edges(3, [(1, 2)]), 0) == 2

    def test_feasible_root(self):
        c, factor = weighted_paths_epsilon_shape(0.1)
        assert c == pytest.approx(4 - math.sqrt(5), abs=1e-9)
        assert (c - 1) - 0.1 * (c + 1) ** 2 == pytest.approx(0.0, abs=1e-9)
        assert factor == pytest.approx(1 / (2 * c - 1))

    def test_feasible_root_edges(self):
        assert _smallest_feasible_c(0.0) == 1.0
        assert _smallest_feasible_c(0.125) == pytest.approx(3.0)
        with pytest.raises(InfeasibleBoundError):
            _smallest_feasible_c(0.13)

    def test_weighted_paths_budget(self, star3):
        gamma = 0.01
        q = gamma * star3.max_degree
        c, _ = weighted_paths_epsilon_shape(q / (1 - q))
        assert t_weighted_paths(star3, 0, gamma) == math.ceil(3 + 6 * (c - 1) - 1e-9)
        assert t_weighted_paths(star3, 0, gamma) >= star3.degree(0)

    def test_weighted_paths_budget_tends_to_degree(self, star3):
        assert t_weighted_paths(star3, 0, 1e-13) == 3
        assert t_weighted_paths(star3, 1, 1e-13) == 1

    def test_weighted_paths_infeasible(self, star3):
        with pytest.raises(InfeasibleBoundError):
            t_weighted_paths(star3, 0, 0.5)
        with pytest.raises(InfeasibleBoundError):
            t_weighted_paths(star3, 0, 0.05)


class TestNodeCeiling:
    def test_hand_value(self, lonely_pair):
        bound = node_accuracy_ceiling(lonely_pair, 0, CN, epsilon=0.1)
        assert (bound.k_used, bound.t_used, bound.c_used) == (1, 3, 1.0)
        expected = 1 - 3 / (3 + 2 * math.exp(0.3))
        assert bound.accuracy_ceiling == pytest.approx(expected, abs=1e-12)

    def test_grid_takes_minimum(self, lonely_pair):
        coarse = node_accuracy_ceiling(lonely_pair, 0, CN, 0.1, c_grid=(1.0,))
        fine = node_accuracy_ceiling(lonely_pair, 0, CN, 0.1, c_grid=(0.25, 0.5, 0.75, 1.0))
        assert fine.accuracy_ceiling <= coarse.accuracy_ceiling
        assert fine.c_used == 1.0

    def test_refinement_never_loosens(self, random_graphs):
        for g in random_graphs[:6]:
            for r in range(g.n):
                try:
                    coarse = node_accuracy_ceiling(g, r, CN, 0.5, c_grid=(1.0,))
                except UndefinedAccuracyError:
                    continue
                fine = node_accuracy_ceiling(g, r, CN, 0.5, c_grid=(0.2, 0.4, 0.6, 0.8, 1.0))
                assert fine.accuracy_ceiling <= coarse.accuracy_ceiling + 1e-15

    def test_zero_utility(self):
        g = Graph.from_edges(4, [(1, 2)])
        with pytest.raises(UndefinedAccuracyError):
            node_accuracy_ceiling(g, 0, CN, 0.1)

    def test_empty_grid(self, lonely_pair):
        with pytest.raises(DomainError):
            node_accuracy_ceiling(lonely_pair, 0, CN, 0.1, c_grid=())

    def test_weighted_paths_falls_back_to_generic_budget(self, star3):
        spec = UtilityFunctionSpec("wp", gamma=0.5, max_length=3)
        bound = node_accuracy_ceiling(star3, 1, spec, 0.1)
        assert bound.t_used == t_generic(star3)

    def test_ceiling_table(self, lonely_pair):
        table = ceiling_table(lonely_pair, CN, 0.1, progress=False)
        assert list(table.columns) == ["raw_id", "degree", "k", "t", "c_star", "ceiling"]
        # only 0 and 2 have a candidate with a common neighbour
        assert table["raw_id"].tolist() == [0, 2]
        assert table["ceiling"].between(0, 1).all()


class TestRatioFloor:
    def test_values(self):
        assert exp_mech_ratio_floor(1) == 0.5
        assert exp_mech_ratio_floor(9, flat_top=True) == pytest.approx(0.9)
        with pytest.raises(DomainError):
            exp_mech_ratio_floor(0)

    def test_exponential_reaches_floor(self):
        for seed in range(10):
            g = random_graph(25, 0.2, seed)
            for r in range(g.n):
                uv = utility_vector(g, r, CN)
                if uv.u_max == 0:
                    continue
                k = uv.k(1.0)
                for eps in (0.05, 0.5, 2.0):
                    acc = expected_accuracy(exponential_distribution(uv, MechanismParams(eps)), uv)
                    ceiling = accuracy_upper_bound(BoundInputs(len(uv), k, int(uv.u_max), 1.0, eps))
                    assert acc / ceiling >= exp_mech_ratio_floor(k) - 1e-12


class TestRewiring:
    def _apply(self, g, flips):
        for flip in flips:
            g = apply_flip(g, flip)
        return g

    def test_strict_maximum(self):
        g = Graph.from_edges(5, [(0, 1), (1, 2)])
        flips = rewire_to_top(g, 0, 3)
        assert len(flips) == t_common_neighbors(g, 0)
        rewired = self._apply(g, flips)
        uv = utility_vector(rewired, 0, CN)
        assert uv.values[uv.candidates.tolist().index(3)] == uv.u_max
        assert np.count_nonzero(uv.values == uv.u_max) == 1

    def test_tie_when_every_shared_node_touches_a_rival(self):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (1, 3), (2, 3)])
        rewired = self._apply(g, rewire_to_top(g, 0, 4))
        uv = utility_vector(rewired, 0, CN)
        assert uv.values[uv.candidates.tolist().index(4)] == uv.u_max
        assert np.count_nonzero(uv.values == uv.u_max) == 2

    def test_no_rivals_needs_only_neighbour_edges(self):
        g = Graph.from_edges(4, [(0, 1)])
        flips = rewire_to_top(g, 0, 2)
        assert [(f.u, f.v) for f in flips] == [(2, 1)]

    def test_preconditions(self, path3):
        with pytest.raises(PreconditionError):
            rewire_to_top(path3, 0, 1)
        with pytest.raises(PreconditionError):
            rewire_to_top(path3, 0, 0)
        with pytest.raises(PreconditionError):
            rewire_to_top(path3, 0, 2)

    def test_random_graphs_reach_weak_maximum_within_budget(self):
        for seed in range(8):
            g = random_graph(9, 0.3, seed)
            for r in range(g.n):
                uv = utility_vector(g, r, CN)
                for x in uv.candidates[uv.values == 0][:2]:
                    flips = rewire_to_top(g, r, int(x))
                    assert len(flips) <= t_common_neighbors(g, r)
                    after = utility_vector(self._apply(g, flips), r, CN)
                    assert after.values[after.candidates.tolist().index(int(x))] == after.u_max
