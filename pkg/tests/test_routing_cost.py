"""Route cost model and minimum-cost selection against brute-force
enumeration of simple paths.
"""
import itertools
import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xfdr.routing_xfdr import (EnergyCostParams, RouteEntry, attempts_multiplier,
                               flood_candidates, link_energy_cost, route_cost,
                               select_min_route)

REL = 1e-12


def params(**kw):
    base = dict(p_ctrl=0.05, p_max=0.2, beta_min_bits=480.0, data_rate=2e6,
                t_inc_total=4e-5, t_rts=0.0, t_fdcts=0.0, e_on=0.0, p_fail=0.0)
    base.update(kw)
    return EnergyCostParams(**base)


class TestLinkEnergyCost:
    def test_hand_value(self):
        # burst time 240 us, 40 us at p_max: 0.05*2e-4 + 0.2*4e-5 = 1.8e-5 J
        assert link_energy_cost(params()) == pytest.approx(1.8e-5, rel=REL)

    def test_half_failure_doubles_cost(self):
        base = link_energy_cost(params())
        assert link_energy_cost(params(p_fail=0.5)) == pytest.approx(2 * base, rel=REL)

    def test_degenerate_no_power_control(self):
        p = params(p_ctrl=0.2, t_inc_total=0.0)
        assert link_energy_cost(p) == pytest.approx(0.2 * 240e-6, rel=REL)

    def test_inconsistent_timing_rejected(self):
        with pytest.raises(ValueError, match="inconsistent timing"):
            params(t_inc_total=3e-4)

    def test_literal_chi(self):
        lit = link_energy_cost(params(p_fail=0.25, literal_chi=True))
        assert lit == pytest.approx(4.0 * link_energy_cost(params()), rel=REL)

    @given(p1=st.floats(0.0, 0.9), p2=st.floats(0.0, 0.9))
    def test_monotone_in_failure_probability(self, p1, p2):
        lo, hi = sorted((p1, p2))
        assert link_energy_cost(params(p_fail=lo)) <= \
            link_energy_cost(params(p_fail=hi)) + 1e-24

    def test_attempts_multiplier(self):
        assert attempts_multiplier(0.0) == 1.0
        assert attempts_multiplier(0.5) == 2.0
        assert attempts_multiplier(0.5, literal_chi=True) == 2.0
        assert attempts_multiplier(0.1, literal_chi=True) == pytest.approx(10.0)


class TestRouteCost:
    def test_empty_sum(self):
        assert route_cost([]) == 0.0

    def test_single_link(self):
        assert route_cost([1.8e-5]) == pytest.approx(1.8e-5, rel=REL)

    def test_hand_sum(self):
        assert route_cost([1.8e-5, 2.2e-5, 0.5e-5]) == pytest.approx(4.5e-5, rel=REL)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            route_cost([1.0, -0.5])


def entry(route, cost, beta=10):
    return RouteEntry(destination=route[-1], next_hop=route[1], route=tuple(route),
                      total_cost=cost, beta_min=beta)


class TestSelectMinRoute:
    def test_single_candidate(self):
        e = entry((0, 1, 2), 4.5e-5)
        assert select_min_route([e]) is e

    def test_tie_breaks_on_fewer_hops(self):
        a = entry((0, 1, 2, 3), 4.5e-5)
        b = entry((0, 4, 3), 4.5e-5)
        assert select_min_route([a, b]) is b

    def test_tie_breaks_lexicographic(self):
        a = entry((0, 5, 3), 4.5e-5)
        b = entry((0, 2, 3), 4.5e-5)
        assert select_min_route([a, b]) is b

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no route"):
            select_min_route([])

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10 ** 6))
    def test_equals_brute_force_on_random_graphs(self, seed):
        """Selection over all candidate paths equals the brute-force optimum
        over every simple path of the graph."""
        rng = random.Random(seed)
        n = rng.randint(3, 8)
        g = nx.gnp_random_graph(n, 0.5, seed=seed)
        costs = {}
        for a, b in g.edges:
            c = rng.uniform(0.1, 10.0)
            costs[(a, b)] = costs[(b, a)] = c
        src, dst = 0, n - 1
        paths = list(nx.all_simple_paths(g, src, dst))
        if not paths:
            return
        cands = [entry(p, route_cost(costs[(a, b)] for a, b in zip(p, p[1:])))
                 for p in paths]
        best = select_min_route(cands)
        brute = min(sum(costs[(a, b)] for a, b in zip(p, p[1:])) for p in paths)
        assert best.total_cost == pytest.approx(brute, rel=1e-9)


class TestFloodReferenceModel:
    def _random_instance(self, seed):
        rng = random.Random(seed)
        n = rng.randint(3, 8)
        g = nx.gnp_random_graph(n, 0.55, seed=seed + 17)
        adj = {v: sorted(g.neighbors(v)) for v in g.nodes}
        costs = {}
        for a, b in g.edges:
            c = rng.uniform(0.1, 10.0)
            costs[(a, b)] = costs[(b, a)] = c
        return g, adj, (lambda a, b: costs[(a, b)]), costs

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10 ** 6))
    def test_unsuppressed_equals_global_optimum(self, seed):
        g, adj, link_cost, costs = self._random_instance(seed)
        src, dst = 0, len(g) - 1
        paths = list(nx.all_simple_paths(g, src, dst))
        cands = flood_candidates(adj, src, dst, link_cost, suppress=False)
        assert bool(cands) == bool(paths)
        if not paths:
            return
        best = select_min_route(cands)
        brute = min(sum(costs[(a, b)] for a, b in zip(p, p[1:])) for p in paths)
        assert best.total_cost == pytest.approx(brute, rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10 ** 6))
    def test_suppressed_candidates_are_valid_paths(self, seed):
        """Surviving candidates are simple paths, and selection is optimal
        among the survivors (never beaten by another survivor)."""
        g, adj, link_cost, costs = self._random_instance(seed)
        src, dst = 0, len(g) - 1
        cands = flood_candidates(adj, src, dst, link_cost, suppress=True)
        if not cands:
            return
        for c in cands:
            assert len(set(c.route)) == len(c.route)
            assert c.route[0] == src and c.route[-1] == dst
            for a, b in zip(c.route, c.route[1:]):
                assert g.has_edge(a, b)
            recomputed = sum(costs[(a, b)] for a, b in zip(c.route, c.route[1:]))
            assert c.total_cost == pytest.approx(recomputed, rel=1e-9)
        best = select_min_route(cands)
        assert all(best.total_cost <= c.total_cost + 1e-12 for c in cands)
