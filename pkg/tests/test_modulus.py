import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import effective_conductance
from qmetric.generators import cycle, grid, path_graph
from qmetric.graphs import WeightedGraph
from qmetric.modulus import (
    ModulusError,
    ModulusProblem,
    concentric_pairs,
    conformal_invariance_check,
    loewner_scan,
    modulus,
    modulus_enumerated,
    relative_separation,
    simple_paths,
    square_ring,
)
from qmetric.suites import parallel_paths


def conductance_oracle(prob):
    g = prob.graph
    u, v, ell = g.edge_index_arrays()
    sigma = prob.edge_measure / ell ** 2
    return effective_conductance(len(g), list(zip(u, v)), sigma,
                                 g.indices(prob.E), g.indices(prob.F))


class TestOracles:
    def test_single_path(self):
        sol = modulus(ModulusProblem(path_graph(5), (0,), (4,), 2.0))
        assert sol.value == pytest.approx(0.25, abs=1e-6)
        assert np.allclose(sol.g, 0.25)

    @pytest.mark.parametrize("k,Q", [(3, 1.5), (4, 3.0), (6, 2.5)])
    def test_single_path_closed_form(self, k, Q):
        sol = modulus(ModulusProblem(path_graph(k + 1), (0,), (k,), Q))
        assert sol.value == pytest.approx(k ** (1 - Q), rel=1e-6)

    @pytest.mark.parametrize("m", [1, 2, 3, 5])
    def test_parallel_paths_add(self, m):
        sol = modulus(ModulusProblem(parallel_paths(m, 4), ("s",), ("t",), 2.0))
        assert sol.value == pytest.approx(m * 0.25, abs=1e-6)

    def test_disconnected(self):
        g = WeightedGraph((0, 1, 2, 3), [(0, 1, 1.0), (2, 3, 1.0)])
        sol = modulus(ModulusProblem(g, (0,), (3,), 2.0))
        assert sol.value == 0.0 and sol.empty_family

    def test_invalid(self):
        g = path_graph(3)
        with pytest.raises(ModulusError):
            ModulusProblem(g, (0,), (2,), 1.0)
        with pytest.raises(ModulusError):
            ModulusProblem(g, (0, 1), (1,), 2.0)
        with pytest.raises(ModulusError):
            ModulusProblem(g, (), (1,), 2.0)

    @pytest.mark.parametrize("n", [3, 5, 7])
    def test_grid_matches_conductance(self, n):
        g = grid(n)
        prob = ModulusProblem(g, g.boundary["left"], g.boundary["right"], 2.0)
        sol = modulus(prob)
        assert sol.value == pytest.approx(conductance_oracle(prob), rel=1e-5)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_random_graph_conductance(self, seed):
        rng = np.random.default_rng(seed)
        n = 8
        edges = {(i, i + 1) for i in range(n - 1)}
        for _ in range(6):
            a, b = sorted(rng.choice(n, 2, replace=False).tolist())
            edges.add((a, b))
        edges = sorted(edges)
        ell = rng.uniform(0.5, 2.0, len(edges))
        mu = rng.uniform(0.5, 2.0, len(edges))
        g = WeightedGraph(range(n), [(a, b, float(x)) for (a, b), x in zip(edges, ell)])
        prob = ModulusProblem(g, (0,), (n - 1,), 2.0, mu)
        sol = modulus(prob)
        assert sol.converged
        assert sol.value == pytest.approx(conductance_oracle(prob), rel=1e-5)
        assert sol.dual_bound <= sol.value * (1 + 1e-9)


class TestEnumeration:
    def test_enumerates_parallel(self):
        prob = ModulusProblem(parallel_paths(3, 2), ("s",), ("t",), 2.0)
        assert len(simple_paths(prob)) == 3

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6), st.floats(1.3, 4.0))
    def test_bruteforce_equality(self, seed, Q):
        rng = np.random.default_rng(seed)
        v = ["s", "a", "b", "c", "t"]
        e = [("s", "a"), ("s", "b"), ("a", "b"), ("a", "c"), ("b", "c"), ("c", "t"), ("b", "t")]
        ell = rng.uniform(0.5, 2.0, len(e))
        mu = rng.uniform(0.5, 2.0, len(e))
        g = WeightedGraph(v, [(a, b, float(x)) for (a, b), x in zip(e, ell)])
        prob = ModulusProblem(g, ("s",), ("t",), Q, mu)
        assert len(simple_paths(prob)) <= 8
        a = modulus(prob).value
        b = modulus_enumerated(prob)
        assert a == pytest.approx(b, rel=1e-6)

    def test_limit(self):
        g = grid(4)
        prob = ModulusProblem(g, ((0, 0),), ((3, 3),), 2.0)
        with pytest.raises(ModulusError):
            simple_paths(prob, limit=5)


class TestProperties:
    def test_final_feasibility(self):
        g = grid(6)
        prob = ModulusProblem(g, g.boundary["left"], g.boundary["right"], 2.5)
        sol = modulus(prob)
        assert sol.shortest_violation >= 1 - 1e-6
        assert sol.gap <= 1e-5

    def test_monotone_in_E(self):
        g = grid(6)
        F = g.boundary["right"]
        small = modulus(ModulusProblem(g, g.boundary["left"][:3], F, 2.0)).value
        big = modulus(ModulusProblem(g, g.boundary["left"], F, 2.0)).value
        assert big >= small * (1 - 1e-6)

    @pytest.mark.parametrize("lam,Q", [(2.0, 2.0), (0.3, 3.0), (5.0, 1.5)])
    def test_scale_covariance(self, lam, Q):
        g = grid(5)
        prob = ModulusProblem(g, g.boundary["left"], g.boundary["right"], Q)
        base = modulus(prob)
        scaled = prob.with_weights(prob.lengths * lam, prob.edge_measure * lam ** Q)
        sol = modulus(scaled)
        # energy of g / lam under mu lam^Q is unchanged
        assert sol.value == pytest.approx(base.value, rel=1e-5)
        g_pred = base.g / lam
        assert np.dot(scaled.edge_measure, g_pred ** Q) == pytest.approx(base.value, rel=1e-12)


class TestSeparation:
    def test_unit_sets_at_two(self):
        g = path_graph(6)
        assert relative_separation(g, (0, 1), (3, 4)) == 2.0

    def test_adjacent(self):
        from qmetric.space import QuasimetricSpace
        s = QuasimetricSpace((0, 1, 2, 3), [[0, 1, 2, 3], [1, 0, 1, 2], [2, 1, 0, 1], [3, 2, 1, 0]])
        assert relative_separation(s, (0, 1), (1, 2)) == 0.0

    def test_cycle_antipodal(self):
        g = cycle(12)
        delta = relative_separation(g, (0, 1, 2), (6, 7, 8))
        D = g.distances
        dist = min(D[i, j] for i in (0, 1, 2) for j in (6, 7, 8))
        assert delta == dist / 2 == 2.0

    def test_singleton_rejected(self):
        with pytest.raises(ModulusError):
            relative_separation(path_graph(4), (0,), (3,))


class TestScan:
    def test_grid_scan(self):
        g = grid(9)
        scan = loewner_scan(g, concentric_pairs(9), 2.0)
        pts = {p.pair_id: p for p in scan.points}
        # fixed inner ring: modulus falls as separation grows
        inner = sorted((p for p in scan.points if p.pair_id.startswith("ring1-")),
                       key=lambda p: p.delta)
        assert all(a.modulus > b.modulus for a, b in zip(inner, inner[1:]))
        assert all(e[2] > 0 for e in scan.envelope)
        touching = [p for p in scan.points if p.delta == min(q.delta for q in scan.points)]
        assert max(p.modulus for p in touching) == max(p.modulus for p in scan.points)
        assert len(pts) == 6

    def test_disconnected_flagged(self):
        g = WeightedGraph((0, 1, 2, 3, 4, 5), [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0)])
        scan = loewner_scan(g, [("far", (0, 1), (4, 5))], 2.0)
        p = scan.points[0]
        assert p.disconnected and p.modulus == 0.0 and math.isinf(p.delta)

    def test_ring(self):
        assert len(square_ring(9, 1)) == 8


class TestConformal:
    def grid_case(self, n, mode="pointwise"):
        g = grid(n, length=1.0 / (n - 1))
        E = tuple(v for v in g.boundary["left"] if v != (0, 0))
        return conformal_invariance_check(g, (0, 0), E, g.boundary["right"], 2.0, mode)

    def test_consistent_mode_invariant(self):
        rep = self.grid_case(7, "consistent")
        assert rep.discrepancy <= 1e-5

    def test_constant_density(self):
        # base far from everything: factors nearly equal on all edges
        g = WeightedGraph(["a", "s", "m", "t"], [("a", "s", 1e9), ("s", "m", 1.0), ("m", "t", 1.0)])
        rep = conformal_invariance_check(g, "a", ("s",), ("t",), 2.0, "consistent")
        assert rep.discrepancy <= 1e-6

    def test_single_path_any_density(self):
        g = path_graph(7)
        rep = conformal_invariance_check(g, 0, (2,), (6,), 2.0, "consistent")
        assert rep.discrepancy <= 1e-6

    def test_grid_budget_and_shrink(self):
        r9 = self.grid_case(9)
        r13 = self.grid_case(13)
        assert r9.discrepancy <= 0.05 and r13.discrepancy < r9.discrepancy

    def test_base_in_sets_rejected(self):
        g = path_graph(4)
        with pytest.raises(ModulusError):
            conformal_invariance_check(g, 0, (0,), (3,))
