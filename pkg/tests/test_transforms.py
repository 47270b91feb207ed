import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmetric.generators import euclidean_sample, nonisotropic_from_points, snowflake
from qmetric.space import (
    InvalidSpaceError,
    MeasuredSpace,
    QuasimetricSpace,
    ahlfors_fit,
    ball,
    ball_measures,
    quasimetric_constant,
)
from qmetric.suites import random_space
from qmetric.transforms import (
    chain_metrize,
    david_semmes,
    flatten,
    flatten_record,
    inversion,
    roundtrip,
    sphericalize,
    sphericalize_record,
)


def line(xs):
    x = np.asarray(xs, dtype=float)
    return QuasimetricSpace(tuple(range(len(x))), np.abs(x[:, None] - x[None, :]))


def spaces(min_n=3, max_n=12):
    return st.builds(lambda seed, n: random_space(np.random.default_rng(seed), n),
                     st.integers(0, 10 ** 6), st.integers(min_n, max_n))


class TestSphericalize:
    def test_base_to_infinity_is_one(self):
        out = sphericalize(line([0, 1, 3]), 0)
        assert out.space.d(0, out.space.infinity_point) == 1.0

    def test_direct_substitution(self):
        out = sphericalize(line([0, 1, 3]), 0)
        assert out.space.d(1, 2) == pytest.approx(0.25, rel=1e-15)

    def test_measure_normalizer(self):
        ms = MeasuredSpace(line([0, 1, 3]), [1.0, 2.0, 4.0])
        out = sphericalize(ms, 0)
        # B(0, 1 + d(0, z)) is {0} for z = 0, {0, 1} for z = 1, all for z = 3
        assert out.mass.tolist() == [1.0, 2.0 / 9.0, 4.0 / 49.0, 0.0]

    def test_regular_density(self):
        ms = MeasuredSpace.uniform(line([0, 1, 3]))
        out = sphericalize(ms, 0, density="regular", Q=1.0)
        assert out.mass[:3] == pytest.approx(np.array([1, 1 / 4, 1 / 16]) / 3)
        with pytest.raises(ValueError):
            sphericalize(ms, 0, density="regular")

    def test_infinity_ball_is_complement(self):
        ms = euclidean_sample(60, 1, seed=1)
        s = ms.space
        out = sphericalize(ms, 0).space
        inf = out.infinity_point
        for r in (0.3, 0.5, 0.7, 0.9):
            members = ball(out, inf, r).members - {inf}
            expected = {p for p in s.points if 1 + s.d(p, 0) > 1 / r}
            assert members == expected

    def test_diameter_at_most_K(self):
        for seed in range(5):
            s = random_space(np.random.default_rng(seed), 30)
            assert sphericalize(s, 0).space.diameter <= quasimetric_constant(s) * (1 + 1e-12)

    def test_errors(self):
        out = sphericalize(line([0, 1]), 0)
        with pytest.raises(InvalidSpaceError):
            sphericalize(out, 0)
        with pytest.raises(KeyError):
            sphericalize(line([0, 1]), 9)

    def test_metric_input_bound_16(self):
        s = line(np.random.default_rng(0).random(40))
        out, rec = sphericalize_record(s, 3)
        assert rec.input_K <= 2 and rec.output_K <= 16 and rec.within_bound

    @settings(max_examples=40, deadline=None)
    @given(spaces())
    def test_constant_bound(self, s):
        K = quasimetric_constant(s)
        assert quasimetric_constant(sphericalize(s, s.points[0]).space) <= 4 * K * K


class TestFlatten:
    def test_algebraic_inverse(self):
        s = line([0, 0.5, 1.7, 3.0, 4.2])
        out = flatten(s, 2).space
        for x, y in itertools.combinations([0, 1, 3, 4], 2):
            assert out.d(x, y) * s.d(x, 2) * s.d(y, 2) == pytest.approx(s.d(x, y), rel=1e-14)

    def test_circle_blows_up_near_base(self):
        th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        pts = np.c_[np.cos(th), np.sin(th)]
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        s = QuasimetricSpace(tuple(range(64)), d)
        out = flatten(s, 32).space
        vals = [out.d(0, k) for k in (16, 24, 28, 30, 31)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_normalizer_singleton_ball(self):
        ms = MeasuredSpace(line([0, 1, 3]), [2.0, 1.0, 1.0])
        out = flatten(ms, 0)
        # B(0, 1) = {0}: normalizer mass(c)^2; B(0, 3) = {0, 1}
        assert out.mass.tolist() == [1.0 / 4.0, 1.0 / 9.0]

    def test_errors(self):
        with pytest.raises(InvalidSpaceError):
            flatten(line([0, 1]), 0)
        sph = sphericalize(line([0, 1, 2]), 0)
        with pytest.raises(InvalidSpaceError):
            flatten(sph, sph.space.infinity_point)

    def test_inversion_is_massless_flatten(self):
        s = line([0, 1, 2.5, 4])
        assert np.array_equal(inversion(s, 1).dist, flatten(s, 1).dist)

    def test_metric_input_bound_4(self):
        s = line(np.random.default_rng(1).random(30))
        _, rec = flatten_record(s, 5)
        assert rec.output_K <= 4

    @settings(max_examples=40, deadline=None)
    @given(spaces())
    def test_constant_bound(self, s):
        K = quasimetric_constant(s)
        assert quasimetric_constant(flatten(s, s.points[-1]).space) <= K * K


class TestRoundtrip:
    @settings(max_examples=40, deadline=None)
    @given(spaces(2, 15))
    def test_closed_form(self, s):
        r = roundtrip(s, s.points[0])
        assert r.max_rel_error <= 1e-12
        assert r.bilipschitz <= (1 + s.diameter) ** 2 * (1 + 1e-12)
        assert r.ok

    def test_unit_diameter_bound_4(self):
        s = line([0, 0.25, 0.6, 1.0])
        r = roundtrip(s, 1)
        assert r.bound == 4.0 and r.bilipschitz <= 4.0

    def test_two_points(self):
        r = roundtrip(line([0, 1]), 0)
        assert r.max_rel_error == 0.0 and r.ok


class TestChain:
    def test_metric_unchanged(self):
        s = line([0, 1, 2.5, 7])
        out, rec = chain_metrize(s)
        assert np.array_equal(out.dist, s.dist)
        assert "asserted" in rec.notes

    def test_three_point_shortcut(self):
        s = QuasimetricSpace(("x", "y", "z"), [[0, 1, 10], [1, 0, 1], [10, 1, 0]])
        out, _ = chain_metrize(s)
        assert out.d("x", "z") == 2.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(3, 10), st.floats(0.2, 1.0))
    def test_triangle_and_sandwich(self, seed, n, p):
        rng = np.random.default_rng(seed)
        x = rng.random((n, 2))
        s = nonisotropic_from_points(x, (1.0, 0.5)).powered(p)
        K = quasimetric_constant(s)
        out, _ = chain_metrize(s)  # raises on sandwich failure when K <= 2
        d = out.dist
        assert np.all(d <= s.dist * (1 + 1e-12))
        for i, j, k in itertools.permutations(range(n), 3):
            assert d[i, k] <= d[i, j] + d[j, k] + 1e-12
        if K <= 2:
            off = ~np.eye(n, dtype=bool)
            assert np.all(d[off] >= 0.5 * s.dist[off] * (1 - 1e-12))


class TestDavidSemmes:
    def test_two_points(self):
        ms = MeasuredSpace(QuasimetricSpace((0, 1), [[0, 1], [1, 0]]), [1.0, 1.0])
        out, rec = david_semmes(ms, 0.5)
        assert out.space.d(0, 1) == pytest.approx(math.sqrt(2), rel=1e-15)
        assert rec.epsilon == 0.5 and rec.kind == "david_semmes"

    def test_matches_direct_union(self):
        ms = euclidean_sample(25, 2, seed=3)
        out, _ = david_semmes(ms, 0.7)
        s = ms.space
        for x, y in [(0, 1), (3, 17), (5, 24)]:
            r = s.dist[x, y]
            members = set(ball(s, x, r).members) | set(ball(s, y, r).members)
            assert out.space.d(x, y) == pytest.approx(ms.measure(members) ** 0.7, rel=1e-12)
        assert np.allclose(out.space.dist, out.space.dist.T)
        assert np.all(np.diag(out.space.dist) == 0)
        assert np.array_equal(out.mass, ms.mass)

    def test_epsilon_positive(self):
        with pytest.raises(ValueError):
            david_semmes(euclidean_sample(5), 0.0)

    def test_line_fit_near_inverse_epsilon(self):
        out, _ = david_semmes(euclidean_sample(729, 1, seed=0, jitter=True), 0.5)
        assert abs(ahlfors_fit(out).Q - 2.0) <= 0.2
