import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmetric.analysis import (
    SpaceMap,
    cross_ratio,
    cross_ratio_triple_check,
    decay_constants,
    decay_exponent,
    max_cross_ratio_triple,
    qm_profile,
    qs_ball_sandwich,
    qs_profile,
    three_point_condition,
    three_point_log_scale,
    weak_qm_check,
)
from qmetric.generators import euclidean_sample, geometric_set, ultrametric
from qmetric.space import InvalidRadiiError, InvalidSpaceError, MeasuredSpace, QuasimetricSpace
from qmetric.transforms import flatten, sphericalize


def line(xs):
    x = np.asarray(xs, dtype=float)
    return QuasimetricSpace(tuple(range(len(x))), np.abs(x[:, None] - x[None, :]))


def swap_map(n=10):
    s = line(range(n))
    pairing = {i: i for i in range(n)}
    pairing[0], pairing[1] = 1, 0
    return SpaceMap(s, s, pairing)


class TestCrossRatio:
    def test_collinear(self):
        assert cross_ratio(line([0, 1, 2, 3]), 0, 1, 2, 3) == 4.0

    def test_numerator_vanishes(self):
        assert cross_ratio(line([0, 1, 2]), 0, 1, 0, 1) == 0.0

    def test_precondition(self):
        with pytest.raises(ValueError):
            cross_ratio(line([0, 1, 2]), 0, 0, 1, 2)

    def test_equilateral_triple_ratio_one(self):
        d = np.ones((4, 4)) - np.eye(4)
        chk = cross_ratio_triple_check(QuasimetricSpace(tuple(range(4)), d), (0, 1, 2, 3))
        assert chk.ratio == 1.0 and chk.ok

    def test_repeated_points_rejected(self):
        with pytest.raises(ValueError):
            cross_ratio_triple_check(line([0, 1, 2]), (0, 1, 1, 2))

    def test_euclidean_sample_exhaustive(self):
        ms = euclidean_sample(64, 2, seed=5)
        best, quad = max_cross_ratio_triple(ms.space)
        # independent spot check of the witness
        a, b, c, d = quad
        s = ms.space
        m = sorted([s.d(a, b) * s.d(c, d), s.d(a, c) * s.d(b, d), s.d(a, d) * s.d(b, c)])
        assert best == pytest.approx(m[2] / m[1], rel=1e-12)
        assert best <= 4.0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_exhaustive_matches_loop(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.random((7, 3))
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1)) ** rng.uniform(0.3, 1.5)
        s = QuasimetricSpace(tuple(range(7)), d)
        worst = max(cross_ratio_triple_check(s, q).ratio
                    for q in itertools.combinations(range(7), 4))
        assert max_cross_ratio_triple(s)[0] == pytest.approx(worst, rel=1e-12)
        assert cross_ratio_triple_check(s, (0, 1, 2, 3)).ok

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_moebius_invariance_under_deformations(self, seed):
        s = euclidean_sample(12, 2, seed=seed).space
        sph = sphericalize(s, 0).space
        fl = flatten(s, 0).space
        for q in itertools.islice(itertools.permutations(range(1, 12), 4), 0, 400, 7):
            r = cross_ratio(s, *q)
            assert cross_ratio(sph, *q) == pytest.approx(r, rel=1e-12)
            assert cross_ratio(fl, *q) == pytest.approx(r, rel=1e-12)


class TestProfiles:
    def test_identity(self):
        s = line(np.random.default_rng(0).random(9))
        p = qm_profile(SpaceMap.identity(s, s))
        assert p.exhaustive
        assert np.allclose(p.envelope(p.t), p.t, rtol=1e-12)
        q = qs_profile(SpaceMap.identity(s, s))
        assert np.allclose(q.envelope(q.t), q.t, rtol=1e-12)

    def test_envelope_monotone_and_dominating(self):
        p = qs_profile(swap_map())
        assert np.all(np.diff(p.env_v) >= 0)
        assert np.all(p.envelope(p.t) >= p.t_image)

    def test_snowflake_power_law(self):
        s = line(np.random.default_rng(1).random(10))
        fmap = SpaceMap.identity(s, s.powered(0.5))
        for fn in (qm_profile, qs_profile):
            p = fn(fmap)
            assert np.allclose(p.t_image, p.t ** 0.5, rtol=1e-12)
            assert np.allclose(p.envelope(p.t), p.t ** 0.5, rtol=1e-12)

    def test_sphericalization_bound_16t(self):
        ms = euclidean_sample(14, 2, seed=2)
        fmap = SpaceMap.identity(ms.space, sphericalize(ms, 0).space)
        p = qm_profile(fmap)
        assert np.all(p.envelope(p.t) <= 16 * p.t * (1 + 1e-12))

    def test_swap_jump_flagged(self):
        assert qs_profile(swap_map()).has_jump()
        s = line(range(10))
        assert not qs_profile(SpaceMap.identity(s, s)).has_jump()

    def test_seeded_sampling(self):
        s = euclidean_sample(40, 2, seed=0).space
        fmap = SpaceMap.identity(s, s.powered(0.5))
        a = qm_profile(fmap, 5000, seed=3)
        b = qm_profile(fmap, 5000, seed=3)
        assert not a.exhaustive and a.t.size == 5000
        assert np.array_equal(a.t, b.t)

    def test_composition_closure(self):
        s = line(np.random.default_rng(4).random(8))
        s2 = s.powered(0.5)
        s3 = sphericalize(s2, 0).space
        f = SpaceMap.identity(s, s2)
        g = SpaceMap.identity(s2, s3)
        pf, pg, pfg = qm_profile(f), qm_profile(g), qm_profile(f.then(g))
        assert np.all(pfg.envelope(pfg.t) <= pg.envelope(pf.envelope(pfg.t)) * (1 + 1e-12))

    def test_budget_validation(self):
        s = line(range(5))
        with pytest.raises(ValueError):
            qm_profile(SpaceMap.identity(s, s), 0)


class TestWeakAndThreePoint:
    def test_identity_weak(self):
        s = line(range(6))
        assert weak_qm_check(SpaceMap.identity(s, s), 1, 1).ok

    def test_snowflake_weak(self):
        s = line(range(8))
        assert weak_qm_check(SpaceMap.identity(s, s.powered(0.5)), 4, 2).ok

    def test_swap_fails_with_witness(self):
        res = weak_qm_check(swap_map(), 1, 1)
        assert not res.ok and res.witness is not None
        a, b, c, d = res.witness
        assert cross_ratio(line(range(10)), a, b, c, d) <= 1

    def test_equilateral_lambda_one(self):
        d = np.ones((3, 3)) - np.eye(3)
        s = QuasimetricSpace((0, 1, 2), d)
        res = three_point_condition(SpaceMap.identity(s, s), 1.0)
        assert res.ok and res.value == 1.0

    def test_one_ten_ten_triangle(self):
        s = QuasimetricSpace((0, 1, 2), [[0, 1, 10], [1, 0, 10], [10, 10, 0]])
        res = three_point_condition(SpaceMap.identity(s, s), 5.0)
        assert res.value == 10.0 and not res.ok

    def test_too_small(self):
        s = line([0, 1])
        with pytest.raises(InvalidSpaceError):
            three_point_condition(SpaceMap.identity(s, s), 2)

    def test_deformation_pair_lambda(self):
        ms = euclidean_sample(30, 1, seed=0)
        sph = sphericalize(ms, 0).space
        res = three_point_condition(SpaceMap.identity(ms.space, sph), 100)
        assert res.ok and res.value < 100


class TestDecay:
    def test_closed_form_constants(self):
        alpha, C0, d1, d2 = decay_constants(0.5, 2.0, 2.0)
        assert d1 == 1 / 64
        # K^3 / tau = 16: exponent log2(16) + 4 = 8
        assert d2 == 1 - 2.0 ** -8
        assert alpha == pytest.approx(math.log(d2) / math.log(d1), rel=1e-15)
        assert C0 == 1 / d2

    def test_line_certificate_dominates(self):
        cert = decay_exponent(euclidean_sample(400, 1, seed=0, jitter=True))
        assert cert.ok and cert.empirical <= cert.C0

    def test_single_scale_degenerate(self):
        ms = euclidean_sample(50, 1, seed=0, jitter=True)
        cert = decay_exponent(ms, radii=[0.3], tau=0.5, K=2.0, C=2.0)
        assert cert.degenerate and cert.empirical is None and cert.ok is None

    def test_not_uniformly_perfect(self):
        with pytest.raises(InvalidRadiiError):
            decay_exponent(MeasuredSpace.uniform(line([0, 1])), radii=[0.5, 0.9],
                           resolved_only=False)

    def test_generators(self):
        for ms in (geometric_set(10), ultrametric(6)):
            cert = decay_exponent(ms)
            assert cert.ok

    def test_three_point_log_scale_finite(self):
        log_t0, alpha, C0 = three_point_log_scale(0.5, 2.0, 2.0)
        assert math.isfinite(log_t0) and log_t0 < 0


class TestSandwich:
    def test_identity_exact(self):
        s = line(range(10))
        rep = qs_ball_sandwich(SpaceMap.identity(s, s), 4, 2.5, 2)
        assert rep.R == 3.0 and rep.ok

    def test_snowflake_k2(self):
        s = line(np.random.default_rng(0).random(12))
        rep = qs_ball_sandwich(SpaceMap.identity(s, s.powered(0.5)), 3, 0.2, 2,
                               eta=lambda t: t ** 0.5)
        assert rep.ok and rep.eta_k == pytest.approx(math.sqrt(2))

    def test_sphericalization_envelope(self):
        ms = euclidean_sample(20, 1, seed=1)
        fmap = SpaceMap.identity(ms.space, sphericalize(ms, 0).space)
        for x in (0, 5, 13):
            for r in (0.05, 0.2, 0.4):
                rep = qs_ball_sandwich(fmap, x, r, 2)
                assert rep.ok in (True, None)

    def test_whole_space_reported(self):
        s = line(range(3))
        rep = qs_ball_sandwich(SpaceMap.identity(s, s), 1, 5, 2)
        assert rep.R is None and rep.ok is None
