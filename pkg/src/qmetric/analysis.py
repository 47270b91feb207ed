"""Cross ratios, distortion profiles of maps, and measure-decay certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from qmetric._kernels import max_cross_triple, three_point_best
from qmetric.space import (
    REL_TOL,
    InvalidRadiiError,
    InvalidSpaceError,
    MeasuredSpace,
    QuasimetricSpace,
    _check_radii,
    ball_measures,
    default_radii,
    measure_doubling_constant,
    quasimetric_constant,
    resolved_mask,
    uniform_perfectness,
)

#: exhaustive enumeration of quadruples/triples below this count
EXHAUSTIVE_LIMIT = 10 ** 6

#: default evidence threshold on the envelope at the 10% quantile
EVIDENCE_THRESHOLD = 0.5

#: default log-slope above which an envelope step counts as a jump
JUMP_SLOPE = 8.0


@dataclass(frozen=True, eq=False)
class SpaceMap:
    """An injective pairing of source points with target points.

    Distortion is measured on the image, so the target may carry extra
    points (e.g. an added infinity point) that nothing maps to.
    """

    source: QuasimetricSpace
    target: QuasimetricSpace
    pairing: dict

    def __post_init__(self):
        pairing = dict(self.pairing)
        for p in self.source.points:
            if p not in pairing:
                raise InvalidSpaceError(f"source point {p!r} is not mapped")
        images = [pairing[p] for p in self.source.points]
        if len(set(images)) != len(images):
            raise InvalidSpaceError("pairing is not injective")
        for q in images:
            if q not in self.target:
                raise InvalidSpaceError(f"image {q!r} is not a target point")
        object.__setattr__(self, "pairing", pairing)

    @classmethod
    def identity(cls, source, target) -> "SpaceMap":
        source = getattr(source, "space", source)
        target = getattr(target, "space", target)
        return cls(source, target, {p: p for p in source.points})

    def tables(self):
        """Source and image distance tables, aligned on source order."""
        idx = self.target.indices([self.pairing[p] for p in self.source.points])
        return self.source.dist, self.target.dist[np.ix_(idx, idx)]

    def inverse(self) -> "SpaceMap":
        image = self.target.subspace([self.pairing[p] for p in self.source.points])
        return SpaceMap(image, self.source, {v: k for k, v in self.pairing.items()})

    def then(self, other: "SpaceMap") -> "SpaceMap":
        """Composition: apply self, then other."""
        return SpaceMap(self.source, other.target,
                        {p: other.pairing[q] for p, q in self.pairing.items()})


@dataclass
class DistortionProfile:
    """Sampled (t, t') pairs and their monotone upper envelope."""

    kind: str
    t: np.ndarray
    t_image: np.ndarray
    exhaustive: bool
    seed: Optional[int]
    env_t: np.ndarray = field(init=False, repr=False)
    env_v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        order = np.argsort(self.t, kind="stable")
        t = self.t[order]
        v = np.maximum.accumulate(self.t_image[order]) if t.size else t
        # keep the last envelope value for each distinct t
        last = np.r_[t[1:] != t[:-1], True] if t.size else np.zeros(0, bool)
        self.env_t, self.env_v = t[last], v[last]

    def envelope(self, t):
        """max{t' : sampled t <= t}; 0 below the smallest sample."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.env_t, t, side="right") - 1
        out = np.where(k >= 0, self.env_v[np.maximum(k, 0)], 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.env_v)))

    def evidence(self, threshold: float = EVIDENCE_THRESHOLD) -> bool:
        """Envelope at the 10% quantile of sampled t falls below `threshold`."""
        if self.t.size == 0:
            return False
        return self.envelope(np.quantile(self.t, 0.1)) < threshold

    def max_log_slope(self) -> float:
        """Steepest log-log slope between consecutive envelope steps."""
        if self.env_t.size < 2:
            return 0.0
        t, v = self.env_t, self.env_v
        ok = (t[:-1] > 0) & (v[:-1] > 0)
        if not ok.any():
            return 0.0
        slope = np.log(v[1:][ok] / v[:-1][ok]) / np.log(t[1:][ok] / t[:-1][ok])
        return float(slope.max())

    def has_jump(self, slope: float = JUMP_SLOPE) -> bool:
        return self.max_log_slope() > slope

    def to_dict(self, threshold: float = EVIDENCE_THRESHOLD):
        return {
            "kind": self.kind,
            "samples": int(self.t.size),
            "exhaustive": self.exhaustive,
            "seed": self.seed,
            "envelope_at_1": self.envelope(1.0),
            "evidence": self.evidence(threshold),
            "max_log_slope": self.max_log_slope(),
            "jump": self.has_jump(),
        }


# ---------------------------------------------------------------------------
# cross ratios


def cross_ratio(space, a, b, c, d) -> float:
    """r(a, b, c, d) = d(a, c) d(b, d) / (d(a, b) d(c, d))."""
    space = getattr(space, "space", space)
    if a == b or c == d:
        raise ValueError("cross ratio needs a != b and c != d")
    return (space.d(a, c) * space.d(b, d)) / (space.d(a, b) * space.d(c, d))


@dataclass
class TripleCheck:
    ratio: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.ratio <= self.bound * (1 + REL_TOL)


def cross_ratio_triple_check(space, quadruple, K: Optional[float] = None) -> TripleCheck:
    """Ratio of the two largest of the three pair products against K^2."""
    space = getattr(space, "space", space)
    a, b, c, d = quadruple
    if len({a, b, c, d}) != 4:
        raise ValueError("quadruple must consist of four distinct points")
    if K is None:
        K = quasimetric_constant(space)
    m = sorted([space.d(a, b) * space.d(c, d), space.d(a, c) * space.d(b, d),
                space.d(a, d) * space.d(b, c)])
    return TripleCheck(m[2] / m[1], K * K)


def max_cross_ratio_triple(space):
    """Exhaustive maximum of the triple ratio over all 4-point subsets."""
    space = getattr(space, "space", space)
    best, wit = max_cross_triple(np.ascontiguousarray(space.dist))
    quad = None if wit[0] < 0 else tuple(space.points[i] for i in wit)
    return float(best), quad


# ---------------------------------------------------------------------------
# profiles


def _tuples(n: int, k: int, budget: int, seed: int):
    """Ordered k-tuples of distinct indices: all of them, or a seeded sample."""
    total = math.perm(n, k) if n >= k else 0
    if total == 0:
        return np.zeros((0, k), dtype=int), True
    if total <= budget and total <= EXHAUSTIVE_LIMIT:
        grids = np.meshgrid(*([np.arange(n)] * k), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        distinct = np.ones(len(idx), dtype=bool)
        for i in range(k):
            for j in range(i + 1, k):
                distinct &= idx[:, i] != idx[:, j]
        return idx[distinct], True
    rng = np.random.default_rng(seed)
    m = min(budget, EXHAUSTIVE_LIMIT)
    out = np.zeros((0, k), dtype=int)
    while len(out) < m:
        idx = rng.integers(0, n, size=(2 * m, k))
        distinct = np.ones(len(idx), dtype=bool)
        for i in range(k):
            for j in range(i + 1, k):
                distinct &= idx[:, i] != idx[:, j]
        out = np.concatenate([out, idx[distinct]])
    return out[:m], False


def _quad_ratios(dist, q):
    a, b, c, d = q.T
    return dist[a, c] * dist[b, d] / (dist[a, b] * dist[c, d])


def qm_profile(fmap: SpaceMap, sample_budget: int = EXHAUSTIVE_LIMIT,
               seed: int = 0) -> DistortionProfile:
    """Cross ratios r and their images r' over quadruples of distinct points."""
    if sample_budget < 1:
        raise ValueError("sample_budget must be at least 1")
    d1, d2 = fmap.tables()
    q, exhaustive = _tuples(len(d1), 4, sample_budget, seed)
    return DistortionProfile("qm", _quad_ratios(d1, q), _quad_ratios(d2, q),
                             exhaustive, None if exhaustive else seed)


def qs_profile(fmap: SpaceMap, sample_budget: int = EXHAUSTIVE_LIMIT,
               seed: int = 0) -> DistortionProfile:
    """Triple ratios d(x, a)/d(x, b) and their images over distinct triples."""
    if sample_budget < 1:
        raise ValueError("sample_budget must be at least 1")
    d1, d2 = fmap.tables()
    q, exhaustive = _tuples(len(d1), 3, sample_budget, seed)
    x, a, b = q.T
    return DistortionProfile("qs", d1[x, a] / d1[x, b], d2[x, a] / d2[x, b],
                             exhaustive, None if exhaustive else seed)


@dataclass
class WitnessResult:
    ok: bool
    value: float
    witness: Optional[tuple]


def weak_qm_check(fmap: SpaceMap, h: float, H: float,
                  sample_budget: int = EXHAUSTIVE_LIMIT, seed: int = 0) -> WitnessResult:
    """Every quadruple with r <= h must have image r' <= H.

    `value` is the largest image cross ratio among quadruples with r <= h;
    the witness is that quadruple when it exceeds H.
    """
    if not h > 0 or not H >= 1:
        raise ValueError("need h > 0 and H >= 1")
    d1, d2 = fmap.tables()
    q, _ = _tuples(len(d1), 4, sample_budget, seed)
    r1, r2 = _quad_ratios(d1, q), _quad_ratios(d2, q)
    mask = r1 <= h
    if not mask.any():
        return WitnessResult(True, 0.0, None)
    cand = np.where(mask, r2, -np.inf)
    i = int(np.argmax(cand))
    worst = float(cand[i])
    ok = worst <= H * (1 + REL_TOL)
    wit = None if ok else tuple(fmap.source.points[j] for j in q[i])
    return WitnessResult(ok, worst, wit)


def three_point_condition(fmap: SpaceMap, lam: float) -> WitnessResult:
    """Look for a triple whose pairwise distances all reach diam/lam on both sides.

    `value` is the best achievable lambda; the witness is the triple attaining
    it.
    """
    d1, d2 = fmap.tables()
    if len(d1) < 3:
        raise InvalidSpaceError("three-point condition needs at least 3 points")
    best, i, j, k = three_point_best(np.ascontiguousarray(d1), np.ascontiguousarray(d2))
    p = fmap.source.points
    wit = None if i < 0 else (p[i], p[j], p[k])
    return WitnessResult(bool(best <= lam * (1 + REL_TOL)), float(best), wit)


# ---------------------------------------------------------------------------
# decay certificate


@dataclass
class DecayCertificate:
    alpha: float
    C0: float
    delta1: float
    delta2: float
    tau: float
    K: float
    C: float
    empirical: Optional[float]
    witness: Optional[tuple]
    pairs: int

    @property
    def degenerate(self) -> bool:
        return self.pairs == 0

    @property
    def ok(self) -> Optional[bool]:
        if self.empirical is None:
            return None
        return self.empirical <= self.C0 * (1 + REL_TOL)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("alpha", "C0", "delta1", "delta2", "tau", "K", "C",
                 "empirical", "pairs")} | {"degenerate": self.degenerate, "ok": self.ok}


def decay_constants(tau: float, K: float, C: float):
    """Closed-form (alpha, C0, delta1, delta2) from tau, K and the doubling constant."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    delta1 = tau / (8 * K * K)
    # 1 - C^-p computed without cancellation
    p = math.log2(K ** 3 / tau) + 4
    delta2 = -math.expm1(-p * math.log(C))
    if delta2 <= 0:
        # C = 1 would make delta2 = 0; no decay statement is possible
        raise ValueError("doubling constant must exceed 1")
    alpha = math.log(delta2) / math.log(delta1)
    return alpha, 1.0 / delta2, delta1, delta2


def decay_exponent(mspace: MeasuredSpace, radii=None, tau=None, K=None, C=None,
                   resolved_only: bool = True) -> DecayCertificate:
    """Certificate (alpha, C0) and the empirical max of (mu_r/mu_R)(R/r)^alpha.

    Constants not supplied are computed on the same grid. With
    ``resolved_only`` balls at or below the center's nearest-neighbour
    distance are left out of both the constants and the scan.
    """
    space = mspace.space
    if radii is None:
        radii = default_radii(space)
    radii = np.unique(_check_radii(radii))
    if tau is None:
        tau = uniform_perfectness(space, radii, resolved_only=resolved_only).tau
        if tau is None:
            raise InvalidRadiiError("space is not uniformly perfect on the grid")
    if K is None:
        K = quasimetric_constant(space)
    if C is None:
        C = measure_doubling_constant(mspace, radii, resolved_only=resolved_only)
    alpha, C0, d1, d2 = decay_constants(tau, K, C)
    centers = space.finite_indices()
    mu = ball_measures(mspace, radii, centers)
    usable = mu > 0
    if resolved_only:
        usable &= resolved_mask(space, radii, centers)
    best, wit, pairs = None, None, 0
    for i in range(radii.size):
        for j in range(i + 1, radii.size):
            ok = usable[:, i] & usable[:, j]
            if not ok.any():
                continue
            pairs += int(ok.sum())
            val = mu[ok, i] / mu[ok, j] * (radii[j] / radii[i]) ** alpha
            k = int(np.argmax(val))
            if best is None or val[k] > best:
                best = float(val[k])
                wit = (space.points[centers[np.flatnonzero(ok)[k]]],
                       float(radii[i]), float(radii[j]))
    return DecayCertificate(alpha, C0, d1, d2, float(tau), float(K), float(C),
                            best, wit, pairs)


def three_point_log_scale(tau: float, K: float, C: float, K0: Optional[float] = None):
    """Diagnostic t0 solving 4 K0^2 C^log2(4K^3/tau + 1) C0 (t0 tau)^alpha = 1/2.

    K0 defaults to 4K^2. Solved in log space because t0 underflows for
    realistic constants; returns (log t0, alpha, C0).
    """
    alpha, C0, _, _ = decay_constants(tau, K, C)
    if K0 is None:
        K0 = 4 * K * K
    log_rhs = (-math.log(2) - math.log(4 * K0 * K0)
               - math.log2(4 * K ** 3 / tau + 1) * math.log(C) - math.log(C0))
    return log_rhs / alpha - math.log(tau), alpha, C0


# ---------------------------------------------------------------------------
# ball sandwich


@dataclass
class SandwichReport:
    R: Optional[float]
    eta_k: Optional[float]
    inner: Optional[bool]
    middle: Optional[bool]
    outer: Optional[bool]
    note: str = ""

    @property
    def ok(self) -> Optional[bool]:
        if self.R is None:
            return None
        return bool(self.inner and self.middle and self.outer)


def qs_ball_sandwich(fmap: SpaceMap, x, r: float, k: float,
                     eta=None) -> SandwichReport:
    """Check B'(x', R) in f(B(x, r)) in f(B(x, kr)) in closed B'(x', eta(k) R).

    R is the least image distance from f(x) to the image of a point outside
    B(x, r). `eta` is a callable; by default the exhaustive qs envelope.
    """
    if not r > 0 or not k >= 1:
        raise ValueError("need r > 0 and k >= 1")
    d1, d2 = fmap.tables()
    i = fmap.source.index(x)
    inside = d1[i] < r
    if inside.all():
        return SandwichReport(None, None, None, None, None,
                              "B(x, r) is the whole space; R undefined")
    R = float(d2[i, ~inside].min())
    if eta is None:
        eta = qs_profile(fmap).envelope
    eta_k = float(eta(k))
    inner = bool(np.all(inside[d2[i] < R]))
    middle = bool(np.all((d1[i] < k * r)[inside]))
    outer = bool(np.all(d2[i, d1[i] < k * r] <= eta_k * R * (1 + REL_TOL)))
    return SandwichReport(R, eta_k, inner, middle, outer)
