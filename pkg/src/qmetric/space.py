"""Finite quasimetric (measure) spaces, balls, and structural constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from qmetric._kernels import triple_ratio_max

PointId = Hashable

#: relative tolerance for equality comparisons of derived distances
REL_TOL = 1e-9

#: uniform-perfectness search grid k/64, k = 1..63
TAU_GRID = np.arange(1, 64) / 64.0

#: balls with at most this many members get an exact minimal cover
EXACT_COVER_CUTOFF = 16


class InvalidSpaceError(ValueError):
    """Raised when a distance table violates the quasimetric axioms."""


class InvalidRadiiError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuasimetricSpace:
    """A finite set of points with a symmetric, positive-definite distance table.

    Parameters
    ----------
    points : sequence of hashable ids
    dist : (n, n) array
        Symmetric, zero exactly on the diagonal.
    infinity_point : id, optional
        Marks the added point of a one-point extension.
    """

    points: tuple
    dist: np.ndarray
    infinity_point: Optional[PointId] = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        points = tuple(self.points)
        dist = np.array(self.dist, dtype=float)
        object.__setattr__(self, "points", points)
        n = len(points)
        if dist.shape != (n, n):
            raise InvalidSpaceError(
                f"distance table has shape {dist.shape}, expected ({n}, {n})")
        index = {p: i for i, p in enumerate(points)}
        if len(index) != n:
            raise InvalidSpaceError("duplicate point ids")
        _validate_table(points, dist)
        if self.infinity_point is not None and self.infinity_point not in index:
            raise InvalidSpaceError(
                f"infinity point {self.infinity_point!r} is not a point of the space")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.points)

    def index(self, point: PointId) -> int:
        try:
            return self._index[point]
        except KeyError:
            raise KeyError(f"unknown point id {point!r}") from None

    def indices(self, points: Iterable[PointId]) -> np.ndarray:
        return np.array([self.index(p) for p in points], dtype=int)

    def __contains__(self, point) -> bool:
        return point in self._index

    def d(self, x: PointId, y: PointId) -> float:
        return float(self.dist[self.index(x), self.index(y)])

    @property
    def diameter(self) -> float:
        """Max pairwise distance; stands in for the diameter of unbounded spaces."""
        return float(self.dist.max()) if len(self) else 0.0

    @property
    def infinity_index(self) -> Optional[int]:
        if self.infinity_point is None:
            return None
        return self.index(self.infinity_point)

    def finite_indices(self) -> np.ndarray:
        """Indices of all points except the tagged infinity point."""
        idx = np.arange(len(self))
        inf = self.infinity_index
        return idx if inf is None else idx[idx != inf]

    def nearest_neighbor_distances(self) -> np.ndarray:
        """Distance from each point to its nearest other point (inf for n = 1)."""
        d = self.dist.copy()
        np.fill_diagonal(d, np.inf)
        return d.min(axis=1)

    def subspace(self, points: Sequence[PointId]) -> "QuasimetricSpace":
        idx = self.indices(points)
        inf = self.infinity_point if self.infinity_point in set(points) else None
        return QuasimetricSpace(tuple(points), self.dist[np.ix_(idx, idx)], inf)

    def powered(self, alpha: float) -> "QuasimetricSpace":
        """The snowflake-type space with distances d**alpha."""
        return QuasimetricSpace(self.points, self.dist ** alpha, self.infinity_point)


def _validate_table(points, dist):
    if not np.all(np.isfinite(dist)):
        raise InvalidSpaceError("distance table contains non-finite entries")
    if np.any(dist < 0):
        i, j = np.argwhere(dist < 0)[0]
        raise InvalidSpaceError(
            f"negative distance {float(dist[i, j])!r} between {points[i]!r} and {points[j]!r}")
    if np.any(np.diag(dist) != 0):
        i = int(np.flatnonzero(np.diag(dist) != 0)[0])
        raise InvalidSpaceError(f"nonzero self-distance at {points[i]!r}")
    gap = np.abs(dist - dist.T)
    scale = np.maximum(np.abs(dist), np.abs(dist.T))
    bad = gap > REL_TOL * scale
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise InvalidSpaceError(
            f"asymmetric table: d({points[i]!r}, {points[j]!r}) = {float(dist[i, j])!r} "
            f"but d({points[j]!r}, {points[i]!r}) = {float(dist[j, i])!r}")
    off = dist + np.eye(len(points))
    if np.any(off == 0):
        i, j = np.argwhere(off == 0)[0]
        raise InvalidSpaceError(
            f"degenerate table: distinct points {points[i]!r} and {points[j]!r} "
            "are at distance 0")


@dataclass(frozen=True, eq=False)
class MeasuredSpace:
    """A quasimetric space with a point-mass measure.

    The tagged infinity point carries mass 0 and never contributes to ball
    measures; every other point has strictly positive mass.
    """

    space: QuasimetricSpace
    mass: np.ndarray

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (len(self.space),):
            raise InvalidSpaceError(
                f"mass vector has shape {mass.shape}, expected ({len(self.space)},)")
        inf = self.space.infinity_index
        finite = self.space.finite_indices()
        if np.any(~np.isfinite(mass)) or np.any(mass[finite] <= 0):
            i = int(finite[np.flatnonzero(~(mass[finite] > 0))[0]])
            raise InvalidSpaceError(
                f"mass at {self.space.points[i]!r} must be positive, got {float(mass[i])!r}")
        if inf is not None and mass[inf] != 0:
            raise InvalidSpaceError("the infinity point must carry zero mass")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def uniform(cls, space: QuasimetricSpace, total: float = 1.0) -> "MeasuredSpace":
        mass = np.zeros(len(space))
        finite = space.finite_indices()
        mass[finite] = total / len(finite)
        return cls(space, mass)

    @property
    def points(self):
        return self.space.points

    @property
    def dist(self):
        return self.space.dist

    def __len__(self):
        return len(self.space)

    def measure(self, points: Iterable[PointId]) -> float:
        idx = self.space.indices(points)
        return float(self.mass[idx].sum())


@dataclass(frozen=True)
class Ball:
    center: PointId
    radius: float
    members: frozenset
    closed: bool = False

    def __contains__(self, point):
        return point in self.members

    def __len__(self):
        return len(self.members)


@dataclass
class UniformPerfectness:
    """Outcome of the annulus search.

    `tau` is the largest grid value that passed, or None. `tau_star` is the
    exact infimum of the annulus ratio over tested (center, radius) pairs; the
    witness is where that infimum is attained.
    """

    tau: Optional[float]
    tau_star: float
    witness: Optional[tuple]
    tested: int

    @property
    def ok(self) -> bool:
        return self.tau is not None


@dataclass
class MetricDoubling:
    C: int
    mode: str  # "exact" or "greedy" - which routine produced the maximum
    witness: tuple
    exact_balls: int
    greedy_balls: int


@dataclass
class AhlforsFit:
    Q: float
    C_A: float
    residual: float
    intercept: float
    samples: int


@dataclass
class StructureReport:
    K: float
    tau: Optional[float]
    diameter: float
    diameter_note: str
    C_mu: float
    C_A: float
    Q: float
    radii: list

    def to_dict(self):
        return {
            "K": self.K,
            "tau": self.tau if self.tau is not None
            else "not uniformly perfect at tested scales",
            "diameter": self.diameter,
            "diameter_note": self.diameter_note,
            "C_mu": self.C_mu,
            "C_A": self.C_A,
            "Q": self.Q,
            "radii": list(self.radii),
        }


# ---------------------------------------------------------------------------
# balls and ball measures


def ball(space: QuasimetricSpace, center: PointId, radius: float,
         closed: bool = False) -> Ball:
    """Open ball {y : d(center, y) < radius}; closed=True uses <=."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    row = space.dist[space.index(center)]
    mask = row <= radius if closed else row < radius
    members = frozenset(p for p, m in zip(space.points, mask) if m)
    return Ball(center, float(radius), members, closed)


def default_radii(space: QuasimetricSpace, count: int = 24) -> np.ndarray:
    """Log-spaced radii between the smallest and largest positive distances."""
    d = space.dist[space.dist > 0]
    if d.size == 0:
        raise InvalidRadiiError("space has no positive distances")
    lo, hi = float(d.min()), float(d.max())
    if lo == hi:
        return np.array([lo])
    return np.geomspace(lo, hi, count)


def _check_radii(radii) -> np.ndarray:
    r = np.asarray(radii, dtype=float).ravel()
    if r.size == 0:
        raise InvalidRadiiError("empty radius list")
    if np.any(~(r > 0)):
        raise InvalidRadiiError("radii must be positive")
    return r


def ball_measures(mspace: MeasuredSpace, radii, centers=None,
                  closed: bool = False) -> np.ndarray:
    """Table of mu(B(x, r)) with rows indexed by centers and columns by radii."""
    radii = _check_radii(radii)
    dist = mspace.dist
    if centers is None:
        centers = np.arange(len(mspace))
    centers = np.asarray(centers, dtype=int)
    rows = dist[centers]
    order = np.argsort(rows, axis=1, kind="stable")
    sorted_d = np.take_along_axis(rows, order, axis=1)
    cum = np.concatenate(
        [np.zeros((len(centers), 1)), np.cumsum(mspace.mass[order], axis=1)], axis=1)
    side = "right" if closed else "left"
    out = np.empty((len(centers), radii.size))
    for i in range(len(centers)):
        k = np.searchsorted(sorted_d[i], radii, side=side)
        out[i] = cum[i, k]
    return out


def resolved_mask(space: QuasimetricSpace, radii, centers=None) -> np.ndarray:
    """True where r exceeds the nearest-neighbour distance of the center.

    Below that scale a finite ball is a singleton, so annulus and decay
    statements about the continuum have no finite content there.
    """
    radii = _check_radii(radii)
    nn = space.nearest_neighbor_distances()
    if centers is not None:
        nn = nn[np.asarray(centers, dtype=int)]
    return radii[None, :] > nn[:, None]


# ---------------------------------------------------------------------------
# structural constants


def quasimetric_constant(space: QuasimetricSpace, witness: bool = False):
    """Smallest K with d(x, z) <= K max(d(x, y), d(y, z)) on every triple.

    Exhaustive over all triples. With ``witness=True`` also returns the
    triple (x, y, z) that attains the maximum, or None if K = 1.
    """
    if len(space) < 2:
        raise InvalidSpaceError("need at least two points")
    K, x, y, z = triple_ratio_max(np.ascontiguousarray(space.dist))
    if not witness:
        return float(K)
    if x < 0:
        return float(K), None
    p = space.points
    return float(K), (p[x], p[y], p[z])


def uniform_perfectness(space: QuasimetricSpace, radii,
                        resolved_only: bool = False) -> UniformPerfectness:
    """Largest tau on the k/64 grid with a nonempty annulus B(x,r) minus B(x,tau r).

    A (center, radius) pair is tested when the ball misses part of the space.
    With ``resolved_only`` pairs with r at or below the center's
    nearest-neighbour distance are skipped as well.
    """
    radii = _check_radii(radii)
    n = len(space)
    dist = space.dist
    sorted_rows = np.sort(dist, axis=1)
    ecc = sorted_rows[:, -1]
    nn = space.nearest_neighbor_distances()
    best, wit, tested = np.inf, None, 0
    for x in range(n):
        row = sorted_rows[x]
        # largest distance strictly below r (row[0] = 0 is the center itself)
        k = np.searchsorted(row, radii, side="left") - 1
        inner = row[k]
        active = ecc[x] >= radii
        if resolved_only:
            active &= radii > nn[x]
        if not active.any():
            continue
        tested += int(active.sum())
        ratios = np.where(active, inner / radii, np.inf)
        j = int(np.argmin(ratios))
        if ratios[j] < best:
            best = float(ratios[j])
            wit = (space.points[x], float(radii[j]))
    if tested == 0:
        return UniformPerfectness(TAU_GRID[-1], 1.0, None, 0)
    passing = TAU_GRID[TAU_GRID <= best * (1 + REL_TOL)]
    tau = float(passing[-1]) if passing.size else None
    return UniformPerfectness(tau, best, wit, tested)


def measure_doubling_constant(mspace: MeasuredSpace, radii,
                              resolved_only: bool = False,
                              witness: bool = False,
                              min_count: int = 1):
    """max over centers x and radii r of mu(B(x, 2r)) / mu(B(x, r)).

    The infinity point is not used as a center; pairs whose inner ball has
    zero measure are skipped, and so are inner balls with fewer than
    `min_count` points. ``resolved_only`` is the same as ``min_count=2``.
    """
    radii = _check_radii(radii)
    centers = mspace.space.finite_indices()
    if len(centers) == 0:
        raise InvalidSpaceError("no finite points")
    inner = ball_measures(mspace, radii, centers)
    outer = ball_measures(mspace, 2 * radii, centers)
    ok = inner > 0
    if resolved_only:
        min_count = max(min_count, 2)
    if min_count > 1:
        ok &= _ball_counts(mspace.space, radii, centers) >= min_count
    ratio = np.where(ok, outer / np.where(ok, inner, 1.0), 1.0)
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    C = max(1.0, float(ratio[i, j]))
    if witness:
        return C, (mspace.points[centers[i]], float(radii[j]))
    return C


def _exact_cover(universe: int, sets: list) -> int:
    """Minimal number of bitmask sets covering `universe` (branch and bound)."""
    best = [bin(universe).count("1")]

    def search(uncovered, used):
        if uncovered == 0:
            best[0] = min(best[0], used)
            return
        if used + 1 >= best[0]:
            return
        low = uncovered & -uncovered
        # any cover must pick some set containing the lowest uncovered element
        for s in sets:
            if s & low:
                search(uncovered & ~s, used + 1)

    search(universe, 0)
    return best[0]


def _greedy_cover(cover: np.ndarray) -> int:
    """Greedy max-coverage on a boolean (candidates x members) matrix."""
    uncovered = np.ones(cover.shape[1], dtype=bool)
    count = 0
    while uncovered.any():
        gain = (cover & uncovered).sum(axis=1)
        uncovered &= ~cover[int(np.argmax(gain))]
        count += 1
    return count


def metric_doubling_constant(space: QuasimetricSpace, radii,
                             exact_cutoff: int = EXACT_COVER_CUTOFF,
                             force_greedy: bool = False) -> MetricDoubling:
    """Largest number of half-radius balls needed to cover a tested ball.

    Half-radius balls are centered at members of the ball being covered.
    Balls with at most `exact_cutoff` members get a minimal cover; larger
    ones get a greedy cover, which is an upper bound.
    """
    radii = _check_radii(radii)
    dist = space.dist
    best, mode, wit = 1, "exact", None
    n_exact = n_greedy = 0
    for x in range(len(space)):
        for r in radii:
            members = np.flatnonzero(dist[x] < r)
            cover = dist[np.ix_(members, members)] < r / 2
            if len(members) <= exact_cutoff and not force_greedy:
                bits = [sum(1 << j for j in np.flatnonzero(row)) for row in cover]
                c = _exact_cover((1 << len(members)) - 1, list(dict.fromkeys(bits)))
                kind = "exact"
                n_exact += 1
            else:
                c = _greedy_cover(cover)
                kind = "greedy"
                n_greedy += 1
            if c > best or wit is None:
                best, mode, wit = max(best, c), kind, (space.points[x], float(r))
    return MetricDoubling(int(best), mode, wit, n_exact, n_greedy)


def ahlfors_fit(mspace: MeasuredSpace, radii=None, min_count: int = 8,
                max_fraction: float = 0.5) -> AhlforsFit:
    """Fit log mu(B(x, r)) = Q log r + b_x with one slope shared by all centers.

    Only balls holding at least `min_count` points and at most `max_fraction`
    of the total mass enter the fit: below that window a finite ball is a
    handful of atoms, above it the ball is most of the space. Each center
    keeps its own offset b_x, so a center-dependent density does not tilt
    the slope when different centers contribute different radii.

    Returns the slope Q, the smallest C_A with
    C_A^-1 r^Q <= mu(B(x, r)) <= C_A r^Q on every fitted pair, and the RMS
    residual. The infinity point is never a center.
    """
    space = mspace.space
    diam = space.diameter
    if radii is None:
        radii = default_radii(space)
        radii = radii[radii < diam]
    radii = _check_radii(radii)
    if np.unique(radii).size < 2:
        raise InvalidRadiiError("need at least two distinct radii")
    if np.any(radii >= diam):
        raise InvalidRadiiError(
            f"radii must be below the diameter {diam!r}; got max {radii.max()!r}")
    centers = space.finite_indices()
    mu = ball_measures(mspace, radii, centers)
    counts = _ball_counts(space, radii, centers)
    keep = (counts >= min_count) & (mu > 0) & (mu <= max_fraction * mspace.mass.sum())
    per_center = keep.sum(axis=1)
    keep &= (per_center >= 2)[:, None]
    if keep.sum() < 2 or np.unique(np.nonzero(keep)[1]).size < 2:
        raise InvalidRadiiError("fewer than two distinct usable radii in the fit window")
    lr = np.broadcast_to(np.log(radii), mu.shape)
    lm = np.log(np.where(keep, mu, 1.0))
    k = np.maximum(keep.sum(axis=1), 1)
    r_mean = np.where(keep, lr, 0).sum(axis=1) / k
    m_mean = np.where(keep, lm, 0).sum(axis=1) / k
    dr = np.where(keep, lr - r_mean[:, None], 0.0)
    dm = np.where(keep, lm - m_mean[:, None], 0.0)
    Q = float((dr * dm).sum() / (dr * dr).sum())
    resid = (dm - Q * dr)[keep]
    offsets = (m_mean - Q * r_mean)[keep.any(axis=1)]
    dev = np.abs(lm - Q * lr)[keep]
    C_A = float(np.exp(dev.max()))
    return AhlforsFit(Q, max(1.0, C_A), float(np.sqrt(np.mean(resid ** 2))),
                      float(np.median(offsets)), int(keep.sum()))


def _ball_counts(space: QuasimetricSpace, radii, centers) -> np.ndarray:
    """Number of points (infinity excluded) in each ball."""
    rows = space.dist[np.asarray(centers, dtype=int)]
    inf = space.infinity_index
    if inf is not None:
        rows = np.delete(rows, inf, axis=1)
    rows = np.sort(rows, axis=1)
    return np.stack([np.searchsorted(row, radii, side="left") for row in rows])


def structure_report(mspace: MeasuredSpace, radii=None,
                     resolved_only: bool = False) -> StructureReport:
    space = mspace.space
    if radii is None:
        radii = default_radii(space)
    radii = _check_radii(radii)
    fit_radii = radii[radii < space.diameter]
    up = uniform_perfectness(space, radii, resolved_only=resolved_only)
    fit = ahlfors_fit(mspace, fit_radii)
    return StructureReport(
        K=quasimetric_constant(space),
        tau=up.tau,
        diameter=space.diameter,
        diameter_note="max pairwise distance of the finite sample",
        C_mu=measure_doubling_constant(mspace, radii, resolved_only=resolved_only),
        C_A=fit.C_A,
        Q=fit.Q,
        radii=[float(r) for r in radii],
    )
