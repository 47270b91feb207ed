"""Conformal deformations of finite quasimetric measure spaces.

Sphericalization adds a point at infinity and bends distances by the factor
1 / ((1 + d(x, a)) (1 + d(y, a))); flattening removes a base point c and
divides by d(x, c) d(y, c). Measures are transported with the ball-measure
normalizers, or with the power-law density when ``density="regular"``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import floyd_warshall

from qmetric._kernels import pair_union_measure
from qmetric.space import (
    REL_TOL,
    InvalidSpaceError,
    MeasuredSpace,
    PointId,
    QuasimetricSpace,
    ball_measures,
    quasimetric_constant,
)

INFINITY = "inf"


@dataclass
class DeformationRecord:
    kind: str
    base_point: Optional[PointId]
    epsilon: Optional[float]
    input_K: Optional[float]
    output_K: Optional[float]
    bound: Optional[float] = None
    notes: str = ""

    @property
    def within_bound(self) -> Optional[bool]:
        if self.bound is None or self.output_K is None:
            return None
        return self.output_K <= self.bound

    def to_dict(self):
        out = asdict(self)
        out["within_bound"] = self.within_bound
        return out


def _fresh_infinity_id(points) -> PointId:
    taken = set(points)
    name = INFINITY
    while name in taken:
        name = "_" + name
    return name


def _as_measured(space) -> MeasuredSpace:
    if isinstance(space, MeasuredSpace):
        return space
    return MeasuredSpace.uniform(space)


def sphericalized_table(dist: np.ndarray, ia: int) -> np.ndarray:
    """Distances of the one-point extension; the new point is the last index."""
    n = dist.shape[0]
    w = 1.0 + dist[ia]
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = dist / np.outer(w, w)
    out[:n, n] = out[n, :n] = 1.0 / w
    return out


def sphericalize(mspace: MeasuredSpace, a: PointId,
                 density: str = "ball", Q: Optional[float] = None) -> MeasuredSpace:
    """One-point extension with the sphericalized quasimetric and measure.

    Parameters
    ----------
    mspace : MeasuredSpace
    a : point id
        Base point.
    density : {"ball", "regular"}
        "ball" divides each mass by mu(B(a, 1 + d(a, z)))^2. "regular" uses
        (1 + d(a, z))^(-2Q) instead, which requires `Q`.
    """
    mspace = _as_measured(mspace)
    space = mspace.space
    if space.infinity_point is not None:
        raise InvalidSpaceError("space already has an infinity point")
    ia = space.index(a)
    n = len(space)
    w = 1.0 + space.dist[ia]
    dist = sphericalized_table(space.dist, ia)
    inf_id = _fresh_infinity_id(space.points)
    points = space.points + (inf_id,)
    mass = np.zeros(n + 1)
    if density == "ball":
        norm = ball_measures(mspace, w, centers=[ia])[0]
        mass[:n] = mspace.mass / norm ** 2
    elif density == "regular":
        if Q is None:
            raise ValueError("density='regular' needs the exponent Q")
        mass[:n] = mspace.mass / w ** (2 * Q)
    else:
        raise ValueError(f"unknown density mode {density!r}")
    return MeasuredSpace(QuasimetricSpace(points, dist, inf_id), mass)


def flatten(mspace: MeasuredSpace, c: PointId,
            density: str = "ball", Q: Optional[float] = None) -> MeasuredSpace:
    """Remove c and divide distances by d(x, c) d(y, c).

    The flattened measure divides each mass by mu(B(c, d(c, z)))^2, or by
    d(c, z)^(2Q) with ``density="regular"``. If c is the tagged infinity point
    the result is undefined and an error is raised.
    """
    mspace = _as_measured(mspace)
    space = mspace.space
    if len(space) < 3:
        raise InvalidSpaceError("flattening needs at least three points")
    ic = space.index(c)
    if ic == space.infinity_index:
        raise InvalidSpaceError("cannot flatten at the infinity point")
    keep = np.array([i for i in range(len(space)) if i != ic])
    dc = space.dist[ic, keep]
    dist = space.dist[np.ix_(keep, keep)] / np.outer(dc, dc)
    np.fill_diagonal(dist, 0.0)
    if density == "ball":
        norm = ball_measures(mspace, dc, centers=[ic])[0]
        mass = mspace.mass[keep] / norm ** 2
    elif density == "regular":
        if Q is None:
            raise ValueError("density='regular' needs the exponent Q")
        mass = mspace.mass[keep] / dc ** (2 * Q)
    else:
        raise ValueError(f"unknown density mode {density!r}")
    inf = space.infinity_point
    points = tuple(space.points[i] for i in keep)
    # an infinity tag survives with zero mass
    return MeasuredSpace(QuasimetricSpace(points, dist, inf), mass)


def inversion(space: QuasimetricSpace, p: PointId) -> QuasimetricSpace:
    """i_p(x, y) = d(x, y) / (d(x, p) d(y, p)) on the space minus p."""
    if isinstance(space, MeasuredSpace):
        space = space.space
    ip = space.index(p)
    keep = np.array([i for i in range(len(space)) if i != ip])
    dp = space.dist[ip, keep]
    dist = space.dist[np.ix_(keep, keep)] / np.outer(dp, dp)
    return QuasimetricSpace(tuple(space.points[i] for i in keep), dist)


def sphericalize_record(mspace, a, with_constants: bool = True) -> tuple:
    """sphericalize plus a DeformationRecord carrying K and the 4K^2 bound."""
    out = sphericalize(mspace, a)
    K_in = K_out = bound = None
    if with_constants:
        K_in = quasimetric_constant(_as_measured(mspace).space)
        K_out = quasimetric_constant(out.space)
        bound = 4 * K_in ** 2
    return out, DeformationRecord("sphericalize", a, None, K_in, K_out, bound)


def flatten_record(mspace, c, with_constants: bool = True) -> tuple:
    """flatten plus a DeformationRecord carrying K and the K^2 bound."""
    out = flatten(mspace, c)
    K_in = K_out = bound = None
    if with_constants:
        K_in = quasimetric_constant(_as_measured(mspace).space)
        K_out = quasimetric_constant(out.space)
        bound = K_in ** 2
    return out, DeformationRecord("flatten", c, None, K_in, K_out, bound)


@dataclass
class RoundtripReport:
    base_point: PointId
    max_rel_error: float
    bilipschitz: float
    bound: float
    diameter: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= 1e-12 and self.bilipschitz <= self.bound * (1 + REL_TOL)

    def to_dict(self):
        out = asdict(self)
        out["ok"] = self.ok
        return out


def roundtrip(mspace, c: PointId) -> RoundtripReport:
    """Flatten at c, then sphericalize at the image of c.

    In the flattened space c becomes the point at infinity with distance
    1 / d(x, c). Sphericalizing there must reproduce
    d(x, y) / ((1 + d(x, c)) (1 + d(y, c))) on every pair; the report also
    gives the bilipschitz constant of the identity back to the original
    distances, which must not exceed (1 + T)^2 with T the diameter.
    """
    mspace = _as_measured(mspace)
    space = mspace.space
    ic = space.index(c)
    T = space.diameter
    keep = np.array([i for i in range(len(space)) if i != ic])
    m = len(keep)
    if m < 2:
        # a single point remains: nothing to compare
        return RoundtripReport(c, 0.0, 1.0, (1 + T) ** 2, T)
    dc = space.dist[ic, keep]
    flat = flatten(mspace, c).dist
    extended = np.zeros((m + 1, m + 1))
    extended[:m, :m] = flat
    extended[:m, m] = extended[m, :m] = 1.0 / dc
    got = sphericalized_table(extended, m)[:m, :m]
    base = space.dist[np.ix_(keep, keep)]
    expected = base / np.outer(1 + dc, 1 + dc)
    off = ~np.eye(m, dtype=bool)
    rel = np.abs(got[off] - expected[off]) / expected[off]
    ratio = got[off] / base[off]
    lip = max(ratio.max(), 1.0 / ratio.min())
    return RoundtripReport(c, float(rel.max()), float(lip), (1 + T) ** 2, T)


@dataclass
class SandwichCheck:
    """Pairwise comparison lower * rho <= d <= rho of a chain metric."""

    lower: float
    min_ratio: float
    max_ratio: float
    asserted: bool

    @property
    def ok(self) -> bool:
        return (self.min_ratio >= self.lower * (1 - REL_TOL)
                and self.max_ratio <= 1 + REL_TOL)

    def to_dict(self):
        out = asdict(self)
        out["ok"] = self.ok
        return out


def chain_metric_table(dist: np.ndarray) -> np.ndarray:
    """Shortest chain sums over the complete graph weighted by `dist`."""
    d = floyd_warshall(np.asarray(dist, dtype=float), directed=False)
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def sandwich(rho: np.ndarray, d: np.ndarray, lower: float = 0.5,
             asserted: bool = True) -> SandwichCheck:
    off = ~np.eye(rho.shape[0], dtype=bool)
    if not off.any():
        return SandwichCheck(lower, 1.0, 1.0, asserted)
    ratio = d[off] / rho[off]
    return SandwichCheck(lower, float(ratio.min()), float(ratio.max()), asserted)


def chain_metrize(space, check: bool = True):
    """Chain metric: the least total rho-length of a finite chain from x to y.

    Returns the metric space and a DeformationRecord. With ``check`` the
    record's notes carry the comparison with rho; the lower bound rho / 2 is
    asserted (raised on failure) whenever the input constant is at most 2.
    """
    if isinstance(space, MeasuredSpace):
        space = space.space
    d = chain_metric_table(space.dist)
    out = QuasimetricSpace(space.points, d, space.infinity_point)
    record = DeformationRecord("chain", None, None, None, None)
    if check and len(space) >= 2:
        K = quasimetric_constant(space)
        record.input_K = K
        record.output_K = quasimetric_constant(out)
        sw = sandwich(space.dist, d, asserted=K <= 2 * (1 + REL_TOL))
        record.notes = (f"d/rho in [{sw.min_ratio:.6g}, {sw.max_ratio:.6g}]"
                        + ("; K <= 2 so rho/2 <= d <= rho is asserted" if sw.asserted else ""))
        if sw.asserted and not sw.ok:
            raise AssertionError(
                f"chain metric sandwich failed with K = {K}: min d/rho = {sw.min_ratio}")
    return out, record


def david_semmes(mspace, epsilon: float = 0.5):
    """beta(x, y) = mu(B(x, rho(x, y)) u B(y, rho(x, y)))^epsilon, same masses.

    Returns the deformed measured space and a DeformationRecord echoing
    epsilon and the quasimetric constants before and after.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    mspace = _as_measured(mspace)
    space = mspace.space
    if space.infinity_point is not None:
        raise InvalidSpaceError("deform a space without an infinity point")
    mu = pair_union_measure(np.ascontiguousarray(space.dist),
                            np.ascontiguousarray(mspace.mass))
    beta = mu ** epsilon
    np.fill_diagonal(beta, 0.0)
    out = MeasuredSpace(QuasimetricSpace(space.points, beta), mspace.mass)
    record = DeformationRecord("david_semmes", None, float(epsilon),
                               quasimetric_constant(space) if len(space) > 1 else 1.0,
                               quasimetric_constant(out.space) if len(space) > 1 else 1.0)
    return out, record
