"""Gromov products, hyperbolicity, and boundary quasimetrics on graphs.

Boundary points are represented by designated vertices (for example the
leaves of a deep tree); Gromov products with boundary arguments are taken
at those vertices directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from qmetric._kernels import fourpoint_delta
from qmetric.graphs import InvalidGraphError, WeightedGraph
from qmetric.space import (
    REL_TOL,
    AhlforsFit,
    MeasuredSpace,
    QuasimetricSpace,
    ahlfors_fit,
    quasimetric_constant,
)
from qmetric.transforms import SandwichCheck, chain_metric_table, flatten, sandwich

__all__ = [
    "WeightedGraph", "gromov_product", "gromov_table", "delta_hyperbolicity",
    "BoundaryQuasimetric", "bourdon", "busemann", "hamenstadt",
    "hamenstadt_products", "regularity_duality_check", "base_point_shift",
]


def _base(graph: WeightedGraph, w):
    w = graph.base if w is None else w
    if w is None:
        raise InvalidGraphError("no base point given and the graph has none")
    return w


def gromov_product(graph: WeightedGraph, x, y, w=None) -> float:
    """(x|y)_w = (d(x, w) + d(y, w) - d(x, y)) / 2 with graph distances."""
    graph.require_connected()
    w = _base(graph, w)
    return 0.5 * (graph.d(x, w) + graph.d(y, w) - graph.d(x, y))


def gromov_table(graph: WeightedGraph, points, w=None) -> np.ndarray:
    """Products (x|y)_w for all x, y in `points`."""
    graph.require_connected()
    w = _base(graph, w)
    idx = graph.indices(points)
    D = graph.distances
    dw = D[graph.index(w), idx]
    return 0.5 * (dw[:, None] + dw[None, :] - D[np.ix_(idx, idx)])


@dataclass
class DeltaReport:
    delta: float
    base: object
    witness: Optional[tuple]
    points: int
    alternative_max: Optional[float] = None
    alternative_bases: tuple = ()


def delta_hyperbolicity(graph: WeightedGraph, w=None, points=None,
                        alternatives: int = 0, seed: int = 0) -> DeltaReport:
    """Least delta with (x|y)_w >= min((x|z)_w, (z|y)_w) - delta on all triples.

    Exhaustive over `points` (default: every vertex) with the base fixed.
    `alternatives` further base points are drawn with `seed` and the largest
    delta among them is reported separately.
    """
    graph.require_connected()
    w = _base(graph, w)
    pts = graph.vertices if points is None else tuple(points)
    prod = np.ascontiguousarray(gromov_table(graph, pts, w))
    delta, x, y, z = fourpoint_delta(prod)
    wit = None if x < 0 else (pts[x], pts[y], pts[z])
    report = DeltaReport(float(delta), w, wit, len(pts))
    if alternatives > 0:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(graph), size=min(alternatives, len(graph)), replace=False)
        bases = tuple(graph.vertices[i] for i in sorted(picks))
        vals = [fourpoint_delta(np.ascontiguousarray(gromov_table(graph, pts, b)))[0]
                for b in bases]
        report.alternative_max = float(max(vals))
        report.alternative_bases = bases
    return report


def base_point_shift(graph: WeightedGraph, points, w1, w2) -> float:
    """max |(x|y)_w1 - (x|y)_w2| - d(w1, w2) over pairs of `points`."""
    diff = np.abs(gromov_table(graph, points, w1) - gromov_table(graph, points, w2))
    return float(diff.max() - graph.d(w1, w2))


@dataclass
class BoundaryQuasimetric:
    """Exponentiated Gromov products on a boundary vertex set, plus its chain metric."""

    flavor: str
    epsilon: float
    base: object
    table: QuasimetricSpace
    metric: QuasimetricSpace
    K: float
    delta: float
    in_range: bool
    sandwich: SandwichCheck

    def to_dict(self):
        return {
            "flavor": self.flavor,
            "epsilon": self.epsilon,
            "base": self.base,
            "points": len(self.table),
            "K": self.K,
            "delta": self.delta,
            "in_range": self.in_range,
            "sandwich": self.sandwich.to_dict(),
        }


def _finish(flavor, epsilon, base, points, products, delta, in_range):
    rho = np.exp(-epsilon * products)
    np.fill_diagonal(rho, 0.0)
    table = QuasimetricSpace(tuple(points), rho)
    K = quasimetric_constant(table)
    d = chain_metric_table(rho)
    metric = QuasimetricSpace(tuple(points), d)
    sw = sandwich(rho, d, asserted=K <= 2 * (1 + REL_TOL))
    if sw.asserted and not sw.ok:
        raise AssertionError(f"{flavor}: sandwich failed with K = {K}")
    return BoundaryQuasimetric(flavor, float(epsilon), base, table, metric, K,
                               float(delta), in_range, sw)


def bourdon(graph: WeightedGraph, boundary="leaves", epsilon: float = 0.5,
            w=None, delta: Optional[float] = None) -> BoundaryQuasimetric:
    """rho(xi, zeta) = exp(-epsilon (xi|zeta)_w) on a boundary set, zero on the diagonal.

    delta defaults to the four-point constant of the boundary set plus w.
    A warning is issued when epsilon is outside (0, min(1, 1/(5 delta))).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    w = _base(graph, w)
    pts = graph.boundary_set(boundary)
    if len(pts) < 2:
        raise InvalidGraphError("boundary set needs at least two vertices")
    if delta is None:
        scan = pts if w in pts else pts + (w,)
        delta = delta_hyperbolicity(graph, w, scan).delta
    limit = 1.0 if delta == 0 else min(1.0, 1.0 / (5 * delta))
    in_range = epsilon < limit
    if not in_range:
        warnings.warn(f"epsilon = {epsilon} is outside (0, {limit:.6g}) for delta = {delta}",
                      stacklevel=2)
    return _finish("bourdon", epsilon, w, pts, gromov_table(graph, pts, w), delta, in_range)


def busemann(graph: WeightedGraph, xi, w=None) -> dict:
    """b(x) = (xi|w)_x - (xi|x)_w for every vertex x."""
    graph.require_connected()
    w = _base(graph, w)
    D = graph.distances
    i, j = graph.index(xi), graph.index(w)
    b = 0.5 * (D[i] + D[j] - D[i, j]) - 0.5 * (D[i, j] + D[j] - D[i])
    return dict(zip(graph.vertices, b.tolist()))


def hamenstadt_products(graph: WeightedGraph, points, omega, w=None):
    """Algebraic and Busemann-form products relative to omega.

    Returns (algebraic, busemann_form): (xi|eta)_w - (xi|omega)_w - (eta|omega)_w
    and (b(xi) + b(eta) - d(xi, eta)) / 2 with b the Busemann function of omega.
    """
    w = _base(graph, w)
    G = gromov_table(graph, tuple(points) + (omega,), w)
    g, go = G[:-1, :-1], G[:-1, -1]
    algebraic = g - go[:, None] - go[None, :]
    b = busemann(graph, omega, w)
    bv = np.array([b[p] for p in points])
    idx = graph.indices(points)
    busemann_form = 0.5 * (bv[:, None] + bv[None, :] - graph.distances[np.ix_(idx, idx)])
    return algebraic, busemann_form


def hamenstadt(graph: WeightedGraph, omega, boundary="leaves", epsilon: float = 0.5,
               w=None, delta: Optional[float] = None) -> BoundaryQuasimetric:
    """rho(xi, eta) = exp(-epsilon [(xi|eta)_w - (xi|omega)_w - (eta|omega)_w]).

    omega is removed from the boundary set. A warning is issued when
    exp(22 epsilon delta) > 2.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    w = _base(graph, w)
    pts = graph.boundary_set(boundary)
    if omega not in pts:
        raise InvalidGraphError(f"omega {omega!r} is not in the boundary set")
    rest = tuple(p for p in pts if p != omega)
    if len(rest) < 2:
        raise InvalidGraphError("need at least two boundary vertices besides omega")
    if delta is None:
        scan = pts if w in pts else pts + (w,)
        delta = delta_hyperbolicity(graph, w, scan).delta
    in_range = 22 * epsilon * delta <= math.log(2)
    if not in_range:
        warnings.warn(f"exp(22 * {epsilon} * {delta}) exceeds 2", stacklevel=2)
    algebraic, _ = hamenstadt_products(graph, rest, omega, w)
    return _finish("hamenstadt", epsilon, (omega, w), rest, algebraic, delta, in_range)


@dataclass
class DualityReport:
    epsilon: float
    omega: object
    bourdon_fit: AhlforsFit
    hamenstadt_fit: AhlforsFit
    tolerance: float
    identity_error: float

    @property
    def agree(self) -> bool:
        return abs(self.bourdon_fit.Q - self.hamenstadt_fit.Q) <= self.tolerance

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "omega": self.omega,
            "Q_bourdon": self.bourdon_fit.Q,
            "Q_hamenstadt": self.hamenstadt_fit.Q,
            "residual_bourdon": self.bourdon_fit.residual,
            "residual_hamenstadt": self.hamenstadt_fit.residual,
            "tolerance": self.tolerance,
            "agree": self.agree,
            "identity_error": self.identity_error,
        }


def flattening_identity_error(bour: BoundaryQuasimetric, ham: BoundaryQuasimetric,
                              omega) -> float:
    """Max relative gap in rho_H rho_B(xi, omega) rho_B(eta, omega) = rho_B(xi, eta)."""
    B = bour.table
    idx = B.indices(ham.table.points)
    io = B.index(omega)
    lhs = ham.table.dist * np.outer(B.dist[idx, io], B.dist[idx, io])
    rhs = B.dist[np.ix_(idx, idx)]
    off = ~np.eye(len(idx), dtype=bool)
    if not off.any():
        return 0.0
    return float(np.max(np.abs(lhs[off] - rhs[off]) / rhs[off]))


def regularity_duality_check(graph: WeightedGraph, boundary="leaves", omega=None,
                             epsilon: float = math.log(2), radii=None,
                             tolerance: float = 0.15, w=None) -> DualityReport:
    """Ahlfors fits of the Bourdon side (counting measure) and the Hamenstadt side.

    The Hamenstadt side carries the flattening of the counting measure at
    omega, so its table is exactly the flattening of the Bourdon table.
    """
    pts = graph.boundary_set(boundary)
    omega = pts[0] if omega is None else omega
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bour = bourdon(graph, pts, epsilon, w)
        ham = hamenstadt(graph, omega, pts, epsilon, w, delta=bour.delta)
    counting = MeasuredSpace(bour.table, np.ones(len(pts)))
    flat = flatten(counting, omega)
    flat = MeasuredSpace(ham.table, flat.mass[flat.space.indices(ham.table.points)])
    fit_b = ahlfors_fit(counting, radii)
    fit_h = ahlfors_fit(flat, radii)
    return DualityReport(float(epsilon), omega, fit_b, fit_h, tolerance,
                         flattening_identity_error(bour, ham, omega))
