"""Discrete Q-modulus of E-F path families on weighted graphs.

A density g lives on edges; the g-length of a path is sum g(e) l(e) and the
energy is sum g(e)^Q mu(e). The modulus is the least energy of a density
giving every simple E-F path g-length at least 1.

The solver generates constraints: a shortest-path oracle finds the
g-shortest path, violated paths join an active set, and the active-set
program is solved through its smooth concave dual in the path multipliers.
The returned density is rescaled to be exactly feasible, so the reported
value is an upper bound and the dual value a lower bound.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import minimize

from qmetric.graphs import WeightedGraph

FEAS_TOL = 1e-6
GAP_TOL = 1e-5
MAX_ITER = 10 ** 4


class ModulusError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModulusProblem:
    """Path family from E to F on a simple graph with exponent Q > 1.

    `edge_measure` is aligned with ``graph.edges``; it defaults to the edge
    lengths.
    """

    graph: WeightedGraph
    E: tuple
    F: tuple
    Q: float = 2.0
    edge_measure: Optional[np.ndarray] = None

    def __post_init__(self):
        E, F = tuple(self.E), tuple(self.F)
        if not E or not F:
            raise ModulusError("E and F must be nonempty")
        if set(E) & set(F):
            raise ModulusError("E and F must be disjoint")
        for v in E + F:
            self.graph.index(v)
        if not self.Q > 1:
            raise ModulusError(f"Q must exceed 1, got {self.Q!r}")
        u, v, length = self.graph.edge_index_arrays()
        keys = set()
        for a, b in zip(u, v):
            key = (min(a, b), max(a, b))
            if key in keys:
                raise ModulusError("parallel edges are not supported")
            keys.add(key)
        mu = length.copy() if self.edge_measure is None else np.asarray(
            self.edge_measure, dtype=float)
        if mu.shape != length.shape or np.any(~(mu > 0)) or not np.all(np.isfinite(mu)):
            raise ModulusError("edge measures must be positive, one per edge")
        mu.setflags(write=False)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "edge_measure", mu)

    @property
    def lengths(self) -> np.ndarray:
        return self.graph.edge_index_arrays()[2]

    def with_weights(self, lengths, measure) -> "ModulusProblem":
        """Same combinatorics with new edge lengths and measures."""
        u, v, _ = self.graph.edge_index_arrays()
        vs = self.graph.vertices
        edges = [(vs[a], vs[b], float(x)) for a, b, x in zip(u, v, lengths)]
        g = WeightedGraph(vs, edges, self.graph.boundary, self.graph.base)
        return ModulusProblem(g, self.E, self.F, self.Q, measure)


@dataclass
class ModulusSolution:
    g: np.ndarray
    value: float
    dual_bound: float
    shortest_violation: float
    iterations: int
    converged: bool
    empty_family: bool = False
    active_paths: list = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        if self.value == 0:
            return 0.0
        return (self.value - self.dual_bound) / self.value

    def to_dict(self):
        return {
            "value": self.value,
            "dual_bound": self.dual_bound,
            "gap": self.gap,
            "shortest_violation": self.shortest_violation,
            "iterations": self.iterations,
            "converged": self.converged,
            "empty_family": self.empty_family,
            "active_paths": len(self.active_paths),
        }


class _Oracle:
    """Multi-source Dijkstra from E to F over edge weights g * l."""

    def __init__(self, problem: ModulusProblem):
        g = problem.graph
        u, v, _ = g.edge_index_arrays()
        self.n = len(g)
        self.adj = [[] for _ in range(self.n)]
        for k, (a, b) in enumerate(zip(u, v)):
            self.adj[a].append((b, k))
            self.adj[b].append((a, k))
        self.sources = g.indices(problem.E)
        self.targets = set(g.indices(problem.F).tolist())

    def shortest(self, weights: np.ndarray):
        """(length, edge list) of the lightest E-F path, or (inf, None)."""
        dist = np.full(self.n, np.inf)
        prev = [None] * self.n
        heap = []
        for s in self.sources:
            dist[s] = 0.0
            heap.append((0.0, int(s)))
        heapq.heapify(heap)
        done = np.zeros(self.n, dtype=bool)
        while heap:
            d, x = heapq.heappop(heap)
            if done[x]:
                continue
            done[x] = True
            if x in self.targets:
                path = []
                while prev[x] is not None:
                    x, k = prev[x]
                    path.append(k)
                return d, path[::-1]
            for y, k in self.adj[x]:
                nd = d + weights[k]
                if nd < dist[y]:
                    dist[y] = nd
                    prev[y] = (x, k)
                    heapq.heappush(heap, (nd, y))
        return np.inf, None


def _density(lam, N, ell, mu, Q):
    s = ell * (lam @ N)
    return (s / (Q * mu)) ** (1.0 / (Q - 1.0))


def _solve_active(N, ell, mu, Q, lam0):
    """Maximize the concave dual over lam >= 0 for the active path matrix N."""
    def neg_dual(lam):
        g = _density(lam, N, ell, mu, Q)
        val = lam.sum() - (Q - 1.0) * np.dot(mu, g ** Q)
        grad = 1.0 - N @ (ell * g)
        return -val, -grad

    res = minimize(neg_dual, lam0, jac=True, method="L-BFGS-B",
                   bounds=[(0.0, None)] * len(lam0),
                   options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 20000, "maxcor": 30})
    lam = np.maximum(res.x, 0.0)
    return lam, -float(neg_dual(lam)[0])


def modulus(problem: ModulusProblem, feas_tol: float = FEAS_TOL,
            max_iter: int = MAX_ITER, gap_tol: float = GAP_TOL) -> ModulusSolution:
    """Constraint-generation solve of the discrete Q-modulus."""
    ell = problem.lengths
    mu = problem.edge_measure
    Q = float(problem.Q)
    m = len(ell)
    oracle = _Oracle(problem)
    length0, path = oracle.shortest(ell)
    if path is None:
        return ModulusSolution(np.zeros(m), 0.0, 0.0, np.inf, 0, True, True)
    if not path:
        raise ModulusError("E and F share a vertex")
    paths = [path]
    lam = np.array([1.0])
    g = np.zeros(m)
    best_lower = 0.0
    converged = False
    it = 0
    shortest = 0.0
    while it < max_iter:
        it += 1
        N = np.zeros((len(paths), m))
        for i, p in enumerate(paths):
            N[i, p] = 1.0
        lam, lower = _solve_active(N, ell, mu, Q, lam)
        best_lower = max(best_lower, lower)
        g = _density(lam, N, ell, mu, Q)
        shortest, path = oracle.shortest(g * ell)
        upper = np.dot(mu, g ** Q) / shortest ** Q if shortest > 0 else np.inf
        gap_ok = upper - best_lower <= gap_tol * upper
        if shortest >= 1.0 - feas_tol and gap_ok:
            converged = True
            break
        if path in paths:
            if gap_ok:
                converged = True
                break
            continue
        paths.append(path)
        lam = np.r_[lam, 0.0]
    # rescale to exact feasibility
    g = g / shortest if shortest > 0 else g
    final, _ = oracle.shortest(g * ell)
    value = float(np.dot(mu, g ** Q))
    return ModulusSolution(g, value, float(best_lower), float(final), it,
                           converged, False, paths)


# ---------------------------------------------------------------------------
# enumeration


def simple_paths(problem: ModulusProblem, limit: Optional[int] = None) -> list:
    """All simple E-F paths (as edge-index lists) that meet F only at the end.

    Paths through a further E vertex are skipped: their tail is a shorter
    path in the family. Raises if more than `limit` paths exist.
    """
    oracle = _Oracle(problem)
    E = set(oracle.sources.tolist())
    out = []

    def walk(x, seen, edges):
        for y, k in oracle.adj[x]:
            if y in seen or y in E:
                continue
            if y in oracle.targets:
                out.append(edges + [k])
                if limit is not None and len(out) > limit:
                    raise ModulusError(f"more than {limit} paths")
                continue
            seen.add(y)
            walk(y, seen, edges + [k])
            seen.remove(y)

    for s in oracle.sources:
        walk(int(s), {int(s)}, [])
    return out


def modulus_enumerated(problem: ModulusProblem, limit: int = 64) -> float:
    """Primal solve over the full enumerated path family (small instances)."""
    paths = simple_paths(problem, limit)
    if not paths:
        return 0.0
    ell, mu, Q = problem.lengths, problem.edge_measure, float(problem.Q)
    used = sorted({k for p in paths for k in p})
    A = np.zeros((len(paths), len(used)))
    col = {k: j for j, k in enumerate(used)}
    for i, p in enumerate(paths):
        for k in p:
            A[i, col[k]] = ell[k]
    w = mu[used]
    x0 = np.full(len(used), 1.0 / A.sum(axis=1).min())
    res = minimize(lambda x: np.dot(w, x ** Q), x0,
                   jac=lambda x: Q * w * x ** (Q - 1),
                   constraints=[{"type": "ineq", "fun": lambda x: A @ x - 1.0,
                                 "jac": lambda x: A}],
                   bounds=[(0.0, None)] * len(used), method="SLSQP",
                   options={"ftol": 1e-15, "maxiter": 1000})
    x = np.maximum(res.x, 0.0)
    return float(np.dot(w, x ** Q) / (A @ x).min() ** Q)


# ---------------------------------------------------------------------------
# separation and scans


def relative_separation(obj, E, F) -> float:
    """dist(E, F) / min(diam E, diam F) in a graph or quasimetric space."""
    E, F = list(E), list(F)
    if not E or not F:
        raise ModulusError("E and F must be nonempty")
    if isinstance(obj, WeightedGraph):
        D, idx = obj.distances, obj.indices
    else:
        space = getattr(obj, "space", obj)
        D, idx = space.dist, space.indices
    e, f = idx(E), idx(F)
    diam = min(D[np.ix_(e, e)].max(), D[np.ix_(f, f)].max())
    if diam == 0:
        raise ModulusError("relative separation is undefined when a set has diameter 0")
    return float(D[np.ix_(e, f)].min() / diam)


@dataclass
class ScanPoint:
    pair_id: str
    delta: float
    modulus: float
    iterations: int
    converged: bool
    disconnected: bool = False


@dataclass
class LoewnerScan:
    points: list
    envelope: list  # (bucket lower edge, bucket upper edge, min modulus)

    def rows(self):
        return [(p.pair_id, p.delta, p.modulus, p.iterations, p.converged)
                for p in self.points]


def square_ring(n: int, half: int) -> tuple:
    """Vertices of the square of half-side `half` around the center of an n x n grid."""
    c = (n - 1) // 2
    lo, hi = c - half, c + half
    if lo < 0 or hi >= n:
        raise ValueError("ring does not fit in the grid")
    return tuple((i, j) for i in range(lo, hi + 1) for j in range(lo, hi + 1)
                 if i in (lo, hi) or j in (lo, hi))


def concentric_pairs(n: int) -> Iterable:
    """(pair_id, E, F) for nested square rings in an n x n grid."""
    top = (n - 1) // 2
    for a in range(1, top):
        for b in range(a + 1, top + 1):
            yield f"ring{a}-ring{b}", square_ring(n, a), square_ring(n, b)


def loewner_scan(graph: WeightedGraph, pairs: Iterable, Q: float = 2.0,
                 buckets: int = 8, feas_tol: float = FEAS_TOL,
                 max_iter: int = MAX_ITER) -> LoewnerScan:
    """Modulus against relative separation for each (pair_id, E, F).

    Disconnected pairs are recorded with delta = inf and modulus 0. The
    envelope is the least modulus in each of `buckets` log-spaced delta bins.
    """
    points = []
    for pair_id, E, F in pairs:
        prob = ModulusProblem(graph, E, F, Q)
        sol = modulus(prob, feas_tol, max_iter)
        if sol.empty_family:
            points.append(ScanPoint(pair_id, math.inf, 0.0, 0, True, True))
            continue
        delta = relative_separation(graph, E, F)
        points.append(ScanPoint(pair_id, delta, sol.value, sol.iterations, sol.converged))
    finite = [p for p in points if math.isfinite(p.delta) and p.delta > 0]
    envelope = []
    if finite:
        lo = min(p.delta for p in finite)
        hi = max(p.delta for p in finite)
        edges = np.geomspace(lo, hi * (1 + 1e-12), buckets + 1) if hi > lo \
            else np.array([lo, lo * (1 + 1e-12)])
        for a, b in zip(edges[:-1], edges[1:]):
            vals = [p.modulus for p in finite if a <= p.delta < b]
            if vals:
                envelope.append((float(a), float(b), float(min(vals))))
    return LoewnerScan(points, envelope)


# ---------------------------------------------------------------------------
# conformal reweighting


@dataclass
class ConformalReport:
    base: object
    modulus: float
    modulus_deformed: float
    discrepancy: float
    budget: float
    mode: str

    @property
    def ok(self) -> bool:
        return self.discrepancy <= self.budget

    def to_dict(self):
        return {"base": self.base, "modulus": self.modulus,
                "modulus_deformed": self.modulus_deformed,
                "discrepancy": self.discrepancy, "budget": self.budget,
                "mode": self.mode, "ok": self.ok}


def conformal_weights(problem: ModulusProblem, a, mode: str = "pointwise"):
    """Edge lengths and measures after the spherical change of density at a.

    With d_u = d(u, a):

    * "consistent": one factor w = 1/((1 + d_u)(1 + d_v)) per edge; lengths
      scale by w and measures by w^Q. The discrete program is exactly
      invariant under this.
    * "pointwise": lengths become the spherical distance l/((1 + d_u)(1 + d_v))
      while measures use the density at the edge midpoint,
      (1 + (d_u + d_v)/2)^(-2Q). The mismatch is a discretization effect.
    """
    g = problem.graph
    d = g.distances[g.index(a)]
    u, v, ell = g.edge_index_arrays()
    w = 1.0 / ((1.0 + d[u]) * (1.0 + d[v]))
    if mode == "consistent":
        return ell * w, problem.edge_measure * w ** problem.Q
    if mode == "pointwise":
        mid = 0.5 * (d[u] + d[v])
        return ell * w, problem.edge_measure * (1.0 + mid) ** (-2.0 * problem.Q)
    raise ValueError(f"unknown mode {mode!r}")


def conformal_invariance_check(graph: WeightedGraph, a, E, F, Q: float = 2.0,
                               mode: str = "pointwise", budget: float = 0.05,
                               feas_tol: float = FEAS_TOL) -> ConformalReport:
    """Relative change of the modulus under the spherical reweighting at a."""
    if a in set(E) | set(F):
        raise ModulusError("the base vertex must lie outside E and F")
    prob = ModulusProblem(graph, E, F, Q)
    base = modulus(prob, feas_tol)
    lengths, measure = conformal_weights(prob, a, mode)
    deformed = modulus(prob.with_weights(lengths, measure), feas_tol)
    if base.value == 0:
        disc = 0.0 if deformed.value == 0 else math.inf
    else:
        disc = abs(base.value - deformed.value) / base.value
    return ConformalReport(a, base.value, deformed.value, disc, budget, mode)
