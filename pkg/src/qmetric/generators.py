"""Seeded generators for sample spaces and graphs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from qmetric.graphs import WeightedGraph
from qmetric.space import MeasuredSpace, QuasimetricSpace

KINDS = ("euclidean_sample", "snowflake", "nonisotropic", "geometric_set",
         "tree", "cycle", "grid", "hyperbolic_patch", "path", "ultrametric")


@dataclass
class GeneratorSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; choose from {KINDS}")


def sample_points(n: int, dim: int = 1, seed: int = 0, jitter: bool = False) -> np.ndarray:
    """n points in [0, 1]^dim; `jitter` draws one point per cell of a regular split.

    Jittered sampling needs n to be a perfect dim-th power.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    if not jitter:
        x = rng.random((n, dim))
        return x[np.lexsort(x.T[::-1])]
    m = round(n ** (1.0 / dim))
    if m ** dim != n:
        raise ValueError(f"jittered sampling needs n = m^{dim}; got n = {n}")
    cells = np.stack(np.meshgrid(*([np.arange(m)] * dim), indexing="ij"), -1).reshape(-1, dim)
    return (cells + rng.random((n, dim))) / m


def euclidean_sample(n: int, dim: int = 1, seed: int = 0, jitter: bool = False) -> MeasuredSpace:
    """Uniform sample of the unit cube with equal masses 1/n."""
    x = sample_points(n, dim, seed, jitter)
    return MeasuredSpace.uniform(QuasimetricSpace(tuple(range(n)), cdist(x, x)))


def snowflake(n: int, alpha: float, dim: int = 1, seed: int = 0,
              jitter: bool = False) -> MeasuredSpace:
    """Euclidean sample with distances raised to alpha in (0, 1]."""
    if not 0 < alpha <= 1:
        raise ValueError("snowflake exponent must lie in (0, 1]")
    ms = euclidean_sample(n, dim, seed, jitter)
    return MeasuredSpace(ms.space.powered(alpha), ms.mass)


def nonisotropic(n: int, alphas, seed: int = 0) -> MeasuredSpace:
    """rho(x, y) = sum_i |x_i - y_i|^alpha_i on a uniform sample of [0, 1]^d."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0):
        raise ValueError("exponents must be positive")
    x = sample_points(n, len(alphas), seed)
    rho = sum(np.abs(x[:, i, None] - x[None, :, i]) ** a for i, a in enumerate(alphas))
    return MeasuredSpace.uniform(QuasimetricSpace(tuple(range(n)), rho))


def nonisotropic_from_points(x, alphas) -> QuasimetricSpace:
    x = np.asarray(x, dtype=float)
    rho = sum(np.abs(x[:, i, None] - x[None, :, i]) ** a for i, a in enumerate(alphas))
    return QuasimetricSpace(tuple(range(len(x))), rho)


def geometric_set(k: int = 10, ratio: float = 0.5, masses: str = "uniform") -> MeasuredSpace:
    """{ratio^j : 0 <= j <= k} together with 0, Euclidean distance.

    masses="geometric" puts mass ratio^j on ratio^j and ratio^k on 0.
    """
    x = np.r_[ratio ** np.arange(k + 1), 0.0]
    space = QuasimetricSpace(tuple(range(k + 2)), np.abs(x[:, None] - x[None, :]))
    if masses == "uniform":
        return MeasuredSpace.uniform(space)
    if masses == "geometric":
        return MeasuredSpace(space, np.r_[ratio ** np.arange(k + 1), ratio ** k])
    raise ValueError(f"unknown mass mode {masses!r}")


def ultrametric(depth: int, branching: int = 2) -> MeasuredSpace:
    """Leaves of a regular tree with distance branching^-(depth of the common ancestor).

    Equal masses; the result is Ahlfors regular of dimension 1 with K = 1.
    """
    if depth < 1 or branching < 2:
        raise ValueError("need depth >= 1 and branching >= 2")
    n = branching ** depth
    labels = np.arange(n)
    common = np.zeros((n, n), dtype=int)
    for level in range(1, depth + 1):
        block = labels // branching ** (depth - level)
        common += block[:, None] == block[None, :]
    dist = float(branching) ** (-common.astype(float))
    np.fill_diagonal(dist, 0.0)
    return MeasuredSpace.uniform(QuasimetricSpace(tuple(range(n)), dist))


# ---------------------------------------------------------------------------
# graphs


def tree(depth: int, branching: int = 2, length: float = 1.0) -> WeightedGraph:
    """Rooted regular tree; vertices are tuples of child indices, root ().

    Boundary set "leaves" holds the branching^depth deepest vertices.
    """
    if depth < 0 or branching < 1:
        raise ValueError("need depth >= 0 and branching >= 1")
    levels = [[()]]
    edges = []
    for _ in range(depth):
        nxt = []
        for v in levels[-1]:
            for c in range(branching):
                u = v + (c,)
                nxt.append(u)
                edges.append((v, u, length))
        levels.append(nxt)
    vertices = [v for lev in levels for v in lev]
    return WeightedGraph(vertices, edges, {"leaves": levels[-1]}, ())


def path_graph(n: int, length: float = 1.0) -> WeightedGraph:
    """Vertices 0..n-1 in a line; boundary "ends" = {0, n-1}; base 0."""
    if n < 2:
        raise ValueError("n must be at least 2")
    edges = [(i, i + 1, length) for i in range(n - 1)]
    return WeightedGraph(range(n), edges, {"ends": (0, n - 1)}, 0)


def cycle(n: int, length: float = 1.0) -> WeightedGraph:
    if n < 3:
        raise ValueError("n must be at least 3")
    edges = [(i, (i + 1) % n, length) for i in range(n)]
    return WeightedGraph(range(n), edges, {"all": tuple(range(n))}, 0)


def grid(n: int, m=None, length: float = 1.0) -> WeightedGraph:
    """n x m lattice with vertices (i, j); boundary sets are the four sides."""
    m = n if m is None else m
    if n < 2 or m < 2:
        raise ValueError("grid sides must be at least 2")
    vertices = [(i, j) for i in range(n) for j in range(m)]
    edges = [((i, j), (i + 1, j), length) for i in range(n - 1) for j in range(m)]
    edges += [((i, j), (i, j + 1), length) for i in range(n) for j in range(m - 1)]
    boundary = {
        "left": tuple((i, 0) for i in range(n)),
        "right": tuple((i, m - 1) for i in range(n)),
        "bottom": tuple((0, j) for j in range(m)),
        "top": tuple((n - 1, j) for j in range(m)),
    }
    return WeightedGraph(vertices, edges, boundary, (0, 0))


def hyperbolic_patch(depth: int, length: float = 1.0) -> WeightedGraph:
    """Binary tree plus edges between consecutive vertices of each level.

    A combinatorial model of a hyperbolic disk patch; "leaves" is the last level.
    """
    g = tree(depth, 2, length)
    levels = {}
    for v in g.vertices:
        levels.setdefault(len(v), []).append(v)
    extra = []
    for lev in levels.values():
        lev = sorted(lev)
        extra += [(a, b, length) for a, b in zip(lev, lev[1:])]
    return WeightedGraph(g.vertices, g.edges + tuple(extra), g.boundary, g.base)


def generate(recipe: GeneratorSpec, seed: int = 0):
    """Build the space or graph described by `recipe`; deterministic in `seed`."""
    p = dict(recipe.params)
    k = recipe.kind
    if k == "euclidean_sample":
        return euclidean_sample(p.get("n", 64), p.get("dim", 1), seed, p.get("jitter", False))
    if k == "snowflake":
        return snowflake(p.get("n", 64), p.get("alpha", 0.5), p.get("dim", 1), seed,
                         p.get("jitter", False))
    if k == "nonisotropic":
        return nonisotropic(p.get("n", 64), p.get("alphas", (1.0, 0.5)), seed)
    if k == "geometric_set":
        return geometric_set(p.get("k", 10), p.get("ratio", 0.5), p.get("masses", "uniform"))
    if k == "ultrametric":
        return ultrametric(p.get("depth", 8), p.get("branching", 2))
    if k == "tree":
        return tree(p.get("depth", 3), p.get("branching", 2), p.get("length", 1.0))
    if k == "cycle":
        return cycle(p.get("n", 12), p.get("length", 1.0))
    if k == "grid":
        return grid(p.get("n", 9), p.get("m"), p.get("length", 1.0))
    if k == "path":
        return path_graph(p.get("n", 8), p.get("length", 1.0))
    return hyperbolic_patch(p.get("depth", 4), p.get("length", 1.0))
