"""Weighted graphs with designated boundary vertex sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra


class InvalidGraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph with positive edge lengths.

    Parallel edges keep the shortest length. `boundary` maps a name to a
    tuple of vertices; the sets may overlap.
    """

    vertices: tuple
    edges: tuple
    boundary: dict = field(default_factory=dict)
    base: Optional[Hashable] = None

    def __post_init__(self):
        vertices = tuple(self.vertices)
        index = {v: i for i, v in enumerate(vertices)}
        if len(index) != len(vertices):
            raise InvalidGraphError("duplicate vertex ids")
        edges = []
        for e in self.edges:
            u, v, length = e
            if u not in index or v not in index:
                raise InvalidGraphError(f"edge ({u!r}, {v!r}) has an unknown endpoint")
            if u == v:
                raise InvalidGraphError(f"self-loop at {u!r}")
            if not (np.isfinite(length) and length > 0):
                raise InvalidGraphError(
                    f"edge ({u!r}, {v!r}) has non-positive length {length!r}")
            edges.append((u, v, float(length)))
        boundary = {}
        for name, members in dict(self.boundary).items():
            members = tuple(members)
            for m in members:
                if m not in index:
                    raise InvalidGraphError(f"boundary vertex {m!r} is not a vertex")
            boundary[name] = members
        if self.base is not None and self.base not in index:
            raise InvalidGraphError(f"base point {self.base!r} is not a vertex")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.vertices)

    def index(self, v) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise KeyError(f"unknown vertex {v!r}") from None

    def indices(self, vs) -> np.ndarray:
        return np.array([self.index(v) for v in vs], dtype=int)

    def __contains__(self, v):
        return v in self._index

    def edge_index_arrays(self):
        """(u_idx, v_idx, length) arrays over the stored edges."""
        if not self.edges:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        u = self.indices([e[0] for e in self.edges])
        v = self.indices([e[1] for e in self.edges])
        return u, v, np.array([e[2] for e in self.edges])

    @cached_property
    def adjacency(self) -> csr_matrix:
        n = len(self)
        u, v, w = self.edge_index_arrays()
        # keep the shortest of parallel edges
        best = {}
        for a, b, length in zip(u, v, w):
            key = (min(a, b), max(a, b))
            best[key] = min(best.get(key, np.inf), length)
        rows = [k[0] for k in best] + [k[1] for k in best]
        cols = [k[1] for k in best] + [k[0] for k in best]
        data = list(best.values()) * 2
        return csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs shortest-path table (inf between components)."""
        d = dijkstra(self.adjacency, directed=False)
        d.setflags(write=False)
        return d

    @property
    def connected(self) -> bool:
        if len(self) == 0:
            return True
        return connected_components(self.adjacency, directed=False)[0] == 1

    def require_connected(self):
        if not self.connected:
            raise InvalidGraphError("graph is disconnected")

    def d(self, x, y) -> float:
        return float(self.distances[self.index(x), self.index(y)])

    def boundary_set(self, which) -> tuple:
        """Resolve a boundary name, or pass through an explicit vertex list."""
        if isinstance(which, str) and which in self.boundary:
            return self.boundary[which]
        if isinstance(which, str):
            raise KeyError(f"no boundary set named {which!r}")
        members = tuple(which)
        for m in members:
            self.index(m)
        return members
