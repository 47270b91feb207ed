"""JSON and CSV files for spaces, graphs, maps, and reports."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from qmetric.analysis import SpaceMap
from qmetric.graphs import WeightedGraph
from qmetric.space import MeasuredSpace, QuasimetricSpace


def _jsonable(obj):
    """Lists for tuples/arrays; tuple ids survive as JSON arrays."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, tuple):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, list):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def _point_id(x):
    """JSON arrays come back as lists; ids must be hashable."""
    if isinstance(x, list):
        return tuple(_point_id(y) for y in x)
    return x


def dumps(obj) -> str:
    # repr-exact floats: json writes the shortest round-tripping form
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=True)


def space_to_dict(space) -> dict:
    mass = None
    if isinstance(space, MeasuredSpace):
        mass, space = space.mass, space.space
    out = {"points": list(space.points), "dist": space.dist}
    if mass is not None:
        out["mass"] = mass
    if space.infinity_point is not None:
        out["infinity"] = space.infinity_point
    return out


def space_from_dict(data: dict):
    """QuasimetricSpace, or MeasuredSpace when masses are present."""
    points = tuple(_point_id(p) for p in data["points"])
    inf = _point_id(data.get("infinity"))
    space = QuasimetricSpace(points, np.array(data["dist"], dtype=float), inf)
    if data.get("mass") is not None:
        return MeasuredSpace(space, np.array(data["mass"], dtype=float))
    return space


def write_space(space, path) -> None:
    Path(path).write_text(dumps(space_to_dict(space)))


def read_space(path):
    return space_from_dict(json.loads(Path(path).read_text()))


def read_measured(path) -> MeasuredSpace:
    s = read_space(path)
    return s if isinstance(s, MeasuredSpace) else MeasuredSpace.uniform(s)


def graph_to_dict(graph: WeightedGraph) -> dict:
    return {
        "vertices": list(graph.vertices),
        "edges": [[u, v, length] for u, v, length in graph.edges],
        "boundary": {k: list(v) for k, v in graph.boundary.items()},
        "base": graph.base,
    }


def graph_from_dict(data: dict) -> WeightedGraph:
    edges = [(_point_id(u), _point_id(v), float(length)) for u, v, length in data["edges"]]
    boundary = {k: tuple(_point_id(x) for x in v)
                for k, v in data.get("boundary", {}).items()}
    return WeightedGraph(tuple(_point_id(v) for v in data["vertices"]), edges,
                         boundary, _point_id(data.get("base")))


def write_graph(graph: WeightedGraph, path) -> None:
    Path(path).write_text(dumps(graph_to_dict(graph)))


def read_graph(path) -> WeightedGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))


def read_map(path) -> SpaceMap:
    """Map file: source and target space files (relative to the map file) and id pairs."""
    path = Path(path)
    data = json.loads(path.read_text())
    src = read_space(path.parent / data["source"])
    tgt = read_space(path.parent / data["target"])
    pairs = {_point_id(a): _point_id(b) for a, b in data["pairs"]}
    return SpaceMap(getattr(src, "space", src), getattr(tgt, "space", tgt), pairs)


def write_map(path, source_file, target_file, pairing: dict) -> None:
    Path(path).write_text(dumps({"source": str(source_file), "target": str(target_file),
                                 "pairs": [[k, v] for k, v in pairing.items()]}))


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
