"""Readers and writers for graphs, polygons, heatmaps and tile layouts.

Files use image coordinates (y grows downward); in memory everything is in
the y-up working frame. The conversion is a sign flip of y in both
directions.
"""
from __future__ import annotations

import json
import math
import struct
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidInputError, ParseError
from .geometry import Point2
from .heat_scoring import HeatGrid
from .road_graph import PolygonSeq, RoadGraph

PMHG_MAGIC = b"PMHG"
_HEADER = struct.Struct("<4sII")


def flip_y(y: float) -> float:
    # 0.0 - y maps both 0.0 and -0.0 to +0.0
    return 0.0 - float(y)


def _read_json(path: str | Path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from None
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None


def _dump_json(doc: Any) -> str:
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=False) + "\n"


def _write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ParseError(f"{what} must be finite")
    return out


def _vertex_id(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{what} must be an integer id, got {value!r}")
    return value


# --- graph JSON -------------------------------------------------------------


def graph_from_document(doc: Any) -> RoadGraph:
    if not isinstance(doc, dict) or "vertices" not in doc or "edges" not in doc:
        raise ParseError("graph document needs 'vertices' and 'edges'")
    positions: dict[int, tuple[float, float]] = {}
    for k, vert in enumerate(doc["vertices"]):
        if not isinstance(vert, dict) or not {"id", "x", "y"} <= vert.keys():
            raise ParseError(f"vertex #{k} needs id, x and y")
        vid = _vertex_id(vert["id"], f"vertex #{k} id")
        if vid in positions:
            raise ParseError(f"duplicate vertex id {vid}")
        positions[vid] = (_number(vert["x"], f"vertex {vid} x"), flip_y(_number(vert["y"], f"vertex {vid} y")))
    edges = []
    seen = set()
    for k, edge in enumerate(doc["edges"]):
        if not isinstance(edge, (list, tuple)) or len(edge) != 2:
            raise ParseError(f"edge #{k} must be a pair of vertex ids")
        u, v = (_vertex_id(x, f"edge #{k} endpoint") for x in edge)
        for w in (u, v):
            if w not in positions:
                raise ParseError(f"edge endpoint {w} undefined")
        if u == v:
            raise ParseError(f"edge #{k} is a self-loop at vertex {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParseError(f"duplicate edge {list(key)}")
        seen.add(key)
        edges.append(key)
    try:
        return RoadGraph(positions, edges)
    except InvalidInputError as exc:
        raise ParseError(str(exc)) from None


def graph_to_document(g: RoadGraph) -> dict[str, Any]:
    return {
        "vertices": [{"id": v, "x": p.x, "y": flip_y(p.y)} for v, p in sorted(g.positions.items())],
        "edges": [list(e) for e in sorted(g.edges)],
    }


def load_graph(path: str | Path) -> RoadGraph:
    return graph_from_document(_read_json(path))


def dumps_graph(g: RoadGraph) -> str:
    return _dump_json(graph_to_document(g))


def save_graph(g: RoadGraph, path: str | Path) -> None:
    _write_text(path, dumps_graph(g))


# --- polygon GeoJSON ----------------------------------------------------------


def _feature(ring: Sequence[Point2], properties: dict[str, Any]) -> dict[str, Any]:
    coords = [[p[0], flip_y(p[1])] for p in ring]
    coords.append(list(coords[0]))
    return {
        "type": "Feature",
        "properties": properties,
        "geometry": {"type": "Polygon", "coordinates": [coords]},
    }


def road_polygons_to_document(polys: Iterable[PolygonSeq], positions: Mapping[int, Sequence[float]]) -> dict[str, Any]:
    features = []
    for poly in polys:
        ring = [positions[v] for v in poly.vertex_ids]
        features.append(_feature(ring, {"kind": poly.kind, "vertex_ids": list(poly.vertex_ids)}))
    return {"type": "FeatureCollection", "features": features}


def buildings_to_document(polygons: Iterable[Sequence[Sequence[float]]], scores: Iterable[float] | None = None) -> dict[str, Any]:
    polygons = list(polygons)
    scores = [None] * len(polygons) if scores is None else list(scores)
    features = []
    for ring, score in zip(polygons, scores):
        props = {} if score is None else {"score": float(score)}
        features.append(_feature(ring, props))
    return {"type": "FeatureCollection", "features": features}


def _rings(doc: Any) -> list[tuple[list[Point2], dict[str, Any]]]:
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ParseError("expected a GeoJSON FeatureCollection")
    out = []
    for k, feat in enumerate(doc.get("features", [])):
        geom = (feat or {}).get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ParseError(f"feature #{k} is not a Polygon")
        coords = geom.get("coordinates")
        if not coords or not isinstance(coords[0], list) or len(coords[0]) < 3:
            raise ParseError(f"feature #{k} has no exterior ring")
        ring = coords[0]
        if list(ring[0]) != list(ring[-1]):
            raise ParseError(f"feature #{k} ring is not closed (first != last)")
        pts = []
        for j, c in enumerate(ring[:-1]):
            if not isinstance(c, list) or len(c) < 2:
                raise ParseError(f"feature #{k} coordinate #{j} is malformed")
            pts.append(Point2(_number(c[0], "coordinate"), flip_y(_number(c[1], "coordinate"))))
        out.append((pts, dict(feat.get("properties") or {})))
    return out


def load_buildings(path: str | Path) -> list[tuple[list[Point2], float | None]]:
    """Rings and optional scores from a GeoJSON FeatureCollection."""
    out = []
    for pts, props in _rings(_read_json(path)):
        score = props.get("score")
        out.append((pts, None if score is None else _number(score, "score")))
    return out


def load_road_polygons(path: str | Path) -> tuple[list[PolygonSeq], dict[int, Point2]]:
    """Road polygons with vertex ids.

    Features carrying a ``vertex_ids`` property keep those ids; otherwise
    ids are assigned by exact coordinate identity in file order.
    """
    polys: list[PolygonSeq] = []
    positions: dict[int, Point2] = {}
    by_coord: dict[Point2, int] = {}
    pending = []
    for pts, props in _rings(_read_json(path)):
        kind = props.get("kind", "inner")
        ids = props.get("vertex_ids")
        if ids is not None:
            if len(ids) != len(pts):
                raise ParseError("vertex_ids length does not match the ring")
            for vid, p in zip(ids, pts):
                vid = _vertex_id(vid, "vertex id")
                if positions.setdefault(vid, p) != p:
                    raise ParseError(f"vertex {vid} has inconsistent coordinates")
                by_coord.setdefault(p, vid)
            polys.append(PolygonSeq(tuple(ids), kind))
        else:
            pending.append((pts, kind))
    next_id = max(positions, default=-1) + 1
    for pts, kind in pending:
        ids = []
        for p in pts:
            if p not in by_coord:
                by_coord[p] = next_id
                positions[next_id] = p
                next_id += 1
            ids.append(by_coord[p])
        polys.append(PolygonSeq(tuple(ids), kind))
    return polys, positions


def save_geojson(doc: dict[str, Any], path: str | Path) -> None:
    _write_text(path, _dump_json(doc))


# --- PMHG heatmaps ------------------------------------------------------------


def dumps_heatgrid(b: HeatGrid) -> bytes:
    values = np.ascontiguousarray(b.values, dtype="<f4")
    return _HEADER.pack(PMHG_MAGIC, b.width, b.height) + values.tobytes()


def loads_heatgrid(data: bytes) -> HeatGrid:
    if len(data) < _HEADER.size:
        raise ParseError("PMHG file is truncated")
    magic, width, height = _HEADER.unpack_from(data)
    if magic != PMHG_MAGIC:
        raise ParseError(f"bad PMHG magic {magic!r}")
    expected = _HEADER.size + 4 * width * height
    if len(data) != expected:
        raise ParseError(f"PMHG payload has {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(height, width)
    try:
        return HeatGrid(values.astype(np.float32))
    except InvalidInputError as exc:
        raise ParseError(str(exc)) from None


def load_heatgrid(path: str | Path) -> HeatGrid:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return loads_heatgrid(data)


def save_heatgrid(b: HeatGrid, path: str | Path) -> None:
    Path(path).write_bytes(dumps_heatgrid(b))


# --- tile layouts -----------------------------------------------------------------


def load_layout(path: str | Path) -> list[dict[str, Any]]:
    doc = _read_json(path)
    if not isinstance(doc, list):
        raise ParseError("layout must be a JSON list")
    out = []
    for k, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise ParseError(f"layout entry #{k} must be an object")
        missing = {"path", "origin_x", "origin_y", "width", "height"} - entry.keys()
        if missing:
            raise ParseError(f"layout entry #{k} lacks {sorted(missing)}")
        out.append(
            {
                "path": str(entry["path"]),
                "origin_x": _number(entry["origin_x"], "origin_x"),
                "origin_y": _number(entry["origin_y"], "origin_y"),
                "width": _number(entry["width"], "width"),
                "height": _number(entry["height"], "height"),
            }
        )
    return out


def save_json(doc: Any, path: str | Path) -> None:
    _write_text(path, _dump_json(doc))


def load_json(path: str | Path) -> Any:
    return _read_json(path)
