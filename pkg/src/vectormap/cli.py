"""Command-line entry point: ``vectormap <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors. Every
failure prints a single line starting with ``error:`` to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from . import io
from .decoder import (
    DEFAULT_BEAM_WIDTH,
    DEFAULT_MAX_LEN,
    TableModel,
    cell_center,
    decode_building,
    decode_road_detailed,
    index_token,
    road_positions,
)
from .errors import NoDetectionError, VectorMapError
from .geometry import Point2
from .heat_scoring import DEFAULT_THRESHOLD, HeatGrid, edge_score
from .polygon_metrics import Detection, coco_eval
from .road_graph import RoadGraph, polygons_to_graph, sequentialize
from .stitcher import StitchConfig, TilePlacement, merge_graphs, remove_small_loops, tile_origins
from .topo_metrics import PathSampleConfig, road_report

log = logging.getLogger("vectormap")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_EDGE_MARGIN = 0.1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _json_text(doc: Any) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def touches_tile_margin(polygon: Sequence[Point2], tile_w: float, tile_h: float,
                        margin: float = DEFAULT_EDGE_MARGIN) -> bool:
    """Whether a tile-local polygon reaches into the outer ``margin`` band of the tile."""
    mx, my = margin * tile_w, margin * tile_h
    for x, y in polygon:
        row = -y
        if x < mx or x > tile_w - mx or row < my or row > tile_h - my:
            return True
    return False


def score_graph_edges(g: RoadGraph, b: HeatGrid, threshold: float, cell_size: float = 1.0) -> RoadGraph:
    """Keep edges whose mean centerline heat reaches ``threshold``; drop orphaned vertices."""
    kept = []
    for e in sorted(g.edges):
        (x1, y1), (x2, y2) = g.segment(e)
        seg = ((x1 / cell_size, y1 / cell_size), (x2 / cell_size, y2 / cell_size))
        if edge_score(b, seg) >= threshold:
            kept.append(e)
    used = {v for e in kept for v in e}
    return RoadGraph({v: p for v, p in g.positions.items() if v in used}, kept)


# --- subcommands ----------------------------------------------------------------


def cmd_sequentialize(args) -> int:
    g = io.load_graph(args.graph)
    polys = sequentialize(g)
    _emit(_json_text(io.road_polygons_to_document(polys, g.positions)), args.output)
    return EXIT_OK


def cmd_graphify(args) -> int:
    polys, positions = io.load_road_polygons(args.polygons)
    _emit(io.dumps_graph(polygons_to_graph(polys, positions)), args.output)
    return EXIT_OK


def cmd_decode(args) -> int:
    v = io.load_heatgrid(args.vertex_grid)
    if v.width != v.height:
        raise VectorMapError(f"vertex grid must be square, got {v.width}x{v.height}")
    model = TableModel.load(args.model, grid_size=v.width)
    roi = args.roi_size
    origin = Point2(args.roi_origin[0], io.flip_y(args.roi_origin[1])) if args.roi_origin else Point2(0.0, 0.0)
    if args.mode == "building":
        try:
            poly = decode_building(model, v.values, args.beam_width, args.max_len, roi, origin)
        except NoDetectionError as exc:
            log.info("no detection: %s", exc)
            polygons = []
        else:
            polygons = [poly]
        if args.tile_size and polygons:
            tw, th = args.tile_size
            polygons = [p for p in polygons if not touches_tile_margin(p, tw, th, args.edge_margin)]
        _emit(_json_text(io.buildings_to_document(polygons)), args.output)
        return EXIT_OK

    result = decode_road_detailed(model, v.values, args.beam_width, args.max_len)
    positions = road_positions(result.polygons, roi, model.grid_size, origin)
    g = polygons_to_graph(result.polygons, positions) if result.polygons else RoadGraph({}, [])
    if args.centerline and g.edges:
        b = io.load_heatgrid(args.centerline)
        # score in centerline-cell units regardless of the output pixel scale
        heat_pos = {
            vid: cell_center(index_token(vid, model.grid_size), b.width, model.grid_size)
            for vid in g.positions
        }
        kept = [e for e in sorted(g.edges) if edge_score(b, (heat_pos[e[0]], heat_pos[e[1]])) >= args.threshold]
        used = {x for e in kept for x in e}
        g = RoadGraph({k: p for k, p in g.positions.items() if k in used}, kept)
    _emit(io.dumps_graph(g), args.output)
    return EXIT_OK


def cmd_score_edges(args) -> int:
    b = io.load_heatgrid(args.centerline)
    g = io.load_graph(args.graph)
    _emit(io.dumps_graph(score_graph_edges(g, b, args.threshold, args.cell_size)), args.output)
    return EXIT_OK


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    doc = io.load_json(path)
    if not isinstance(doc, dict):
        raise VectorMapError("config file must contain a JSON object")
    return doc


def cmd_stitch(args) -> int:
    cfg_doc = _load_config(args.config)
    cfg = StitchConfig(
        merge_eps=args.merge_eps if args.merge_eps is not None else cfg_doc.get("merge_eps", 4.0),
        min_loop_area=args.min_loop_area if args.min_loop_area is not None else cfg_doc.get("min_loop_area", 300.0),
    )
    layout = io.load_layout(args.layout)
    base = Path(args.layout).parent
    given = {Path(t).name: Path(t) for t in args.tiles}
    tiles = []
    for entry in layout:
        name = Path(entry["path"]).name
        if args.tiles:
            if name not in given:
                continue
            path = given[name]
        else:
            path = Path(entry["path"])
            if not path.is_absolute():
                path = base / path
        g = io.load_graph(path)
        origin = Point2(entry["origin_x"], io.flip_y(entry["origin_y"]))
        tiles.append(TilePlacement(g, origin, (entry["width"], entry["height"])))
    if args.tiles and len(tiles) != len(given):
        known = {Path(e["path"]).name for e in layout}
        missing = sorted(set(given) - known)
        raise VectorMapError(f"tiles not in layout: {', '.join(missing)}")
    if not tiles:
        raise VectorMapError("layout lists no tiles")
    merged = merge_graphs(tiles, cfg)
    merged = remove_small_loops(merged, cfg.min_loop_area)
    _emit(io.dumps_graph(merged), args.output)
    return EXIT_OK


def cmd_layout(args) -> int:
    entries = []
    for i, (x, y) in enumerate(tile_origins(args.width, args.height, args.tile, args.overlap)):
        entries.append(
            {"path": args.pattern.format(i=i, x=int(x), y=int(y)), "origin_x": x, "origin_y": y,
             "width": float(args.tile), "height": float(args.tile)}
        )
    _emit(_json_text(entries), args.output)
    return EXIT_OK


def cmd_eval_roads(args) -> int:
    cfg_doc = _load_config(args.config)

    def pick(flag, key, default):
        return flag if flag is not None else cfg_doc.get(key, default)

    cfg = PathSampleConfig(
        n_starts=int(pick(args.starts, "n_starts", 100)),
        n_ends_per_start=int(pick(args.ends, "n_ends_per_start", 1000)),
        seed=int(pick(args.seed, "seed", 0)),
        snap_radius=float(pick(args.snap_radius, "snap_radius", 16.0)),
    )
    report = road_report(io.load_graph(args.gt), io.load_graph(args.pred), cfg)
    _emit(_json_text(report), args.output)
    return EXIT_OK


def cmd_eval_buildings(args) -> int:
    gts = [pts for pts, _ in io.load_buildings(args.gt)]
    dets = []
    for k, (pts, score) in enumerate(io.load_buildings(args.pred)):
        if score is None:
            raise VectorMapError(f"prediction feature #{k} has no score")
        dets.append(Detection(pts, score))
    report = coco_eval(gts, dets).as_dict()
    _emit(_json_text({k.upper(): v for k, v in report.items()}), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vectormap", description="Road/building vector map toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sequentialize", help="graph JSON -> road polygons (GeoJSON)")
    s.add_argument("graph")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sequentialize)

    s = sub.add_parser("graphify", help="road polygons (GeoJSON) -> graph JSON")
    s.add_argument("polygons")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_graphify)

    s = sub.add_parser("decode", help="beam-search decode with a table model")
    s.add_argument("--mode", choices=("building", "road"), required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--vertex-grid", required=True)
    s.add_argument("--centerline")
    s.add_argument("--beam-width", type=int, default=DEFAULT_BEAM_WIDTH)
    s.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    s.add_argument("--roi-size", type=float, help="RoI side length in pixels (default: grid cells)")
    s.add_argument("--roi-origin", type=float, nargs=2, metavar=("X", "Y"))
    s.add_argument("--tile-size", type=float, nargs=2, metavar=("W", "H"),
                   help="drop buildings touching the tile margin")
    s.add_argument("--edge-margin", type=float, default=DEFAULT_EDGE_MARGIN)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("score-edges", help="drop graph edges with low centerline heat")
    s.add_argument("graph")
    s.add_argument("--centerline", required=True)
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    s.add_argument("--cell-size", type=float, default=1.0, help="graph pixels per heatmap cell")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_score_edges)

    s = sub.add_parser("stitch", help="merge tile graphs into one graph")
    s.add_argument("tiles", nargs="*")
    s.add_argument("--layout", required=True)
    s.add_argument("--merge-eps", type=float)
    s.add_argument("--min-loop-area", type=float)
    s.add_argument("--config")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_stitch)

    s = sub.add_parser("layout", help="write a tile layout with overlapping tiles")
    s.add_argument("--width", type=float, required=True)
    s.add_argument("--height", type=float, required=True)
    s.add_argument("--tile", type=float, default=300.0)
    s.add_argument("--overlap", type=float, default=0.5)
    s.add_argument("--pattern", default="tile_{i}.json")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_layout)

    s = sub.add_parser("eval-roads", help="SP and path AP/AR of a predicted road graph")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--starts", type=int)
    s.add_argument("--ends", type=int)
    s.add_argument("--snap-radius", type=float)
    s.add_argument("--config")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_eval_roads)

    s = sub.add_parser("eval-buildings", help="COCO-style AP/AR of building polygons")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_eval_buildings)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (VectorMapError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        sys.stderr.write(f"error: {msg}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
