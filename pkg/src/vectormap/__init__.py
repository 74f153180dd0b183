"""Vector map topology toolkit: road graph sequentialization, polygon
decoding, tile stitching and map evaluation."""

from .errors import (
    InvalidInputError,
    InvalidModelError,
    NoDetectionError,
    ParseError,
    UndefinedEmbeddingError,
    VectorMapError,
)
from .geometry import Point2, Segment, polygon_intersection_area, polygon_iou, signed_area
from .road_graph import (
    PolygonSeq,
    RoadGraph,
    next_half_edge,
    polygons_to_graph,
    segment_pass_count,
    sequentialize,
)

__all__ = [
    "InvalidInputError",
    "InvalidModelError",
    "NoDetectionError",
    "ParseError",
    "Point2",
    "PolygonSeq",
    "RoadGraph",
    "Segment",
    "UndefinedEmbeddingError",
    "VectorMapError",
    "next_half_edge",
    "polygon_intersection_area",
    "polygon_iou",
    "polygons_to_graph",
    "segment_pass_count",
    "sequentialize",
    "signed_area",
]
