import logging
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _fixtures import networkx_face_count, random_planar_graph, square_graph, tjunction_graph, two_block_graph
from vectormap.errors import InvalidInputError, UndefinedEmbeddingError
from vectormap.road_graph import (
    PolygonSeq,
    RoadGraph,
    next_half_edge,
    polygon_signed_area,
    polygons_to_graph,
    segment_pass_count,
    sequentialize,
)


class TestRoadGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(InvalidInputError, match="self-loop"):
            RoadGraph({1: (0, 0)}, [(1, 1)])

    def test_rejects_dangling_endpoint(self):
        with pytest.raises(InvalidInputError, match="edge endpoint 99 undefined"):
            RoadGraph({1: (0, 0)}, [(1, 99)])

    def test_rejects_duplicate_edge(self):
        with pytest.raises(InvalidInputError, match="duplicate"):
            RoadGraph({1: (0, 0), 2: (1, 0)}, [(1, 2), (2, 1)])

    def test_rejects_coincident_vertices(self):
        with pytest.raises(InvalidInputError, match="coincide"):
            RoadGraph({1: (0, 0), 2: (0, 1e-12)}, [])

    def test_half_edges_have_twins(self):
        g = two_block_graph()
        hes = set(g.half_edges())
        assert len(hes) == 2 * len(g.edges)
        assert all((v, u) in hes for u, v in hes)


class TestNextHalfEdge:
    def test_t_junction_turns_right(self):
        assert next_half_edge(tjunction_graph(), (1, 2)) == (2, 3)

    def test_dead_end_turns_around(self):
        assert next_half_edge(tjunction_graph(), (2, 3)) == (3, 2)

    def test_degree_two_continues(self):
        g = RoadGraph({0: (0, 0), 1: (1, 0.2), 2: (2, 0)}, [(0, 1), (1, 2)])
        assert next_half_edge(g, (0, 1)) == (1, 2)
        assert next_half_edge(g, (2, 1)) == (1, 0)

    def test_four_way_crossing_prefers_right(self):
        # heading east into the centre: right is south, straight is east, left is north
        g = RoadGraph(
            {0: (0, 0), 1: (-1, 0), 2: (1, 0), 3: (0, 1), 4: (0, -1)},
            [(0, 1), (0, 2), (0, 3), (0, 4)],
        )
        assert next_half_edge(g, (1, 0)) == (0, 4)
        assert next_half_edge(g, (4, 0)) == (0, 2)

    def test_unknown_half_edge(self):
        with pytest.raises(InvalidInputError):
            next_half_edge(tjunction_graph(), (1, 3))


class TestSequentialize:
    def test_tjunction_single_polygon(self):
        polys = sequentialize(tjunction_graph())
        assert [p.canonical().vertex_ids for p in polys] == [(1, 2, 3, 2, 4, 2)]
        assert polys[0].kind == "outer"

    def test_single_edge(self):
        g = RoadGraph({"a": (0, 0), "b": (1, 0)}, [("a", "b")])
        assert [p.vertex_ids for p in sequentialize(g)] == [("a", "b")]

    def test_square_outer_and_inner(self):
        g = square_graph(2.0)
        polys = sequentialize(g)
        areas = sorted(polygon_signed_area(g, p) for p in polys)
        assert areas == [-4.0, 4.0]
        outer = [p for p in polys if p.kind == "outer"]
        assert len(outer) == 1 and polygon_signed_area(g, outer[0]) == 4.0

    def test_two_block_one_outer_two_inner(self):
        g = two_block_graph()
        polys = sequentialize(g)
        areas = [polygon_signed_area(g, p) for p in polys]
        assert len(polys) == 3
        assert sum(a > 0 for a in areas) == 1 and sum(a < 0 for a in areas) == 2
        assert all((a > 0) == (p.kind == "outer") for a, p in zip(areas, polys))

    def test_crossing_edges_raise(self):
        g = RoadGraph({0: (0, 0), 1: (2, 2), 2: (0, 2), 3: (2, 0)}, [(0, 1), (2, 3)])
        with pytest.raises(UndefinedEmbeddingError):
            sequentialize(g)

    def test_t_contact_without_vertex_raises(self):
        g = RoadGraph({0: (0, 0), 1: (2, 0), 2: (1, 0), 3: (1, 1)}, [(0, 1), (2, 3)])
        with pytest.raises(UndefinedEmbeddingError):
            sequentialize(g)

    def test_isolated_vertex_dropped_with_warning(self, caplog):
        g = RoadGraph({0: (0, 0), 1: (1, 0), 2: (5, 5)}, [(0, 1)])
        with caplog.at_level(logging.WARNING):
            polys = sequentialize(g)
        assert [p.vertex_ids for p in polys] == [(0, 1)]
        assert "isolated" in caplog.text

    def test_two_components_each_get_an_outer(self):
        g = RoadGraph(
            {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1), 10: (5, 5), 11: (6, 5)},
            [(0, 1), (1, 2), (2, 3), (0, 3), (10, 11)],
        )
        polys = sequentialize(g)
        assert Counter(p.kind for p in polys) == {"outer": 2, "inner": 1}

    def test_deterministic(self):
        g = random_planar_graph(np.random.default_rng(3), 40)
        assert sequentialize(g) == sequentialize(g)

    def test_result_independent_of_construction_order(self):
        g = random_planar_graph(np.random.default_rng(5), 30)
        shuffled = RoadGraph(dict(reversed(list(g.positions.items()))), list(reversed(sorted(g.edges))))
        assert sequentialize(g) == sequentialize(shuffled)


class TestCanonical:
    def test_rotation_equivalence(self):
        a = PolygonSeq((2, 4, 2, 1, 2, 3))
        assert a.canonical().vertex_ids == (1, 2, 3, 2, 4, 2)
        assert a.same_cycle(PolygonSeq((1, 2, 3, 2, 4, 2)))

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            PolygonSeq((1,))


class TestPolygonsToGraph:
    def test_single_retrace(self):
        g = polygons_to_graph([PolygonSeq((1, 2))], {1: (0, 0), 2: (1, 0)})
        assert g.edges == {(1, 2)}

    def test_shared_edge_once(self):
        pos = {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)}
        polys = [PolygonSeq((0, 1, 2, 3), "outer"), PolygonSeq((0, 3, 2, 1))]
        assert polygons_to_graph(polys, pos) == square_graph()

    def test_unknown_vertex(self):
        with pytest.raises(InvalidInputError):
            polygons_to_graph([PolygonSeq((1, 7))], {1: (0, 0)})

    def test_round_trip_two_block(self):
        g = two_block_graph()
        assert polygons_to_graph(sequentialize(g), g.positions) == g


class TestPassCount:
    def test_tjunction_edge_walked_twice(self):
        polys = sequentialize(tjunction_graph())
        assert segment_pass_count(polys, (1, 2)) == 2
        assert segment_pass_count(polys, (2, 1)) == 2

    def test_square_outer_only(self):
        outer = [p for p in sequentialize(square_graph()) if p.kind == "outer"]
        assert all(segment_pass_count(outer, e) == 1 for e in square_graph().edges)

    def test_full_set_is_two(self):
        g = two_block_graph()
        polys = sequentialize(g)
        assert all(segment_pass_count(polys, e) == 2 for e in g.edges)

    def test_unknown_edge(self):
        with pytest.raises(InvalidInputError):
            segment_pass_count(sequentialize(tjunction_graph()), (1, 3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 50), st.floats(0.0, 1.0))
def test_face_walk_properties(seed, n, extra):
    g = random_planar_graph(np.random.default_rng(seed), n, extra)
    polys = sequentialize(g)
    walked = Counter(h for p in polys for h in p.half_edges())
    assert set(walked) == set(g.half_edges()) and set(walked.values()) == {1}
    assert len(polys) == len(g.edges) - len(g.positions) + 2 == networkx_face_count(g)
    areas = [polygon_signed_area(g, p) for p in polys]
    scale = sum(abs(a) for a in areas) or 1.0
    assert abs(math.fsum(areas)) <= 1e-9 * scale
    nonneg = [p for p, a in zip(polys, areas) if a >= 0]
    assert len(nonneg) == 1 and nonneg[0].kind == "outer"
    assert polygons_to_graph(polys, g.positions) == g
