"""Beam-search decoding of polygons from a step-wise conditional model.

The model sees the previous vertex, the current vertex and the first vertex
of the sequence and returns a distribution over the ``G*G`` grid cells plus
an end-of-sequence token. Token indices are ``row * G + col`` for cells and
``G * G`` for end-of-sequence.
"""
from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Union

import numpy as np

from .errors import InvalidInputError, InvalidModelError, NoDetectionError
from .geometry import Point2, validate_simple
from .road_graph import PolygonSeq, edge_key, pass_counts

log = logging.getLogger(__name__)

GRID_SIZE = 28
DEFAULT_BEAM_WIDTH = 5
DEFAULT_MAX_LEN = 30
MAX_INNER_ATTEMPTS = 64
PROB_TOLERANCE = 1e-6


class _Eos:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EOS"

    def __reduce__(self):
        return (_Eos, ())


EOS = _Eos()

Cell = tuple[int, int]
Token = Union[Cell, _Eos]


class ConditionalStepModel(Protocol):
    """Provider of P(next | prev, curr, first) over ``grid_size**2 + 1`` tokens."""

    grid_size: int

    def query(self, y_prev: Token, y_curr: Token, y_first: Cell) -> np.ndarray: ...


def token_index(tok: Token, grid_size: int = GRID_SIZE) -> int:
    if tok is EOS:
        return grid_size * grid_size
    r, c = tok
    if not (0 <= r < grid_size and 0 <= c < grid_size):
        raise InvalidInputError(f"cell {tok} outside the {grid_size}x{grid_size} grid")
    return r * grid_size + c


def index_token(idx: int, grid_size: int = GRID_SIZE) -> Token:
    if idx == grid_size * grid_size:
        return EOS
    return divmod(int(idx), grid_size)


def format_token(tok: Token) -> str:
    return "eos" if tok is EOS else f"{tok[0]}:{tok[1]}"


def parse_token(text: str) -> Token:
    text = text.strip()
    if text == "eos":
        return EOS
    try:
        r, c = text.split(":")
        return (int(r), int(c))
    except ValueError:
        raise InvalidInputError(f"bad token {text!r}; expected 'r:c' or 'eos'") from None


class TableModel:
    """Explicit state -> distribution table; unlisted states are uniform."""

    def __init__(
        self,
        table: Mapping[tuple[Token, Token, Cell], Mapping[Token, float]] | None = None,
        grid_size: int = GRID_SIZE,
    ) -> None:
        self.grid_size = grid_size
        self._n = grid_size * grid_size + 1
        self._table: dict[tuple[int, int, int], np.ndarray] = {}
        for state, dist in (table or {}).items():
            self.set(state, dist)

    def set(self, state: tuple[Token, Token, Cell], dist: Mapping[Token, float]) -> None:
        vec = np.zeros(self._n)
        for tok, p in dist.items():
            vec[token_index(tok, self.grid_size)] += float(p)
        self._table[self._key(*state)] = vec

    def _key(self, y_prev: Token, y_curr: Token, y_first: Cell) -> tuple[int, int, int]:
        g = self.grid_size
        return (token_index(y_prev, g), token_index(y_curr, g), token_index(y_first, g))

    def query(self, y_prev: Token, y_curr: Token, y_first: Cell) -> np.ndarray:
        vec = self._table.get(self._key(y_prev, y_curr, y_first))
        if vec is None:
            return np.full(self._n, 1.0 / self._n)
        return vec

    def to_json(self) -> dict[str, dict[str, float]]:
        g = self.grid_size
        out = {}
        for (a, b, c), vec in sorted(self._table.items()):
            key = ",".join(format_token(index_token(i, g)) for i in (a, b, c))
            out[key] = {format_token(index_token(int(i), g)): float(vec[i]) for i in np.flatnonzero(vec)}
        return out

    @classmethod
    def from_json(cls, doc: Mapping[str, Mapping[str, float]], grid_size: int = GRID_SIZE) -> TableModel:
        model = cls(grid_size=grid_size)
        for key, dist in doc.items():
            parts = key.split(",")
            if len(parts) != 3:
                raise InvalidInputError(f"model key {key!r} must be 'y_prev,y_curr,y_first'")
            y_prev, y_curr, y_first = (parse_token(p) for p in parts)
            if y_first is EOS:
                raise InvalidInputError(f"model key {key!r}: first token cannot be eos")
            model.set((y_prev, y_curr, y_first), {parse_token(t): p for t, p in dist.items()})
        return model

    @classmethod
    def load(cls, path: str | Path, grid_size: int = GRID_SIZE) -> TableModel:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh), grid_size)

    def plant_cycle(self, cells: Sequence[Cell], seed_prev: Cell | None = None) -> None:
        """Make the model emit ``cells`` deterministically, then end-of-sequence.

        ``seed_prev`` is the vertex preceding ``cells[0]`` when decoding starts;
        it defaults to ``cells[0]`` itself (a single-vertex start).
        """
        first = tuple(cells[0])
        prev_tok: Token = first if seed_prev is None else tuple(seed_prev)
        for i, cur in enumerate(cells):
            nxt = tuple(cells[i + 1]) if i + 1 < len(cells) else EOS
            self.set((prev_tok, tuple(cur), first), {nxt: 1.0})
            prev_tok = tuple(cur)


@dataclass
class BeamHypothesis:
    tokens: list[Token]
    log_prob: float = 0.0
    terminated: bool = False
    truncated: bool = False
    seed_prev: Cell | None = field(default=None, repr=False)

    @property
    def cells(self) -> list[Cell]:
        return [t for t in self.tokens if t is not EOS]

    @property
    def first(self) -> Cell:
        return self.tokens[0]

    def state(self) -> tuple[Token, Token, Cell]:
        cells = self.tokens
        prev = cells[-2] if len(cells) >= 2 else self.seed_prev
        return (prev, cells[-1], self.first)

    def closes_at(self, tok: Token) -> bool:
        """Whether emitting ``tok`` returns to the start and closes the walk."""
        if tok is EOS or tok != self.first:
            return False
        if self.seed_prev == self.first:
            return True
        return self.tokens[-1] == self.seed_prev


def _validated(model: ConditionalStepModel, state, n: int) -> np.ndarray:
    probs = np.asarray(model.query(*state), dtype=float)
    if probs.shape != (n,):
        raise InvalidModelError(f"model returned shape {probs.shape}, expected ({n},)")
    if not np.all(np.isfinite(probs)) or probs.min() < 0.0:
        raise InvalidModelError("model returned negative or non-finite probabilities")
    total = float(probs.sum())
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise InvalidModelError(f"model distribution sums to {total}, not 1")
    return probs


Seed = Union[Cell, tuple[Cell, Cell]]


def _seed_pair(seed) -> tuple[Cell, Cell]:
    if len(seed) == 2 and all(isinstance(s, (tuple, list)) for s in seed):
        prev, first = seed
        return tuple(prev), tuple(first)
    cell = tuple(seed)
    return cell, cell


def beam_search(
    model: ConditionalStepModel,
    starts: Sequence[Seed],
    w: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
) -> BeamHypothesis:
    """Best-scoring closed token sequence under ``model``.

    Each start is either a cell (used as both ``y_-1`` and ``y_0``) or a
    ``(y_-1, y_0)`` pair. All starts share one pool of ``w`` hypotheses.
    Scores are plain sums of log probabilities. A hypothesis terminates on
    end-of-sequence or when it returns to its first vertex. Finished
    hypotheses stay in the pool and compete with live ones. If nothing
    terminates within ``max_len`` tokens, the best live hypothesis is
    returned with ``truncated`` set.
    """
    if not starts:
        raise InvalidInputError("beam search needs at least one start")
    if w < 1:
        raise InvalidInputError(f"beam width must be >= 1, got {w}")
    if max_len < 2:
        raise InvalidInputError(f"max_len must be >= 2, got {max_len}")
    g = model.grid_size
    n = g * g + 1
    eos_idx = g * g

    beam: list[BeamHypothesis] = []
    for seed in starts:
        prev, first = _seed_pair(seed)
        token_index(prev, g)
        token_index(first, g)
        beam.append(BeamHypothesis([first], 0.0, seed_prev=prev))
    beam = beam[:w]

    while any(not h.terminated and len(h.tokens) < max_len for h in beam):
        pool: list[tuple[float, int, int, BeamHypothesis | None]] = []
        for rank, hyp in enumerate(beam):
            if hyp.terminated or len(hyp.tokens) >= max_len:
                pool.append((hyp.log_prob, rank, -1, hyp))
                continue
            probs = _validated(model, hyp.state(), n)
            nz = np.flatnonzero(probs > 0.0)
            if len(nz) > w:
                logp = np.log(probs[nz])
                # top-w per parent, ties resolved toward the smaller token index
                order = np.lexsort((nz, -logp))[:w]
                nz = nz[order]
            for idx in nz:
                pool.append((hyp.log_prob + math.log(probs[idx]), rank, int(idx), None))
        pool.sort(key=lambda item: (-item[0], item[1], item[2]))
        new_beam = []
        for score, rank, idx, done in pool[:w]:
            if done is not None:
                new_beam.append(done)
                continue
            parent = beam[rank]
            tok = index_token(idx, g)
            closes = idx == eos_idx or parent.closes_at(tok)
            new_beam.append(
                BeamHypothesis(
                    parent.tokens + [EOS if closes else tok],
                    score,
                    terminated=closes,
                    seed_prev=parent.seed_prev,
                )
            )
        beam = new_beam

    finished = [h for h in beam if h.terminated]
    if finished:
        return max(finished, key=lambda h: h.log_prob)
    best = max(beam, key=lambda h: h.log_prob)
    return BeamHypothesis(best.tokens + [EOS], best.log_prob, True, True, best.seed_prev)


def greedy_decode(model: ConditionalStepModel, start: Seed, max_len: int = DEFAULT_MAX_LEN) -> BeamHypothesis:
    return beam_search(model, [start], 1, max_len)


def _top_cells(values: np.ndarray, mask: np.ndarray, w: int) -> list[Cell]:
    if w < 1:
        raise InvalidInputError(f"w must be >= 1, got {w}")
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        return []
    scores = values[rows, cols]
    if scores.max() <= 0.0:
        return []
    order = np.lexsort((cols, rows, -scores))[:w]
    return [(int(rows[i]), int(cols[i])) for i in order]


def _check_vertex_grid(v) -> np.ndarray:
    arr = np.asarray(getattr(v, "values", v), dtype=float)
    if arr.ndim != 2:
        raise InvalidInputError(f"vertex grid must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
        raise InvalidInputError("vertex grid values must lie in [0, 1]")
    return arr


def select_building_starts(v, w: int) -> list[Cell]:
    """The ``w`` highest-scoring cells, best first; ties by (row, col)."""
    arr = _check_vertex_grid(v)
    return _top_cells(arr, np.ones(arr.shape, dtype=bool), w)


def select_road_starts(v, w: int) -> list[Cell]:
    """Like :func:`select_building_starts` but restricted to border cells."""
    arr = _check_vertex_grid(v)
    mask = np.zeros(arr.shape, dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return _top_cells(arr, mask, w)


def cell_center(cell: Cell, roi_size: float | None = None, grid_size: int = GRID_SIZE,
                origin: Sequence[float] = (0.0, 0.0)) -> Point2:
    """Working-frame centre of a grid cell inside an RoI of side ``roi_size``.

    ``origin`` is the working-frame position of the RoI's top-left corner.
    """
    scale = 1.0 if roi_size is None else roi_size / grid_size
    r, c = cell
    return Point2(origin[0] + (c + 0.5) * scale, origin[1] - (r + 0.5) * scale)


def cell_id(cell: Cell, grid_size: int = GRID_SIZE) -> int:
    return token_index(cell, grid_size)


def decode_building(
    model: ConditionalStepModel,
    v,
    w: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
    roi_size: float | None = None,
    origin: Sequence[float] = (0.0, 0.0),
) -> list[Point2]:
    """Decode one building footprint as a simple polygon.

    Raises :class:`NoDetectionError` when the vertex grid is empty or the
    best hypothesis does not form a simple polygon with at least 3 vertices.
    """
    starts = select_building_starts(v, w)
    if not starts:
        raise NoDetectionError("vertex grid has no candidate keypoints")
    best = beam_search(model, starts, w, max_len)
    cells = best.cells
    if len(set(cells)) < 3:
        raise NoDetectionError(f"decoded sequence has only {len(set(cells))} distinct vertices")
    poly = [cell_center(c, roi_size, model.grid_size, origin) for c in cells]
    try:
        validate_simple(poly)
    except InvalidInputError as exc:
        raise NoDetectionError(f"decoded polygon is invalid: {exc}") from None
    return poly


@dataclass
class RoadDecodeResult:
    polygons: list[PolygonSeq]
    complete: bool
    attempts: int


def _to_polygon(hyp: BeamHypothesis, kind: str, grid_size: int) -> PolygonSeq | None:
    ids = [cell_id(c, grid_size) for c in hyp.cells]
    if len(ids) < 2:
        return None
    # collapse repeated consecutive cells, they encode no segment
    compact = [i for k, i in enumerate(ids) if i != ids[k - 1] or k == 0]
    while len(compact) > 1 and compact[-1] == compact[0]:
        compact.pop()
    if len(compact) < 2:
        return None
    return PolygonSeq(tuple(compact), kind)


def decode_road_detailed(
    model: ConditionalStepModel,
    v,
    w: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
    max_attempts: int = MAX_INNER_ATTEMPTS,
) -> RoadDecodeResult:
    g = model.grid_size
    starts = select_road_starts(v, w)
    if not starts:
        return RoadDecodeResult([], False, 0)
    outer = _to_polygon(beam_search(model, starts, w, max_len), "outer", g)
    if outer is None:
        return RoadDecodeResult([], False, 1)
    polys = [outer]
    attempts = 1
    tried: set[tuple[int, int]] = set()
    cap = min(max_attempts, 2 * len(pass_counts(polys)) + 1)
    while attempts < cap:
        counts = pass_counts(polys)
        if all(c == 2 for c in counts.values()):
            return RoadDecodeResult(polys, True, attempts)
        seed = None
        for poly in polys:
            for a, b in poly.half_edges():
                if counts.get(edge_key(a, b)) == 1 and (b, a) not in tried:
                    seed = (b, a)
                    break
            if seed is not None:
                break
        if seed is None:
            break
        tried.add(seed)
        attempts += 1
        prev, first = (index_token(i, g) for i in seed)
        inner = _to_polygon(beam_search(model, [(prev, first)], w, max_len), "inner", g)
        if inner is None or any(inner.same_cycle(p) for p in polys):
            break
        polys.append(inner)
        cap = min(max_attempts, 2 * len(pass_counts(polys)) + 1)
    complete = all(c == 2 for c in pass_counts(polys).values())
    if not complete:
        log.warning("road decoding incomplete after %d attempts", attempts)
    return RoadDecodeResult(polys, complete, attempts)


def decode_road(
    model: ConditionalStepModel,
    v,
    w: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[PolygonSeq]:
    """Decode the outer road polygon, then inner polygons seeded from
    segments that have been walked only once so far.

    Vertex ids in the result are cell indices ``row * G + col``; map them to
    coordinates with :func:`cell_center`.
    """
    return decode_road_detailed(model, v, w, max_len).polygons


def road_positions(polys: Sequence[PolygonSeq], roi_size: float | None = None,
                   grid_size: int = GRID_SIZE, origin: Sequence[float] = (0.0, 0.0)) -> dict[int, Point2]:
    ids = sorted({i for p in polys for i in p.vertex_ids})
    return {i: cell_center(index_token(i, grid_size), roi_size, grid_size, origin) for i in ids}
