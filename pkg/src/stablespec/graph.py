"""Mixed-graph data structures: ADMGs, MAGs and PAGs with per-endpoint marks.

Graphs are immutable values: every operation that changes structure returns
a new graph. Edge endpoints carry one of three marks (tail, arrow, circle);
the graph kind restricts which marks and parallel edges are allowed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence


class GraphError(ValueError):
    """Invalid graph structure or an unknown vertex in a query."""


class EndpointMark(enum.Enum):
    TAIL = "-"
    ARROW = ">"
    CIRCLE = "o"


TAIL = EndpointMark.TAIL
ARROW = EndpointMark.ARROW
CIRCLE = EndpointMark.CIRCLE


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    mark_at_a: EndpointMark
    mark_at_b: EndpointMark

    def __post_init__(self):
        if self.a == self.b:
            raise GraphError(f"self-loop at {self.a!r}")

    def mark_at(self, v: str) -> EndpointMark:
        if v == self.a:
            return self.mark_at_a
        if v == self.b:
            return self.mark_at_b
        raise GraphError(f"{v!r} is not an endpoint of {self}")

    def other(self, v: str) -> str:
        if v == self.a:
            return self.b
        if v == self.b:
            return self.a
        raise GraphError(f"{v!r} is not an endpoint of {self}")

    @property
    def is_directed(self) -> bool:
        """Tail-arrow edge (a directed edge in either orientation)."""
        return {self.mark_at_a, self.mark_at_b} == {TAIL, ARROW}

    @property
    def is_bidirected(self) -> bool:
        return self.mark_at_a == ARROW and self.mark_at_b == ARROW

    def tail_end(self) -> str:
        if not self.is_directed:
            raise GraphError(f"{self} is not a directed edge")
        return self.a if self.mark_at_a == TAIL else self.b

    def head_end(self) -> str:
        if not self.is_directed:
            raise GraphError(f"{self} is not a directed edge")
        return self.b if self.mark_at_b == ARROW else self.a

    def canonical(self) -> "Edge":
        """Same edge with endpoints in sorted name order."""
        if self.a <= self.b:
            return self
        return Edge(self.b, self.a, self.mark_at_b, self.mark_at_a)


def directed(a: str, b: str) -> Edge:
    """a --> b"""
    return Edge(a, b, TAIL, ARROW)


def bidirected(a: str, b: str) -> Edge:
    """a <-> b"""
    return Edge(a, b, ARROW, ARROW)


def circle_arrow(a: str, b: str) -> Edge:
    """a o-> b"""
    return Edge(a, b, CIRCLE, ARROW)


def circle_circle(a: str, b: str) -> Edge:
    """a o-o b"""
    return Edge(a, b, CIRCLE, CIRCLE)


class MixedGraph:
    """A mixed graph over named vertices, tagged as ADMG, MAG or PAG.

    Invariants enforced at construction:
      * MAG/PAG: at most one edge per vertex pair, ADMG: at most one
        directed plus at most one bidirected edge per pair;
      * ADMG/MAG: no circle marks, and the directed part is acyclic;
      * ADMG: every edge is directed or bidirected.
    """

    __slots__ = ("kind", "vertices", "edges", "_adj", "_index", "_cache")

    def __init__(self, vertices: Sequence[str], edges: Iterable[Edge], kind: str):
        if kind not in ("ADMG", "MAG", "PAG"):
            raise GraphError(f"unknown graph kind {kind!r}")
        vertices = tuple(vertices)
        if len(set(vertices)) != len(vertices):
            raise GraphError("duplicate vertex names")
        edges = tuple(e.canonical() for e in edges)
        vset = set(vertices)
        adj: dict[str, dict[str, list[Edge]]] = {v: {} for v in vertices}
        for e in edges:
            if e.a not in vset or e.b not in vset:
                raise GraphError(f"edge {e} references unknown vertex")
            adj[e.a].setdefault(e.b, []).append(e)
            adj[e.b].setdefault(e.a, []).append(e)
        self.kind = kind
        self.vertices = vertices
        self.edges = edges
        self._adj = adj
        self._index = {v: i for i, v in enumerate(vertices)}
        self._cache: dict = {}
        self._validate()

    def _validate(self):
        for v, nbrs in self._adj.items():
            for w, es in nbrs.items():
                if self.kind in ("MAG", "PAG"):
                    if len(es) > 1:
                        raise GraphError(f"multiple edges between {v} and {w} in a {self.kind}")
                else:
                    n_dir = sum(e.is_directed for e in es)
                    n_bi = sum(e.is_bidirected for e in es)
                    if n_dir > 1 or n_bi > 1 or n_dir + n_bi < len(es):
                        raise GraphError(f"invalid parallel edges between {v} and {w} in an ADMG")
        if self.kind in ("ADMG", "MAG"):
            for e in self.edges:
                if CIRCLE in (e.mark_at_a, e.mark_at_b):
                    raise GraphError(f"circle mark in a {self.kind}: {e}")
            if self._directed_part_cyclic():
                raise GraphError(f"directed cycle in a {self.kind}")
        if self.kind == "ADMG":
            for e in self.edges:
                if not (e.is_directed or e.is_bidirected):
                    raise GraphError(f"ADMG edge must be directed or bidirected: {e}")

    def _directed_part_cyclic(self) -> bool:
        state = {v: 0 for v in self.vertices}  # 0 unseen, 1 open, 2 done

        def visit(v: str) -> bool:
            state[v] = 1
            for w in self.children(v):
                if state[w] == 1 or (state[w] == 0 and visit(w)):
                    return True
            state[v] = 2
            return False

        return any(state[v] == 0 and visit(v) for v in self.vertices)

    # -- basic queries -------------------------------------------------

    def check_vertices(self, vs: Iterable[str]):
        unknown = set(vs) - set(self.vertices)
        if unknown:
            raise GraphError(f"unknown vertices: {sorted(unknown)}")

    def adjacent(self, u: str, v: str) -> bool:
        return v in self._adj[u]

    def neighbors(self, v: str) -> list[str]:
        return sorted(self._adj[v])

    def edges_between(self, u: str, v: str) -> list[Edge]:
        return list(self._adj[u].get(v, []))

    def edge(self, u: str, v: str) -> Edge:
        es = self._adj[u].get(v, [])
        if len(es) != 1:
            raise GraphError(f"expected exactly one edge between {u} and {v}, found {len(es)}")
        return es[0]

    def edges_at(self, v: str) -> list[Edge]:
        return [e for nbr in sorted(self._adj[v]) for e in self._adj[v][nbr]]

    def parents(self, v: str) -> set[str]:
        """Vertices u with a directed edge u --> v."""
        return {e.tail_end() for e in self.edges_at(v) if e.is_directed and e.head_end() == v}

    def children(self, v: str) -> set[str]:
        return {e.head_end() for e in self.edges_at(v) if e.is_directed and e.tail_end() == v}

    def ancestors(self, vs: Iterable[str]) -> set[str]:
        """Reflexive closure under directed (tail-arrow) edges."""
        self.check_vertices(vs)
        out = set(vs)
        frontier = list(out)
        while frontier:
            v = frontier.pop()
            for p in self.parents(v):
                if p not in out:
                    out.add(p)
                    frontier.append(p)
        return out

    def possible_parents(self, v: str) -> set[str]:
        """u with an edge u *-> v whose mark at u is tail or circle."""
        out = set()
        for e in self.edges_at(v):
            u = e.other(v)
            if e.mark_at(v) == ARROW and e.mark_at(u) in (TAIL, CIRCLE):
                out.add(u)
        return out

    def possible_children(self, v: str) -> set[str]:
        out = set()
        for e in self.edges_at(v):
            u = e.other(v)
            if e.mark_at(u) == ARROW and e.mark_at(v) in (TAIL, CIRCLE):
                out.add(u)
        return out

    # -- derived graphs ------------------------------------------------

    def induced(self, vs: Iterable[str]) -> "MixedGraph":
        self.check_vertices(vs)
        keep = set(vs)
        verts = [v for v in self.vertices if v in keep]
        edges = [e for e in self.edges if e.a in keep and e.b in keep]
        return MixedGraph(verts, edges, self.kind)

    def replace_edges(self, edges: Iterable[Edge]) -> "MixedGraph":
        return MixedGraph(self.vertices, edges, self.kind)

    def with_kind(self, kind: str) -> "MixedGraph":
        return MixedGraph(self.vertices, self.edges, kind)

    # -- equality / hashing -------------------------------------------

    def _key(self):
        return (self.kind, self.vertices, frozenset(self.edges))

    def __eq__(self, other):
        return isinstance(other, MixedGraph) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"MixedGraph({self.kind}, |V|={len(self.vertices)}, |E|={len(self.edges)})"


# -- graphical closures ----------------------------------------------------


def possible_ancestors(g: MixedGraph, target: Iterable[str]) -> set[str]:
    """All X with a possibly directed path from X to some member of target.

    A path is possibly directed from X when no arrowhead along it points
    back towards X. Reflexive: the target set is always included.
    """
    g.check_vertices(target)
    out = set(target)
    frontier = list(out)
    while frontier:
        v = frontier.pop()
        for e in g.edges_at(v):
            u = e.other(v)
            # step u -> v usable when no arrowhead at u
            if e.mark_at(u) != ARROW and u not in out:
                out.add(u)
                frontier.append(u)
    return out


def possible_descendants(g: MixedGraph, source: Iterable[str]) -> set[str]:
    g.check_vertices(source)
    out = set(source)
    frontier = list(out)
    while frontier:
        v = frontier.pop()
        for e in g.edges_at(v):
            u = e.other(v)
            if e.mark_at(v) != ARROW and u not in out:
                out.add(u)
                frontier.append(u)
    return out


# -- mutilation ------------------------------------------------------------

REMOVE_INTO = "RemoveInto"
REMOVE_VISIBLE_OUT_OF = "RemoveVisibleOutOf"


def mutilate(g: MixedGraph, mode: str, x: Iterable[str],
             visibility_in: MixedGraph | None = None) -> MixedGraph:
    """Delete edges into x, or visible directed edges out of x.

    ``visibility_in`` names the graph in which edge visibility is judged
    for RemoveVisibleOutOf (default: ``g`` itself); callers that derive a
    MAG from a PAG pass the original PAG here.
    """
    from .separation import visible_edges  # deferred: avoids an import cycle

    g.check_vertices(x)
    xs = set(x)
    if mode == REMOVE_INTO:
        keep = [e for e in g.edges
                if not ((e.a in xs and e.mark_at_a == ARROW)
                        or (e.b in xs and e.mark_at_b == ARROW))]
    elif mode == REMOVE_VISIBLE_OUT_OF:
        vis = visible_edges(visibility_in if visibility_in is not None else g)
        vis_pairs = {(e.tail_end(), e.head_end()) for e in vis}
        keep = [e for e in g.edges
                if not (e.is_directed and e.tail_end() in xs
                        and (e.tail_end(), e.head_end()) in vis_pairs)]
    else:
        raise GraphError(f"unknown mutilation mode {mode!r}")
    return g.replace_edges(keep)


# -- text format -----------------------------------------------------------

_GLYPH = {(TAIL, ARROW): "-->", (ARROW, ARROW): "<->",
          (CIRCLE, ARROW): "o->", (CIRCLE, CIRCLE): "o-o",
          (CIRCLE, TAIL): "o--"}


def serialize(g: MixedGraph) -> str:
    """One header line ``vars: A,B,...`` then one edge per line, sorted."""
    lines = ["vars: " + ",".join(g.vertices)]
    rendered = []
    for e in g.edges:
        marks = (e.mark_at_a, e.mark_at_b)
        if marks in _GLYPH:
            rendered.append(f"{e.a} {_GLYPH[marks]} {e.b}")
        elif (marks[1], marks[0]) in _GLYPH:
            rendered.append(f"{e.b} {_GLYPH[(marks[1], marks[0])]} {e.a}")
        else:
            raise GraphError(f"edge {e} has no text form")
    lines.extend(sorted(rendered))
    return "\n".join(lines) + "\n"


_PARSE = {"-->": (TAIL, ARROW), "<->": (ARROW, ARROW), "o->": (CIRCLE, ARROW),
          "o-o": (CIRCLE, CIRCLE), "o--": (CIRCLE, TAIL), "<--": (ARROW, TAIL),
          "<-o": (ARROW, CIRCLE), "--o": (TAIL, CIRCLE)}


def parse(text: str, kind: str = "PAG") -> MixedGraph:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("vars:"):
        raise GraphError("missing 'vars:' header line")
    vertices = [v.strip() for v in lines[0][len("vars:"):].split(",") if v.strip()]
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3 or parts[1] not in _PARSE:
            raise GraphError(f"cannot parse edge line {ln!r}")
        a, glyph, b = parts
        ma, mb = _PARSE[glyph]
        edges.append(Edge(a, b, ma, mb))
    return MixedGraph(vertices, edges, kind)
