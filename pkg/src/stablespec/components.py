"""Vertex groupings used by the identification machinery.

Buckets (circle-path closures), possible c-components over invisible edges,
bidirected-closure c-components, regions, a deterministic bucket order, and
the PAG-to-MAG orientation.
"""

from __future__ import annotations

from typing import Iterable

from .graph import ARROW, CIRCLE, TAIL, Edge, GraphError, MixedGraph
from .separation import visible_edges


def buckets(g: MixedGraph) -> list[set[str]]:
    """Partition of the vertices into circle-path-connected blocks.

    Two vertices share a block iff joined by a path of circle-circle edges.
    Blocks are returned sorted by their smallest vertex name.
    """
    if g.kind != "PAG":
        raise GraphError(f"buckets requires a PAG, got {g.kind}")
    block = {v: {v} for v in g.vertices}
    for e in g.edges:
        if e.mark_at_a == CIRCLE and e.mark_at_b == CIRCLE:
            ba, bb = block[e.a], block[e.b]
            if ba is not bb:
                ba |= bb
                for v in bb:
                    block[v] = ba
    uniq = {id(b): b for b in block.values()}
    return sorted(uniq.values(), key=lambda b: min(b))


def pc_component(g: MixedGraph, seed: Iterable[str],
                 visibility_in: MixedGraph | None = None) -> set[str]:
    """Closure of seed under collider paths made of invisible edges.

    Vertices joined to the seed by a path whose non-endpoints are all
    colliders and whose edges are all invisible. When g is an induced
    subgraph, pass the parent graph as ``visibility_in`` so edges keep the
    visibility status they have there.
    """
    g.check_vertices(seed)
    vis = visible_edges(visibility_in if visibility_in is not None else g)
    invisible = set(g.edges) - vis
    out = set(seed)
    # state = (vertex, edge arrived by); interior vertices must be colliders
    frontier: list[tuple[str, Edge | None]] = [(v, None) for v in sorted(seed)]
    seen = set(frontier)
    while frontier:
        v, e_in = frontier.pop()
        for e in g.edges_at(v):
            if e not in invisible:
                continue
            if e_in is not None and not (e_in.mark_at(v) == ARROW
                                         and e.mark_at(v) == ARROW):
                continue
            w = e.other(v)
            out.add(w)
            state = (w, e)
            if state not in seen:
                seen.add(state)
                frontier.append(state)
    return out


def definite_c_component(g: MixedGraph, seed: Iterable[str]) -> set[str]:
    """Closure of seed under bidirected (arrow-arrow) edges."""
    g.check_vertices(seed)
    out = set(seed)
    frontier = list(out)
    while frontier:
        v = frontier.pop()
        for e in g.edges_at(v):
            if e.is_bidirected:
                w = e.other(v)
                if w not in out:
                    out.add(w)
                    frontier.append(w)
    return out


def region(g: MixedGraph, a: Iterable[str], c: Iterable[str]) -> set[str]:
    """Union of the buckets of g[c] that meet the pc-component of a in g[c]."""
    a, c = set(a), set(c)
    if not a <= c:
        raise GraphError("region requires a to be a subset of c")
    sub = g.induced(c)
    pc = pc_component(sub, a, visibility_in=g)
    out: set[str] = set()
    for b in buckets(sub):
        if b & pc:
            out |= b
    return out


def bucket_partial_order(g: MixedGraph, scope: Iterable[str]) -> list[set[str]]:
    """Buckets of g[scope] in a topological order of possible parenthood.

    No bucket contains a possible ancestor of an earlier bucket. Ties are
    broken by the smallest vertex name in the bucket.
    """
    sub = g.induced(scope)
    blocks = buckets(sub)
    of = {v: i for i, b in enumerate(blocks) for v in b}
    succ: list[set[int]] = [set() for _ in blocks]
    n_pred = [0] * len(blocks)
    for e in sub.edges:
        for child, parent in ((e.a, e.b), (e.b, e.a)):
            if e.mark_at(child) == ARROW and e.mark_at(parent) != ARROW:
                i, j = of[parent], of[child]
                if i != j and j not in succ[i]:
                    succ[i].add(j)
                    n_pred[j] += 1
    # layered order: all minimal buckets first, then the next layer, with
    # lexicographic tie-breaks inside a layer
    done = 0
    layer = sorted((i for i in range(len(blocks)) if n_pred[i] == 0),
                   key=lambda i: min(blocks[i]))
    order = []
    while layer:
        nxt = []
        for i in layer:
            order.append(blocks[i])
            done += 1
            for j in succ[i]:
                n_pred[j] -= 1
                if n_pred[j] == 0:
                    nxt.append(j)
        layer = sorted(nxt, key=lambda i: min(blocks[i]))
    if done != len(blocks):
        raise RuntimeError("cyclic possible-parent structure between buckets")
    return order


def _mcs_order(adj: dict[str, set[str]], priority: set[str]) -> list[str]:
    """Maximum cardinality search order; priority vertices are taken first.

    Verifies the perfect-ordering property (earlier neighbors of each vertex
    form a clique), which holds exactly when the graph is chordal.
    """
    remaining = set(adj)
    weight = {v: 0 for v in adj}
    order = []
    while remaining:
        v = min(remaining, key=lambda u: (u not in priority, -weight[u], u))
        order.append(v)
        remaining.discard(v)
        for w in adj[v] & remaining:
            weight[w] += 1
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        earlier = [w for w in adj[v] if pos[w] < pos[v]]
        for i, w1 in enumerate(earlier):
            for w2 in earlier[i + 1:]:
                if w2 not in adj[w1]:
                    raise GraphError(
                        "cannot orient circle component into a DAG without "
                        "new unshielded colliders")
    return order


def pag_to_mag(g: MixedGraph, preserve_into: Iterable[str]) -> MixedGraph:
    """A MAG in g's equivalence class keeping g's arrowheads into preserve_into.

    Circle-arrow edges become directed; each circle-circle component is
    oriented into a DAG with no new unshielded colliders, with circle edges
    at preserve_into vertices pointing out of those vertices.
    """
    if g.kind != "PAG":
        raise GraphError(f"pag_to_mag requires a PAG, got {g.kind}")
    preserve = set(preserve_into)
    g.check_vertices(preserve)
    circle_adj: dict[str, set[str]] = {v: set() for v in g.vertices}
    edges = []
    for e in g.edges:
        marks = {e.mark_at_a, e.mark_at_b}
        if marks == {CIRCLE}:
            circle_adj[e.a].add(e.b)
            circle_adj[e.b].add(e.a)
        elif marks == {CIRCLE, ARROW}:
            head = e.a if e.mark_at_a == ARROW else e.b
            edges.append(Edge(e.other(head), head, TAIL, ARROW))
        elif marks == {CIRCLE, TAIL}:
            raise GraphError(f"circle-tail edge unsupported (selection bias): {e}")
        else:
            edges.append(e)
    order = _mcs_order(circle_adj, preserve)
    pos = {v: i for i, v in enumerate(order)}
    for v in g.vertices:
        for w in circle_adj[v]:
            if pos[v] < pos[w]:
                edges.append(Edge(v, w, TAIL, ARROW))
    mag = MixedGraph(g.vertices, edges, "MAG")
    for x in preserve:
        pag_in = {e.other(x) for e in g.edges_at(x) if e.mark_at(x) == ARROW}
        mag_in = {e.other(x) for e in mag.edges_at(x) if e.mark_at(x) == ARROW}
        if pag_in != mag_in:
            raise GraphError(
                f"cannot preserve edges into {x}: conflicting requirements")
    return mag
