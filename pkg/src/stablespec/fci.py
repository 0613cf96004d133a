"""Constraint-based structure learning of a PAG from CI answers.

``fci`` runs the full adjacency search (stable skeleton, then the
possible-d-sep refinement), orients unshielded colliders, and applies the
standard complete orientation rule set to a fixpoint. Background knowledge
can forbid arrowheads into chosen vertices. ``pooled_fci`` concatenates
per-environment datasets with an appended environment indicator column.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable, Sequence

import numpy as np

from .citest import fisher_z_test
from .data import DataError, DataTable, concat_tables
from .graph import (
    ARROW, CIRCLE, TAIL, Edge, GraphError, MixedGraph,
)
from .separation import m_connected


class InstabilityError(GraphError):
    """Orientation rules derived contradictory marks for an edge."""


@dataclass(frozen=True)
class Knowledge:
    """Background constraints for orientation.

    ``forbidden_into`` lists vertices that may not receive arrowheads.
    ``tier_order`` optionally gives ordered tiers; no arrowhead may point
    from a later tier into an earlier one.
    """

    forbidden_into: frozenset[str] = frozenset()
    tier_order: tuple[frozenset[str], ...] = ()

    def __init__(self, forbidden_into: Iterable[str] = (),
                 tier_order: Sequence[Iterable[str]] = ()):
        object.__setattr__(self, "forbidden_into", frozenset(forbidden_into))
        tiers = tuple(frozenset(t) for t in tier_order)
        seen: set[str] = set()
        for t in tiers:
            if t & seen:
                raise GraphError("tiers must be disjoint")
            seen |= t
        object.__setattr__(self, "tier_order", tiers)

    def blocks_arrowhead(self, src: str, dst: str) -> bool:
        if dst in self.forbidden_into:
            return True
        tier = {v: i for i, t in enumerate(self.tier_order) for v in t}
        if src in tier and dst in tier and tier[src] > tier[dst]:
            return True
        return False


class SeparationOracle:
    """Exact CI oracle answering queries by m-separation in a known graph."""

    def __init__(self, graph: MixedGraph):
        self.graph = graph

    def __call__(self, a: str, b: str, s: Iterable[str]) -> bool:
        return not m_connected(self.graph, a, b, set(s))


def data_oracle(table: DataTable, test: Callable = fisher_z_test,
                alpha: float = 0.01) -> Callable:
    """CI oracle answering queries by a hypothesis test at level alpha."""

    def independent(a: str, b: str, s: Iterable[str]) -> bool:
        return test(table, a, b, s).p_value >= alpha

    return independent


class _Marks:
    """Mutable endpoint-mark store during orientation.

    ``self.at[(a, b)]`` is the mark at b on the edge a-b. Marks start as
    circles and may only be refined circle -> tail/arrow; a contradictory
    refinement raises InstabilityError.
    """

    def __init__(self, vertices: Sequence[str], skeleton: Iterable[frozenset],
                 knowledge: Knowledge):
        self.vertices = tuple(vertices)
        self.adj: dict[str, set[str]] = {v: set() for v in vertices}
        self.at: dict[tuple[str, str], str] = {}
        self.knowledge = knowledge
        for pair in skeleton:
            a, b = sorted(pair)
            self.adj[a].add(b)
            self.adj[b].add(a)
            self.at[(a, b)] = CIRCLE
            self.at[(b, a)] = CIRCLE

    def adjacent(self, a: str, b: str) -> bool:
        return b in self.adj[a]

    def mark(self, a: str, b: str) -> str:
        return self.at[(a, b)]

    def set_mark(self, a: str, b: str, mark: str) -> bool:
        """Refine the mark at b on edge a-b; returns whether it changed."""
        cur = self.at[(a, b)]
        if cur == mark:
            return False
        if cur != CIRCLE:
            raise InstabilityError(
                f"conflicting orientation on edge {a} - {b}")
        if mark == ARROW and self.knowledge.blocks_arrowhead(a, b):
            return False
        self.at[(a, b)] = mark
        return True

    def orient_directed(self, a: str, b: str) -> bool:
        changed = self.set_mark(b, a, TAIL)
        changed |= self.set_mark(a, b, ARROW)
        return changed

    def to_graph(self) -> MixedGraph:
        edges = []
        for a in self.vertices:
            for b in self.adj[a]:
                if a < b:
                    edges.append(Edge(a, b, self.at[(b, a)], self.at[(a, b)]))
        return MixedGraph(self.vertices, edges, kind="PAG")


def _stable_skeleton(variables: Sequence[str], independent: Callable,
                     max_cond_size: int | None):
    """Level-wise adjacency search; all tests at size k use the adjacency
    snapshot taken before size k starts."""
    vs = sorted(variables)
    adj = {v: set(vs) - {v} for v in vs}
    sepsets: dict[frozenset, frozenset] = {}
    limit = len(vs) - 2 if max_cond_size is None else max_cond_size
    level = 0
    while level <= limit:
        snapshot = {v: sorted(adj[v]) for v in vs}
        if all(len(snapshot[v]) - 1 < level for v in vs):
            break
        for a, b in combinations(vs, 2):
            if b not in adj[a]:
                continue
            tried: set[frozenset] = set()
            removed = False
            for side, other in ((a, b), (b, a)):
                if removed:
                    break
                pool = [v for v in snapshot[side] if v != other]
                if len(pool) < level:
                    continue
                for s in combinations(pool, level):
                    key = frozenset(s)
                    if key in tried:
                        continue
                    tried.add(key)
                    if independent(a, b, set(s)):
                        adj[a].discard(b)
                        adj[b].discard(a)
                        sepsets[frozenset((a, b))] = key
                        removed = True
                        break
        level += 1
    skeleton = {frozenset((a, b)) for a in vs for b in adj[a] if a < b}
    return skeleton, sepsets


def _orient_colliders(marks: _Marks, sepsets: dict):
    for a, b in combinations(marks.vertices, 2):
        if marks.adjacent(a, b):
            continue
        sep = sepsets.get(frozenset((a, b)), frozenset())
        for c in sorted(marks.adj[a] & marks.adj[b]):
            if c not in sep:
                marks.set_mark(a, c, ARROW)
                marks.set_mark(b, c, ARROW)


def _possible_d_sep(marks: _Marks) -> dict[str, set[str]]:
    """Reachability closure: a path extends through v when v is a collider
    on it or its neighbors on the path are adjacent."""
    out = {v: set(marks.adj[v]) for v in marks.vertices}
    for x in marks.vertices:
        queue = deque((n, (x, n)) for n in sorted(marks.adj[x]))
        seen = set()
        while queue:
            current, path = queue.popleft()
            for nxt in sorted(marks.adj[current] - set(path)):
                a, b, c = path[-2], current, nxt
                collider = marks.mark(a, b) == ARROW and marks.mark(c, b) == ARROW
                if collider or marks.adjacent(a, c):
                    out[x].add(nxt)
                    out[nxt].add(x)
                    key = (current, nxt, frozenset(path))
                    if key not in seen:
                        seen.add(key)
                        queue.append((nxt, path + (nxt,)))
    return out


def _refine_with_d_sep(marks: _Marks, sepsets: dict, independent: Callable,
                       max_cond_size: int | None) -> set[frozenset]:
    """Retest every remaining edge against subsets of the possible-d-sep
    sets; returns removed pairs."""
    pdsep = _possible_d_sep(marks)
    removed = set()
    for a in marks.vertices:
        for b in sorted(marks.adj[a]):
            if a >= b or frozenset((a, b)) in removed:
                continue
            pools = [sorted(pdsep[a] - {a, b}), sorted(pdsep[b] - {a, b})]
            upper = max(len(p) for p in pools)
            if max_cond_size is not None:
                upper = min(upper, max_cond_size)
            done = False
            for size in range(1, upper + 1):
                if done:
                    break
                tried: set[frozenset] = set()
                for pool in pools:
                    if done or len(pool) < size:
                        continue
                    for s in combinations(pool, size):
                        key = frozenset(s)
                        if key in tried:
                            continue
                        tried.add(key)
                        if independent(a, b, set(s)):
                            removed.add(frozenset((a, b)))
                            sepsets[frozenset((a, b))] = key
                            done = True
                            break
    return removed


# -- orientation rules -------------------------------------------------------


def _rule_chain(marks: _Marks) -> bool:
    # a *-> b o-* c with a, c nonadjacent: orient b -> c
    changed = False
    for b in marks.vertices:
        for a in sorted(marks.adj[b]):
            if marks.mark(a, b) != ARROW:
                continue
            for c in sorted(marks.adj[b] - {a}):
                if marks.mark(c, b) == CIRCLE and not marks.adjacent(a, c):
                    changed |= marks.orient_directed(b, c)
    return changed


def _rule_ancestor(marks: _Marks) -> bool:
    # a -> b *-> c or a *-> b -> c, with a *-o c: orient arrowhead at c
    changed = False
    for b in marks.vertices:
        for a in sorted(marks.adj[b]):
            if marks.mark(a, b) != ARROW:
                continue
            for c in sorted(marks.adj[b] - {a}):
                if marks.mark(b, c) != ARROW or not marks.adjacent(a, c):
                    continue
                if marks.mark(a, c) != CIRCLE:
                    continue
                first_directed = marks.mark(b, a) == TAIL
                second_directed = marks.mark(c, b) == TAIL
                if first_directed or second_directed:
                    changed |= marks.set_mark(a, c, ARROW)
    return changed


def _rule_double_collider(marks: _Marks) -> bool:
    # a *-> b <-* c, a *-o d o-* c, a, c nonadjacent, d *-o b: arrow at b
    changed = False
    for a, c in combinations(marks.vertices, 2):
        if marks.adjacent(a, c):
            continue
        shared = marks.adj[a] & marks.adj[c]
        bs = [b for b in shared
              if marks.mark(a, b) == ARROW and marks.mark(c, b) == ARROW]
        ds = [d for d in shared
              if marks.mark(a, d) == CIRCLE and marks.mark(c, d) == CIRCLE]
        for b in bs:
            for d in ds:
                if d != b and marks.adjacent(d, b) and \
                        marks.mark(d, b) == CIRCLE:
                    changed |= marks.set_mark(d, b, ARROW)
    return changed


def _discriminating_paths(marks: _Marks, d: str, b: str, c: str):
    """Simple paths d ... a b whose interior vertices are colliders on the
    path and parents of c."""
    allowed = {v for v in marks.adj[c]
               if marks.mark(v, c) == ARROW and marks.mark(c, v) == TAIL}
    stack = [(d, (d,))]
    while stack:
        cur, path = stack.pop()
        for nxt in sorted(marks.adj[cur] - set(path)):
            if nxt == b:
                if len(path) >= 2:
                    yield path + (nxt,)
                continue
            if nxt not in allowed or nxt == c:
                continue
            # interior vertex must be a collider on the path so far
            if marks.mark(cur, nxt) != ARROW:
                continue
            stack.append((nxt, path + (nxt,)))


def _rule_discriminating(marks: _Marks, sepsets: dict) -> bool:
    changed = False
    for c in marks.vertices:
        for b in sorted(marks.adj[c]):
            # need a circle at b on the b-c edge
            if marks.mark(c, b) != CIRCLE:
                continue
            for d in sorted(set(marks.vertices) - {b, c}):
                if marks.adjacent(d, c):
                    continue
                for path in _discriminating_paths(marks, d, b, c):
                    # check arrows into every interior vertex from both sides
                    interior_ok = all(
                        marks.mark(path[i - 1], path[i]) == ARROW and
                        marks.mark(path[i + 1], path[i]) == ARROW
                        for i in range(1, len(path) - 1))
                    if not interior_ok:
                        continue
                    sep = sepsets.get(frozenset((d, c)), frozenset())
                    if b in sep:
                        changed |= marks.orient_directed(b, c)
                    else:
                        a = path[-2]
                        changed |= marks.set_mark(a, b, ARROW)
                        changed |= marks.set_mark(b, a, ARROW)
                        changed |= marks.set_mark(b, c, ARROW)
                        changed |= marks.set_mark(c, b, ARROW)
                    break
    return changed


def _pd_edges(marks: _Marks) -> dict[str, set[str]]:
    """Potentially directed edge relation: x to y usable when the edge has
    no arrowhead at x and no tail at y."""
    out: dict[str, set[str]] = {v: set() for v in marks.vertices}
    for a in marks.vertices:
        for b in marks.adj[a]:
            if marks.mark(b, a) != ARROW and marks.mark(a, b) != TAIL:
                out[a].add(b)
    return out


def _uncovered_pd_path_exists(marks: _Marks, a: str, c: str,
                              require_second_nonadjacent: bool) -> bool:
    """Uncovered potentially directed path from a to c, at least two edges,
    not using the a-c edge itself. When asked, the second vertex must be
    nonadjacent to c (closing the cycle a o-> c uncovered)."""
    pd = _pd_edges(marks)
    stack = [(n, (a, n)) for n in sorted(pd[a] - {c})]
    while stack:
        cur, path = stack.pop()
        for nxt in sorted(pd[cur] - set(path)):
            if marks.adjacent(path[-2], nxt):
                continue
            if nxt == c:
                if len(path) < 3:
                    continue
                if require_second_nonadjacent and marks.adjacent(path[1], c):
                    continue
                return True
            stack.append((nxt, path + (nxt,)))
    return False


def _rule_tail_triangle(marks: _Marks) -> bool:
    # a -> b -> c or a -o b -> c, with a o-> c: orient tail at a
    changed = False
    for a in marks.vertices:
        for c in sorted(marks.adj[a]):
            if marks.mark(c, a) != CIRCLE or marks.mark(a, c) != ARROW:
                continue
            for b in sorted(marks.adj[a] & marks.adj[c]):
                if marks.mark(b, a) == TAIL and \
                        marks.mark(a, b) in (ARROW, CIRCLE) and \
                        marks.mark(c, b) == TAIL and \
                        marks.mark(b, c) == ARROW:
                    changed |= marks.set_mark(c, a, TAIL)
                    break
    return changed


def _rule_uncovered_cycle(marks: _Marks) -> bool:
    # a o-> c with an uncovered potentially directed path around: tail at a
    changed = False
    for a in marks.vertices:
        for c in sorted(marks.adj[a]):
            if marks.mark(c, a) != CIRCLE or marks.mark(a, c) != ARROW:
                continue
            if _uncovered_pd_path_exists(marks, a, c,
                                         require_second_nonadjacent=True):
                changed |= marks.set_mark(c, a, TAIL)
    return changed


def _rule_double_parent(marks: _Marks) -> bool:
    # a o-> c, b -> c <- d, uncovered p.d. paths a..b and a..d whose first
    # steps differ and are nonadjacent: tail at a
    changed = False
    pd = _pd_edges(marks)
    for a in marks.vertices:
        for c in sorted(marks.adj[a]):
            if marks.mark(c, a) != CIRCLE or marks.mark(a, c) != ARROW:
                continue
            parents = [p for p in sorted(marks.adj[c] - {a})
                       if marks.mark(p, c) == ARROW and
                       marks.mark(c, p) == TAIL]
            done = False
            for b, d in combinations(parents, 2):
                if done:
                    break
                for mu in sorted(pd[a] - {c}):
                    if done:
                        break
                    if not _pd_reaches(marks, pd, a, mu, b):
                        continue
                    for omega in sorted(pd[a] - {c}):
                        if mu != omega and not marks.adjacent(mu, omega) and \
                                _pd_reaches(marks, pd, a, omega, d):
                            changed |= marks.set_mark(c, a, TAIL)
                            done = True
                            break
    return changed


def _pd_reaches(marks: _Marks, pd: dict, a: str, first: str,
                target: str) -> bool:
    """Uncovered p.d. path from a through first to target (first may equal
    target)."""
    if first == target:
        return True
    stack = [(first, (a, first))]
    while stack:
        cur, path = stack.pop()
        for nxt in sorted(pd[cur] - set(path)):
            if marks.adjacent(path[-2], nxt):
                continue
            if nxt == target:
                return True
            stack.append((nxt, path + (nxt,)))
    return False


def fci(ci: Callable, variables: Sequence[str],
        knowledge: Knowledge | None = None,
        max_cond_size: int | None = None,
        report: dict | None = None) -> MixedGraph:
    """Learn a PAG from a conditional-independence oracle.

    ``ci(a, b, s)`` answers whether a and b are independent given s. The
    returned PAG reflects the complete orientation rule set; rules that
    only fire under selection bias are omitted since undirected and
    circle-tail edges cannot arise without it. A ``report`` dict, when
    given, is filled with the number of CI queries, the separating sets
    found, and per-rule firing counts.
    """
    vs = sorted(set(variables))
    if len(vs) < 2:
        if report is not None:
            report.update(ci_tests=0, sepsets={}, rule_firings={})
        return MixedGraph(vs, [], kind="PAG")
    knowledge = knowledge or Knowledge()
    queries = [0]
    if report is not None:
        inner = ci

        def ci(a, b, s):
            queries[0] += 1
            return inner(a, b, s)
    skeleton, sepsets = _stable_skeleton(vs, ci, max_cond_size)

    # provisional collider orientation to drive the possible-d-sep closure
    marks = _Marks(vs, skeleton, knowledge)
    _orient_colliders(marks, sepsets)
    removed = _refine_with_d_sep(marks, sepsets, ci, max_cond_size)
    skeleton -= removed

    marks = _Marks(vs, skeleton, knowledge)
    _orient_colliders(marks, sepsets)
    rules = [("chain", _rule_chain), ("ancestor", _rule_ancestor),
             ("double-collider", _rule_double_collider),
             ("discriminating",
              lambda m: _rule_discriminating(m, sepsets)),
             ("tail-triangle", _rule_tail_triangle),
             ("uncovered-cycle", _rule_uncovered_cycle),
             ("double-parent", _rule_double_parent)]
    firings = {name: 0 for name, _ in rules}
    while True:
        changed = False
        for name, rule in rules:
            if rule(marks):
                firings[name] += 1
                changed = True
        if not changed:
            break
    if report is not None:
        report["ci_tests"] = queries[0]
        report["sepsets"] = {",".join(sorted(pair)): sorted(s)
                             for pair, s in sorted(sepsets.items(),
                                                   key=lambda kv: sorted(kv[0]))}
        report["rule_firings"] = firings
    return marks.to_graph()


def pooled_fci(datasets: Sequence[DataTable], test: Callable = fisher_z_test,
               alpha: float = 0.01, env_name: str = "E",
               max_cond_size: int | None = None,
               report: dict | None = None) -> MixedGraph:
    """Learn the PAG over the pooled rows plus an environment indicator.

    Rows are concatenated, a discrete column named ``env_name`` records the
    dataset index, and arrowheads into it are forbidden.
    """
    datasets = list(datasets)
    if not datasets:
        raise DataError("need at least one dataset")
    if len(datasets) < 2:
        raise DataError("environment indicator would be constant; "
                        "provide two or more datasets")
    for t in datasets:
        if env_name in t.names:
            raise DataError(f"column {env_name!r} already present")
    pooled = concat_tables(datasets)
    env = np.concatenate([np.full(t.n_rows, i, dtype=float)
                          for i, t in enumerate(datasets)])
    pooled = pooled.with_column(env_name, env, kind=len(datasets))
    knowledge = Knowledge(forbidden_into={env_name})
    oracle = data_oracle(pooled, test=test, alpha=alpha)
    return fci(oracle, pooled.names, knowledge, max_cond_size, report)


def possible_children_of_env(p: MixedGraph, env: str) -> set[str]:
    """Vertices adjacent to env by an edge not pointing into env."""
    p.check_vertices({env})
    out = set()
    for e in p.edges_at(env):
        if e.mark_at(env) in (TAIL, CIRCLE):
            out.add(e.other(env))
    return out
