"""Invariance checking and interventional identification on PAGs.

Two interchangeable checkers decide whether a conditional P(y|z) is
invariant to interventions on a set of variables: one enumerates definite
status paths in the PAG, the other reduces to m-separation queries in
derived MAGs. ``identify_interventional`` derives a symbolic expression
for an interventional conditional from the observational joint, or reports
failure when the PAG does not determine one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .components import (
    bucket_partial_order, buckets, definite_c_component, pag_to_mag,
    pc_component, region,
)
from .expressions import (
    Factor, ONE, Product, Quotient, SumOver, conditional_of, simplify,
)
from .graph import (
    ARROW, CIRCLE, TAIL, GraphError, MixedGraph,
    REMOVE_INTO, REMOVE_VISIBLE_OUT_OF, mutilate, possible_ancestors,
)
from .separation import (
    definite_connecting_paths, m_connected, visible_edges,
)


class NotIdentifiable(Exception):
    """Raised internally when no identification rule applies."""


class _Fail:
    """Sentinel result: the query has no unique answer in this PAG."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FAIL"

    def __bool__(self):
        return False


FAIL = _Fail()


@dataclass(frozen=True)
class InvarianceQuery:
    """Is P(y | z) unchanged by interventions on x?"""

    x: frozenset[str]
    y: frozenset[str]
    z: frozenset[str]

    def __init__(self, x: Iterable[str], y: Iterable[str], z: Iterable[str]):
        object.__setattr__(self, "x", frozenset(x))
        object.__setattr__(self, "y", frozenset(y))
        object.__setattr__(self, "z", frozenset(z))
        if self.x & self.y or self.y & self.z:
            raise GraphError("require x ∩ y = y ∩ z = ∅")


# -- invariance by direct path enumeration ----------------------------------


def invariant_conditional(p: MixedGraph, q: InvarianceQuery) -> bool:
    """Path-enumeration checker for invariance of P(y|z) to shifts in x.

    For each X: if X ∈ z, every definite status connecting path to y given
    z minus X must leave X through a visible edge; if X is a possible
    ancestor of z, no connecting path to y given z may exist; otherwise
    every connecting path given z must point into X.
    """
    p.check_vertices(q.x | q.y | q.z)
    vis = visible_edges(p)
    poss_an_z = possible_ancestors(p, q.z) if q.z else set()
    for x in sorted(q.x):
        if x in q.z:
            for y in sorted(q.y):
                for path in definite_connecting_paths(p, x, y, q.z - {x}):
                    first = path[0]
                    if not (first.mark_at(x) == TAIL and first in vis):
                        return False
        elif x in poss_an_z:
            for y in sorted(q.y):
                if definite_connecting_paths(p, x, y, q.z):
                    return False
        else:
            for y in sorted(q.y):
                for path in definite_connecting_paths(p, x, y, q.z):
                    if path[0].mark_at(x) != ARROW:
                        return False
    return True


def invariant_conditional_mag(p: MixedGraph, q: InvarianceQuery) -> bool:
    """Equivalent checker via m-separation in MAGs derived from the PAG.

    For each X a class member preserving the edges into X is built; the
    three conditions become separation queries in that MAG with visible
    out-edges of X removed, unchanged, or all edges into X removed.
    """
    p.check_vertices(q.x | q.y | q.z)
    poss_an_z = possible_ancestors(p, q.z) if q.z else set()
    for x in sorted(q.x):
        r = pag_to_mag(p, {x})
        if x in q.z:
            g = mutilate(r, REMOVE_VISIBLE_OUT_OF, {x}, visibility_in=p)
            cond = q.z - {x}
        elif x in poss_an_z:
            g = r
            cond = q.z
        else:
            g = mutilate(r, REMOVE_INTO, {x})
            cond = q.z
        for y in sorted(q.y):
            if m_connected(g, x, y, cond):
                return False
    return True


# -- identification ---------------------------------------------------------


def _pa_star(g: MixedGraph, s: Iterable[str]) -> set[str]:
    """s plus possible parents connected by an edge into a member of s
    (circle-circle edges do not count)."""
    out = set(s)
    for v in set(s):
        out |= g.possible_parents(v)
    return out


def _ch_star(g: MixedGraph, s: Iterable[str]) -> set[str]:
    out = set(s)
    for v in set(s):
        out |= g.possible_children(v)
    return out


def _ch_plus(g: MixedGraph, s: Iterable[str]) -> set[str]:
    """s plus every possible child, counting circle-circle neighbors."""
    out = set(s)
    for v in set(s):
        for e in g.edges_at(v):
            w = e.other(v)
            if e.mark_at(v) in (TAIL, CIRCLE) and e.mark_at(w) in (ARROW, CIRCLE):
                out.add(w)
    return out


def decompose_targets(p: MixedGraph, t: Iterable[str],
                      z: Iterable[str]) -> list[tuple[set[str], set[str]]]:
    """Split t into component-wise pieces (t_i, z_i) whose interventional
    factors can be identified separately."""
    t, z = set(t), set(z)
    if t & z:
        raise GraphError("t and z must be disjoint")
    p.check_vertices(t | z)
    if not t:
        return []
    scope = t | z
    sub = p.induced(scope)

    def pc(seed):
        return pc_component(sub, seed, visibility_in=p) if seed else set()

    x = {min(t)}
    cx = pc(x)
    a = _pa_star(sub, cx) & _pa_star(sub, pc(scope - cx))
    while not a <= z:
        grown = x | _ch_star(sub, a & t)
        if grown == x:
            raise RuntimeError("component growth stalled; malformed graph?")
        x = grown
        cx = pc(x)
        a = _pa_star(sub, cx) & _pa_star(sub, pc(scope - cx))
    t1 = cx & t
    t2 = t - t1
    head = (t1, region(p, x, scope) - t1)
    rest_seed = scope - cx
    rest_z = (region(p, rest_seed, scope) - t2) if rest_seed else set()
    return [head] + decompose_targets(p, t2, rest_z)


def absorb_buckets(p: MixedGraph, t: Iterable[str],
                   z: Iterable[str]) -> tuple[set[str], set[str]]:
    """Extend z over buckets that straddle t ∪ z, or fail.

    A straddling bucket can be absorbed only when the pc-component of its
    outside part has no possible parent in t.
    """
    t, z = set(t), set(z)
    p.check_vertices(t | z)
    while True:
        straddler = None
        for b in buckets(p):
            if b & (t | z) and not b <= (t | z):
                straddler = b
                break
        if straddler is None:
            return t, z
        scope = t | z | straddler
        sub = p.induced(scope)
        outside = straddler - (t | z)
        cb = pc_component(sub, outside, visibility_in=p)
        if _pa_star(sub, cb) & t:
            raise NotIdentifiable(
                f"bucket {sorted(straddler)} straddles the query scope")
        z |= straddler - t


def eliminate_bucket(p: MixedGraph, t: Iterable[str],
                     x_bucket: Iterable[str], q) -> object:
    """Sum a bucket out of Q[t]: Q[t \\ x_bucket] as quotient-times-sum of
    per-bucket conditionals of q, when the bucket criterion holds."""
    t, x_bucket = set(t), set(x_bucket)
    p.check_vertices(t)
    if not x_bucket <= t:
        raise GraphError("x_bucket must lie inside t")
    sub = p.induced(t)
    for zv in sorted(x_bucket):
        cz = pc_component(sub, {zv}, visibility_in=p)
        bad = (sub.possible_children(zv) - x_bucket) & cz
        if bad:
            raise NotIdentifiable(
                f"{zv} has possible child {sorted(bad)[0]} in its own "
                f"possible c-component outside the bucket")
    order = bucket_partial_order(p, t)
    sx = definite_c_component(sub, x_bucket)
    prefix: set[str] = set()
    fs = []
    for b in order:
        if b <= sx:
            fs.append(conditional_of(q, b, set(prefix)))
        prefix |= b
    chain = Product(fs) if len(fs) != 1 else fs[0]
    return Product([Quotient(q, chain), SumOver(x_bucket, chain)])


def identify_marginal(p: MixedGraph, c: Iterable[str], t: Iterable[str],
                      q) -> object:
    """Compute Q[c] from Q[t] (q) in the PAG p, or raise NotIdentifiable."""
    c, t = frozenset(c), frozenset(t)
    if not c <= t:
        raise GraphError("c must be a subset of t")
    if not c:
        return ONE
    if c == t:
        return q
    sub = p.induced(t)
    bks = buckets(sub)
    for b in bks:
        if b <= t - c:
            cb = pc_component(sub, b, visibility_in=p)
            if cb & _ch_plus(sub, b) <= b:
                q2 = eliminate_bucket(p, t, b, q)
                return identify_marginal(p, c, t - b, q2)
    for b in bks:
        if b <= c:
            rb = region(p, b, c)
            if rb != c:
                rc = region(p, c - rb, c)
                num = Product([identify_marginal(p, rb, t, q),
                               identify_marginal(p, rc, t, q)])
                if rb & rc:
                    return Quotient(num, identify_marginal(p, rb & rc, t, q))
                return num
    raise NotIdentifiable(f"no rule applies for Q[{sorted(c)}]")


def identify_interventional(p: MixedGraph, x: Iterable[str],
                            y: Iterable[str], z: Iterable[str]):
    """Expression for P_x(y | z) in terms of the observational joint,
    or the FAIL sentinel when the PAG does not determine one."""
    x, y, z = frozenset(x), frozenset(y), frozenset(z)
    if x & y or y & z or x & z:
        raise GraphError("x, y and z must be pairwise disjoint")
    p.check_vertices(x | y | z)
    if not y:
        raise GraphError("y must be nonempty")
    if not x:
        return simplify(Factor(y, z), graph=p)
    v = frozenset(p.vertices)
    sub = p.induced(v - x)
    d = frozenset(possible_ancestors(sub, (y | z) - x)) - z
    try:
        parts = decompose_targets(p, d, z)
        pieces = []
        for di, zi in parts:
            if di & y:
                pieces.append(absorb_buckets(p, di, zi))
        factors = []
        for di, zi in pieces:
            e = identify_marginal(p, frozenset(di) | frozenset(zi), v,
                                  Factor(v))
            factors.append(Quotient(SumOver(set(di) - set(y), e),
                                    SumOver(di, e)))
    except NotIdentifiable:
        return FAIL
    return simplify(Product(factors), graph=p)
