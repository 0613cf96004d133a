"""Symbolic density expressions produced by the identification algorithm.

An expression is a tree over conditional factors of the observational joint,
products, quotients and marginalizing sums. ``simplify`` rewrites a tree
into a small canonical form using exact probability identities plus, when a
graph is supplied, conditional independences read off that graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iter_product
from typing import Iterable, Mapping

from .graph import MixedGraph
from .separation import definite_m_separated


class ExpressionError(ValueError):
    """Malformed expression or an impossible evaluation."""


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Factor:
    """Conditional of the observational joint: P(targets | given)."""

    targets: frozenset[str]
    given: frozenset[str]

    def __init__(self, targets: Iterable[str], given: Iterable[str] = ()):
        object.__setattr__(self, "targets", frozenset(targets))
        object.__setattr__(self, "given", frozenset(given))
        if not self.targets:
            raise ExpressionError("factor needs at least one target")
        if self.targets & self.given:
            raise ExpressionError("targets and given overlap")


@dataclass(frozen=True)
class Product:
    factors: tuple

    def __init__(self, factors: Iterable):
        object.__setattr__(self, "factors", tuple(factors))


@dataclass(frozen=True)
class Quotient:
    numerator: object
    denominator: object


@dataclass(frozen=True)
class SumOver:
    variables: frozenset[str]
    child: object

    def __init__(self, variables: Iterable[str], child):
        object.__setattr__(self, "variables", frozenset(variables))
        object.__setattr__(self, "child", child)


ONE = Constant(1.0)

Expression = object


def conditional_of(expr, targets: Iterable[str], given: Iterable[str]):
    """P(targets | given) of the distribution expr represents.

    Built as a quotient of two marginalizing sums over expr's scope.
    """
    targets, given = frozenset(targets), frozenset(given)
    if targets & given:
        raise ExpressionError("targets and given overlap")
    sc = scope(expr)
    if not targets <= sc or not given <= sc:
        raise ExpressionError("conditional asks for variables outside scope")
    num = SumOver(sc - targets - given, expr)
    if not given:
        return num
    return Quotient(num, SumOver(sc - given, expr))


def scope(expr) -> frozenset[str]:
    """The variables the expression is a distribution over."""
    if isinstance(expr, Constant):
        return frozenset()
    if isinstance(expr, Factor):
        return expr.targets
    if isinstance(expr, Product):
        out = frozenset()
        for f in expr.factors:
            out |= scope(f)
        return out
    if isinstance(expr, Quotient):
        return scope(expr.numerator) - scope(expr.denominator)
    if isinstance(expr, SumOver):
        return scope(expr.child) - expr.variables
    raise ExpressionError(f"not an expression: {expr!r}")


def free_vars(expr) -> frozenset[str]:
    if isinstance(expr, Constant):
        return frozenset()
    if isinstance(expr, Factor):
        return expr.targets | expr.given
    if isinstance(expr, Product):
        out = frozenset()
        for f in expr.factors:
            out |= free_vars(f)
        return out
    if isinstance(expr, Quotient):
        return free_vars(expr.numerator) | free_vars(expr.denominator)
    if isinstance(expr, SumOver):
        return free_vars(expr.child) - expr.variables
    raise ExpressionError(f"not an expression: {expr!r}")


# -- evaluation ------------------------------------------------------------


def evaluate(expr, joint, assignment: Mapping[str, int]) -> float:
    """Evaluate against an exact discrete joint distribution.

    A factor whose conditioning event has probability zero evaluates to
    zero; such terms always arise multiplied by a vanishing prefix factor
    in chain-structured expressions. A quotient 0/0 is taken as 0 and a
    nonzero numerator over a zero denominator is an error.
    """
    if isinstance(expr, Constant):
        return expr.value
    if isinstance(expr, Factor):
        missing = (expr.targets | expr.given) - set(assignment)
        if missing:
            raise ExpressionError(f"unbound variables {sorted(missing)}")
        t = {v: assignment[v] for v in expr.targets}
        g = {v: assignment[v] for v in expr.given}
        if g and joint.prob(g) == 0.0:
            return 0.0
        return joint.conditional(t, g) if g else joint.prob(t)
    if isinstance(expr, Product):
        out = 1.0
        for f in expr.factors:
            out *= evaluate(f, joint, assignment)
        return out
    if isinstance(expr, Quotient):
        den = evaluate(expr.denominator, joint, assignment)
        num = evaluate(expr.numerator, joint, assignment)
        if den == 0.0:
            if num == 0.0:
                return 0.0
            raise ExpressionError("zero denominator with nonzero numerator")
        return num / den
    if isinstance(expr, SumOver):
        names = sorted(expr.variables)
        cards = joint.cards
        unknown = [v for v in names if v not in cards]
        if unknown:
            raise ExpressionError(f"cannot sum over unknown variables {unknown}")
        total = 0.0
        for values in iter_product(*(range(cards[v]) for v in names)):
            local = dict(assignment)
            local.update(zip(names, values))
            total += evaluate(expr.child, joint, local)
        return total
    raise ExpressionError(f"not an expression: {expr!r}")


# -- rendering -------------------------------------------------------------


def to_text(expr) -> str:
    if isinstance(expr, Constant):
        return f"{expr.value:g}"
    if isinstance(expr, Factor):
        t = ",".join(sorted(expr.targets))
        if expr.given:
            return f"P({t} | {','.join(sorted(expr.given))})"
        return f"P({t})"
    if isinstance(expr, Product):
        return " * ".join(_paren(f) for f in expr.factors) or "1"
    if isinstance(expr, Quotient):
        return f"{_paren(expr.numerator)} / {_paren(expr.denominator)}"
    if isinstance(expr, SumOver):
        return f"sum_{{{','.join(sorted(expr.variables))}}} {_paren(expr.child)}"
    raise ExpressionError(f"not an expression: {expr!r}")


def _paren(expr) -> str:
    s = to_text(expr)
    if isinstance(expr, (Product, Quotient, SumOver)):
        return f"({s})"
    return s


def to_json(expr):
    if isinstance(expr, Constant):
        return {"kind": "constant", "value": expr.value}
    if isinstance(expr, Factor):
        return {"kind": "factor", "targets": sorted(expr.targets),
                "given": sorted(expr.given)}
    if isinstance(expr, Product):
        return {"kind": "product",
                "factors": [to_json(f) for f in expr.factors]}
    if isinstance(expr, Quotient):
        return {"kind": "quotient", "numerator": to_json(expr.numerator),
                "denominator": to_json(expr.denominator)}
    if isinstance(expr, SumOver):
        return {"kind": "sum", "variables": sorted(expr.variables),
                "child": to_json(expr.child)}
    raise ExpressionError(f"not an expression: {expr!r}")


def from_json(obj):
    kind = obj["kind"]
    if kind == "constant":
        return Constant(obj["value"])
    if kind == "factor":
        return Factor(obj["targets"], obj["given"])
    if kind == "product":
        return Product([from_json(f) for f in obj["factors"]])
    if kind == "quotient":
        return Quotient(from_json(obj["numerator"]),
                        from_json(obj["denominator"]))
    if kind == "sum":
        return SumOver(obj["variables"], from_json(obj["child"]))
    raise ExpressionError(f"unknown expression kind {kind!r}")


# -- simplification --------------------------------------------------------


def simplify(expr, graph: MixedGraph | None = None, max_passes: int = 60):
    """Rewrite to a compact canonical form.

    Every rewrite is an exact identity of the represented quantity: product
    and quotient flattening with cancellation, marginalization of sums,
    chain-rule expansion of multi-bucket factors, chain collapse inside
    sums, and (with a graph) removal of conditioning variables that are
    separated from the targets.
    """
    for _ in range(max_passes):
        new = _rewrite(expr, graph)
        if new == expr:
            break
        expr = new
    return _canonical(expr)


def _independent(graph, a, b, z) -> bool:
    if graph is None or not a or not b:
        return False
    known = set(graph.vertices)
    if not (set(a) | set(b) | set(z)) <= known:
        return False
    return definite_m_separated(graph, a, b, z)


def _factor_rules(f: Factor, graph):
    # drop separated conditioning variables, one at a time
    given = set(f.given)
    changed = True
    while changed and given:
        changed = False
        for v in sorted(given):
            rest = given - {v}
            if _independent(graph, f.targets, {v}, rest):
                given = rest
                changed = True
                break
    f = Factor(f.targets, given)
    expansion = _chain_expand(f, graph)
    return expansion if expansion is not None else f


def _chain_expand(f: Factor, graph):
    """P(t | g) as a product of per-bucket conditionals along the bucket
    order of the induced subgraph on t ∪ g. Returns None when t sits inside
    a single bucket."""
    from .components import bucket_partial_order

    if graph is None:
        return None
    sc = f.targets | f.given
    if not sc <= set(graph.vertices):
        return None
    order = bucket_partial_order(graph, sc)
    blocks = [b & f.targets for b in order if b & f.targets]
    if len(blocks) <= 1:
        return None
    out = []
    seen: set[str] = set()
    for b in blocks:
        out.append(Factor(b, f.given | seen))
        seen |= b
    return Product(out)


def _split_fraction(expr) -> tuple[list, list]:
    """Flatten into (numerator atoms, denominator atoms)."""
    if isinstance(expr, Product):
        num, den = [], []
        for f in expr.factors:
            n, d = _split_fraction(f)
            num += n
            den += d
        return num, den
    if isinstance(expr, Quotient):
        n1, d1 = _split_fraction(expr.numerator)
        n2, d2 = _split_fraction(expr.denominator)
        return n1 + d2, d1 + n2
    if isinstance(expr, Constant) and expr.value == 1.0:
        return [], []
    return [expr], []


def _cancel(num: list, den: list) -> tuple[list, list]:
    den = list(den)
    out_num = []
    for a in num:
        if a in den:
            den.remove(a)
        else:
            out_num.append(a)
    return out_num, den


def _build_fraction(num: list, den: list):
    def prod(atoms):
        if not atoms:
            return ONE
        if len(atoms) == 1:
            return atoms[0]
        return Product(atoms)

    if not den:
        return prod(num)
    return Quotient(prod(num), prod(den))


def _sum_rules(s: SumOver, graph):
    bound = set(s.variables)
    child = s.child
    if not bound:
        return child
    if isinstance(child, SumOver):
        return SumOver(bound | child.variables, child.child)
    if isinstance(child, Constant):
        return s
    num, den = _split_fraction(child)
    pulled_num = [a for a in num if not (free_vars(a) & bound)]
    inner = [a for a in num if free_vars(a) & bound]
    pulled_den = [a for a in den if not (free_vars(a) & bound)]
    inner_den = [a for a in den if free_vars(a) & bound]
    if not inner_den:
        inner, bound = _marginalize(inner, bound, graph)
        if not bound:
            return _build_fraction(pulled_num + inner, pulled_den)
    # a bound variable left inside a denominator blocks marginalization
    body = SumOver(bound, _build_fraction(inner, inner_den))
    return _build_fraction(pulled_num + [body], pulled_den)


def _marginalize(atoms: list, bound: set, graph):
    """Repeatedly eliminate bound variables that occur as the target of a
    single factor (plain marginalization) or that chain two factors."""
    atoms = list(atoms)
    bound = set(bound)
    changed = True
    while changed:
        changed = False
        for v in sorted(bound):
            holders = [a for a in atoms if v in free_vars(a)]
            if len(holders) == 1 and isinstance(holders[0], Factor) \
                    and v in holders[0].targets:
                f = holders[0]
                atoms.remove(f)
                rest = f.targets - {v}
                if rest:
                    atoms.append(Factor(rest, f.given))
                bound.discard(v)
                changed = True
                break
        if changed:
            continue
        merged = _chain_collapse(atoms, bound, graph)
        if merged is not None:
            atoms, bound = merged
            changed = True
    return atoms, bound


def _chain_collapse(atoms, bound, graph):
    """sum_t1 P(t1|g1) P(t2|g1,t1) = P(t2|g1), allowing g1 to grow by
    variables separated from t1."""
    for i, f1 in enumerate(atoms):
        if not isinstance(f1, Factor) or not f1.targets <= bound:
            continue
        others = atoms[:i] + atoms[i + 1:]
        for j, f2 in enumerate(others):
            if not isinstance(f2, Factor):
                continue
            if not _is_chain_partner(f1, f2, graph):
                continue
            rest = others[:j] + others[j + 1:]
            if any(f1.targets & free_vars(a) for a in rest):
                continue
            new = Factor(f2.targets, f2.given - f1.targets)
            return rest + [new], bound - f1.targets
    return None


def _is_chain_partner(f1: Factor, f2: Factor, graph) -> bool:
    """True when sum over f1.targets of f1 * f2 collapses to a single
    conditional: f2 conditions on f1's targets and on a superset of f1's
    conditioning set, any surplus being separated from f1's targets."""
    if not f1.targets <= f2.given:
        return False
    base = f2.given - f1.targets
    if not f1.given <= base:
        return False
    extra = base - f1.given
    if extra and not _independent(graph, f1.targets, extra, f1.given):
        return False
    return True


def _rewrite(expr, graph):
    if isinstance(expr, Constant):
        return expr
    if isinstance(expr, Factor):
        return _factor_rules(expr, graph)
    if isinstance(expr, SumOver):
        child = _rewrite(expr.child, graph)
        return _sum_rules(SumOver(expr.variables, child), graph)
    if isinstance(expr, (Product, Quotient)):
        if isinstance(expr, Product):
            parts = [_rewrite(f, graph) for f in expr.factors]
            num, den = _split_fraction(Product(parts))
        else:
            num_e = _rewrite(expr.numerator, graph)
            den_e = _rewrite(expr.denominator, graph)
            num, den = _split_fraction(Quotient(num_e, den_e))
        num, den = _cancel(num, den)
        value = 1.0
        for c in (a for a in num if isinstance(a, Constant)):
            value *= c.value
        for c in (a for a in den if isinstance(a, Constant)):
            if c.value == 0:
                raise ExpressionError("zero constant in a denominator")
            value /= c.value
        num = [a for a in num if not isinstance(a, Constant)]
        den = [a for a in den if not isinstance(a, Constant)]
        if value != 1.0:
            num = [Constant(value)] + num
        return _build_fraction(num, den)
    raise ExpressionError(f"not an expression: {expr!r}")


def _sort_key(expr):
    if isinstance(expr, Constant):
        return (0, str(expr.value))
    if isinstance(expr, Factor):
        return (1, sorted(expr.targets), sorted(expr.given))
    if isinstance(expr, SumOver):
        return (2, sorted(expr.variables), _sort_key(expr.child))
    if isinstance(expr, Product):
        return (3, [_sort_key(f) for f in expr.factors])
    return (4, _sort_key(expr.numerator), _sort_key(expr.denominator))


def _canonical(expr):
    if isinstance(expr, Product):
        parts = sorted((_canonical(f) for f in expr.factors), key=_sort_key)
        if not parts:
            return ONE
        if len(parts) == 1:
            return parts[0]
        return Product(parts)
    if isinstance(expr, Quotient):
        return Quotient(_canonical(expr.numerator),
                        _canonical(expr.denominator))
    if isinstance(expr, SumOver):
        return SumOver(expr.variables, _canonical(expr.child))
    return expr
