"""Closed-form estimands as small expression trees.

A formula is built by walking a derivation backwards from the target term.
As long as a chain of rule applications keeps a term directly estimable from
a single input (marginalizing, conditioning, fixing indicators at 1 and
swapping proxies for true variables), the whole chain stays one `Atom` whose
printed term is rewritten in place.  The first rule application that changes
what the printed term *means* relative to its expression (the
observation/intervention exchanges, whose action is invisible in the printed
estimand) makes the branch "diverged": from then on marginalization becomes
an explicit `Sum`, conditioning becomes a `Quotient` against a summed copy,
and the chain-rule and quotient rules assemble `Product` and `Quotient`
nodes from two branches.

Atoms always refer to an input distribution, possibly sliced (indicators
fixed at 1) and with proxies renamed to their true variables under such a
slice; both rewrites distribute over the surrounding tree, respecting sum
bindings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

from .engine import Distribution, DistributionStore
from .graph import LabeledGraph, iter_bits


@dataclass(frozen=True)
class Atom:
    """A directly estimable term ``p(left | do(b), cond)``.

    `marks` are the variables printed with ``= 1`` (fixed response
    indicators), a subset of ``left | do | cond``.
    """

    left: int
    do: int
    cond: int
    marks: int = 0


@dataclass(frozen=True)
class Product:
    factors: tuple["Expression", ...]


@dataclass(frozen=True)
class Quotient:
    num: "Expression"
    den: "Expression"


@dataclass(frozen=True)
class Sum:
    over: int
    body: "Expression"


Expression = Union[Atom, Product, Quotient, Sum]


def free_variables(expr: Expression) -> int:
    """Bitmask of the variables occurring free in `expr`."""
    if isinstance(expr, Atom):
        return expr.left | expr.do | expr.cond
    if isinstance(expr, Product):
        out = 0
        for f in expr.factors:
            out |= free_variables(f)
        return out
    if isinstance(expr, Quotient):
        return free_variables(expr.num) | free_variables(expr.den)
    if isinstance(expr, Sum):
        return free_variables(expr.body) & ~expr.over
    raise TypeError(f"not an expression: {expr!r}")


def _fix_indicators(expr: Expression, marks: int) -> Expression:
    """Fix the free occurrences of the indicators in `marks` at the value 1."""
    if not marks:
        return expr
    if isinstance(expr, Atom):
        hit = marks & (expr.left | expr.do | expr.cond)
        if not hit:
            return expr
        return Atom(expr.left, expr.do, expr.cond, expr.marks | hit)
    if isinstance(expr, Product):
        return Product(tuple(_fix_indicators(f, marks) for f in expr.factors))
    if isinstance(expr, Quotient):
        return Quotient(
            _fix_indicators(expr.num, marks), _fix_indicators(expr.den, marks)
        )
    if isinstance(expr, Sum):
        inner = marks & ~expr.over
        return Sum(expr.over, _fix_indicators(expr.body, inner))
    raise TypeError(f"not an expression: {expr!r}")


def _swap_proxies(
    expr: Expression, pairs: tuple[tuple[int, int], ...]
) -> Expression:
    """Rename free proxy occurrences to their true variables.

    `pairs` holds ``(proxy index, true index)`` tuples.  Renaming into a
    scope that binds the true variable cannot happen: it would require the
    proxy and its variable to have shared a term, which the rule system
    forbids.
    """
    if not pairs:
        return expr

    def swap_mask(mask: int) -> int:
        for proxy, true in pairs:
            if (mask >> proxy) & 1:
                mask = (mask & ~(1 << proxy)) | (1 << true)
        return mask

    if isinstance(expr, Atom):
        return Atom(
            swap_mask(expr.left),
            swap_mask(expr.do),
            swap_mask(expr.cond),
            swap_mask(expr.marks),
        )
    if isinstance(expr, Product):
        return Product(tuple(_swap_proxies(f, pairs) for f in expr.factors))
    if isinstance(expr, Quotient):
        return Quotient(
            _swap_proxies(expr.num, pairs), _swap_proxies(expr.den, pairs)
        )
    if isinstance(expr, Sum):
        kept = tuple(p for p in pairs if not (expr.over >> p[0]) & 1)
        for _, true in kept:
            if (expr.over >> true) & 1:
                raise AssertionError(
                    "proxy renamed into a scope binding its variable"
                )
        return Sum(expr.over, _swap_proxies(expr.body, kept))
    raise TypeError(f"not an expression: {expr!r}")


class ExpressionBuilder:
    """Backtracks a derivation into an expression tree, memoized per node."""

    def __init__(self, store: DistributionStore, graph: LabeledGraph):
        self.store = store
        self.graph = graph
        self._memo: dict[int, tuple[Expression, bool]] = {}

    def node(self, index: int) -> tuple[Expression, bool]:
        """Expression for store node `index` and whether it has diverged."""
        memo = self._memo
        hit = memo.get(index)
        if hit is not None:
            return hit
        # Iterative post-order walk: derivations can be deep.
        stack = [index]
        while stack:
            i = stack[-1]
            if i in memo:
                stack.pop()
                continue
            node = self.store.nodes[i]
            pending = [p for p in node.parents if p not in memo]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            parts = [memo[p] for p in node.parents]
            memo[i] = self.combine(node.rule, node.z, node.dist, parts)
        return memo[index]

    def combine(
        self,
        rule: str | None,
        z: int,
        dist: Distribution,
        parts: list[tuple[Expression, bool]],
    ) -> tuple[Expression, bool]:
        """Assemble the expression for a term derived by `rule` from `parts`.

        `parts` holds ``(expression, composite)`` for each parent, the
        expanded term first and the additional input (if any) second.  A
        non-composite part is a plain `Atom`: a term obtainable from one
        input by relabeling, marginalizing and conditioning only, hence
        still printable as a single probability.  Relabeling rules keep the
        printed atom untouched (only the term's reading changes, not its
        value), and collapsing rules rewrite the printed atom in place.
        """
        if rule is None:
            return Atom(dist.a, dist.b, dist.c, dist.v1), False
        if rule in ("1+", "1-", "2+", "2-", "3+", "3-"):
            # Value-preserving relabelings: the estimand is unchanged, but
            # the printed term no longer spells the node's own reading, so
            # later steps must build structure around it.
            return parts[0][0], True
        if rule in ("4", "5", "9+", "9-", "10+", "10-"):
            expr, diverged = parts[0]
            if not diverged:
                # Still spelled exactly like the node itself: rewrite the
                # printed term in place.
                return Atom(dist.a, dist.b, dist.c, dist.v1), False
            if rule == "4":
                return Sum(z, expr), True
            if rule == "5":
                return Quotient(expr, Sum(dist.a, expr)), True
            if rule in ("9+", "9-"):
                return _fix_indicators(expr, z), True
            pairs = tuple(
                (p, self.graph.true_of_proxy[p]) for p in iter_bits(z)
            )
            return _swap_proxies(expr, pairs), True  # type: ignore[arg-type]
        if rule == "6-":
            t, s = parts[0][0], parts[1][0]
            if (
                isinstance(t, Atom)
                and isinstance(s, Atom)
                and s.do == t.do
                and s.cond == (t.left | t.cond)
            ):
                # Both factors are still plain probabilities and chain into
                # one: p(S.left | T.left, C) * p(T.left | C) reads as the
                # single term p(S.left, T.left | C).
                merged = Atom(t.left | s.left, t.do, t.cond, t.marks | s.marks)
                return merged, True
            return Product((t, s)), True
        if rule == "6+":
            return Product((parts[0][0], parts[1][0])), True
        if rule in ("7+", "7-"):
            return Quotient(parts[0][0], parts[1][0]), True
        if rule in ("8+", "8-"):
            return Quotient(parts[1][0], parts[0][0]), True
        raise ValueError(f"unknown rule '{rule}'")


def build_expression(
    store: DistributionStore, target_index: int, graph: LabeledGraph
) -> Expression:
    """The estimand for the store node `target_index`."""
    return ExpressionBuilder(store, graph).node(target_index)[0]


# ---------------------------------------------------------------------------
# Rendering.
# ---------------------------------------------------------------------------


def render_latex(
    expr: Expression, graph: LabeledGraph, *, preserve_case: bool = False
) -> str:
    """Render `expr` as LaTeX.

    Variable names are lowercased unless `preserve_case` is set.  A variable
    bound twice in nested sum scopes is primed (``y'``) at the inner binding;
    reusing a free name as a bound one is printed as-is.
    """

    def base_name(v: int) -> str:
        name = graph.names[v]
        return name if preserve_case else name.lower()

    display: dict[int, str] = {}
    depth: dict[int, int] = {}

    def name(v: int) -> str:
        return display.get(v) or base_name(v)

    def atom_str(a: Atom) -> str:
        def part(v: int) -> str:
            if (a.marks >> v) & 1:
                return f"{name(v)} = 1"
            return name(v)

        out = "p(" + ",".join(part(v) for v in iter_bits(a.left))
        rhs = []
        if a.do:
            rhs.append("do(" + ",".join(part(v) for v in iter_bits(a.do)) + ")")
        rhs.extend(part(v) for v in iter_bits(a.cond))
        if rhs:
            out += "|" + ",".join(rhs)
        return out + ")"

    def sum_prefix(s: Sum) -> str:
        return "\\sum_{" + ",".join(name(v) for v in iter_bits(s.over)) + "}"

    def enter(s: Sum) -> list[tuple[int, str | None]]:
        saved = []
        for v in iter_bits(s.over):
            saved.append((v, display.get(v)))
            count = depth.get(v, 0)
            depth[v] = count + 1
            display[v] = base_name(v) + "'" * count
        return saved

    def leave(s: Sum, saved: list[tuple[int, str | None]]) -> None:
        for v, previous in saved:
            depth[v] -= 1
            if previous is None:
                display.pop(v, None)
            else:
                display[v] = previous

    def render(e: Expression) -> str:
        if isinstance(e, Atom):
            return atom_str(e)
        if isinstance(e, Product):
            return "\\left(" + "".join(render(f) for f in e.factors) + "\\right)"
        if isinstance(e, Quotient):
            num = render(e.num)
            if isinstance(e.den, Sum):
                # Denominator sums keep a space before their body.
                prefix = sum_prefix(e.den)
                saved = enter(e.den)
                den = prefix + " " + render(e.den.body)
                leave(e.den, saved)
            else:
                den = render(e.den)
            return "\\frac{" + num + "}{" + den + "}"
        if isinstance(e, Sum):
            prefix = sum_prefix(e)
            saved = enter(e)
            body = render(e.body)
            leave(e, saved)
            space = " " if body.startswith("\\sum") else ""
            return prefix + space + body
        raise TypeError(f"not an expression: {e!r}")

    return render(expr)


# ---------------------------------------------------------------------------
# JSON round-trip.
# ---------------------------------------------------------------------------


def to_json(expr: Expression, graph: LabeledGraph) -> dict[str, Any]:
    """Serialize `expr` into the documented JSON schema (names, not bits)."""
    if isinstance(expr, Atom):
        assign = [[graph.names[v], 1] for v in iter_bits(expr.marks)]
        return {
            "kind": "atom",
            "atom": {
                "left": graph.names_of(expr.left),
                "do": graph.names_of(expr.do),
                "cond": graph.names_of(expr.cond),
                "assign": assign,
            },
        }
    if isinstance(expr, Product):
        return {
            "kind": "product",
            "args": [to_json(f, graph) for f in expr.factors],
        }
    if isinstance(expr, Quotient):
        return {
            "kind": "quotient",
            "num": to_json(expr.num, graph),
            "den": to_json(expr.den, graph),
        }
    if isinstance(expr, Sum):
        return {
            "kind": "sum",
            "over": graph.names_of(expr.over),
            "args": [to_json(expr.body, graph)],
        }
    raise TypeError(f"not an expression: {expr!r}")


def from_json(doc: dict[str, Any], graph: LabeledGraph) -> Expression:
    """Rebuild an expression from its JSON form."""
    kind = doc.get("kind")
    if kind == "atom":
        atom = doc["atom"]
        marks = 0
        for name, value in atom.get("assign", []):
            if value != 1:
                raise ValueError("only the value 1 can be assigned")
            marks |= 1 << graph.vertex(name)
        return Atom(
            graph.mask(atom.get("left", [])),
            graph.mask(atom.get("do", [])),
            graph.mask(atom.get("cond", [])),
            marks,
        )
    if kind == "product":
        factors = tuple(from_json(a, graph) for a in doc["args"])
        if len(factors) < 2:
            raise ValueError("a product needs at least two factors")
        return Product(factors)
    if kind == "quotient":
        return Quotient(
            from_json(doc["num"], graph), from_json(doc["den"], graph)
        )
    if kind == "sum":
        (body,) = doc["args"]
        return Sum(graph.mask(doc["over"]), from_json(body, graph))
    raise ValueError(f"unknown expression kind {kind!r}")


# ---------------------------------------------------------------------------
# Structural comparison.
# ---------------------------------------------------------------------------


def canonical_form(expr: Expression) -> tuple:
    """A hashable normal form for structural comparison.

    Products are flattened and their factors sorted (multiplication
    commutes), directly nested sums are merged, and atom parts are already
    order-free bitmasks.  Two formulas with equal canonical forms differ at
    most in argument order and product/sum presentation.
    """
    if isinstance(expr, Atom):
        return ("atom", expr.left, expr.do, expr.cond, expr.marks)
    if isinstance(expr, Product):
        factors: list[tuple] = []

        def collect(e: Expression) -> None:
            if isinstance(e, Product):
                for f in e.factors:
                    collect(f)
            else:
                factors.append(canonical_form(e))

        collect(expr)
        return ("product", tuple(sorted(factors, key=repr)))
    if isinstance(expr, Quotient):
        return ("quotient", canonical_form(expr.num), canonical_form(expr.den))
    if isinstance(expr, Sum):
        over = expr.over
        body = expr.body
        while isinstance(body, Sum):
            over |= body.over
            body = body.body
        return ("sum", over, canonical_form(body))
    raise TypeError(f"not an expression: {expr!r}")
