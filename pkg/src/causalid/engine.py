"""Probability terms and the rewrite rules that transform them.

A term ``P(A | do(B), C)`` is held as three disjoint bitmasks plus a fourth
mask `v1` of response indicators that are fixed at the value 1 anywhere in
the term (conditioning side, left side, or inside the do-set, where a fixed
indicator is written ``do(r = 1)``).  Transportability and selection-bias
vertices carry the implicit value 1 simply by being present, so they never
appear in `v1`.

Eighteen rewrite rules are implemented.  Rules ``1±`` through ``3±`` are the
classical inference-rule pairs (insert/delete an observation, exchange
observation and intervention in both directions, insert/delete an
intervention), each guarded by an m-separation criterion on the augmented
graph; ``4``/``5`` marginalize and condition; ``6±`` are the two directions
of the chain rule; ``7±``/``8±`` are the quotient forms of the chain rule;
``9±`` fix present response indicators at 1; ``10±`` swap proxy variables
for their true counterparts once the matching indicators are fixed at 1.
Rules ``1±`` are redundant given the others and are disabled by default.

Each rule also carries a termination test ("this rule can never fire on this
term") used for pruning, and a validity test describing its admissible
vertex subsets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import GraphError, LabeledGraph, Role, iter_bits
from .parser import DistributionSpec

#: Every rule identifier, in application order.
RULES: tuple[str, ...] = (
    "1+", "1-", "2+", "2-", "3+", "3-", "4", "5", "6+", "6-",
    "7+", "7-", "8+", "8-", "9+", "9-", "10+", "10-",
)

#: Default rule set for problems without missing data.
CORE_RULES: tuple[str, ...] = ("2+", "2-", "3+", "3-", "4", "5", "6+", "6-")

#: Default rule set once missingness mechanisms are declared.
MISSING_RULES: tuple[str, ...] = CORE_RULES + (
    "7+", "7-", "8+", "8-", "9+", "9-", "10+", "10-",
)


class EngineError(ValueError):
    """Raised when a term cannot be resolved against a graph."""


def default_rules(graph: LabeledGraph) -> tuple[str, ...]:
    """The rule set enabled by default for `graph`."""
    return MISSING_RULES if graph.missing_mask else CORE_RULES


@dataclass(frozen=True, slots=True)
class Distribution:
    """One term ``P(A | do(B), C)`` with value-fixed indicators `v1`.

    Attributes:
        a: left-side (outcome) vertex bitmask; never empty.
        b: do-set bitmask.
        c: conditioning bitmask (do-set excluded).
        v1: response indicators fixed at 1, a subset of ``a | b | c``.
    """

    a: int
    b: int
    c: int
    v1: int = 0

    @property
    def variables(self) -> int:
        return self.a | self.b | self.c


@dataclass
class DerivationNode:
    """A stored term together with how it was first derived.

    Attributes:
        dist: the term.
        rule: rule identifier, or None for an input distribution.
        z: the vertex subset the rule acted on.
        parents: store indices of the terms consumed (1, or 2 for the
            chain-rule and quotient rules, where the second entry is the
            additional input).
        expanded: whether the search has expanded this node.
        order: insertion index in the store (derivation order).
    """

    dist: Distribution
    rule: str | None = None
    z: int = 0
    parents: tuple[int, ...] = ()
    expanded: bool = False
    order: int = 0


class DistributionStore:
    """Deduplicating store of derived terms.

    Terms are keyed by packing the four masks into one integer; the first
    derivation of a term wins and later duplicates are ignored.
    """

    def __init__(self, width: int):
        if width <= 0:
            raise ValueError("width must be positive")
        self.width = width
        self.nodes: list[DerivationNode] = []
        self._index: dict[int, int] = {}

    def key_of(self, a: int, b: int, c: int, v1: int) -> int:
        w = self.width
        return a | b << w | c << 2 * w | v1 << 3 * w

    def key(self, dist: Distribution) -> int:
        return self.key_of(dist.a, dist.b, dist.c, dist.v1)

    def find(self, dist: Distribution) -> int | None:
        return self._index.get(self.key(dist))

    def insert(self, node: DerivationNode) -> tuple[int, bool]:
        key = self.key(node.dist)
        existing = self._index.get(key)
        if existing is not None:
            return existing, False
        index = len(self.nodes)
        node.order = index
        self._index[key] = index
        self.nodes.append(node)
        return index, True

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, index: int) -> DerivationNode:
        return self.nodes[index]


def canonical_insert(
    store: DistributionStore, node: DerivationNode
) -> tuple[int, bool]:
    """Insert `node`, returning ``(index, was_new)``; first derivation wins."""
    return store.insert(node)


def resolve_distribution(
    spec: DistributionSpec, graph: LabeledGraph
) -> Distribution:
    """Resolve a parsed term against a graph, validating roles and values.

    Value semantics: ``= 1`` on a response indicator marks it fixed (`v1`);
    ``= 1`` on a transportability or selection vertex is redundant (presence
    already implies it); ``= 0`` on such a vertex removes it from the term
    (an inactive context node); all other assignments are rejected.

    Raises:
        EngineError: for unknown names, overlapping roles, do-sets containing
            proxies or context vertices, a true variable co-occurring with
            its own proxy, or unsupported value assignments.
    """
    masks = [0, 0, 0]
    for slot, names in enumerate((spec.left, spec.do_vars, spec.cond_vars)):
        for name in names:
            try:
                bit = 1 << graph.vertex(name)
            except GraphError as e:
                raise EngineError(str(e)) from e
            masks[slot] |= bit
    a, b, c = masks
    if a & b or a & c or b & c:
        overlap = (a & b) | (a & c) | (b & c)
        raise EngineError(
            "variables appear twice in the term: "
            + ", ".join(graph.names_of(overlap))
        )

    v1 = 0
    drop = 0
    for name, value in spec.value_assignments:
        idx = graph.vertex(name)
        bit = 1 << idx
        role = graph.roles[idx]
        if role is Role.INDICATOR:
            if value != 1:
                raise EngineError(
                    f"response indicator '{name}' can only be fixed at 1"
                )
            v1 |= bit
        elif role in (Role.TRANSPORT, Role.SELECTION):
            if value == 0:
                if bit & a:
                    raise EngineError(
                        f"'{name} = 0' cannot appear on the left of a term"
                    )
                drop |= bit  # an inactive context vertex vanishes
        else:
            raise EngineError(
                f"value assignments are not supported on '{name}' "
                f"({role.value} variable)"
            )
    b &= ~drop
    c &= ~drop

    if not a:
        raise EngineError("a term needs at least one left-side variable")
    bad_do = b & (graph.proxy_mask | graph.transport_mask | graph.selection_mask)
    if bad_do:
        raise EngineError(
            "do(...) cannot contain proxy, transportability or "
            "selection-bias vertices: " + ", ".join(graph.names_of(bad_do))
        )
    everything = a | b | c
    clash = everything & graph.proxies_of(everything)
    if clash:
        raise EngineError(
            "a variable and its proxy cannot appear in one term: "
            + ", ".join(graph.names_of(graph.trues_of(clash) | clash))
        )
    return Distribution(a, b, c, v1)


def term_to_spec(dist: Distribution, graph: LabeledGraph) -> DistributionSpec:
    """Render a term back into name lists (ascending vertex order)."""
    assignments = [(graph.names[i], 1) for i in iter_bits(dist.v1)]
    return DistributionSpec(
        left=graph.names_of(dist.a),
        do_vars=graph.names_of(dist.b),
        cond_vars=graph.names_of(dist.c),
        value_assignments=assignments,
    )


# ---------------------------------------------------------------------------
# Rule mechanics.
# ---------------------------------------------------------------------------


def _subsets(mask: int):
    """All nonempty subsets of `mask`, ascending as integers."""
    s = 0
    while True:
        s = (s - mask) & mask
        if not s:
            return
        yield s


def _fresh_universe(dist: Distribution, graph: LabeledGraph) -> int:
    """Vertices that may be freshly introduced next to `dist`.

    Excludes the term's own vertices and anything that would make a true
    variable co-occur with its proxy.
    """
    t = dist.variables
    return graph.all_mask & ~t & ~graph.proxies_of(t) & ~graph.trues_of(t)


def _co_occurrence_free(z: int, graph: LabeledGraph) -> bool:
    """True when `z` does not contain both a variable and its proxy."""
    return not (z & graph.proxies_of(z))


def termination_applicable(
    dist: Distribution, rule: str, graph: LabeledGraph
) -> bool:
    """True when `rule` can never fire on `dist` (nor on anything reachable
    from it through the rule's own action), so the rule may be pruned."""
    a, b, c, v1 = dist.a, dist.b, dist.c, dist.v1
    if rule in ("1-", "2+", "6+", "8-"):
        return c == 0
    if rule in ("2-", "3-"):
        return b == 0
    if rule in ("4", "5", "7+", "7-"):
        return a.bit_count() == 1
    if rule == "9+":
        return c & graph.indicator_mask == 0
    if rule == "9-":
        return a & graph.indicator_mask == 0
    if rule in ("10+", "10-"):
        return v1 & ~b == 0
    if rule in ("1+", "3+", "6-", "8+"):
        return False
    raise ValueError(f"unknown rule '{rule}'")


def valid_subsets(
    dist: Distribution, rule: str, graph: LabeledGraph
) -> list[int]:
    """The vertex subsets on which `rule` may act on `dist`.

    Only membership conditions are enforced here; separation criteria and
    the availability of a second input are checked at application time.
    """
    a, b, c, v1 = dist.a, dist.b, dist.c, dist.v1
    if rule in ("1+", "6-"):
        pool = _fresh_universe(dist, graph)
        return [z for z in _subsets(pool) if _co_occurrence_free(z, graph)]
    if rule == "1-":
        return list(_subsets(c))
    if rule == "2+":
        return list(_subsets(c & ~graph.proxy_mask))
    if rule in ("2-", "3-"):
        return list(_subsets(b))
    if rule == "3+":
        pool = _fresh_universe(dist, graph) & graph.intervenable_mask
        return list(_subsets(pool))
    if rule == "4":
        return [z for z in _subsets(a & ~v1) if z != a]
    if rule == "5":
        return [z for z in _subsets(a) if z != a and not (a & ~z & v1)]
    if rule == "6+":
        return list(_subsets(c))
    if rule in ("7+", "7-"):
        return [z for z in _subsets(a) if z != a]
    if rule == "8+":
        return list(_subsets(graph.all_mask & ~dist.variables))
    if rule == "8-":
        return list(_subsets(c))
    if rule == "9+":
        return list(_subsets(c & graph.indicator_mask & ~v1))
    if rule == "9-":
        return list(_subsets(a & graph.indicator_mask & ~v1))
    if rule == "10+":
        out = []
        for z in _subsets(c & graph.proxy_mask):
            rz = graph.indicators_of(graph.trues_of(z))
            if rz & ~v1 == 0 and rz & ~c == 0:
                out.append(z)
        return out
    if rule == "10-":
        out = []
        for z in _subsets(a & graph.proxy_mask):
            rz = graph.indicators_of(graph.trues_of(z))
            if rz & ~v1 == 0 and (rz & ~c == 0 or rz & ~a == 0):
                out.append(z)
        return out
    raise ValueError(f"unknown rule '{rule}'")


def separation_requirement(
    dist: Distribution, rule: str, z: int
) -> tuple[int, int, int, int, bool] | None:
    """The m-separation check guarding ``rule`` on ``dist`` with subset `z`.

    Returns:
        ``(sources, targets, conditioning, cut, intervention)`` where
        `targets` is a variable mask, tested against the variables themselves
        when `intervention` is False and against their intervention nodes
        when True.  None when the rule needs no separation check.
    """
    a, b, c = dist.a, dist.b, dist.c
    if rule == "1+":
        return a, z, b | c, b, False
    if rule == "1-":
        return a, z, b | (c & ~z), b, False
    if rule in ("2+", "3+"):
        return a, z, b | c, b, True
    if rule == "2-":
        return a, z, b | c, b & ~z, True
    if rule == "3-":
        return a, z, (b & ~z) | c, b & ~z, True
    return None


def second_input(
    dist: Distribution, rule: str, z: int
) -> Distribution | None:
    """The additional term `rule` must find in the store, if it needs one."""
    a, b, c, v1 = dist.a, dist.b, dist.c, dist.v1
    if rule == "6+":
        return Distribution(z, b, c & ~z, v1 & ~a)
    if rule == "6-":
        return Distribution(z, b, a | c, v1)
    if rule == "7+":
        return Distribution(z, b, c, v1 & (z | b | c))
    if rule == "7-":
        return Distribution(z, b, c | (a & ~z), v1)
    if rule == "8+":
        return Distribution(a | z, b, c, v1)
    if rule == "8-":
        return Distribution(a | z, b, c & ~z, v1)
    return None


def rule_output(
    dist: Distribution, rule: str, z: int, graph: LabeledGraph
) -> Distribution:
    """The term produced by applying `rule` with subset `z` (assumed valid)."""
    a, b, c, v1 = dist.a, dist.b, dist.c, dist.v1
    if rule == "1+":
        return Distribution(a, b, c | z, v1)
    if rule == "1-":
        return Distribution(a, b, c & ~z, v1 & ~z)
    if rule == "2+":
        return Distribution(a, b | z, c & ~z, v1)
    if rule == "2-":
        return Distribution(a, b & ~z, c | z, v1)
    if rule == "3+":
        return Distribution(a, b | z, c, v1)
    if rule == "3-":
        return Distribution(a, b & ~z, c, v1 & ~z)
    if rule == "4":
        return Distribution(a & ~z, b, c, v1)
    if rule == "5":
        return Distribution(a & ~z, b, c | z, v1)
    if rule == "6+":
        return Distribution(a | z, b, c & ~z, v1)
    if rule == "6-":
        return Distribution(a | z, b, c, v1)
    if rule == "7+":
        return Distribution(a & ~z, b, c | z, v1)
    if rule == "7-":
        return Distribution(a & ~z, b, c, v1 & ~z)
    if rule == "8+":
        return Distribution(z, b, c | a, v1)
    if rule == "8-":
        return Distribution(z, b, c & ~z, v1 & ~a)
    if rule in ("9+", "9-"):
        return Distribution(a, b, c, v1 | z)
    if rule == "10+":
        return Distribution(a, b, (c & ~z) | graph.trues_of(z), v1)
    if rule == "10-":
        return Distribution((a & ~z) | graph.trues_of(z), b, c, v1)
    raise ValueError(f"unknown rule '{rule}'")


@dataclass(frozen=True)
class RuleApplication:
    """Outcome of one attempted rule application.

    Attributes:
        result: the produced term, or None when rejected.
        reason: None on success, otherwise one of ``"invalid-subset"``,
            ``"separation-failed"``, ``"missing-second-input"``.
        additional: store index of the second input consumed, if any.
    """

    result: Distribution | None
    reason: str | None = None
    additional: int | None = None


def apply_rule(
    dist: Distribution,
    rule: str,
    z: int,
    graph: LabeledGraph,
    store: DistributionStore,
) -> RuleApplication:
    """Attempt one rule application, reporting the distinguished rejections.

    This is the readable reference implementation; the search mirrors the
    same logic inline for speed, and the two are property-tested against
    each other.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule '{rule}'")
    if z == 0 or z not in valid_subsets(dist, rule, graph):
        return RuleApplication(None, "invalid-subset")
    requirement = separation_requirement(dist, rule, z)
    if requirement is not None:
        sources, targets, conditioning, cut, intervention = requirement
        if intervention:
            separated = graph.m_separated_intervention(
                sources, targets, conditioning, cut
            )
        else:
            separated = graph.m_separated(sources, targets, conditioning, cut)
        if not separated:
            return RuleApplication(None, "separation-failed")
    additional_index: int | None = None
    needed = second_input(dist, rule, z)
    if needed is not None:
        additional_index = store.find(needed)
        if additional_index is None:
            return RuleApplication(None, "missing-second-input")
    return RuleApplication(
        rule_output(dist, rule, z, graph), None, additional_index
    )


def exhaustive_closure(
    inputs: list[Distribution],
    graph: LabeledGraph,
    rules: tuple[str, ...] | None = None,
    *,
    termination_pruning: bool = True,
    max_terms: int | None = None,
) -> DistributionStore:
    """Reference FIFO closure over the rule system, built from `apply_rule`.

    Expands every stored term in derivation order until nothing new can be
    derived.  Slow but obviously faithful to the per-rule API; the optimized
    search in :mod:`causalid.search` is tested to derive exactly the same
    term sets.
    """
    rules = tuple(rules) if rules is not None else default_rules(graph)
    store = DistributionStore(max(graph.n_vars, 1))
    for dist in inputs:
        store.insert(DerivationNode(dist))
    cursor = 0
    while cursor < len(store.nodes):
        node = store.nodes[cursor]
        for rule in rules:
            if termination_pruning and termination_applicable(
                node.dist, rule, graph
            ):
                continue
            for z in valid_subsets(node.dist, rule, graph):
                outcome = apply_rule(node.dist, rule, z, graph, store)
                if outcome.result is None:
                    continue
                parents = (cursor,)
                if outcome.additional is not None:
                    parents = (cursor, outcome.additional)
                store.insert(
                    DerivationNode(outcome.result, rule, z, parents)
                )
                if max_terms is not None and len(store.nodes) >= max_terms:
                    return store
        node.expanded = True
        cursor += 1
    return store
