"""Best-first identification search over derivable terms.

Starting from the input distributions, every stored term is expanded by
applying each enabled rewrite rule for all of its admissible vertex subsets.
New terms are deduplicated against the store (first derivation wins), and
expansion continues until the query term is derived, the space is exhausted
(not identifiable), or a time budget runs out (indeterminate).

Expansion order is either first-in-first-out (the order in which terms were
identified) or best-first under the `proximity` score towards the query.
The heuristic defaults to on, except for problems with declared missingness
mechanisms, where expansion always follows identification order.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from . import engine
from .engine import (
    DerivationNode,
    Distribution,
    DistributionStore,
    RULES,
    default_rules,
    resolve_distribution,
    term_to_spec,
)
from .formula import Expression, ExpressionBuilder, canonical_form
from .graph import LabeledGraph, build_graph
from .parser import (
    DistributionSpec,
    GraphSpec,
    MissingnessSpec,
    parse_distribution,
    parse_distribution_set,
    parse_graph,
    parse_missingness,
    render_distribution,
)

logger = logging.getLogger(__name__)

_R1P, _R1M, _R2P, _R2M, _R3P, _R3M, _R4, _R5, _R6P, _R6M = range(10)
_R7P, _R7M, _R8P, _R8M, _R9P, _R9M, _R10P, _R10M = range(10, 18)


def _submasks(mask: int, code: int) -> Iterator[tuple[int, int]]:
    """Yield `(z, code)` for every non-empty submask of `mask`, ascending."""
    z = 0
    while True:
        z = (z - mask) & mask
        if not z:
            return
        yield (z, code)


#: Order in which rules are tried while expanding one term: the two
#: single-parent collapses first (they move straight towards the target
#: shape), then the relabelings, then the rules that need a second stored
#: term.  Derivation order — and through it the printed formula — depends
#: on this order, so it is fixed.
_EXPANSION_ORDER = (
    _R4, _R5, _R1P, _R1M, _R2P, _R2M, _R3P, _R3M, _R6P, _R6M,
    _R7P, _R7M, _R8P, _R8M, _R9P, _R9M, _R10P, _R10M,
)


class _TargetFound(Exception):
    """Internal control flow: the query term was just derived."""


@dataclass
class SearchOptions:
    """Knobs for `run_search`.

    Attributes:
        heuristic: expand best-first towards the query.  None picks the
            default: on, unless missingness mechanisms are declared, in
            which case expansion always follows identification order.
        rules_enabled: rule identifiers to use; None picks the default set
            for the graph.  Rules always apply in catalogue order
            regardless of the order given here.
        find_all_paths: keep searching after the first success and report
            structurally distinct alternative formulas.
        time_budget: wall-clock seconds before giving up as indeterminate.
        trace: log every derived term at DEBUG level.
    """

    heuristic: bool | None = None
    rules_enabled: Sequence[str] | None = None
    find_all_paths: bool = False
    time_budget: float | None = None
    trace: bool = False


@dataclass
class SearchStats:
    """Search effort counters.

    `terms_derived` counts every stored term including the inputs;
    `rule_applications` counts attempted (rule, subset) candidates;
    `separation_checks` counts requested separation verdicts (the per-graph
    cache makes repeats cheap but they are still counted).
    """

    terms_derived: int = 0
    terms_expanded: int = 0
    rule_applications: int = 0
    separation_checks: int = 0
    elapsed: float = 0.0


@dataclass
class SearchResult:
    """Outcome of a search.

    Attributes:
        verdict: "identifiable", "non-identifiable", or "indeterminate"
            (time budget exhausted).
        formula: the estimand when identifiable.
        target_index: store index of the derived query term.
        store: the full derivation store (inputs first).
        stats: effort counters.
        alternatives: structurally distinct alternative formulas, populated
            only under ``find_all_paths``.
    """

    verdict: str
    formula: Expression | None
    target_index: int | None
    store: DistributionStore
    stats: SearchStats
    alternatives: list[Expression] = field(default_factory=list)

    @property
    def identifiable(self) -> bool | None:
        if self.verdict == "identifiable":
            return True
        if self.verdict == "non-identifiable":
            return False
        return None

    @property
    def derivation(self) -> list[DerivationNode] | None:
        if self.target_index is None:
            return None
        return backtrack_derivation(self.store, self.target_index)


def proximity(target: Distribution, source: Distribution) -> int:
    """Priority of expanding `source` while searching for `target`.

    Shared left/do/conditioning variables score 10/5/3 each; missing left
    variables cost 2, do-set mismatches cost 2 per variable in either
    direction, conditioning mismatches cost 1 per variable either way.
    """
    ta, tb, tc = target.a, target.b, target.c
    sa, sb, sc = source.a, source.b, source.c
    return (
        10 * (ta & sa).bit_count()
        + 5 * (tb & sb).bit_count()
        + 3 * (tc & sc).bit_count()
        - 2 * (ta & ~sa).bit_count()
        - 2 * (tb & ~sb).bit_count()
        - 2 * (sb & ~tb).bit_count()
        - (tc & ~sc).bit_count()
        - (sc & ~tc).bit_count()
    )


def trivially_nonidentifiable(
    inputs: Sequence[Distribution], query: Distribution, graph: LabeledGraph
) -> bool:
    """True when the query is hopeless without any rule application.

    No rule introduces a left-side variable that is not on the left of some
    input, up to swapping a proxy for its true variable; a query whose
    left side is not covered can therefore never be derived.
    """
    covered = 0
    for dist in inputs:
        covered |= dist.a | graph.trues_of(dist.a)
    return bool(query.a & ~covered)


def backtrack_derivation(
    store: DistributionStore, target_index: int
) -> list[DerivationNode]:
    """The ancestor sub-derivation of a stored term, in derivation order."""
    seen = {target_index}
    stack = [target_index]
    while stack:
        for p in store.nodes[stack.pop()].parents:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return [store.nodes[i] for i in sorted(seen)]


def run_search(
    inputs: Sequence[Distribution],
    query: Distribution,
    graph: LabeledGraph,
    options: SearchOptions | None = None,
) -> SearchResult:
    """Decide identifiability of `query` from `inputs` over `graph`."""
    opts = options or SearchOptions()
    start = time.monotonic()
    stats = SearchStats()
    missing = bool(graph.missing_mask)
    heuristic = opts.heuristic if opts.heuristic is not None else not missing
    if missing:
        heuristic = False  # identification order is required here
    if opts.rules_enabled is None:
        enabled = set(default_rules(graph))
    else:
        enabled = set(opts.rules_enabled)
        unknown = enabled - set(RULES)
        if unknown:
            raise ValueError(f"unknown rules: {sorted(unknown)}")

    store = DistributionStore(max(graph.n_vars, 1))
    for dist in inputs:
        store.insert(DerivationNode(dist))

    def finish(
        verdict: str, target_index: int | None, alternatives=()
    ) -> SearchResult:
        stats.terms_derived = len(store.nodes)
        stats.elapsed = time.monotonic() - start
        formula = None
        alt_exprs: list[Expression] = []
        if target_index is not None:
            builder = ExpressionBuilder(store, graph)
            formula = builder.node(target_index)[0]
            seen_forms = {canonical_form(formula)}
            for code, z, p1, p2 in alternatives:
                parts = [builder.node(p1)]
                if p2 >= 0:
                    parts.append(builder.node(p2))
                expr, _ = builder.combine(
                    RULES[code], z, store.nodes[target_index].dist, parts
                )
                form = canonical_form(expr)
                if form not in seen_forms:
                    seen_forms.add(form)
                    alt_exprs.append(expr)
        return SearchResult(
            verdict, formula, target_index, store, stats, alt_exprs
        )

    tkey = store.key(query)
    existing = store._index.get(tkey)
    if existing is not None:
        return finish("identifiable", existing)
    if trivially_nonidentifiable(inputs, query, graph):
        return finish("non-identifiable", None)

    # Local bindings for the expansion loop.
    w = store.width
    w2, w3 = 2 * w, 3 * w
    index = store._index
    nodes = store.nodes
    allmask = graph.all_mask
    nonproxy = allmask & ~graph.proxy_mask
    indicator = graph.indicator_mask
    proxymask = graph.proxy_mask
    connected = graph._connected
    trues_of = graph.trues_of
    proxies_of = graph.proxies_of
    indicators_of = graph.indicators_of
    find_all = opts.find_all_paths
    trace = opts.trace

    ibit = [0] * w
    for v in range(w):
        node_id = graph.inode[v]
        if node_id is not None:
            ibit[v] = 1 << node_id

    def imask(z: int) -> int:
        out = 0
        while z:
            low = z & -z
            out |= ibit[low.bit_length() - 1]
            z ^= low
        return out

    e1p = "1+" in enabled
    e1m = "1-" in enabled
    e2p = "2+" in enabled
    e2m = "2-" in enabled
    e3p = "3+" in enabled
    e3m = "3-" in enabled
    e4 = "4" in enabled
    e5 = "5" in enabled
    e6p = "6+" in enabled
    e6m = "6-" in enabled
    e7p = "7+" in enabled
    e7m = "7-" in enabled
    e8p = "8+" in enabled
    e8m = "8-" in enabled
    e9p = "9+" in enabled
    e9m = "9-" in enabled
    e10p = "10+" in enabled
    e10m = "10-" in enabled
    any_fresh = e1p or e3p or e6m or e8p
    ecodes = {code for code, rule in enumerate(RULES) if rule in enabled}

    ta, tb, tc = query.a, query.b, query.c
    found_index = -1
    alternatives: list[tuple[int, int, int, int]] = []
    heap: list[tuple[int, int]] = []
    i = 0  # index of the node currently being expanded

    def prox(oa: int, ob: int, oc: int) -> int:
        return (
            10 * (ta & oa).bit_count()
            + 5 * (tb & ob).bit_count()
            + 3 * (tc & oc).bit_count()
            - 2 * (ta & ~oa).bit_count()
            - 2 * (tb & ~ob).bit_count()
            - 2 * (ob & ~tb).bit_count()
            - (tc & ~oc).bit_count()
            - (oc & ~tc).bit_count()
        )

    def insert(
        key: int, code: int, z: int, oa: int, ob: int, oc: int, ov1: int,
        p2: int,
    ) -> None:
        nonlocal found_index
        node = DerivationNode(
            Distribution(oa, ob, oc, ov1),
            RULES[code],
            z,
            (i, p2) if p2 >= 0 else (i,),
        )
        idx = len(nodes)
        node.order = idx
        index[key] = idx
        nodes.append(node)
        if trace:
            logger.debug(
                "derived #%d %s by %s", idx,
                render_distribution(term_to_spec(node.dist, graph)),
                RULES[code],
            )
        if heuristic:
            # Among equally close terms the earlier derivation goes first.
            heapq.heappush(heap, (-prox(oa, ob, oc), idx))
        if key == tkey:
            found_index = idx
            if not find_all:
                raise _TargetFound

    def maybe_alt(code: int, z: int) -> None:
        # Cold path: verify the candidate fully before recording it as an
        # alternative derivation of the already-found query.
        outcome = engine.apply_rule(
            nodes[i].dist, RULES[code], z, graph, store
        )
        if outcome.result is not None:
            p2 = -1 if outcome.additional is None else outcome.additional
            alternatives.append((code, z, i, p2))

    if heuristic:
        for idx, node in enumerate(nodes):
            d0 = node.dist
            heapq.heappush(heap, (-prox(d0.a, d0.b, d0.c), idx))
    cursor = 0
    deadline = None if opts.time_budget is None else start + opts.time_budget

    while True:
        if heuristic:
            if not heap:
                break
            i = heapq.heappop(heap)[1]
        else:
            if cursor >= len(nodes):
                break
            i = cursor
            cursor += 1
        if deadline is not None and time.monotonic() > deadline:
            if found_index >= 0:
                return finish("identifiable", found_index, alternatives)
            return finish("indeterminate", None)
        node = nodes[i]
        node.expanded = True
        stats.terms_expanded += 1
        d = node.dist
        a, b, c, v1 = d.a, d.b, d.c, d.v1
        bc = b | c
        t = a | bc
        if any_fresh:
            fresh = allmask & ~t
            fresh_md = fresh & ~proxies_of(t) & ~trues_of(t)
        # Expansion tries the enabled rules in the fixed order, walking each
        # rule's admissible subsets in ascending bitset order.
        pool = {
            _R1P: fresh_md if e1p else 0,
            _R1M: c,
            _R2P: c & nonproxy,
            _R2M: b,
            _R3P: fresh_md & nonproxy if e3p else 0,
            _R3M: b,
            _R4: a & ~v1,
            _R5: a,
            _R6P: c,
            _R6M: fresh_md if e6m else 0,
            _R7P: a,
            _R7M: a,
            _R8P: fresh if e8p else 0,
            _R8M: c,
            _R9P: c & indicator & ~v1,
            _R9M: a & indicator & ~v1,
            _R10P: c & proxymask,
            _R10M: a & proxymask,
        }
        candidates = itertools.chain.from_iterable(
            _submasks(pool[code], code)
            for code in _EXPANSION_ORDER
            if code in ecodes
        )
        try:
            for z, code in candidates:
                if code == _R1P:
                    if z & proxies_of(z):
                        continue
                    stats.rule_applications += 1
                    key = a | b << w | (c | z) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        stats.separation_checks += 1
                        if not connected(a, z, bc, b):
                            insert(key, _R1P, z, a, b, c | z, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R1P, z)
                elif code == _R1M:
                    stats.rule_applications += 1
                    key = a | b << w | (c & ~z) << w2 | (v1 & ~z) << w3
                    ex = index.get(key)
                    if ex is None:
                        stats.separation_checks += 1
                        if not connected(a, z, b | (c & ~z), b):
                            insert(key, _R1M, z, a, b, c & ~z, v1 & ~z, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R1M, z)
                elif code == _R2P:
                    stats.rule_applications += 1
                    key = a | (b | z) << w | (c & ~z) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        stats.separation_checks += 1
                        if not connected(a, imask(z), bc, b):
                            insert(key, _R2P, z, a, b | z, c & ~z, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R2P, z)
                elif code == _R2M:
                    stats.rule_applications += 1
                    key = a | (b & ~z) << w | (c | z) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        stats.separation_checks += 1
                        if not connected(a, imask(z), bc, b & ~z):
                            insert(key, _R2M, z, a, b & ~z, c | z, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R2M, z)
                elif code == _R3P:
                    stats.rule_applications += 1
                    key = a | (b | z) << w | c << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        stats.separation_checks += 1
                        if not connected(a, imask(z), bc, b):
                            insert(key, _R3P, z, a, b | z, c, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R3P, z)
                elif code == _R3M:
                    stats.rule_applications += 1
                    key = a | (b & ~z) << w | c << w2 | (v1 & ~z) << w3
                    ex = index.get(key)
                    if ex is None:
                        stats.separation_checks += 1
                        if not connected(a, imask(z), (b & ~z) | c, b & ~z):
                            insert(key, _R3M, z, a, b & ~z, c, v1 & ~z, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R3M, z)
                elif code == _R4:
                    if z == a:
                        continue
                    stats.rule_applications += 1
                    key = (a & ~z) | b << w | c << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        insert(key, _R4, z, a & ~z, b, c, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R4, z)
                elif code == _R5:
                    if z == a or a & ~z & v1:
                        continue
                    stats.rule_applications += 1
                    key = (a & ~z) | b << w | (c | z) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        insert(key, _R5, z, a & ~z, b, c | z, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R5, z)
                elif code == _R6P:
                    stats.rule_applications += 1
                    key = (a | z) | b << w | (c & ~z) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        skey = (
                            z | b << w | (c & ~z) << w2 | (v1 & ~a) << w3
                        )
                        p2 = index.get(skey)
                        if p2 is not None:
                            insert(key, _R6P, z, a | z, b, c & ~z, v1, p2)
                    elif find_all and ex == found_index:
                        maybe_alt(_R6P, z)
                elif code == _R6M:
                    if z & proxies_of(z):
                        continue
                    stats.rule_applications += 1
                    key = (a | z) | b << w | c << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        skey = z | b << w | (a | c) << w2 | v1 << w3
                        p2 = index.get(skey)
                        if p2 is not None:
                            insert(key, _R6M, z, a | z, b, c, v1, p2)
                    elif find_all and ex == found_index:
                        maybe_alt(_R6M, z)
                elif code == _R7P:
                    if z == a:
                        continue
                    stats.rule_applications += 1
                    key = (a & ~z) | b << w | (c | z) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        skey = (
                            z | b << w | c << w2 | (v1 & (z | bc)) << w3
                        )
                        p2 = index.get(skey)
                        if p2 is not None:
                            insert(key, _R7P, z, a & ~z, b, c | z, v1, p2)
                    elif find_all and ex == found_index:
                        maybe_alt(_R7P, z)
                elif code == _R7M:
                    if z == a:
                        continue
                    stats.rule_applications += 1
                    key = (
                        (a & ~z) | b << w | c << w2 | (v1 & ~z) << w3
                    )
                    ex = index.get(key)
                    if ex is None:
                        skey = (
                            z | b << w | (c | (a & ~z)) << w2 | v1 << w3
                        )
                        p2 = index.get(skey)
                        if p2 is not None:
                            insert(key, _R7M, z, a & ~z, b, c, v1 & ~z, p2)
                    elif find_all and ex == found_index:
                        maybe_alt(_R7M, z)
                elif code == _R8P:
                    stats.rule_applications += 1
                    key = z | b << w | (c | a) << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        skey = (a | z) | b << w | c << w2 | v1 << w3
                        p2 = index.get(skey)
                        if p2 is not None:
                            insert(key, _R8P, z, z, b, c | a, v1, p2)
                    elif find_all and ex == found_index:
                        maybe_alt(_R8P, z)
                elif code == _R8M:
                    stats.rule_applications += 1
                    key = (
                        z | b << w | (c & ~z) << w2 | (v1 & ~a) << w3
                    )
                    ex = index.get(key)
                    if ex is None:
                        skey = (a | z) | b << w | (c & ~z) << w2 | v1 << w3
                        p2 = index.get(skey)
                        if p2 is not None:
                            insert(key, _R8M, z, z, b, c & ~z, v1 & ~a, p2)
                    elif find_all and ex == found_index:
                        maybe_alt(_R8M, z)
                elif code == _R9P:
                    stats.rule_applications += 1
                    key = a | b << w | c << w2 | (v1 | z) << w3
                    ex = index.get(key)
                    if ex is None:
                        insert(key, _R9P, z, a, b, c, v1 | z, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R9P, z)
                elif code == _R9M:
                    stats.rule_applications += 1
                    key = a | b << w | c << w2 | (v1 | z) << w3
                    ex = index.get(key)
                    if ex is None:
                        insert(key, _R9M, z, a, b, c, v1 | z, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R9M, z)
                elif code == _R10P:
                    zt = trues_of(z)
                    rz = indicators_of(zt)
                    if rz & ~v1 or rz & ~c:
                        continue
                    stats.rule_applications += 1
                    nc = (c & ~z) | zt
                    key = a | b << w | nc << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        insert(key, _R10P, z, a, b, nc, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R10P, z)
                else:
                    zt = trues_of(z)
                    rz = indicators_of(zt)
                    if rz & ~v1 or (rz & ~c and rz & ~a):
                        continue
                    stats.rule_applications += 1
                    na = (a & ~z) | zt
                    key = na | b << w | c << w2 | v1 << w3
                    ex = index.get(key)
                    if ex is None:
                        insert(key, _R10M, z, na, b, c, v1, -1)
                    elif find_all and ex == found_index:
                        maybe_alt(_R10M, z)
        except _TargetFound:
            return finish("identifiable", found_index)

    if found_index >= 0:
        return finish("identifiable", found_index, alternatives)
    return finish("non-identifiable", None)


# ---------------------------------------------------------------------------
# High-level entry point and derivation export.
# ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    """Everything produced while solving one problem from text inputs."""

    graph: LabeledGraph
    inputs: list[Distribution]
    query: Distribution
    result: SearchResult

    def latex(self, *, preserve_case: bool = False) -> str | None:
        from .formula import render_latex

        if self.result.formula is None:
            return None
        return render_latex(
            self.result.formula, self.graph, preserve_case=preserve_case
        )


def _name_list(text: str) -> list[str]:
    return [part for part in re.split(r"[\s,]+", text) if part]


def solve(
    data: str | Sequence[str | DistributionSpec],
    query: str | DistributionSpec,
    graph: str | GraphSpec = "",
    *,
    transportability: str | Sequence[str] = "",
    selection_bias: str | Sequence[str] = "",
    missing_data: str | MissingnessSpec = "",
    options: SearchOptions | None = None,
    heuristic: bool | None = None,
    rules_enabled: Sequence[str] | None = None,
    find_all_paths: bool = False,
    time_budget: float | None = None,
    trace: bool = False,
) -> SolveReport:
    """Solve one identifiability problem given as text (or parsed specs).

    Args:
        data: input distributions, one term per line (or a sequence of
            terms); duplicates are dropped silently.
        query: the term to identify.
        graph: edge list (one edge per line).
        transportability: transportability vertex names (comma-separated).
        selection_bias: selection-bias vertex names.
        missing_data: ``indicator : variable`` declarations.
        options: full `SearchOptions`; the remaining keyword arguments are a
            convenience shortcut and are ignored when `options` is given.

    Returns:
        A `SolveReport` carrying the graph, resolved terms and the
        `SearchResult`.
    """
    if isinstance(data, str):
        data_specs = parse_distribution_set(data)
    else:
        data_specs = [
            parse_distribution(item) if isinstance(item, str) else item
            for item in data
        ]
    query_spec = (
        parse_distribution(query) if isinstance(query, str) else query
    )
    graph_spec = parse_graph(graph) if isinstance(graph, str) else graph
    missing_spec = (
        parse_missingness(missing_data)
        if isinstance(missing_data, str)
        else missing_data
    )
    transport_names = (
        _name_list(transportability)
        if isinstance(transportability, str)
        else list(transportability)
    )
    selection_names = (
        _name_list(selection_bias)
        if isinstance(selection_bias, str)
        else list(selection_bias)
    )

    # Vertex numbering follows first appearance in the graph text, then the
    # inputs, then the query, then the declarations.
    ordered: list[str] = []
    seen: set[str] = set()

    def register(name: str) -> None:
        if name not in seen:
            seen.add(name)
            ordered.append(name)

    for tail, head in graph_spec.directed_edges + graph_spec.bidirected_edges:
        register(tail)
        register(head)
    for name in graph_spec.isolated_names:
        register(name)
    for spec in data_specs:
        for name in spec.all_names():
            register(name)
    for name in query_spec.all_names():
        register(name)
    for indicator, true in missing_spec.mechanisms:
        register(indicator)
        register(true)
    for name in (*transport_names, *selection_names):
        register(name)
    full_spec = GraphSpec(
        graph_spec.directed_edges, graph_spec.bidirected_edges, ordered
    )

    g = build_graph(full_spec, missing_spec, transport_names, selection_names)
    inputs: list[Distribution] = []
    seen_terms: set[Distribution] = set()
    for spec in data_specs:
        dist = resolve_distribution(spec, g)
        if dist not in seen_terms:
            seen_terms.add(dist)
            inputs.append(dist)
    target = resolve_distribution(query_spec, g)

    opts = options or SearchOptions(
        heuristic=heuristic,
        rules_enabled=rules_enabled,
        find_all_paths=find_all_paths,
        time_budget=time_budget,
        trace=trace,
    )
    result = run_search(inputs, target, g, opts)
    return SolveReport(g, inputs, target, result)


def derivation_to_json(
    store: DistributionStore, target_index: int, graph: LabeledGraph
) -> dict:
    """The minimal derivation DAG of a stored term, as plain JSON data."""
    nodes = backtrack_derivation(store, target_index)
    return {
        "target": target_index,
        "nodes": [
            {
                "id": node.order,
                "term": render_distribution(term_to_spec(node.dist, graph)),
                "rule": node.rule,
                "subset": graph.names_of(node.z),
                "parents": list(node.parents),
            }
            for node in nodes
        ],
    }


def derivation_to_dot(
    store: DistributionStore, target_index: int, graph: LabeledGraph
) -> str:
    """The same derivation DAG in DOT format (edges parent -> child)."""
    nodes = backtrack_derivation(store, target_index)
    lines = ["digraph derivation {", "  rankdir=TB;"]
    for node in nodes:
        term = render_distribution(term_to_spec(node.dist, graph))
        label = term if node.rule is None else f"{term}\\n[{node.rule}]"
        shape = "box" if node.rule is None else "ellipse"
        accent = ", style=bold" if node.order == target_index else ""
        lines.append(
            f'  n{node.order} [label="{label}", shape={shape}{accent}];'
        )
    for node in nodes:
        for p in node.parents:
            lines.append(f"  n{p} -> n{node.order};")
    lines.append("}")
    return "\n".join(lines)
