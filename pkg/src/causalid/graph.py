"""Semi-Markovian causal graphs and m-separation.

Vertices are named variables joined by directed edges and bidirected edges
(the latter standing for unobserved confounding).  Every vertex carries a
role: ordinary variable, transportability indicator, selection-bias
indicator, missingness response indicator, or proxy.  Declaring a missingness
mechanism ``r : v`` attaches a proxy vertex ``v*`` whose only parents are
``v`` and ``r``; the proxy equals ``v`` when ``r = 1`` and is the extra
"not available" state otherwise.

The graph kept here is the augmented one: every non-proxy vertex ``v`` also
owns a private intervention node ``I[v]`` with the single edge
``I[v] -> v``.  The separation criteria of the rewrite rules are evaluated on
this augmented graph, optionally after cutting all edges that point into a
given set of vertices.

Vertex sets are packed-integer bitsets throughout (bit ``i`` = vertex ``i``);
the variable count is capped at `MAX_VARIABLES`.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterable, Iterator, Sequence

from .parser import GraphSpec, MissingnessSpec

MAX_VARIABLES = 128


class Role(Enum):
    """What a vertex stands for."""

    ORDINARY = "ordinary"
    TRANSPORT = "transport"
    SELECTION = "selection"
    INDICATOR = "indicator"
    PROXY = "proxy"


class GraphError(ValueError):
    """Raised when a graph specification is structurally invalid."""


def iter_bits(mask: int) -> Iterator[int]:
    """Yield the indices of the set bits of `mask`, ascending."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class VariableSet(int):
    """An immutable vertex set packed as an integer bitmask.

    Bit ``i`` is set when vertex ``i`` is a member.  All integer bitwise
    operators apply (returning plain ``int``, which every consumer accepts
    interchangeably with `VariableSet`).
    """

    __slots__ = ()

    @property
    def bits(self) -> int:
        return int(self)

    @classmethod
    def of(cls, *indices: int) -> "VariableSet":
        mask = 0
        for i in indices:
            mask |= 1 << i
        return cls(mask)

    def indices(self) -> tuple[int, ...]:
        return tuple(iter_bits(int(self)))

    def __contains__(self, index: int) -> bool:
        return bool((int(self) >> index) & 1)

    def __len__(self) -> int:
        return int(self).bit_count()

    def __iter__(self) -> Iterator[int]:
        return iter_bits(int(self))


class LabeledGraph:
    """A finished causal graph; build instances with :func:`build_graph`.

    Attributes:
        names: vertex names by index (variables only, not intervention nodes).
        index: name -> vertex index.
        roles: vertex roles by index.
        n_vars: number of variables.
        all_mask: bitmask of all variables.
        proxy_mask, indicator_mask, transport_mask, selection_mask,
        ordinary_mask: role bitmasks.
        missing_mask: ordinary variables with a declared mechanism.
        intervenable_mask: vertices owning an intervention node (non-proxies).
        directed_pairs, bidirected_pairs: the edge lists (proxy wiring
            included in `directed_pairs`).
        parent_mask, child_mask, sibling_mask: per-variable adjacency masks
            over variables (intervention nodes excluded).
        proxy_of, true_of_proxy, indicator_of, true_of_indicator: mechanism
            wiring by index (None where not applicable).
        topo_order: variables in topological order of the directed part.
    """

    def __init__(self) -> None:
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.roles: list[Role] = []
        self.n_vars = 0
        self.all_mask = 0
        self.proxy_mask = 0
        self.indicator_mask = 0
        self.transport_mask = 0
        self.selection_mask = 0
        self.ordinary_mask = 0
        self.missing_mask = 0
        self.intervenable_mask = 0
        self.directed_pairs: list[tuple[int, int]] = []
        self.bidirected_pairs: list[tuple[int, int]] = []
        self.parent_mask: list[int] = []
        self.child_mask: list[int] = []
        self.sibling_mask: list[int] = []
        self.proxy_of: list[int | None] = []
        self.true_of_proxy: list[int | None] = []
        self.indicator_of: list[int | None] = []
        self.true_of_indicator: list[int | None] = []
        self.topo_order: tuple[int, ...] = ()
        # Augmented node space: variables first, intervention nodes after.
        self.n_nodes = 0
        self.inode: list[int | None] = []
        self._parents: list[tuple[int, ...]] = []
        self._children: list[tuple[int, ...]] = []
        self._siblings: list[tuple[int, ...]] = []
        self._sep_cache: dict[tuple[int, int, int, int], bool] = {}

    # -- construction helpers (used by build_graph only) --

    def _add_vertex(self, name: str) -> int:
        existing = self.index.get(name)
        if existing is not None:
            return existing
        if name.endswith("*"):
            # Keep each proxy right after its true variable so that rendered
            # orderings follow first appearance of the underlying quantity.
            self._add_vertex(name[:-1])
        if self.n_vars >= MAX_VARIABLES:
            raise GraphError(f"more than {MAX_VARIABLES} variables")
        idx = self.n_vars
        self.index[name] = idx
        self.names.append(name)
        self.roles.append(Role.ORDINARY)
        self.n_vars += 1
        return idx

    def _finalize(self) -> None:
        n = self.n_vars
        self.all_mask = (1 << n) - 1 if n else 0
        for role_mask_attr, role in (
            ("proxy_mask", Role.PROXY),
            ("indicator_mask", Role.INDICATOR),
            ("transport_mask", Role.TRANSPORT),
            ("selection_mask", Role.SELECTION),
            ("ordinary_mask", Role.ORDINARY),
        ):
            mask = 0
            for i, r in enumerate(self.roles):
                if r is role:
                    mask |= 1 << i
            setattr(self, role_mask_attr, mask)
        self.intervenable_mask = self.all_mask & ~self.proxy_mask

        self.parent_mask = [0] * n
        self.child_mask = [0] * n
        self.sibling_mask = [0] * n
        for tail, head in self.directed_pairs:
            self.parent_mask[head] |= 1 << tail
            self.child_mask[tail] |= 1 << head
        for u, v in self.bidirected_pairs:
            self.sibling_mask[u] |= 1 << v
            self.sibling_mask[v] |= 1 << u

        # Kahn's algorithm with an ascending tie-break so that downstream
        # sampling is reproducible across runs.
        indegree = [self.parent_mask[i].bit_count() for i in range(n)]
        ready = [i for i in range(n) if indegree[i] == 0]
        order: list[int] = []
        while ready:
            v = min(ready)
            ready.remove(v)
            order.append(v)
            for child in iter_bits(self.child_mask[v]):
                indegree[child] -= 1
                if indegree[child] == 0:
                    ready.append(child)
        if len(order) != n:
            raise GraphError("the directed part of the graph has a cycle")
        self.topo_order = tuple(order)

        # Augmented node space with one intervention node per non-proxy.
        self.inode = [None] * n
        node_parents: list[list[int]] = [[] for _ in range(n)]
        node_children: list[list[int]] = [[] for _ in range(n)]
        node_siblings: list[list[int]] = [[] for _ in range(n)]
        for tail, head in self.directed_pairs:
            node_parents[head].append(tail)
            node_children[tail].append(head)
        for u, v in self.bidirected_pairs:
            node_siblings[u].append(v)
            node_siblings[v].append(u)
        for v in iter_bits(self.intervenable_mask):
            node_id = len(node_parents)
            self.inode[v] = node_id
            node_parents.append([])
            node_children.append([v])
            node_siblings.append([])
            node_parents[v].append(node_id)
        self.n_nodes = len(node_parents)
        self._parents = [tuple(p) for p in node_parents]
        self._children = [tuple(c) for c in node_children]
        self._siblings = [tuple(s) for s in node_siblings]

    # -- lookups --

    def vertex(self, name: str) -> int:
        """Index of `name`, raising `GraphError` if unknown."""
        try:
            return self.index[name]
        except KeyError:
            raise GraphError(f"unknown variable '{name}'") from None

    def mask(self, names: Iterable[str]) -> int:
        out = 0
        for name in names:
            out |= 1 << self.vertex(name)
        return out

    def names_of(self, mask: int) -> list[str]:
        return [self.names[i] for i in iter_bits(mask)]

    def inode_mask(self, var_mask: int) -> int:
        """Bitmask (in node space) of the intervention nodes of `var_mask`."""
        out = 0
        for v in iter_bits(var_mask):
            node = self.inode[v]
            if node is None:
                raise GraphError(
                    f"'{self.names[v]}' has no intervention node"
                )
            out |= 1 << node
        return out

    def proxies_of(self, true_mask: int) -> int:
        """Proxies of the declared-missing variables in `true_mask`."""
        out = 0
        for v in iter_bits(true_mask & self.missing_mask):
            out |= 1 << self.proxy_of[v]  # type: ignore[operator]
        return out

    def trues_of(self, proxy_mask: int) -> int:
        """True variables behind the proxies in `proxy_mask`."""
        out = 0
        for v in iter_bits(proxy_mask & self.proxy_mask):
            out |= 1 << self.true_of_proxy[v]  # type: ignore[operator]
        return out

    def indicators_of(self, true_mask: int) -> int:
        """Response indicators of the declared variables in `true_mask`."""
        out = 0
        for v in iter_bits(true_mask & self.missing_mask):
            out |= 1 << self.indicator_of[v]  # type: ignore[operator]
        return out

    # -- separation --

    def m_separated(
        self,
        sources: int,
        targets: int,
        conditioning: int,
        cut_incoming: int = 0,
    ) -> bool:
        """m-separation between two variable sets.

        Args:
            sources: bitmask of source variables.
            targets: bitmask of target variables.
            conditioning: bitmask of conditioned variables.
            cut_incoming: variables whose incoming edges (directed,
                bidirected and intervention edges alike) are removed before
                testing.

        Returns:
            True when every walk between the sets is blocked.
        """
        return not self._connected(sources, targets, conditioning, cut_incoming)

    def m_separated_intervention(
        self,
        sources: int,
        z_vars: int,
        conditioning: int,
        cut_incoming: int = 0,
    ) -> bool:
        """m-separation between `sources` and the intervention nodes of
        `z_vars`, under the same cut convention as :meth:`m_separated`."""
        return not self._connected(
            sources, self.inode_mask(z_vars), conditioning, cut_incoming
        )

    def _connected(
        self, sources: int, targets: int, conditioning: int, cut: int
    ) -> bool:
        key = (sources, targets, conditioning, cut)
        hit = self._sep_cache.get(key)
        if hit is not None:
            return hit
        result = self._connected_uncached(sources, targets, conditioning, cut)
        self._sep_cache[key] = result
        return result

    def _connected_uncached(
        self, sources: int, targets: int, conditioning: int, cut: int
    ) -> bool:
        if sources & targets:
            return True
        parents = self._parents
        children = self._children
        siblings = self._siblings

        # Ancestors of the conditioning set in the cut graph (used to decide
        # whether a collider is opened).
        anc = conditioning
        stack = list(iter_bits(conditioning))
        while stack:
            w = stack.pop()
            if (cut >> w) & 1:
                continue  # no edges enter w
            for p in parents[w]:
                if not (anc >> p) & 1:
                    anc |= 1 << p
                    stack.append(p)

        # Reachability over (node, arrival side) states.  Arrival "via head"
        # means the walk entered through an arrowhead at the node (directed
        # in-edge or bidirected edge); otherwise it entered through a tail.
        seen_tail = sources
        seen_head = 0
        work: list[tuple[int, bool]] = [(s, False) for s in iter_bits(sources)]
        while work:
            v, came_head = work.pop()
            vbit = 1 << v
            in_cond = bool(conditioning & vbit)
            # Continuations where v is a non-collider: leave through a tail.
            if not in_cond:
                for c in children[v]:
                    cb = 1 << c
                    if cut & cb or seen_head & cb:
                        continue
                    if targets & cb:
                        return True
                    seen_head |= cb
                    work.append((c, True))
            if came_head:
                # Leaving through a head makes v a collider: open only when
                # v is in (or an ancestor of) the conditioning set.
                if not (anc & vbit):
                    continue
                head_ok = True
            else:
                # Tail arrival: v is a non-collider for any departure.
                if in_cond:
                    continue
                head_ok = not (cut & vbit)
            if head_ok:
                for p in parents[v]:
                    pb = 1 << p
                    if seen_tail & pb:
                        continue
                    if targets & pb:
                        return True
                    seen_tail |= pb
                    work.append((p, False))
                if not (cut & vbit):
                    for s in siblings[v]:
                        sb = 1 << s
                        if cut & sb or seen_head & sb:
                            continue
                        if targets & sb:
                            return True
                        seen_head |= sb
                        work.append((s, True))
        return False


def m_separated(
    graph: LabeledGraph,
    sources: int,
    targets: int,
    conditioning: int,
    cut_incoming: int = 0,
) -> bool:
    """Module-level convenience wrapper for `LabeledGraph.m_separated`."""
    return graph.m_separated(sources, targets, conditioning, cut_incoming)


def build_graph(
    graph_spec: GraphSpec,
    missingness: MissingnessSpec | None = None,
    transport: Sequence[str] = (),
    selection: Sequence[str] = (),
) -> LabeledGraph:
    """Assemble and validate a `LabeledGraph`.

    Vertices are numbered by first appearance: `graph_spec.isolated_names`
    first (callers put all distribution names there, in input order), then
    mechanism names, then transport/selection names, then edge endpoints.
    Proxy vertices for declared mechanisms are created automatically and
    wired with parents ``{variable, indicator}``.

    Raises:
        GraphError: on role conflicts, undeclared proxies, edges touching
            proxies, non-sink selection vertices, or directed cycles.
    """
    g = LabeledGraph()
    for name in graph_spec.isolated_names:
        g._add_vertex(name)

    mechanisms = missingness.mechanisms if missingness else []
    proxy_names = {true + "*" for _, true in mechanisms}
    for indicator, true in mechanisms:
        g._add_vertex(indicator)
        g._add_vertex(true)
        g._add_vertex(true + "*")
    for name in transport:
        g._add_vertex(name)
    for name in selection:
        g._add_vertex(name)
    for tail, head in graph_spec.directed_edges + graph_spec.bidirected_edges:
        g._add_vertex(tail)
        g._add_vertex(head)

    # Any starred name must belong to a declared mechanism.
    for name in g.names:
        if name.endswith("*") and name not in proxy_names:
            raise GraphError(
                f"proxy '{name}' has no missingness declaration "
                f"('r : {name[:-1]}')"
            )

    def set_role(idx: int, role: Role, why: str) -> None:
        if g.roles[idx] is not Role.ORDINARY and g.roles[idx] is not role:
            raise GraphError(
                f"'{g.names[idx]}' cannot be {role.value} ({why}); it is "
                f"already {g.roles[idx].value}"
            )
        g.roles[idx] = role

    g.proxy_of = [None] * g.n_vars
    g.true_of_proxy = [None] * g.n_vars
    g.indicator_of = [None] * g.n_vars
    g.true_of_indicator = [None] * g.n_vars
    for indicator, true in mechanisms:
        r, v, p = g.vertex(indicator), g.vertex(true), g.vertex(true + "*")
        set_role(r, Role.INDICATOR, f"declared for '{true}'")
        set_role(p, Role.PROXY, f"proxy of '{true}'")
        if g.roles[v] is not Role.ORDINARY:
            raise GraphError(
                f"'{true}' cannot have a missingness mechanism; it is "
                f"{g.roles[v].value}"
            )
        g.missing_mask |= 1 << v
        g.proxy_of[v] = p
        g.true_of_proxy[p] = v
        g.indicator_of[v] = r
        g.true_of_indicator[r] = v
    for name in transport:
        set_role(g.vertex(name), Role.TRANSPORT, "listed as transportability")
    for name in selection:
        set_role(g.vertex(name), Role.SELECTION, "listed as selection bias")

    proxy_set = {g.vertex(p) for p in proxy_names}
    directed: list[tuple[int, int]] = []
    seen_directed: set[tuple[int, int]] = set()
    for tail, head in graph_spec.directed_edges:
        t, h = g.vertex(tail), g.vertex(head)
        if t in proxy_set or h in proxy_set:
            raise GraphError(
                f"edge {tail} -> {head} touches a proxy; proxies have "
                "exactly the parents {variable, indicator}"
            )
        if g.roles[t] is Role.SELECTION:
            raise GraphError(
                f"selection-bias vertex '{tail}' must be a sink"
            )
        if (t, h) not in seen_directed:
            seen_directed.add((t, h))
            directed.append((t, h))
    for indicator, true in mechanisms:
        v, p = g.vertex(true), g.vertex(true + "*")
        directed.append((v, p))
        directed.append((g.vertex(indicator), p))
    bidirected: list[tuple[int, int]] = []
    seen_bidirected: set[tuple[int, int]] = set()
    for u_name, v_name in graph_spec.bidirected_edges:
        u, v = g.vertex(u_name), g.vertex(v_name)
        if u in proxy_set or v in proxy_set:
            raise GraphError(
                f"confounding arc {u_name} <-> {v_name} touches a proxy"
            )
        pair = (min(u, v), max(u, v))
        if pair not in seen_bidirected:
            seen_bidirected.add(pair)
            bidirected.append(pair)
    g.directed_pairs = directed
    g.bidirected_pairs = bidirected
    g._finalize()
    return g
