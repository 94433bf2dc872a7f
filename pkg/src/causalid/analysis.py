"""Batch studies built on the solver.

Three workloads live here:

* `enumerate_bivariate` sweeps every studied two-variable missing-data
  graph (6144 of them) and records which of the five standard queries are
  identifiable in each, with CSV / JSON / figure writers for the results.
* `generate_instance` draws a random identifiability problem following a
  fixed protocol and returns the matched pair (hardest non-identifiable
  input set, first identifiable input set).
* `run_ablation` re-solves an instance with one derivation rule disabled,
  to test which rules are necessary.

All randomness flows through explicit `random.Random(seed)` generators, so
every record is reproducible from its seed.
"""

from __future__ import annotations

import csv
import json
import os
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass
from multiprocessing import get_context
from pathlib import Path

from .engine import CORE_RULES
from .search import SearchStats, solve

__all__ = [
    "BIVARIATE_EDGE_SLOTS",
    "BIVARIATE_QUERIES",
    "BivariateRecord",
    "InstanceRecord",
    "bivariate_graph_ids",
    "bivariate_graph_text",
    "decode_graph_id",
    "enumerate_bivariate",
    "generate_instance",
    "render_bivariate_figures",
    "render_instance_figures",
    "run_ablation",
    "venn_summary",
    "write_bivariate_csv",
    "write_instances_csv",
]


# ---------------------------------------------------------------------------
# The bivariate missing-data universe.
#
# Vertices: x and y (with response indicators r_x, r_y and proxies x*, y*).
# Directed edges never point from an indicator into {x, y}, x -> y is the
# only direct dependence between the true variables that is studied, and
# the indicators may be connected in at most one direction.  Any of the six
# vertex pairs may also share a latent confounder.  That gives
# 2 (x -> y or not) * 3 (r_x/r_y arrow) * 2^4 (arrows into indicators)
# * 2^6 (confounders) = 6144 graphs, at most 12 edges each.
# ---------------------------------------------------------------------------

#: The five queries recorded for every bivariate graph, in column order.
BIVARIATE_QUERIES: tuple[str, ...] = (
    "p(x,y)",
    "p(x)",
    "p(y)",
    "p(y|x)",
    "p(y|do(x))",
)

#: Canonical edge list; bit ``i`` of `BivariateRecord.edge_mask` says the
#: graph contains ``BIVARIATE_EDGE_SLOTS[i]``.  Slots 5 and 6 are mutually
#: exclusive, so at most 12 of the 13 bits are ever set at once.
BIVARIATE_EDGE_SLOTS: tuple[str, ...] = (
    "x -> y",
    "x -> r_x",
    "x -> r_y",
    "y -> r_x",
    "y -> r_y",
    "r_x -> r_y",
    "r_y -> r_x",
    "x <-> y",
    "x <-> r_x",
    "x <-> r_y",
    "y <-> r_x",
    "y <-> r_y",
    "r_x <-> r_y",
)

_BIVARIATE_DATA = "p(x*, y*, r_x, r_y)"
_BIVARIATE_MISSING = "r_x : x, r_y : y"

#: Column order of `write_bivariate_csv`.
BIVARIATE_CSV_HEADER: tuple[str, ...] = (
    "graph_id",
    "edge_mask",
    "has_x_to_y",
    "n_edges",
    "edges",
    "joint",
    "marginal_x",
    "marginal_y",
    "conditional",
    "causal",
)


@dataclass(frozen=True)
class BivariateRecord:
    """Identifiability verdicts for one bivariate missing-data graph.

    Attributes:
        graph_id: packed encoding of the graph (see `decode_graph_id`).
        edge_mask: bitmask over `BIVARIATE_EDGE_SLOTS`.
        has_x_to_y: whether the graph contains the edge ``x -> y``.
        n_edges: total number of edges (directed plus bidirected).
        joint: ``p(x,y)`` identifiable from ``p(x*, y*, r_x, r_y)``.
        marginal_x: ``p(x)`` identifiable.
        marginal_y: ``p(y)`` identifiable.
        conditional: ``p(y|x)`` identifiable.
        causal: ``p(y|do(x))`` identifiable.
    """

    graph_id: int
    edge_mask: int
    has_x_to_y: bool
    n_edges: int
    joint: bool
    marginal_x: bool
    marginal_y: bool
    conditional: bool
    causal: bool

    @property
    def verdicts(self) -> tuple[bool, bool, bool, bool, bool]:
        """The five verdicts in `BIVARIATE_QUERIES` order."""
        return (
            self.joint,
            self.marginal_x,
            self.marginal_y,
            self.conditional,
            self.causal,
        )


def _graph_id(has_x_to_y: int, rpair: int, dmask: int, bid: int) -> int:
    return bid | rpair << 6 | dmask << 8 | has_x_to_y << 12


def decode_graph_id(graph_id: int) -> tuple[int, int, int, int]:
    """Split a packed graph id into its four fields.

    The id packs, from the low bits up: six confounder bits (vertex pairs
    in `BIVARIATE_EDGE_SLOTS` order, slots 7-12), a two-bit indicator-arrow
    code (0 none, 1 ``r_x -> r_y``, 2 ``r_y -> r_x``), four bits for the
    arrows into indicators (slots 1-4), and one bit for ``x -> y``.

    Returns:
        ``(has_x_to_y, rpair, dmask, bid)``.
    """
    bid = graph_id & 0x3F
    rpair = (graph_id >> 6) & 0x3
    dmask = (graph_id >> 8) & 0xF
    has_x_to_y = (graph_id >> 12) & 0x1
    if rpair == 3 or graph_id >> 13:
        raise ValueError(f"not a bivariate graph id: {graph_id}")
    return has_x_to_y, rpair, dmask, bid


def _edge_mask(has_x_to_y: int, rpair: int, dmask: int, bid: int) -> int:
    mask = has_x_to_y
    mask |= dmask << 1
    if rpair:
        mask |= 1 << (4 + rpair)
    mask |= bid << 7
    return mask


def bivariate_graph_ids() -> list[int]:
    """All 6144 studied graph ids, ascending."""
    ids = []
    for has_x_to_y in (0, 1):
        for dmask in range(16):
            for rpair in (0, 1, 2):
                for bid in range(64):
                    ids.append(_graph_id(has_x_to_y, rpair, dmask, bid))
    ids.sort()
    return ids


def bivariate_graph_text(graph_id: int) -> str:
    """The edge list of a bivariate graph, one edge per line."""
    has_x_to_y, rpair, dmask, bid = decode_graph_id(graph_id)
    mask = _edge_mask(has_x_to_y, rpair, dmask, bid)
    return "\n".join(
        slot for i, slot in enumerate(BIVARIATE_EDGE_SLOTS) if mask >> i & 1
    )


def _solve_bivariate(graph_id: int, query: str) -> bool:
    report = solve(
        _BIVARIATE_DATA,
        query,
        bivariate_graph_text(graph_id),
        missing_data=_BIVARIATE_MISSING,
    )
    verdict = report.result.identifiable
    if verdict is None:  # pragma: no cover - no budget is set
        raise RuntimeError(f"indeterminate verdict for graph {graph_id}")
    return verdict


def _bivariate_case(graph_id: int) -> BivariateRecord:
    """Solve all five queries for one graph (worker function)."""
    has_x_to_y, rpair, dmask, bid = decode_graph_id(graph_id)
    mask = _edge_mask(has_x_to_y, rpair, dmask, bid)
    verdicts = tuple(_solve_bivariate(graph_id, q) for q in BIVARIATE_QUERIES)
    return BivariateRecord(
        graph_id,
        mask,
        bool(has_x_to_y),
        mask.bit_count(),
        *verdicts,
    )


def enumerate_bivariate(
    *,
    processes: int | None = None,
    graph_ids: Iterable[int] | None = None,
) -> list[BivariateRecord]:
    """Verdicts for every studied bivariate graph, ordered by graph id.

    Args:
        processes: worker processes; None uses every CPU, 1 skips
            multiprocessing entirely.
        graph_ids: restrict the sweep to these ids (default: all 6144).

    Returns:
        One `BivariateRecord` per graph, ascending by `graph_id`.
    """
    ids = sorted(graph_ids) if graph_ids is not None else bivariate_graph_ids()
    if processes is None:
        processes = os.cpu_count() or 1
    if processes <= 1 or len(ids) <= 1:
        return [_bivariate_case(g) for g in ids]
    with get_context("fork").Pool(processes) as pool:
        records = pool.map(_bivariate_case, ids, chunksize=16)
    records.sort(key=lambda r: r.graph_id)
    return records


def write_bivariate_csv(
    records: Iterable[BivariateRecord], path: str | Path
) -> Path:
    """Write one CSV row per record (`BIVARIATE_CSV_HEADER` columns)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BIVARIATE_CSV_HEADER)
        for r in records:
            edges = bivariate_graph_text(r.graph_id).replace("\n", "; ")
            writer.writerow(
                (
                    r.graph_id,
                    r.edge_mask,
                    int(r.has_x_to_y),
                    r.n_edges,
                    edges,
                    *(int(v) for v in r.verdicts),
                )
            )
    return path


_REGION_KEYS = (
    "none",
    "p(x)",
    "p(y)",
    "p(x)&p(y)",
    "p(y|x)",
    "p(x)&p(y|x)",
    "p(y)&p(y|x)",
    "p(x)&p(y)&p(y|x)",
)


def venn_summary(records: Sequence[BivariateRecord]) -> dict:
    """Counts of identifiable graphs per query and per Venn region.

    The Venn regions partition graphs by which of ``p(x)``, ``p(y)`` and
    ``p(y|x)`` are identifiable; the joint ``p(x,y)`` is identifiable
    exactly on the ``p(x)&p(y|x)`` overlap, which the summary re-checks and
    reports as ``joint_matches_intersection``.
    """
    summary: dict = {
        "total": len(records),
        "queries": list(BIVARIATE_QUERIES),
        "groups": {},
        "joint_matches_intersection": all(
            r.joint == (r.marginal_x and r.conditional) for r in records
        ),
    }
    for label, flag in (("with_x_to_y", True), ("without_x_to_y", False)):
        group = [r for r in records if r.has_x_to_y is flag]
        regions = dict.fromkeys(_REGION_KEYS, 0)
        for r in group:
            idx = r.marginal_x | r.marginal_y << 1 | r.conditional << 2
            regions[_REGION_KEYS[idx]] += 1
        summary["groups"][label] = {
            "total": len(group),
            "identifiable": {
                q: sum(r.verdicts[i] for r in group)
                for i, q in enumerate(BIVARIATE_QUERIES)
            },
            "venn_regions": regions,
        }
    return summary


def write_venn_summary(
    records: Sequence[BivariateRecord], path: str | Path
) -> Path:
    """Write `venn_summary` as a JSON document."""
    path = Path(path)
    path.write_text(json.dumps(venn_summary(records), indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# Figures.  matplotlib is imported lazily so that library use never needs a
# display; every figure lands in a file.
# ---------------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


# (circle centre, circle centre, circle centre) and the seven region label
# positions of a standard three-set Venn layout, in axes coordinates.
_VENN_CENTRES = ((-0.28, 0.22), (0.28, 0.22), (0.0, -0.28))
_VENN_RADIUS = 0.62
_VENN_LABELS = {
    "p(x)": (-0.55, 0.45),
    "p(y)": (0.55, 0.45),
    "p(y|x)": (0.0, -0.62),
    "p(x)&p(y)": (0.0, 0.45),
    "p(x)&p(y|x)": (-0.33, -0.18),
    "p(y)&p(y|x)": (0.33, -0.18),
    "p(x)&p(y)&p(y|x)": (0.0, 0.08),
}


def render_bivariate_figures(
    records: Sequence[BivariateRecord], outdir: str | Path
) -> list[Path]:
    """Render the enumeration figures into `outdir`.

    Writes ``bivariate_venn.png`` (two three-set Venn panels: graphs with
    and without the edge ``x -> y``) and ``bivariate_by_edges.png``
    (identifiable-graph counts by edge count for all five queries).

    Returns:
        The written paths.
    """
    plt = _pyplot()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = venn_summary(records)
    written: list[Path] = []

    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    panels = (
        ("with_x_to_y", "graphs with x → y"),
        ("without_x_to_y", "graphs without x → y"),
    )
    for ax, (key, title) in zip(axes, panels):
        group = summary["groups"][key]
        for centre, colour in zip(_VENN_CENTRES, ("C0", "C1", "C2")):
            ax.add_patch(
                plt.Circle(
                    centre, _VENN_RADIUS, alpha=0.3, color=colour, lw=1.5
                )
            )
        regions = group["venn_regions"]
        for region, (lx, ly) in _VENN_LABELS.items():
            ax.text(lx, ly, str(regions[region]), ha="center", va="center")
        ax.text(-0.75, 0.85, "p(x)", ha="center")
        ax.text(0.75, 0.85, "p(y)", ha="center")
        ax.text(0.0, -1.05, "p(y|x)", ha="center")
        outside = regions["none"]
        ax.set_title(f"{title}\n(total {group['total']}, none {outside})")
        ax.set_xlim(-1.3, 1.3)
        ax.set_ylim(-1.3, 1.3)
        ax.set_aspect("equal")
        ax.axis("off")
    fig.suptitle("Identifiable queries across the bivariate graphs")
    venn_path = outdir / "bivariate_venn.png"
    fig.savefig(venn_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(venn_path)

    ks = sorted({r.n_edges for r in records})
    fig, ax = plt.subplots(figsize=(8, 5))
    for i, query in enumerate(BIVARIATE_QUERIES):
        counts = [
            sum(r.verdicts[i] for r in records if r.n_edges == k) for k in ks
        ]
        ax.plot(ks, counts, marker="o", label=query)
    ax.set_xlabel("number of edges")
    ax.set_ylabel("identifiable graphs")
    ax.set_title("Identifiability by graph size")
    ax.legend()
    ax.grid(True, alpha=0.3)
    edges_path = outdir / "bivariate_by_edges.png"
    fig.savefig(edges_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(edges_path)
    return written


# ---------------------------------------------------------------------------
# Random problem instances.
# ---------------------------------------------------------------------------

#: Column order of `write_instances_csv`.
INSTANCE_CSV_HEADER: tuple[str, ...] = (
    "seed",
    "n_vertices",
    "n_edges",
    "n_inputs",
    "query",
    "identifiable",
    "terms_on",
    "expanded_on",
    "applications_on",
    "elapsed_on",
    "terms_off",
    "expanded_off",
    "applications_off",
    "elapsed_off",
    "inputs",
    "edges",
)


@dataclass(frozen=True)
class InstanceRecord:
    """One randomly generated identifiability problem and its outcome.

    Attributes:
        seed: seed the instance was drawn from.
        n_vertices: vertex count of the graph.
        edges: edge lines of the graph.
        inputs: input distribution terms, in the order they were drawn.
        query: the target term.
        identifiable: the search verdict.
        stats: search-effort counters per configuration, keyed
            ``heuristic_on`` / ``heuristic_off``.
    """

    seed: int
    n_vertices: int
    edges: tuple[str, ...]
    inputs: tuple[str, ...]
    query: str
    identifiable: bool
    stats: Mapping[str, Mapping[str, float]]


def _instance_stats(dataclass_stats: SearchStats) -> dict[str, float]:
    return asdict(dataclass_stats)


def _has_directed_path(
    edges: Sequence[tuple[str, str]], source: str, sink: str
) -> bool:
    children: dict[str, list[str]] = {}
    for tail, head in edges:
        children.setdefault(tail, []).append(head)
    frontier, seen = [source], {source}
    while frontier:
        node = frontier.pop()
        for nxt in children.get(node, ()):
            if nxt == sink:
                return True
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return False


def _random_graph(
    rng: random.Random, names: Sequence[str]
) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """A uniformly random DAG with confounders over `names`.

    A random topological order is drawn, then each forward vertex pair
    independently receives a directed edge with probability one half, and
    each unordered pair a bidirected edge likewise.
    """
    order = list(names)
    rng.shuffle(order)
    n = len(order)
    directed = [
        (order[i], order[j])
        for j in range(1, n)
        for i in range(j)
        if rng.random() < 0.5
    ]
    bidirected = [
        (order[i], order[j])
        for j in range(1, n)
        for i in range(j)
        if rng.random() < 0.5
    ]
    return directed, bidirected


def _random_term(rng: random.Random, names: Sequence[str]) -> str | None:
    """A uniformly random term ``p(A | do(B), C)`` with non-empty ``A``.

    Every vertex lands independently in one of: outcome set ``A``, do-set
    ``B``, conditioning set ``C``, or unused.  Returns None when ``A``
    comes out empty (the caller redraws).
    """
    a, b, c = [], [], []
    for name in names:
        role = rng.randrange(4)
        if role == 1:
            a.append(name)
        elif role == 2:
            b.append(name)
        elif role == 3:
            c.append(name)
    if not a:
        return None
    term = "p(" + ",".join(a)
    tail = []
    if b:
        tail.append("do(" + ",".join(b) + ")")
    if c:
        tail.append(",".join(c))
    if tail:
        term += "|" + ",".join(tail)
    return term + ")"


def generate_instance(
    seed: int, n_vertices: int = 10
) -> tuple[InstanceRecord, InstanceRecord]:
    """Draw one random problem pair following the growth protocol.

    A random DAG with confounders over ``x, y, z1, ...`` is drawn (redrawn
    until it has a directed path from ``x`` to ``y``), then random input
    terms accumulate one at a time until ``p(y|do(x))`` becomes
    identifiable.  The instance just before that point and the instance at
    that point form the returned pair, so the first record is the hardest
    non-identifiable input set of the run and the second the first
    identifiable one.

    Args:
        seed: RNG seed; every draw flows from it.
        n_vertices: graph size, at least 3.

    Returns:
        ``(non_identifiable_record, identifiable_record)``.
    """
    if n_vertices < 3:
        raise ValueError("an instance needs at least 3 vertices")
    rng = random.Random(seed)
    names = ["x", "y"] + [f"z{i}" for i in range(1, n_vertices - 1)]
    while True:
        directed, bidirected = _random_graph(rng, names)
        if _has_directed_path(directed, "x", "y"):
            break
    edges = tuple(
        [f"{t} -> {h}" for t, h in directed]
        + [f"{t} <-> {h}" for t, h in bidirected]
    )
    graph_text = "\n".join(edges)
    query = "p(y|do(x))"

    inputs: list[str] = []
    while True:
        term = _random_term(rng, names)
        if term is None or term in inputs:
            continue
        inputs.append(term)
        report = solve(inputs, query, graph_text)
        if report.result.identifiable:
            break

    def record(terms: Sequence[str], identifiable: bool) -> InstanceRecord:
        stats = {}
        for label, flag in (("heuristic_on", True), ("heuristic_off", False)):
            rep = solve(list(terms), query, graph_text, heuristic=flag)
            if rep.result.identifiable is not identifiable:
                raise RuntimeError(
                    f"heuristic={flag} changed the verdict for seed {seed}"
                )
            stats[label] = _instance_stats(rep.result.stats)
        return InstanceRecord(
            seed,
            n_vertices,
            edges,
            tuple(terms),
            query,
            identifiable,
            stats,
        )

    return record(inputs[:-1], False), record(inputs, True)


def write_instances_csv(
    records: Iterable[InstanceRecord], path: str | Path
) -> Path:
    """Write one CSV row per instance (`INSTANCE_CSV_HEADER` columns)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INSTANCE_CSV_HEADER)
        for r in records:
            on, off = r.stats["heuristic_on"], r.stats["heuristic_off"]
            writer.writerow(
                (
                    r.seed,
                    r.n_vertices,
                    len(r.edges),
                    len(r.inputs),
                    r.query,
                    int(r.identifiable),
                    on["terms_derived"],
                    on["terms_expanded"],
                    on["rule_applications"],
                    f"{on['elapsed']:.6f}",
                    off["terms_derived"],
                    off["terms_expanded"],
                    off["rule_applications"],
                    f"{off['elapsed']:.6f}",
                    "; ".join(r.inputs),
                    "; ".join(r.edges),
                )
            )
    return path


def render_instance_figures(
    records: Sequence[InstanceRecord], outdir: str | Path
) -> list[Path]:
    """Render the random-instance effort figure into `outdir`.

    Writes ``instances_effort.png``: derived-term counts with the guided
    expansion order against the plain order, split by verdict.

    Returns:
        The written paths.
    """
    plt = _pyplot()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 6))
    for identifiable, marker, label in (
        (True, "o", "identifiable"),
        (False, "x", "non-identifiable"),
    ):
        xs = [
            r.stats["heuristic_off"]["terms_derived"]
            for r in records
            if r.identifiable is identifiable
        ]
        ys = [
            r.stats["heuristic_on"]["terms_derived"]
            for r in records
            if r.identifiable is identifiable
        ]
        if xs:
            ax.scatter(xs, ys, marker=marker, label=label, alpha=0.7)
    top = max(
        (
            r.stats[k]["terms_derived"]
            for r in records
            for k in ("heuristic_on", "heuristic_off")
        ),
        default=10,
    )
    lims = (1, top * 1.5)
    ax.plot(lims, lims, ls="--", c="grey", lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(lims)
    ax.set_ylim(lims)
    ax.set_xlabel("terms derived, plain order")
    ax.set_ylabel("terms derived, guided order")
    ax.set_title("Search effort on random instances")
    if records:
        ax.legend()
    path = Path(outdir) / "instances_effort.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return [path]


# ---------------------------------------------------------------------------
# Rule ablation.
# ---------------------------------------------------------------------------


def run_ablation(
    instance: InstanceRecord,
    rule_id: str | None,
    *,
    time_budget: float | None = None,
) -> str:
    """Re-solve `instance` with one rule disabled.

    Args:
        instance: a record from `generate_instance` (plain graphs only;
            the rule set is the core one minus `rule_id`).
        rule_id: rule to disable, or None to keep the full set.
        time_budget: optional wall-clock cap in seconds.

    Returns:
        The verdict string of the restricted search.
    """
    rules = [r for r in CORE_RULES if r != rule_id]
    report = solve(
        list(instance.inputs),
        instance.query,
        "\n".join(instance.edges),
        rules_enabled=rules,
        time_budget=time_budget,
    )
    return report.result.verdict
