"""Numeric ground truth on random discrete structural causal models.

Every unobserved confounder (one binary latent per bidirected edge) is made
explicit, so any term ``P(A | do(B), C)`` can be evaluated exactly with the
truncated factorization: drop the equations of the do-set, multiply the
remaining conditional probability tables, sum out the latents, marginalize
and condition.  Emitted formulas are evaluated as expression trees over the
same model, which gives an independent soundness check: if a derivation ever
used an unsound step, the two values disagree on almost every sampled model.

Proxies of partially observed variables are deterministic: they copy their
true variable when the response indicator is 1 and take the extra "missing"
value (the last state) otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Distribution
from .formula import Atom, Expression, Product, Quotient, Sum
from .graph import LabeledGraph, iter_bits

_FLOOR = 1e-3


@dataclass
class ValueTable:
    """A numeric term value over its free vertex axes.

    Attributes:
        axes: vertex ids of the array axes, ascending.
        values: probabilities (conditionals are 0-filled where the
            conditioning event has probability zero).
        defined: same-shape boolean mask; False marks 0-filled cells whose
            true value is undefined.
    """

    axes: tuple[int, ...]
    values: np.ndarray
    defined: np.ndarray

    @property
    def zero_filled(self) -> bool:
        return not bool(self.defined.all())


@dataclass
class DiscreteSCM:
    """A fully specified discrete model over a labeled graph.

    Attributes:
        graph: the graph the model was sampled for.
        card: per-vertex state counts (proxies have one extra "missing"
            state, which is always the last one).
        latent_edges: the bidirected pairs, one binary latent each.
        latent_priors: per-latent distributions over {0, 1}.
        cpts: per-vertex conditional probability tables with axes
            ``(*latents touching the vertex, *directed parents, vertex)``;
            latent axes come first, both groups sorted ascending.
    """

    graph: LabeledGraph
    card: list[int]
    latent_edges: list[tuple[int, int]]
    latent_priors: list[np.ndarray]
    cpts: dict[int, np.ndarray]
    _joint_cache: dict[int, np.ndarray] = field(default_factory=dict)

    def joint(self, do_mask: int = 0) -> np.ndarray:
        """The joint over all vertices under do() on `do_mask`.

        Axes follow vertex order; do-set axes stay free, indexing the joint
        of the remaining vertices under that intervention value.
        """
        cached = self._joint_cache.get(do_mask)
        if cached is not None:
            return cached
        g = self.graph
        n = g.n_vars
        n_lat = len(self.latent_edges)
        shape = [2] * n_lat + list(self.card)
        rank = len(shape)
        table = np.ones(shape)
        for li, prior in enumerate(self.latent_priors):
            view = [1] * rank
            view[li] = 2
            table *= prior.reshape(view)
        lat_of: dict[int, list[int]] = {v: [] for v in range(n)}
        for li, (i, j) in enumerate(self.latent_edges):
            lat_of[i].append(li)
            lat_of[j].append(li)
        for v in range(n):
            if do_mask >> v & 1:
                continue
            cpt = self.cpts[v]
            parents = sorted(iter_bits(g.parent_mask[v]))
            # Target axis of each CPT axis in the big table; the own-vertex
            # axis may sort below a parent's, so transpose before reshaping.
            targets = (
                list(lat_of[v])
                + [n_lat + p for p in parents]
                + [n_lat + v]
            )
            perm = sorted(range(len(targets)), key=targets.__getitem__)
            aligned = cpt.transpose(perm)
            view = [1] * rank
            for axis, size in zip(sorted(targets), aligned.shape):
                view[axis] = size
            table = table * aligned.reshape(view)
        if n_lat:
            table = table.sum(axis=tuple(range(n_lat)))
        self._joint_cache[do_mask] = table
        return table


def _floored_rows(rng: np.random.Generator, n_rows: int, k: int) -> np.ndarray:
    """Dirichlet rows smoothed away from the simplex boundary."""
    raw = rng.dirichlet(np.ones(k), size=n_rows)
    return (raw + _FLOOR) / (1.0 + k * _FLOOR)


def sample_scm(
    graph: LabeledGraph, seed: int, card: int = 2
) -> DiscreteSCM:
    """Sample a random model for `graph`.

    Ordinary, transportability, and selection vertices get `card` states;
    response indicators are binary; proxies copy their true variable and
    gain one extra "missing" state.
    """
    rng = np.random.default_rng(seed)
    n = graph.n_vars
    cards = [0] * n
    for v in range(n):
        if graph.indicator_mask >> v & 1:
            cards[v] = 2
        elif graph.proxy_mask >> v & 1:
            cards[v] = 0  # filled below from the true variable
        else:
            cards[v] = card
    for v in range(n):
        if graph.proxy_mask >> v & 1:
            cards[v] = cards[graph.true_of_proxy[v]] + 1

    latent_edges = list(graph.bidirected_pairs)
    latent_priors = [_floored_rows(rng, 1, 2)[0] for _ in latent_edges]
    lat_of: dict[int, list[int]] = {v: [] for v in range(n)}
    for li, (i, j) in enumerate(latent_edges):
        lat_of[i].append(li)
        lat_of[j].append(li)

    cpts: dict[int, np.ndarray] = {}
    for v in range(n):
        parents = sorted(iter_bits(graph.parent_mask[v]))
        if graph.proxy_mask >> v & 1:
            true = graph.true_of_proxy[v]
            indicator = graph.indicator_of[true]
            k_true = cards[true]
            cpt = np.zeros((k_true, 2, k_true + 1))
            cpt[:, 0, k_true] = 1.0  # unobserved: the missing state
            for x in range(k_true):
                cpt[x, 1, x] = 1.0  # observed: copy the true value
            # CPT axes follow ascending parent ids.
            if parents != sorted((true, indicator)):
                raise AssertionError("proxy parents must be {true, indicator}")
            if parents[0] == indicator:
                cpt = cpt.transpose(1, 0, 2)
            cpts[v] = cpt
            continue
        par_shape = [2] * len(lat_of[v]) + [cards[p] for p in parents]
        n_rows = int(np.prod(par_shape)) if par_shape else 1
        rows = _floored_rows(rng, n_rows, cards[v])
        cpts[v] = rows.reshape(*par_shape, cards[v])
    return DiscreteSCM(graph, cards, latent_edges, latent_priors, cpts)


def eval_query(scm: DiscreteSCM, dist: Distribution) -> ValueTable:
    """Evaluate a term on the model.

    Value-1 marks and transportability/selection vertices in the do-set or
    conditioning set are sliced at state 1 and dropped from the axes;
    transportability/selection vertices on the left stay free.
    """
    g = scm.graph
    table = scm.joint(dist.b)
    keep = dist.a | dist.b | dist.c
    drop = [v for v in range(g.n_vars) if not (keep >> v & 1)]
    if drop:
        table = table.sum(axis=tuple(drop))
    axes = sorted(iter_bits(keep))
    a_pos = tuple(i for i, v in enumerate(axes) if dist.a >> v & 1)
    den = table.sum(axis=a_pos, keepdims=True)
    ok = den > 0
    values = table / np.where(ok, den, 1.0)
    values = np.where(np.broadcast_to(ok, values.shape), values, 0.0)
    defined = np.broadcast_to(ok, values.shape).copy()
    ts = g.transport_mask | g.selection_mask
    pinned = (dist.v1 & keep) | ((dist.b | dist.c) & ts)
    for v in sorted(iter_bits(pinned), reverse=True):
        pos = axes.index(v)
        values = np.take(values, 1, axis=pos)
        defined = np.take(defined, 1, axis=pos)
        axes.pop(pos)
    return ValueTable(tuple(axes), values, defined)


def _align(
    tables: list[ValueTable],
) -> tuple[tuple[int, ...], list[np.ndarray], list[np.ndarray]]:
    """Broadcast value tables onto the union of their axes."""
    union = sorted(set().union(*(t.axes for t in tables)))
    shape = {}
    for t in tables:
        for axis, size in zip(t.axes, t.values.shape):
            shape[axis] = size
    full = tuple(shape[a] for a in union)
    values, defined = [], []
    for t in tables:
        view = [1] * len(union)
        for axis, size in zip(t.axes, t.values.shape):
            view[union.index(axis)] = size
        values.append(np.broadcast_to(t.values.reshape(view), full))
        defined.append(np.broadcast_to(t.defined.reshape(view), full))
    return tuple(union), values, defined


def eval_expression(expr: Expression, scm: DiscreteSCM) -> ValueTable:
    """Evaluate a formula tree on the model.

    Products treat 0-filled factors as exact zeros (a zero weight makes the
    other factor irrelevant); quotients and sums stay undefined wherever an
    argument cell is.
    """
    if isinstance(expr, Atom):
        return eval_query(
            scm, Distribution(expr.left, expr.do, expr.cond, expr.marks)
        )
    if isinstance(expr, Product):
        parts = [eval_expression(f, scm) for f in expr.factors]
        axes, values, defined = _align(parts)
        out = values[0]
        all_def = defined[0]
        zero_hit = defined[0] & (values[0] == 0)
        for v, d in zip(values[1:], defined[1:]):
            out = out * v
            zero_hit = zero_hit | (d & (v == 0))
            all_def = all_def & d
        # A cell is usable when every factor is defined, or some defined
        # factor is exactly zero: 0-filled cells make the product 0 there,
        # which is the correct value regardless of the undefined factors.
        ok = all_def | zero_hit
        return ValueTable(axes, np.where(ok, out, 0.0), ok)
    if isinstance(expr, Quotient):
        num = eval_expression(expr.num, scm)
        den = eval_expression(expr.den, scm)
        axes, (nv, dv), (nd, dd) = _align([num, den])
        ok = nd & dd & (dv > 0)
        values = nv / np.where(ok, dv, 1.0)
        return ValueTable(axes, np.where(ok, values, 0.0), ok)
    if isinstance(expr, Sum):
        body = eval_expression(expr.body, scm)
        positions = []
        for v in iter_bits(expr.over):
            if v not in body.axes:
                raise AssertionError(
                    f"sum over vertex {v} absent from the body axes"
                )
            positions.append(body.axes.index(v))
        pos = tuple(positions)
        axes = tuple(a for i, a in enumerate(body.axes) if i not in pos)
        return ValueTable(
            axes, body.values.sum(axis=pos), body.defined.all(axis=pos)
        )
    raise TypeError(f"not an expression: {expr!r}")


def max_abs_difference(t1: ValueTable, t2: ValueTable) -> float:
    """Largest |t1 - t2| over cells defined in both, after broadcasting."""
    _, (v1, v2), (d1, d2) = _align([t1, t2])
    both = d1 & d2
    if not both.any():
        raise AssertionError("no jointly defined cells to compare")
    return float(np.abs(v1 - v2)[both].max())


def verify_formula(
    expr: Expression,
    query: Distribution,
    graph: LabeledGraph,
    *,
    n_models: int = 20,
    seed: int = 0,
    card: int = 2,
) -> float:
    """Max deviation between a formula and its query over sampled models."""
    worst = 0.0
    for k in range(n_models):
        scm = sample_scm(graph, seed + k, card=card)
        lhs = eval_query(scm, query)
        rhs = eval_expression(expr, scm)
        worst = max(worst, max_abs_difference(lhs, rhs))
    return worst


def bow_witness() -> dict[str, np.ndarray | float]:
    """Two models over (X, Y) with equal joints but different causal effects.

    Model A has a plain direct effect X -> Y and no confounding; model B
    produces the same observational joint purely through a binary confounder
    (no direct effect at all).  Both tables use axes (x, y).  The causal
    contrast P(y=1 | do(x=1)) - P(y=1 | do(x=0)) is 0.4 in model A and 0 in
    model B, so no algorithm can compute the effect from the joint alone.
    """
    # Model A: X ~ Bernoulli(1/2); P(y=1|x) = 0.3 / 0.7.
    px = np.array([0.5, 0.5])
    py_x = np.array([[0.7, 0.3], [0.3, 0.7]])
    joint_a = px[:, None] * py_x
    causal_a = py_x

    # Model B: U ~ Bernoulli(1/2); P(x=1|u) = 0.2 / 0.8;
    # P(y=1|u) = 1/6 / 5/6; no X -> Y edge.
    pu = np.array([0.5, 0.5])
    px_u = np.array([[0.8, 0.2], [0.2, 0.8]])
    py_u = np.array([[5 / 6, 1 / 6], [1 / 6, 5 / 6]])
    joint_b = np.einsum("u,ux,uy->xy", pu, px_u, py_u)
    causal_b = np.einsum("u,uy->y", pu, py_u)[None, :].repeat(2, axis=0)

    gap_a = causal_a[1, 1] - causal_a[0, 1]
    gap_b = causal_b[1, 1] - causal_b[0, 1]
    return {
        "joint_a": joint_a,
        "joint_b": joint_b,
        "causal_a": causal_a,
        "causal_b": causal_b,
        "joint_gap": float(np.abs(joint_a - joint_b).max()),
        "causal_gap": float(abs(gap_a - gap_b)),
    }
