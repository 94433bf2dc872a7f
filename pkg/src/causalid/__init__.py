"""Identifiability of causal queries from heterogeneous data sources.

Given a semi-Markovian causal graph (optionally with transportability
vertices, selection vertices, and missingness mechanisms) and a collection
of observational and interventional input distributions, the search decides
whether a query ``P(A | do(B), C)`` is derivable and, when it is, emits a
closed-form estimand together with the machine-readable derivation.
"""

from __future__ import annotations

from .engine import (
    CORE_RULES,
    MISSING_RULES,
    RULES,
    DerivationNode,
    Distribution,
    DistributionStore,
    EngineError,
    default_rules,
    resolve_distribution,
    term_to_spec,
)
from .formula import (
    Atom,
    Expression,
    Product,
    Quotient,
    Sum,
    build_expression,
    canonical_form,
    from_json,
    render_latex,
    to_json,
)
from .graph import GraphError, LabeledGraph, build_graph, m_separated
from .oracle import (
    DiscreteSCM,
    ValueTable,
    bow_witness,
    eval_expression,
    eval_query,
    max_abs_difference,
    sample_scm,
    verify_formula,
)
from .parser import (
    DistributionSpec,
    GraphSpec,
    MissingnessSpec,
    ParseError,
    parse_distribution,
    parse_distribution_set,
    parse_graph,
    parse_missingness,
    render_distribution,
)
from .search import (
    SearchOptions,
    SearchResult,
    SearchStats,
    SolveReport,
    backtrack_derivation,
    derivation_to_dot,
    derivation_to_json,
    proximity,
    run_search,
    solve,
    trivially_nonidentifiable,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "CORE_RULES",
    "DerivationNode",
    "DiscreteSCM",
    "Distribution",
    "DistributionSpec",
    "DistributionStore",
    "EngineError",
    "Expression",
    "GraphError",
    "GraphSpec",
    "LabeledGraph",
    "MISSING_RULES",
    "MissingnessSpec",
    "ParseError",
    "Product",
    "Quotient",
    "RULES",
    "SearchOptions",
    "SearchResult",
    "SearchStats",
    "SolveReport",
    "Sum",
    "ValueTable",
    "backtrack_derivation",
    "bow_witness",
    "build_expression",
    "build_graph",
    "canonical_form",
    "default_rules",
    "derivation_to_dot",
    "derivation_to_json",
    "eval_expression",
    "eval_query",
    "from_json",
    "m_separated",
    "max_abs_difference",
    "parse_distribution",
    "parse_distribution_set",
    "parse_graph",
    "parse_missingness",
    "proximity",
    "render_distribution",
    "render_latex",
    "resolve_distribution",
    "run_search",
    "sample_scm",
    "solve",
    "term_to_spec",
    "to_json",
    "trivially_nonidentifiable",
    "verify_formula",
    "__version__",
]
