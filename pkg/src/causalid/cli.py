"""Command-line front end.

Subcommands:

* ``solve`` — decide one query and print the verdict and formula.
* ``verify`` — solve, then check the formula numerically against random
  simulated models.
* ``enumerate-bivariate`` — sweep the two-variable missing-data graphs and
  write CSV, JSON and figure files.
* ``simulate`` — draw random problem instances and write CSV and figures.
* ``ablate`` — re-solve with individual derivation rules disabled.

Option values starting with ``@`` are read from the named file.  With
``--format json`` stdout is always exactly one JSON document, also on
errors.  Exit codes: 0 identifiable (or verified), 1 not identifiable (or
verification failed), 2 indeterminate (time budget ran out), 3 nothing to
verify, 64 usage error, 65 parse error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analysis import (
    enumerate_bivariate,
    bivariate_graph_ids,
    generate_instance,
    render_bivariate_figures,
    render_instance_figures,
    venn_summary,
    write_bivariate_csv,
    write_instances_csv,
    write_venn_summary,
)
from .engine import CORE_RULES, EngineError, MISSING_RULES, term_to_spec
from .formula import from_json as formula_from_json
from .formula import to_json as formula_to_json
from .graph import GraphError
from .oracle import verify_formula
from .parser import (
    ParseError,
    parse_distribution,
    parse_distribution_set,
    parse_graph,
    parse_missingness,
    render_distribution,
)
from .search import (
    SolveReport,
    derivation_to_dot,
    derivation_to_json,
    solve,
)

__all__ = ["CliConfig", "main"]

EXIT_IDENTIFIABLE = 0
EXIT_NOT_IDENTIFIABLE = 1
EXIT_INDETERMINATE = 2
EXIT_NOTHING_TO_VERIFY = 3
EXIT_USAGE = 64
EXIT_PARSE = 65

_VERDICT_EXITS = {
    "identifiable": EXIT_IDENTIFIABLE,
    "non-identifiable": EXIT_NOT_IDENTIFIABLE,
    "indeterminate": EXIT_INDETERMINATE,
}

#: Default seed when neither ``--seed`` nor the environment provide one.
_SEED_ENV = "CAUSALID_SEED"

_EPILOG = """\
option values starting with "@" are read from the named file, e.g.
--graph @model.txt.  The default --seed comes from the environment
variable CAUSALID_SEED when set.

exit codes:
  0   identifiable / verification passed
  1   not identifiable / verification failed
  2   indeterminate (time budget exhausted)
  3   nothing to verify (query not identifiable)
  64  usage error
  65  parse error

examples:
  causalid solve --data "p(x,y,z)" --query "p(y|do(x))" \\
      --graph "x -> y; z -> x; z -> y"
  causalid solve --data @data.txt --query "p(y|do(x))" --graph @graph.txt \\
      --transportability t --selection-bias s --format json
  causalid verify --data "p(x,y)" --query "p(y|do(x))" --graph "x -> y" \\
      --scms 20
"""


class _UsageError(Exception):
    """A bad invocation (maps to exit code 64)."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: D102 - argparse hook
        raise _UsageError(message)


@dataclass
class CliConfig:
    """Resolved options shared by the problem-solving subcommands.

    Attributes:
        subcommand: which subcommand is running.
        data: input distributions (inline text, ``@file`` expanded).
        query: the target term.
        graph: edge list text.
        transportability: transportability vertex names.
        selection_bias: selection-bias vertex names.
        missing_data: ``indicator : variable`` declarations.
        heuristic: True/False to force guided expansion on or off, None
            for the default.
        derivation: write the derivation DAG (JSON and DOT files).
        benchmark: include search-effort counters in the output.
        format: ``text``, ``latex`` or ``json``.
        seed: seed for oracle models and simulation.
        time_budget: wall-clock cap in seconds, None for no cap.
    """

    subcommand: str
    data: str = ""
    query: str = ""
    graph: str = ""
    transportability: str = ""
    selection_bias: str = ""
    missing_data: str = ""
    heuristic: bool | None = None
    derivation: bool = False
    benchmark: bool = False
    format: str = "text"
    seed: int = 0
    time_budget: float | None = None


# ---------------------------------------------------------------------------
# Option plumbing.
# ---------------------------------------------------------------------------


def _expand(value: str) -> tuple[str, str | None]:
    """Resolve the ``@file`` convention.

    Returns:
        ``(text, source)`` where `source` is the file name when the value
        was read from a file, else None.
    """
    if value.startswith("@"):
        path = Path(value[1:])
        try:
            return path.read_text(), str(path)
        except OSError as exc:
            raise _UsageError(f"cannot read {path}: {exc.strerror}") from exc
    return value, None


def _position(text: str, offset: int) -> tuple[int, int]:
    head = text[:offset]
    return head.count("\n") + 1, offset - (head.rfind("\n") + 1) + 1


def _parse_field(label: str, value: str, parse) -> object:
    """Run one parser, turning its errors into positioned messages."""
    text, source = _expand(value)
    try:
        return parse(text)
    except ParseError as exc:
        line, col = _position(text, exc.offset)
        where = source if source is not None else label
        message = exc.args[0]
        suffix = f" (at offset {exc.offset})"
        if message.endswith(suffix):
            message = message[: -len(suffix)]
        raise ParseError(f"{where}:{line}:{col}: {message}", exc.offset)


def _wants_json(argv: Sequence[str]) -> bool:
    for i, arg in enumerate(argv):
        if arg == "--format" and i + 1 < len(argv) and argv[i + 1] == "json":
            return True
        if arg == "--format=json":
            return True
    return False


def _emit_error(code: int, message: str, as_json: bool) -> int:
    if as_json:
        print(json.dumps({"error": message, "exit_code": code}, indent=2))
    else:
        print(f"error: {message}", file=sys.stderr)
    return code


def _default_seed() -> int:
    raw = os.environ.get(_SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"{_SEED_ENV} must be an integer, got '{raw}'")


def _config_from(ns: argparse.Namespace) -> CliConfig:
    seed = ns.seed if ns.seed is not None else _default_seed()
    heuristic = {"auto": None, "on": True, "off": False}[ns.heuristic]
    return CliConfig(
        subcommand=ns.subcommand,
        data=ns.data,
        query=ns.query,
        graph=ns.graph,
        transportability=ns.transportability,
        selection_bias=ns.selection_bias,
        missing_data=ns.missing_data,
        heuristic=heuristic,
        derivation=getattr(ns, "derivation", False),
        benchmark=ns.benchmark,
        format=ns.format,
        seed=seed,
        time_budget=ns.time_budget,
    )


def _solve_from(
    cfg: CliConfig, rules_enabled: Sequence[str] | None = None
) -> SolveReport:
    data = _parse_field("--data", cfg.data, parse_distribution_set)
    query = _parse_field("--query", cfg.query, parse_distribution)
    graph = _parse_field("--graph", cfg.graph, parse_graph)
    missing = _parse_field(
        "--missing-data", cfg.missing_data, parse_missingness
    )
    transport = _expand(cfg.transportability)[0]
    selection = _expand(cfg.selection_bias)[0]
    return solve(
        data,
        query,
        graph,
        transportability=transport,
        selection_bias=selection,
        missing_data=missing,
        heuristic=cfg.heuristic,
        rules_enabled=rules_enabled,
        time_budget=cfg.time_budget,
    )


def _stats_dict(report: SolveReport) -> dict:
    s = report.result.stats
    return {
        "terms_derived": s.terms_derived,
        "terms_expanded": s.terms_expanded,
        "rule_applications": s.rule_applications,
        "separation_checks": s.separation_checks,
        "elapsed_seconds": s.elapsed,
    }


def _print_stats(report: SolveReport) -> None:
    for key, value in _stats_dict(report).items():
        label = key.replace("_", " ")
        if isinstance(value, float):
            print(f"{label}: {value:.6f}")
        else:
            print(f"{label}: {value}")


# ---------------------------------------------------------------------------
# Subcommand handlers.
# ---------------------------------------------------------------------------


def _cmd_solve(ns: argparse.Namespace) -> int:
    cfg = _config_from(ns)
    report = _solve_from(cfg)
    result = report.result
    exit_code = _VERDICT_EXITS[result.verdict]
    latex = report.latex()

    derivation_files: list[str] = []
    if cfg.derivation and result.target_index is not None:
        outdir = Path(ns.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        doc = derivation_to_json(
            result.store, result.target_index, report.graph
        )
        dot = derivation_to_dot(result.store, result.target_index, report.graph)
        json_path = outdir / "derivation.json"
        dot_path = outdir / "derivation.dot"
        json_path.write_text(json.dumps(doc, indent=2) + "\n")
        dot_path.write_text(dot + "\n")
        derivation_files = [str(json_path), str(dot_path)]

    if cfg.format == "json":
        payload: dict = {
            "verdict": result.verdict,
            "identifiable": result.identifiable,
            "query": render_distribution(
                term_to_spec(report.query, report.graph)
            ),
            "formula_latex": latex,
            "formula": (
                formula_to_json(result.formula, report.graph)
                if result.formula is not None
                else None
            ),
            "exit_code": exit_code,
        }
        if derivation_files:
            payload["derivation_files"] = derivation_files
        if cfg.benchmark:
            payload["stats"] = _stats_dict(report)
        print(json.dumps(payload, indent=2))
    elif cfg.format == "latex":
        if latex is not None:
            print(latex)
        else:
            print(f"query is {result.verdict}", file=sys.stderr)
        if cfg.benchmark:
            _print_stats(report)
    else:
        print(f"verdict: {result.verdict}")
        if latex is not None:
            print(f"formula: {latex}")
        for path in derivation_files:
            print(f"derivation: {path}")
        if cfg.benchmark:
            _print_stats(report)
    return exit_code


def _cmd_verify(ns: argparse.Namespace) -> int:
    cfg = _config_from(ns)
    report = _solve_from(cfg)
    result = report.result

    expr = result.formula
    source = "solver"
    if ns.formula:
        text = _expand(ns.formula)[0]
        try:
            expr = formula_from_json(json.loads(text), report.graph)
        except (ValueError, KeyError) as exc:
            raise ParseError(f"--formula: {exc}", 0)
        source = "supplied"
    elif expr is None:
        message = f"nothing to verify: query is {result.verdict}"
        if cfg.format == "json":
            print(
                json.dumps(
                    {
                        "status": "nothing-to-verify",
                        "verdict": result.verdict,
                        "exit_code": EXIT_NOTHING_TO_VERIFY,
                    },
                    indent=2,
                )
            )
        else:
            print(message)
        return EXIT_NOTHING_TO_VERIFY

    try:
        deviation = verify_formula(
            expr,
            report.query,
            report.graph,
            n_models=ns.scms,
            seed=cfg.seed,
        )
    except ValueError as exc:
        return _emit_error(
            EXIT_NOT_IDENTIFIABLE, str(exc), cfg.format == "json"
        )
    passed = deviation < ns.tolerance
    exit_code = EXIT_IDENTIFIABLE if passed else EXIT_NOT_IDENTIFIABLE
    if cfg.format == "json":
        payload = {
            "status": "passed" if passed else "failed",
            "formula_source": source,
            "models": ns.scms,
            "max_abs_deviation": deviation,
            "tolerance": ns.tolerance,
            "exit_code": exit_code,
        }
        if cfg.benchmark:
            payload["stats"] = _stats_dict(report)
        print(json.dumps(payload, indent=2))
    else:
        print(f"models: {ns.scms}")
        print(f"max abs deviation: {deviation:.3e}")
        print(f"verification: {'passed' if passed else 'failed'}")
        if cfg.benchmark:
            _print_stats(report)
    return exit_code


def _cmd_enumerate(ns: argparse.Namespace) -> int:
    started = time.monotonic()
    outdir = Path(ns.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    ids = bivariate_graph_ids()
    if ns.limit is not None:
        ids = ids[: ns.limit]
    records = enumerate_bivariate(processes=ns.processes, graph_ids=ids)
    csv_path = write_bivariate_csv(records, outdir / "bivariate.csv")
    json_path = write_venn_summary(records, outdir / "bivariate_venn.json")
    files = [str(csv_path), str(json_path)]
    if not ns.no_figures:
        files += [str(p) for p in render_bivariate_figures(records, outdir)]
    summary = venn_summary(records)
    elapsed = time.monotonic() - started
    if ns.format == "json":
        payload: dict = {"files": files, "summary": summary}
        if ns.benchmark:
            payload["stats"] = {"elapsed_seconds": elapsed}
        print(json.dumps(payload, indent=2))
    else:
        print(f"graphs: {summary['total']}")
        for label, group in summary["groups"].items():
            counts = ", ".join(
                f"{q}: {n}" for q, n in group["identifiable"].items()
            )
            print(f"{label} ({group['total']}): {counts}")
        for path in files:
            print(f"wrote: {path}")
        if ns.benchmark:
            print(f"elapsed seconds: {elapsed:.6f}")
    return 0


def _cmd_simulate(ns: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = ns.seed if ns.seed is not None else _default_seed()
    outdir = Path(ns.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    records = []
    for s in range(seed, seed + ns.count):
        records.extend(generate_instance(s, ns.n_vertices))
    csv_path = write_instances_csv(records, outdir / "instances.csv")
    files = [str(csv_path)]
    if not ns.no_figures:
        files += [str(p) for p in render_instance_figures(records, outdir)]
    elapsed = time.monotonic() - started
    if ns.format == "json":
        payload: dict = {
            "files": files,
            "instances": [
                {
                    "seed": r.seed,
                    "n_vertices": r.n_vertices,
                    "n_inputs": len(r.inputs),
                    "identifiable": r.identifiable,
                }
                for r in records
            ],
        }
        if ns.benchmark:
            payload["stats"] = {"elapsed_seconds": elapsed}
        print(json.dumps(payload, indent=2))
    else:
        for r in records:
            verdict = (
                "identifiable" if r.identifiable else "non-identifiable"
            )
            print(
                f"seed {r.seed}: {len(r.inputs)} inputs, "
                f"{len(r.edges)} edges, {verdict}"
            )
        for path in files:
            print(f"wrote: {path}")
        if ns.benchmark:
            print(f"elapsed seconds: {elapsed:.6f}")
    return 0


def _cmd_ablate(ns: argparse.Namespace) -> int:
    cfg = _config_from(ns)
    catalogue = MISSING_RULES if cfg.missing_data.strip() else CORE_RULES
    if ns.rule != "all" and ns.rule not in catalogue:
        raise _UsageError(
            f"--rule must be 'all' or one of: {', '.join(catalogue)}"
        )
    rules = list(catalogue) if ns.rule == "all" else [ns.rule]
    verdicts = {}
    for rule in rules:
        enabled = [r for r in catalogue if r != rule]
        verdicts[rule] = _solve_from(cfg, rules_enabled=enabled).result.verdict
    if cfg.format == "json":
        print(
            json.dumps(
                {"disabled_rule_verdicts": verdicts},
                indent=2,
            )
        )
    else:
        for rule, verdict in verdicts.items():
            print(f"without {rule}: {verdict}")
    if ns.rule == "all":
        return 0
    return _VERDICT_EXITS[verdicts[ns.rule]]


# ---------------------------------------------------------------------------
# Parser construction.
# ---------------------------------------------------------------------------


def _add_problem_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--data",
        required=True,
        help="input distributions, one term per line (or @file)",
    )
    sub.add_argument(
        "--query", required=True, help="the term to identify (or @file)"
    )
    sub.add_argument(
        "--graph",
        required=True,
        help="edge list, one edge per line (or @file)",
    )
    sub.add_argument(
        "--transportability",
        default="",
        help="comma-separated transportability vertex names",
    )
    sub.add_argument(
        "--selection-bias",
        dest="selection_bias",
        default="",
        help="comma-separated selection-bias vertex names",
    )
    sub.add_argument(
        "--missing-data",
        dest="missing_data",
        default="",
        help="response-indicator declarations, 'r_x : x, r_y : y'",
    )
    sub.add_argument(
        "--heuristic",
        choices=("auto", "on", "off"),
        default="auto",
        help="guided expansion order (default: auto)",
    )
    sub.add_argument(
        "--time-budget",
        dest="time_budget",
        type=float,
        default=None,
        metavar="SECONDS",
        help="give up as indeterminate after this many seconds",
    )
    _add_common_options(sub)


def _add_common_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--format",
        choices=("text", "latex", "json"),
        default="text",
        help="output format (default: text)",
    )
    sub.add_argument(
        "--benchmark",
        action="store_true",
        help="include search-effort counters in the output",
    )
    sub.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"random seed (default: ${_SEED_ENV} or 0)",
    )


def _build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(
        prog="causalid",
        description=(
            "Decide identifiability of causal queries from collections of "
            "observational and interventional distributions."
        ),
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subs = parser.add_subparsers(
        dest="subcommand", required=True, parser_class=_ArgumentParser
    )

    solve_p = subs.add_parser(
        "solve", help="decide one query and print the formula"
    )
    _add_problem_options(solve_p)
    solve_p.add_argument(
        "--derivation",
        action="store_true",
        help="write the derivation DAG (derivation.json, derivation.dot)",
    )
    solve_p.add_argument(
        "--output-dir",
        dest="output_dir",
        default=".",
        help="directory for derivation files (default: .)",
    )
    solve_p.set_defaults(handler=_cmd_solve)

    verify_p = subs.add_parser(
        "verify", help="check the formula against simulated models"
    )
    _add_problem_options(verify_p)
    verify_p.add_argument(
        "--scms",
        type=int,
        default=20,
        metavar="N",
        help="number of simulated models (default: 20)",
    )
    verify_p.add_argument(
        "--tolerance",
        type=float,
        default=1e-9,
        help="maximum allowed absolute deviation (default: 1e-9)",
    )
    verify_p.add_argument(
        "--formula",
        default="",
        help="formula JSON to check instead of the solver's (or @file)",
    )
    verify_p.set_defaults(handler=_cmd_verify)

    enum_p = subs.add_parser(
        "enumerate-bivariate",
        help="sweep the two-variable missing-data graphs",
    )
    enum_p.add_argument(
        "--output-dir",
        dest="output_dir",
        default=".",
        help="directory for CSV, JSON and figures (default: .)",
    )
    enum_p.add_argument(
        "--processes",
        type=int,
        default=None,
        help="worker processes (default: all CPUs)",
    )
    enum_p.add_argument(
        "--limit",
        type=int,
        default=None,
        metavar="N",
        help="only the first N graphs (smoke testing)",
    )
    enum_p.add_argument(
        "--no-figures",
        dest="no_figures",
        action="store_true",
        help="skip the PNG figures",
    )
    _add_common_options(enum_p)
    enum_p.set_defaults(handler=_cmd_enumerate)

    sim_p = subs.add_parser(
        "simulate", help="draw random problem instances"
    )
    sim_p.add_argument(
        "--count",
        type=int,
        default=1,
        help="number of seeds to draw (default: 1)",
    )
    sim_p.add_argument(
        "--n-vertices",
        dest="n_vertices",
        type=int,
        default=10,
        help="graph size (default: 10)",
    )
    sim_p.add_argument(
        "--output-dir",
        dest="output_dir",
        default=".",
        help="directory for CSV and figures (default: .)",
    )
    sim_p.add_argument(
        "--no-figures",
        dest="no_figures",
        action="store_true",
        help="skip the PNG figures",
    )
    _add_common_options(sim_p)
    sim_p.set_defaults(handler=_cmd_simulate)

    ablate_p = subs.add_parser(
        "ablate", help="re-solve with derivation rules disabled"
    )
    _add_problem_options(ablate_p)
    ablate_p.add_argument(
        "--rule",
        required=True,
        help="rule to disable, or 'all' to ablate each in turn",
    )
    ablate_p.set_defaults(handler=_cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line; returns the exit code."""
    args = list(sys.argv[1:] if argv is None else argv)
    as_json = _wants_json(args)
    try:
        ns = _build_parser().parse_args(args)
    except _UsageError as exc:
        return _emit_error(EXIT_USAGE, str(exc), as_json)
    except SystemExit as exc:  # --help / --version print and stop
        code = exc.code
        return code if isinstance(code, int) else 0
    try:
        return ns.handler(ns)
    except _UsageError as exc:
        return _emit_error(EXIT_USAGE, str(exc), as_json)
    except ParseError as exc:
        return _emit_error(EXIT_PARSE, exc.args[0], as_json)
    except (GraphError, EngineError) as exc:
        return _emit_error(EXIT_PARSE, str(exc), as_json)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
