"""Parsing of the textual input language.

Three small sub-languages are understood:

* distribution terms such as ``p(y | do(x), z, r_y = 1)``,
* graph descriptions given as one edge per line (``x -> y``, ``x <-> y``),
* missingness declarations such as ``r_x : x, r_y : y``.

Parsing is purely lexical: the results are name-based data holders with no
knowledge of vertex roles.  Name resolution and structural validation happen
when a graph is assembled (:mod:`causalid.graph`) and when terms are resolved
against it (:mod:`causalid.engine`).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\*?")

#: Role codes accepted by :func:`parse_distribution_numeric`.
ROLE_LEFT = 0
ROLE_DO = 1
ROLE_COND = 2


class ParseError(ValueError):
    """A syntax error, carrying the byte offset of the offending character."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass
class DistributionSpec:
    """A single probability term, before name resolution.

    Attributes:
        left: names left of the conditioning bar, in source order.
        do_vars: names inside the ``do(...)`` group, in source order.
        cond_vars: conditioning names outside the do group, in source order.
        value_assignments: ``(name, value)`` pairs for names written as
            ``name = v``; each such name also appears in `left` or
            `cond_vars`.
    """

    left: list[str]
    do_vars: list[str] = field(default_factory=list)
    cond_vars: list[str] = field(default_factory=list)
    value_assignments: list[tuple[str, int]] = field(default_factory=list)

    def all_names(self) -> list[str]:
        """Every variable name in the term, left first, then do, then cond."""
        return [*self.left, *self.do_vars, *self.cond_vars]


@dataclass
class GraphSpec:
    """An edge list plus the names that occur only in distributions.

    Attributes:
        directed_edges: ``(tail, head)`` pairs.
        bidirected_edges: unordered confounding pairs, stored as written.
        isolated_names: names that should exist as vertices even if no edge
            mentions them, in registration order.  Callers assembling a
            problem put every distribution/query name here so that vertex
            numbering follows first appearance in the inputs.
    """

    directed_edges: list[tuple[str, str]] = field(default_factory=list)
    bidirected_edges: list[tuple[str, str]] = field(default_factory=list)
    isolated_names: list[str] = field(default_factory=list)


@dataclass
class MissingnessSpec:
    """Missingness mechanisms as ``(indicator, true variable)`` name pairs."""

    mechanisms: list[tuple[str, str]] = field(default_factory=list)


class _Scanner:
    """A cursor over the input text with offset-carrying errors."""

    def __init__(self, text: str, base: int = 0):
        self.text = text
        self.pos = 0
        self.base = base  # added to offsets in errors (for line-based input)

    def error(self, message: str, offset: int | None = None) -> ParseError:
        at = self.pos if offset is None else offset
        return ParseError(message, self.base + at)

    def skip_ws(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n and text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def eat(self, token: str) -> bool:
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str) -> None:
        if not self.eat(token):
            raise self.error(f"expected '{token}'")

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def name(self) -> str:
        match = _NAME_RE.match(self.text, self.pos)
        if match is None:
            raise self.error("expected a variable name")
        self.pos = match.end()
        return match.group()


def _parse_value(scanner: _Scanner) -> int:
    """Parse the value of a ``name = v`` assignment (only 0 and 1 exist)."""
    scanner.skip_ws()
    at = scanner.pos
    if scanner.eat("0"):
        value = 0
    elif scanner.eat("1"):
        value = 1
    else:
        raise scanner.error("expected a value of 0 or 1")
    if scanner.peek().isdigit():
        raise scanner.error("only the values 0 and 1 are allowed", at)
    return value


def parse_distribution(text: str, *, base_offset: int = 0) -> DistributionSpec:
    """Parse one probability term.

    The grammar is ``p( left | rhs )`` where the leading ``p`` (or ``P``) is
    optional, `left` is a comma-separated list of names with optional
    ``= 0|1`` assignments, and `rhs` mixes plain names, assignments and at
    most one ``do(...)`` group.  Whitespace is insignificant.

    Args:
        text: the term source.
        base_offset: added to reported error offsets (used when the term is
            embedded in a larger document).

    Returns:
        The parsed `DistributionSpec`.

    Raises:
        ParseError: on any syntax problem, with the byte offset.
    """
    scanner = _Scanner(text, base_offset)
    scanner.skip_ws()
    if scanner.peek() in ("p", "P"):
        save = scanner.pos
        scanner.pos += 1
        scanner.skip_ws()
        if scanner.peek() != "(":
            scanner.pos = save  # a variable that merely starts with p
    scanner.skip_ws()
    scanner.expect("(")

    spec = DistributionSpec(left=[])
    seen: dict[str, int] = {}

    def item(into: list[str], allow_do: bool) -> None:
        scanner.skip_ws()
        at = scanner.pos
        name = scanner.name()
        if allow_do and name == "do":
            save = scanner.pos
            scanner.skip_ws()
            if scanner.eat("("):
                if spec.do_vars:
                    raise scanner.error("only one do(...) group is allowed", at)
                while True:
                    scanner.skip_ws()
                    inner_at = scanner.pos
                    inner = scanner.name()
                    scanner.skip_ws()
                    if scanner.peek() == "=":
                        raise scanner.error(
                            "value assignments are not allowed inside do(...)"
                        )
                    if inner in seen:
                        raise scanner.error(
                            f"duplicate variable '{inner}' in term", inner_at
                        )
                    seen[inner] = inner_at
                    spec.do_vars.append(inner)
                    scanner.skip_ws()
                    if scanner.eat(","):
                        continue
                    scanner.expect(")")
                    return
            scanner.pos = save  # a variable literally named 'do'
        scanner.skip_ws()
        value: int | None = None
        if scanner.eat("="):
            value = _parse_value(scanner)
        if name in seen:
            raise scanner.error(f"duplicate variable '{name}' in term", at)
        seen[name] = at
        into.append(name)
        if value is not None:
            spec.value_assignments.append((name, value))

    item(spec.left, allow_do=False)
    scanner.skip_ws()
    while scanner.eat(","):
        item(spec.left, allow_do=False)
        scanner.skip_ws()
    if scanner.eat("|"):
        item(spec.cond_vars, allow_do=True)
        scanner.skip_ws()
        while scanner.eat(","):
            item(spec.cond_vars, allow_do=True)
            scanner.skip_ws()
    scanner.expect(")")
    scanner.skip_ws()
    if not scanner.at_end():
        raise scanner.error("unexpected trailing input")
    return spec


def parse_distribution_set(text: str) -> list[DistributionSpec]:
    """Parse several terms, one per line (``;`` also separates terms)."""
    specs = []
    offset = 0
    for chunk in re.split(r"[;\n]", text):
        if chunk.strip():
            specs.append(parse_distribution(chunk, base_offset=offset))
        offset += len(chunk) + 1
    return specs


def parse_distribution_numeric(
    entries: Sequence[tuple[str, int]],
) -> DistributionSpec:
    """Build a term from ``(name, role code)`` pairs.

    Role codes are `ROLE_LEFT` (0), `ROLE_DO` (1) and `ROLE_COND` (2).  A
    name may carry a value assignment in the usual textual form
    (``"r_x = 1"``); assignments are rejected for do-role entries, mirroring
    the textual grammar.

    Raises:
        ParseError: on a bad role code, bad name, or duplicate; the reported
            offset is the index of the offending entry.
    """
    spec = DistributionSpec(left=[])
    seen: set[str] = set()
    for position, (raw, code) in enumerate(entries):
        scanner = _Scanner(raw)
        scanner.skip_ws()
        name = scanner.name()
        scanner.skip_ws()
        value: int | None = None
        if scanner.eat("="):
            value = _parse_value(scanner)
        scanner.skip_ws()
        if not scanner.at_end():
            raise ParseError(f"malformed entry {raw!r}", position)
        if name in seen:
            raise ParseError(f"duplicate variable '{name}'", position)
        seen.add(name)
        if code == ROLE_LEFT:
            spec.left.append(name)
        elif code == ROLE_DO:
            if value is not None:
                raise ParseError(
                    "value assignments are not allowed on do-role entries",
                    position,
                )
            spec.do_vars.append(name)
        elif code == ROLE_COND:
            spec.cond_vars.append(name)
        else:
            raise ParseError(f"unknown role code {code}", position)
        if value is not None:
            spec.value_assignments.append((name, value))
    if not spec.left:
        raise ParseError("a term needs at least one left-side variable", 0)
    return spec


def render_distribution(spec: DistributionSpec) -> str:
    """Render a term canonically: ``p(left|do(...),cond)``, do group first."""
    values = dict(spec.value_assignments)

    def fmt(name: str) -> str:
        return f"{name} = {values[name]}" if name in values else name

    out = "p(" + ",".join(fmt(n) for n in spec.left)
    rhs = []
    if spec.do_vars:
        rhs.append("do(" + ",".join(spec.do_vars) + ")")
    rhs.extend(fmt(n) for n in spec.cond_vars)
    if rhs:
        out += "|" + ",".join(rhs)
    return out + ")"


def parse_graph(text: str) -> GraphSpec:
    """Parse an edge list, one edge per line (``;`` also separates edges).

    Directed edges are written ``a -> b`` and confounding arcs ``a <-> b``.
    Blank lines are skipped.  Proxy names (trailing ``*``) may not appear:
    proxies are attached automatically by missingness declarations.

    Raises:
        ParseError: with the byte offset into `text`.
    """
    spec = GraphSpec()
    offset = 0
    for line in re.split(r"[;\n]", text):
        scanner = _Scanner(line, offset)
        scanner.skip_ws()
        if not scanner.at_end():
            tail_at = scanner.pos
            tail = scanner.name()
            scanner.skip_ws()
            if scanner.eat("<->"):
                bidirected = True
            elif scanner.eat("->"):
                bidirected = False
            else:
                raise scanner.error("expected '->' or '<->'")
            scanner.skip_ws()
            head_at = scanner.pos
            head = scanner.name()
            scanner.skip_ws()
            if not scanner.at_end():
                raise scanner.error("unexpected trailing input")
            for name, at in ((tail, tail_at), (head, head_at)):
                if name.endswith("*"):
                    raise ParseError(
                        "proxy variables may not appear in the graph; they "
                        "are attached by missingness declarations",
                        offset + at,
                    )
            if tail == head:
                raise ParseError("self-loops are not allowed", offset + tail_at)
            if bidirected:
                spec.bidirected_edges.append((tail, head))
            else:
                spec.directed_edges.append((tail, head))
        offset += len(line) + 1
    return spec


def parse_missingness(text: str) -> MissingnessSpec:
    """Parse ``indicator : variable`` pairs separated by commas or newlines.

    Raises:
        ParseError: on syntax errors, duplicate indicators, duplicate
            variables, or proxy names on either side.
    """
    spec = MissingnessSpec()
    indicators: set[str] = set()
    trues: set[str] = set()
    offset = 0
    for chunk in re.split(r"[,\n]", text):
        scanner = _Scanner(chunk, offset)
        scanner.skip_ws()
        if not scanner.at_end():
            ind_at = scanner.pos
            indicator = scanner.name()
            scanner.skip_ws()
            scanner.expect(":")
            scanner.skip_ws()
            true_at = scanner.pos
            true = scanner.name()
            scanner.skip_ws()
            if not scanner.at_end():
                raise scanner.error("unexpected trailing input")
            if indicator.endswith("*") or true.endswith("*"):
                raise ParseError(
                    "missingness declarations use plain names", offset + ind_at
                )
            if indicator == true:
                raise ParseError(
                    "a variable cannot be its own response indicator",
                    offset + true_at,
                )
            if indicator in indicators:
                raise ParseError(
                    f"duplicate indicator '{indicator}'", offset + ind_at
                )
            if true in trues:
                raise ParseError(
                    f"variable '{true}' has two mechanisms", offset + true_at
                )
            indicators.add(indicator)
            trues.add(true)
            spec.mechanisms.append((indicator, true))
        offset += len(chunk) + 1
    return spec
