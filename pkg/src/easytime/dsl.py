"""Textual front end for competition models.

Grammar (UTF-8 source, ``//`` line comments, double-quoted strings without
escapes)::

    Program    ::= 'competition' STRING ';' AgentDecl* NodeDecl*
    AgentDecl  ::= 'agent' INT ('auto' STRING | 'manual' STRING) ';'
    NodeDecl   ::= KIND IDENT 'laps' INT 'agent' INT ';'
    KIND       ::= 'swim' | 'bike' | 'run' | 'ta1' | 'ta2'

Integers in laps/id position must be >= 1; that is enforced at parse time so
the error is a syntax error pointing at the literal. Race order is implicit
in declaration order; ``lower`` turns it into explicit order arrows, and
``format_model`` prints any valid model back as canonical text (agents first,
nodes in path order, columns aligned).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import (
    ActivityNode,
    Agent,
    AgentKind,
    BindingArrow,
    CompetitionModel,
    NodeKind,
    OrderArrow,
    ordering,
    validate,
)

KEYWORDS = {"competition", "agent", "auto", "manual", "laps", "swim", "bike", "run", "ta1", "ta2"}
KIND_KEYWORDS = {k.value: k for k in NodeKind}

FILE_EXTENSION = ".et"


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int


class DslSyntaxError(Exception):
    def __init__(self, span: SourceSpan, expected: str, found: str):
        super().__init__(f"{span.line}:{span.column}: expected {expected}, found {found}")
        self.span = span
        self.expected = expected
        self.found = found


class DslSemanticError(Exception):
    def __init__(self, span: SourceSpan, code: str, message: str):
        super().__init__(f"{span.line}:{span.column}: {code}: {message}")
        self.span = span
        self.code = code


@dataclass(frozen=True)
class AgentDecl:
    span: SourceSpan
    id: int
    kind: AgentKind
    address: str


@dataclass(frozen=True)
class NodeDecl:
    span: SourceSpan
    kind: NodeKind
    name: str
    laps: int
    agent_id: int


@dataclass(frozen=True)
class SyntaxTree:
    span: SourceSpan
    name: str
    agents: tuple[AgentDecl, ...]
    nodes: tuple[NodeDecl, ...]


# --- lexer ------------------------------------------------------------------

_WORD = "word"
_INT = "int"
_STRING = "string"
_SEMI = ";"
_EOF = "end of input"


@dataclass(frozen=True)
class _Token:
    type: str
    text: str
    span: SourceSpan


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)

    def span(length: int) -> SourceSpan:
        return SourceSpan(line, col, length)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == ";":
            tokens.append(_Token(_SEMI, ";", span(1)))
            i += 1
            col += 1
            continue
        if c == '"':
            j = i + 1
            while j < n and text[j] not in ('"', "\n"):
                j += 1
            if j >= n or text[j] == "\n":
                raise DslSyntaxError(span(j - i), "closing '\"'", "end of line" if j < n else _EOF)
            value = text[i + 1 : j]
            tokens.append(_Token(_STRING, value, span(j - i + 1)))
            col += j - i + 1
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token(_INT, text[i:j], span(j - i)))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token(_WORD, text[i:j], span(j - i)))
            col += j - i
            i = j
            continue
        raise DslSyntaxError(span(1), "a token", repr(c))

    tokens.append(_Token(_EOF, "", SourceSpan(line, col, 0)))
    return tokens


# --- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self._tokens = _tokenize(text)
        self._pos = 0

    @property
    def _current(self) -> _Token:
        return self._tokens[self._pos]

    def _advance(self) -> _Token:
        token = self._current
        if token.type != _EOF:
            self._pos += 1
        return token

    def _fail(self, expected: str) -> DslSyntaxError:
        token = self._current
        found = token.text if token.type != _EOF else _EOF
        return DslSyntaxError(token.span, expected, found)

    def _keyword(self, word: str) -> _Token:
        if self._current.type == _WORD and self._current.text == word:
            return self._advance()
        raise self._fail(f"'{word}'")

    def _semicolon(self) -> None:
        if self._current.type != _SEMI:
            raise self._fail("';'")
        self._advance()

    def _string(self) -> str:
        if self._current.type != _STRING:
            raise self._fail("a string")
        return self._advance().text

    def _positive_int(self, what: str) -> int:
        if self._current.type != _INT:
            raise self._fail(f"{what} (integer >= 1)")
        token = self._current
        value = int(token.text)
        if value < 1:
            raise DslSyntaxError(token.span, f"{what} (integer >= 1)", token.text)
        self._advance()
        return value

    def _identifier(self) -> str:
        token = self._current
        if token.type != _WORD or token.text in KEYWORDS:
            raise self._fail("an identifier")
        self._advance()
        return token.text

    def program(self) -> SyntaxTree:
        head = self._keyword("competition")
        name = self._string()
        self._semicolon()

        agents: list[AgentDecl] = []
        while self._current.type == _WORD and self._current.text == "agent":
            agents.append(self._agent_decl())

        nodes: list[NodeDecl] = []
        while self._current.type == _WORD and self._current.text in KIND_KEYWORDS:
            nodes.append(self._node_decl())

        if self._current.type != _EOF:
            raise self._fail("a phase declaration (swim/bike/run/ta1/ta2)" if nodes or agents else "a declaration")
        return SyntaxTree(head.span, name, tuple(agents), tuple(nodes))

    def _agent_decl(self) -> AgentDecl:
        head = self._keyword("agent")
        agent_id = self._positive_int("an agent id")
        token = self._current
        if token.type == _WORD and token.text in ("auto", "manual"):
            self._advance()
            kind = AgentKind.AUTO if token.text == "auto" else AgentKind.MANUAL
        else:
            raise self._fail("'auto' or 'manual'")
        address = self._string()
        self._semicolon()
        return AgentDecl(head.span, agent_id, kind, address)

    def _node_decl(self) -> NodeDecl:
        head = self._advance()  # the kind keyword, verified by the caller
        kind = KIND_KEYWORDS[head.text]
        name = self._identifier()
        self._keyword("laps")
        laps = self._positive_int("a lap count")
        self._keyword("agent")
        agent_id = self._positive_int("an agent id")
        self._semicolon()
        return NodeDecl(head.span, kind, name, laps, agent_id)


def parse(text: str) -> SyntaxTree:
    """Parse source text; raises DslSyntaxError at the first problem."""
    return _Parser(text).program()


# --- lowering ---------------------------------------------------------------


def lower(tree: SyntaxTree) -> CompetitionModel:
    """Build the model: node ids 1..n in declaration order, arrows between neighbours."""
    agents = []
    seen_agent_ids: set[int] = set()
    for decl in tree.agents:
        if decl.id in seen_agent_ids:
            raise DslSemanticError(decl.span, "DuplicateAgentId", f"agent id {decl.id} is already declared")
        seen_agent_ids.add(decl.id)
        agents.append(Agent(id=decl.id, kind=decl.kind, address=decl.address))

    nodes = []
    seen_names: set[str] = set()
    bindings = []
    for node_id, decl in enumerate(tree.nodes, start=1):
        if decl.name in seen_names:
            raise DslSemanticError(decl.span, "DuplicateNodeName", f"node name '{decl.name}' is already declared")
        seen_names.add(decl.name)
        if decl.agent_id not in seen_agent_ids:
            raise DslSemanticError(decl.span, "UnknownAgent", f"node '{decl.name}' references undeclared agent {decl.agent_id}")
        nodes.append(ActivityNode(id=node_id, kind=decl.kind, name=decl.name, laps=decl.laps))
        bindings.append(BindingArrow(node=node_id, agent=decl.agent_id))

    order = [OrderArrow(src=i, dst=i + 1) for i in range(1, len(nodes))]
    return CompetitionModel(tree.name, nodes, agents, order, bindings)


def parse_model(text: str) -> CompetitionModel:
    return lower(parse(text))


# --- canonical printer --------------------------------------------------------


def format_model(model: CompetitionModel) -> str:
    """Canonical source text: agents in model order, nodes in path order, aligned.

    Round trip: ``lower(parse(format_model(m))) == m`` whenever m uses the
    canonical node numbering that ``lower`` produces (ids 1..n in path order).
    """
    report = validate(model)
    if not report.ok:
        raise ValueError(f"model has validation errors: {', '.join(report.codes())}")
    for text in [model.name] + [a.address for a in model.agents]:
        if '"' in text or "\n" in text:
            raise ValueError(f"string {text!r} is not representable (no escapes in source text)")
    for node in model.nodes:
        if node.name in KEYWORDS:
            raise ValueError(f"node name {node.name!r} collides with a keyword")

    lines = [f'competition "{model.name}";']
    for agent in model.agents:
        lines.append(f'agent {agent.id} {agent.kind.value} "{agent.address}";')

    path = ordering(model)
    if path:
        by_id = {node.id: node for node in model.nodes}
        agent_of = {binding.node: binding.agent for binding in model.binding_arrows}
        kind_width = max(len(by_id[node_id].kind.value) for node_id in path)
        name_width = max(len(by_id[node_id].name) for node_id in path)
        for node_id in path:
            node = by_id[node_id]
            lines.append(
                f"{node.kind.value.ljust(kind_width)} {node.name.ljust(name_width)}"
                f" laps {node.laps} agent {agent_of[node_id]};"
            )
    return "\n".join(lines) + "\n"
