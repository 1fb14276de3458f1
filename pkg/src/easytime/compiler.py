"""Lowers a valid competition model into guarded-rule control-point programs.

Each measuring place k (the k-th node K on the race path) gets a fixed rule
block, evaluated strictly in order with every action applied immediately, so
a single crossing on the last lap decrements, finishes, and opens the next
phase in one evaluation:

    (laps[K] > 0)                       -> dec laps[K]
    (laps[K] == 0 and finish[K] unset)  -> upd finish[K]
    (finish[K] set and start[S] unset)  -> upd start[S]      # successor S only

``upd`` writes the triggering event's timestamp; ``dec`` subtracts one.
The start of the first node is set by the runtime's start-signal handling
(measuring place 0), never by a rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .model import CompetitionModel, ordering, validate


class VarKind(str, Enum):
    START = "start"
    FINISH = "finish"
    LAPS = "laps"


@dataclass(frozen=True)
class Variable:
    """Per-competitor slot, named by kind and the node it belongs to."""

    kind: VarKind
    node: int

    def render(self, node_names: dict[int, str]) -> str:
        return f"{self.kind.value.upper()}[{node_names.get(self.node, self.node)}]"


def start_var(node: int) -> Variable:
    return Variable(VarKind.START, node)


def finish_var(node: int) -> Variable:
    return Variable(VarKind.FINISH, node)


def laps_var(node: int) -> Variable:
    return Variable(VarKind.LAPS, node)


@dataclass(frozen=True)
class TrueGuard:
    def render(self, node_names: dict[int, str]) -> str:
        return "true"


@dataclass(frozen=True)
class Cmp:
    """Integer comparison; applies to laps variables only."""

    var: Variable
    op: str  # one of == != < > <= >=
    const: int

    def render(self, node_names: dict[int, str]) -> str:
        return f"{self.var.render(node_names)} {self.op} {self.const}"


@dataclass(frozen=True)
class IsSet:
    var: Variable

    def render(self, node_names: dict[int, str]) -> str:
        return f"{self.var.render(node_names)} set"


@dataclass(frozen=True)
class IsUnset:
    var: Variable

    def render(self, node_names: dict[int, str]) -> str:
        return f"{self.var.render(node_names)} unset"


@dataclass(frozen=True)
class And:
    parts: tuple["Guard", ...]

    def render(self, node_names: dict[int, str]) -> str:
        return " and ".join(part.render(node_names) for part in self.parts)


Guard = Union[TrueGuard, Cmp, IsSet, IsUnset, And]


@dataclass(frozen=True)
class Upd:
    """Set a start/finish variable to the triggering event's timestamp."""

    var: Variable

    def render(self, node_names: dict[int, str]) -> str:
        return f"upd {self.var.render(node_names)}"


@dataclass(frozen=True)
class Dec:
    """Decrement a laps variable by one."""

    var: Variable

    def render(self, node_names: dict[int, str]) -> str:
        return f"dec {self.var.render(node_names)}"


Action = Union[Upd, Dec]


@dataclass(frozen=True)
class Rule:
    guard: Guard
    action: Action

    def render(self, node_names: dict[int, str]) -> str:
        return f"({self.guard.render(node_names)}) -> {self.action.render(node_names)}"


@dataclass(frozen=True)
class ControlPointProgram:
    mp: int
    rules: tuple[Rule, ...]


@dataclass(frozen=True)
class CompiledProgram:
    """Everything the runtime needs: rule blocks, initial values, id tables.

    ``variables`` holds every variable with its initial value (laps from the
    model, start/finish unset). ``node_names`` and ``agent_ids`` let the
    runtime and the disassembler work without the source model.
    """

    name: str
    path: tuple[int, ...]
    programs: dict[int, ControlPointProgram]
    variables: tuple[tuple[Variable, Optional[int]], ...]
    node_names: dict[int, str]
    agent_ids: frozenset[int]

    @property
    def first_node(self) -> Optional[int]:
        return self.path[0] if self.path else None

    @property
    def last_node(self) -> Optional[int]:
        return self.path[-1] if self.path else None


def compile_model(model: CompetitionModel) -> CompiledProgram:
    """Deterministic lowering; rejects models with validation errors."""
    report = validate(model)
    if not report.ok:
        raise ValueError(f"model has validation errors: {', '.join(report.codes())}")

    path = tuple(ordering(model))
    by_id = {node.id: node for node in model.nodes}

    variables: list[tuple[Variable, Optional[int]]] = []
    for node_id in path:
        variables.append((start_var(node_id), None))
        variables.append((finish_var(node_id), None))
        variables.append((laps_var(node_id), by_id[node_id].laps))

    programs: dict[int, ControlPointProgram] = {}
    for k, node_id in enumerate(path, start=1):
        succ = path[k] if k < len(path) else None
        rules = [
            Rule(Cmp(laps_var(node_id), ">", 0), Dec(laps_var(node_id))),
            Rule(
                And((Cmp(laps_var(node_id), "==", 0), IsUnset(finish_var(node_id)))),
                Upd(finish_var(node_id)),
            ),
        ]
        if succ is not None:
            rules.append(
                Rule(And((IsSet(finish_var(node_id)), IsUnset(start_var(succ)))), Upd(start_var(succ)))
            )
        programs[k] = ControlPointProgram(k, tuple(rules))

    return CompiledProgram(
        name=model.name,
        path=path,
        programs=programs,
        variables=tuple(variables),
        node_names={node.id: node.name for node in model.nodes},
        agent_ids=frozenset(agent.id for agent in model.agents),
    )


def disassemble(program: CompiledProgram) -> str:
    """Stable, line-oriented listing; byte-identical for equal programs."""
    lines = [f'program "{program.name}"']
    for mp in sorted(program.programs):
        block = program.programs[mp]
        node_id = program.path[mp - 1]
        lines.append(f"mp[{mp}] node={program.node_names.get(node_id, node_id)}")
        for rule in block.rules:
            lines.append(rule.render(program.node_names))
    return "\n".join(lines) + "\n"
