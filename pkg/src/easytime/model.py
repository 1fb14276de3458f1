"""Competition meta-model: node/agent graph, well-formedness checks, exchange format.

A competition is a graph of activity nodes (the five phase kinds) and agents,
wired by order arrows (race order) and binding arrows (node -> agent). The
types here are deliberately permissive: anything structurally representable
can be constructed, and ``validate`` reports every well-formedness problem
instead of raising. A model is *valid* iff its report has no errors.

The exchange document is the JSON form edited by the visual builder and
accepted by the server. ``from_exchange`` rejects structural problems
(wrong types, unknown fields, unknown kinds) as :class:`SchemaError`;
semantic problems (dangling arrows, broken path, ...) are left to
``validate`` so their error codes survive to the API surface.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class NodeKind(str, Enum):
    """The five activity kinds a competition may be built from."""

    SWIM = "swim"
    BIKE = "bike"
    RUN = "run"
    TA1 = "ta1"
    TA2 = "ta2"

    @property
    def is_transition(self) -> bool:
        return self in (NodeKind.TA1, NodeKind.TA2)


class AgentKind(str, Enum):
    """How an agent feeds crossings in: a networked device or a human."""

    AUTO = "auto"
    MANUAL = "manual"


@dataclass(frozen=True)
class ActivityNode:
    """One phase of the race: crossed ``laps`` times at its measuring place."""

    id: int
    kind: NodeKind
    name: str
    laps: int
    position: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class Agent:
    """Event source. ``address`` is the endpoint (auto) or label (manual)."""

    id: int
    kind: AgentKind
    address: str
    position: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class OrderArrow:
    """Race-order edge between two activity nodes."""

    src: int
    dst: int


@dataclass(frozen=True)
class BindingArrow:
    """Assigns the agent that reports crossings for a node."""

    node: int
    agent: int


@dataclass(frozen=True)
class CompetitionModel:
    name: str
    nodes: tuple[ActivityNode, ...] = ()
    agents: tuple[Agent, ...] = ()
    order_arrows: tuple[OrderArrow, ...] = ()
    binding_arrows: tuple[BindingArrow, ...] = ()

    def __post_init__(self) -> None:
        # Accept any iterable, store immutably so models are hashable/shareable.
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "order_arrows", tuple(self.order_arrows))
        object.__setattr__(self, "binding_arrows", tuple(self.binding_arrows))

    def node_by_id(self, node_id: int) -> ActivityNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)


class ValidationCode(str, Enum):
    # errors
    DUPLICATE_ID = "DuplicateId"
    DANGLING_ARROW = "DanglingArrow"
    NOT_A_SIMPLE_PATH = "NotASimplePath"
    UNBOUND_NODE = "UnboundNode"
    MULTIPLE_BINDINGS = "MultipleBindings"
    LAPS_NOT_POSITIVE = "LapsNotPositive"
    BAD_NAME = "BadName"
    EMPTY_MODEL_NAME = "EmptyModelName"
    EMPTY_AGENT_ADDRESS = "EmptyAgentAddress"
    # warnings
    TRANSITION_AT_PATH_END = "TransitionAtPathEnd"
    UNUSED_AGENT = "UnusedAgent"


@dataclass(frozen=True)
class Finding:
    code: ValidationCode
    message: str
    subject: Optional[int] = None  # offending node/agent id, None if model-level


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Finding, ...] = ()
    warnings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [f.code.value for f in self.errors]


class SchemaError(ValueError):
    """Exchange document does not match the schema. ``path`` points at the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def validate(model: CompetitionModel) -> ValidationReport:
    """Check well-formedness. Pure: equal models yield equal reports."""
    errors: list[Finding] = []
    warnings: list[Finding] = []

    if not model.name:
        errors.append(Finding(ValidationCode.EMPTY_MODEL_NAME, "model name is empty"))

    node_ids: set[int] = set()
    for node in model.nodes:
        if node.id in node_ids:
            errors.append(
                Finding(ValidationCode.DUPLICATE_ID, f"node id {node.id} appears more than once", node.id)
            )
        node_ids.add(node.id)
        if node.laps < 1:
            errors.append(
                Finding(ValidationCode.LAPS_NOT_POSITIVE, f"node '{node.name}' has laps {node.laps}", node.id)
            )
        if not NAME_RE.match(node.name):
            errors.append(
                Finding(ValidationCode.BAD_NAME, f"node name {node.name!r} is not an identifier", node.id)
            )

    agent_ids: set[int] = set()
    for agent in model.agents:
        if agent.id in agent_ids:
            errors.append(
                Finding(ValidationCode.DUPLICATE_ID, f"agent id {agent.id} appears more than once", agent.id)
            )
        agent_ids.add(agent.id)
        if not agent.address:
            errors.append(
                Finding(
                    ValidationCode.EMPTY_AGENT_ADDRESS,
                    f"agent {agent.id} has an empty {'endpoint' if agent.kind is AgentKind.AUTO else 'source'}",
                    agent.id,
                )
            )

    for arrow in model.order_arrows:
        for end in (arrow.src, arrow.dst):
            if end not in node_ids:
                errors.append(
                    Finding(ValidationCode.DANGLING_ARROW, f"order arrow {arrow.src}->{arrow.dst} references unknown node {end}", end)
                )
    for binding in model.binding_arrows:
        if binding.node not in node_ids:
            errors.append(
                Finding(ValidationCode.DANGLING_ARROW, f"binding {binding.node}->{binding.agent} references unknown node {binding.node}", binding.node)
            )
        if binding.agent not in agent_ids:
            errors.append(
                Finding(ValidationCode.DANGLING_ARROW, f"binding {binding.node}->{binding.agent} references unknown agent {binding.agent}", binding.agent)
            )

    path = _path_or_error(model, node_ids, errors)

    bindings_per_node = {node.id: 0 for node in model.nodes}
    for binding in model.binding_arrows:
        if binding.node in bindings_per_node:
            bindings_per_node[binding.node] += 1
    for node in model.nodes:
        count = bindings_per_node[node.id]
        if count == 0:
            errors.append(Finding(ValidationCode.UNBOUND_NODE, f"node '{node.name}' has no agent binding", node.id))
        elif count > 1:
            errors.append(
                Finding(ValidationCode.MULTIPLE_BINDINGS, f"node '{node.name}' has {count} agent bindings", node.id)
            )

    if path:
        by_id = {node.id: node for node in model.nodes}
        for end_id in {path[0], path[-1]}:
            node = by_id[end_id]
            if node.kind.is_transition:
                warnings.append(
                    Finding(
                        ValidationCode.TRANSITION_AT_PATH_END,
                        f"transition node '{node.name}' is at the {'start' if end_id == path[0] else 'end'} of the path",
                        node.id,
                    )
                )
    used_agents = {binding.agent for binding in model.binding_arrows}
    for agent in model.agents:
        if agent.id not in used_agents:
            warnings.append(Finding(ValidationCode.UNUSED_AGENT, f"agent {agent.id} is bound to no node", agent.id))

    return ValidationReport(tuple(errors), tuple(warnings))


def _path_or_error(
    model: CompetitionModel, node_ids: set[int], errors: list[Finding]
) -> Optional[list[int]]:
    """Resolve the order-arrow chain, appending NotASimplePath on failure.

    Only arrows between known nodes participate; dangling ones are already
    reported. Returns the path (node ids, race order) or None.
    """
    if not model.nodes:
        return None

    succ: dict[int, int] = {}
    pred: dict[int, int] = {}
    for arrow in model.order_arrows:
        if arrow.src not in node_ids or arrow.dst not in node_ids:
            continue
        if arrow.src == arrow.dst:
            errors.append(
                Finding(ValidationCode.NOT_A_SIMPLE_PATH, f"order arrow loops node {arrow.src} to itself", arrow.src)
            )
            return None
        if arrow.src in succ:
            errors.append(
                Finding(ValidationCode.NOT_A_SIMPLE_PATH, f"node {arrow.src} has more than one outgoing order arrow", arrow.src)
            )
            return None
        if arrow.dst in pred:
            errors.append(
                Finding(ValidationCode.NOT_A_SIMPLE_PATH, f"node {arrow.dst} has more than one incoming order arrow", arrow.dst)
            )
            return None
        succ[arrow.src] = arrow.dst
        pred[arrow.dst] = arrow.src

    starts = [node.id for node in model.nodes if node.id not in pred]
    if len(starts) != 1:
        errors.append(
            Finding(
                ValidationCode.NOT_A_SIMPLE_PATH,
                "order arrows do not form a single chain over all nodes"
                if starts
                else "order arrows form a cycle",
            )
        )
        return None

    path = [starts[0]]
    seen = {starts[0]}
    while path[-1] in succ:
        nxt = succ[path[-1]]
        if nxt in seen:  # unreachable given in-degree check, kept for safety
            errors.append(Finding(ValidationCode.NOT_A_SIMPLE_PATH, "order arrows form a cycle", nxt))
            return None
        path.append(nxt)
        seen.add(nxt)

    if len(path) != len(set(node_ids)):
        errors.append(
            Finding(ValidationCode.NOT_A_SIMPLE_PATH, "order arrows do not visit every node in one chain")
        )
        return None
    return path


def ordering(model: CompetitionModel) -> list[int]:
    """Node ids in race order. Requires a model with no validation errors."""
    report = validate(model)
    if not report.ok:
        raise ValueError(f"model has validation errors: {', '.join(report.codes())}")
    if not model.nodes:
        return []
    path = _path_or_error(model, {n.id for n in model.nodes}, [])
    assert path is not None
    return path


def measuring_places(model: CompetitionModel) -> dict[int, int]:
    """Map node id -> measuring-place id (1-based race order; 0 is the start signal)."""
    return {node_id: k for k, node_id in enumerate(ordering(model), start=1)}


# --- exchange document ----------------------------------------------------
#
# {"name": ..., "nodes": [{id, kind, name, laps, x?, y?}],
#  "agents": [{id, kind: "auto"|"manual", endpoint|source, x?, y?}],
#  "order": [{from, to}], "bindings": [{node, agent}]}

_NODE_KINDS = {k.value for k in NodeKind}


def to_exchange(model: CompetitionModel) -> dict:
    """Render the model as an exchange document (plain JSON-ready dict)."""
    doc: dict = {"name": model.name, "nodes": [], "agents": [], "order": [], "bindings": []}
    for node in model.nodes:
        entry: dict = {"id": node.id, "kind": node.kind.value, "name": node.name, "laps": node.laps}
        if node.position is not None:
            entry["x"], entry["y"] = node.position
        doc["nodes"].append(entry)
    for agent in model.agents:
        entry = {"id": agent.id, "kind": agent.kind.value}
        entry["endpoint" if agent.kind is AgentKind.AUTO else "source"] = agent.address
        if agent.position is not None:
            entry["x"], entry["y"] = agent.position
        doc["agents"].append(entry)
    for arrow in model.order_arrows:
        doc["order"].append({"from": arrow.src, "to": arrow.dst})
    for binding in model.binding_arrows:
        doc["bindings"].append({"node": binding.node, "agent": binding.agent})
    return doc


def from_exchange(document: Union[str, dict]) -> CompetitionModel:
    """Parse an exchange document. Raises SchemaError on any structural problem."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SchemaError("$", "document must be an object")

    _reject_unknown("$", document, {"name", "nodes", "agents", "order", "bindings"})
    name = _require_str("$.name", document, "name")

    nodes = []
    for i, raw in enumerate(_require_list("$.nodes", document, "nodes")):
        path = f"$.nodes[{i}]"
        _require_obj(path, raw)
        _reject_unknown(path, raw, {"id", "kind", "name", "laps", "x", "y"})
        kind_str = _require_str(f"{path}.kind", raw, "kind")
        if kind_str not in _NODE_KINDS:
            raise SchemaError(f"{path}.kind", f"unknown node kind {kind_str!r}")
        nodes.append(
            ActivityNode(
                id=_require_id(f"{path}.id", raw),
                kind=NodeKind(kind_str),
                name=_require_str(f"{path}.name", raw, "name"),
                laps=_require_int(f"{path}.laps", raw, "laps"),
                position=_optional_position(path, raw),
            )
        )

    agents = []
    for i, raw in enumerate(_require_list("$.agents", document, "agents")):
        path = f"$.agents[{i}]"
        _require_obj(path, raw)
        kind_str = _require_str(f"{path}.kind", raw, "kind")
        if kind_str == "auto":
            address_field = "endpoint"
        elif kind_str == "manual":
            address_field = "source"
        else:
            raise SchemaError(f"{path}.kind", f"unknown agent kind {kind_str!r}")
        _reject_unknown(path, raw, {"id", "kind", address_field, "x", "y"})
        agents.append(
            Agent(
                id=_require_id(f"{path}.id", raw),
                kind=AgentKind(kind_str),
                address=_require_str(f"{path}.{address_field}", raw, address_field),
                position=_optional_position(path, raw),
            )
        )

    order = []
    for i, raw in enumerate(_require_list("$.order", document, "order")):
        path = f"$.order[{i}]"
        _require_obj(path, raw)
        _reject_unknown(path, raw, {"from", "to"})
        order.append(OrderArrow(src=_require_id(f"{path}.from", raw, "from"), dst=_require_id(f"{path}.to", raw, "to")))

    bindings = []
    for i, raw in enumerate(_require_list("$.bindings", document, "bindings")):
        path = f"$.bindings[{i}]"
        _require_obj(path, raw)
        _reject_unknown(path, raw, {"node", "agent"})
        bindings.append(
            BindingArrow(node=_require_id(f"{path}.node", raw, "node"), agent=_require_id(f"{path}.agent", raw, "agent"))
        )

    return CompetitionModel(name=name, nodes=nodes, agents=agents, order_arrows=order, binding_arrows=bindings)


def _require_obj(path: str, raw: object) -> None:
    if not isinstance(raw, dict):
        raise SchemaError(path, "must be an object")


def _reject_unknown(path: str, raw: dict, allowed: set[str]) -> None:
    for key in raw:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown field")


def _require_list(path: str, raw: dict, key: str) -> list:
    value = raw.get(key)
    if value is None:
        raise SchemaError(path, "required field is missing")
    if not isinstance(value, list):
        raise SchemaError(path, "must be an array")
    return value


def _require_str(path: str, raw: dict, key: str) -> str:
    value = raw.get(key)
    if value is None:
        raise SchemaError(path, "required field is missing")
    if not isinstance(value, str):
        raise SchemaError(path, "must be a string")
    return value


def _require_int(path: str, raw: dict, key: str) -> int:
    value = raw.get(key)
    if value is None:
        raise SchemaError(path, "required field is missing")
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, "must be an integer")
    return value


def _require_id(path: str, raw: dict, key: str = "id") -> int:
    value = _require_int(path, raw, key)
    if value < 1:
        raise SchemaError(path, "must be a positive integer")
    return value


def _optional_position(path: str, raw: dict) -> Optional[tuple[int, int]]:
    has_x, has_y = "x" in raw, "y" in raw
    if not has_x and not has_y:
        return None
    if has_x != has_y:
        raise SchemaError(f"{path}.{'y' if has_x else 'x'}", "x and y must be given together")
    return (_require_int(f"{path}.x", raw, "x"), _require_int(f"{path}.y", raw, "y"))
