import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_random_model
from easytime.model import (
    ActivityNode,
    Agent,
    AgentKind,
    BindingArrow,
    CompetitionModel,
    NodeKind,
    OrderArrow,
    SchemaError,
    ValidationCode,
    from_exchange,
    measuring_places,
    ordering,
    to_exchange,
    validate,
)


def chain_model(*kinds_laps, name="Chain"):
    """n nodes in declaration order, one auto agent bound to every node."""
    nodes = [
        ActivityNode(id=i + 1, kind=kind, name=f"n{i}", laps=laps)
        for i, (kind, laps) in enumerate(kinds_laps)
    ]
    order = [OrderArrow(i, i + 1) for i in range(1, len(nodes))]
    bindings = [BindingArrow(node.id, 1) for node in nodes]
    return CompetitionModel(name, nodes, [Agent(1, AgentKind.AUTO, "10.0.0.1")], order, bindings)


class TestValidate:
    def test_empty_model_is_valid(self):
        report = validate(CompetitionModel("X"))
        assert report.errors == ()
        assert report.warnings == ()

    def test_five_node_chain_valid(self, olympic_model):
        report = validate(olympic_model)
        assert report.ok
        assert report.warnings == ()

    def test_two_outgoing_arrows_not_a_simple_path(self):
        m = chain_model((NodeKind.SWIM, 1), (NodeKind.BIKE, 1), (NodeKind.RUN, 1))
        m = CompetitionModel(
            m.name, m.nodes, m.agents, list(m.order_arrows) + [OrderArrow(1, 3)], m.binding_arrows
        )
        assert "NotASimplePath" in validate(m).codes()

    def test_dangling_order_arrow(self):
        m = chain_model((NodeKind.SWIM, 1))
        m = CompetitionModel(m.name, m.nodes, m.agents, [OrderArrow(1, 9)], m.binding_arrows)
        codes = validate(m).codes()
        assert "DanglingArrow" in codes

    def test_dangling_binding(self):
        m = chain_model((NodeKind.SWIM, 1))
        m = CompetitionModel(m.name, m.nodes, m.agents, m.order_arrows, [BindingArrow(1, 99)])
        assert "DanglingArrow" in validate(m).codes()

    def test_duplicate_node_id(self):
        nodes = [
            ActivityNode(1, NodeKind.SWIM, "a", 1),
            ActivityNode(1, NodeKind.RUN, "b", 1),
        ]
        m = CompetitionModel("X", nodes, [Agent(1, AgentKind.AUTO, "e")], [], [BindingArrow(1, 1)])
        assert "DuplicateId" in validate(m).codes()

    def test_duplicate_agent_id(self):
        agents = [Agent(1, AgentKind.AUTO, "e"), Agent(1, AgentKind.MANUAL, "s")]
        m = CompetitionModel("X", [], agents, [], [])
        assert "DuplicateId" in validate(m).codes()

    def test_unbound_node(self):
        m = CompetitionModel("X", [ActivityNode(1, NodeKind.RUN, "r", 1)], [], [], [])
        assert "UnboundNode" in validate(m).codes()

    def test_multiple_bindings(self):
        m = chain_model((NodeKind.RUN, 1))
        m = CompetitionModel(
            m.name, m.nodes, m.agents, m.order_arrows, [BindingArrow(1, 1), BindingArrow(1, 1)]
        )
        assert "MultipleBindings" in validate(m).codes()

    def test_laps_not_positive(self):
        m = chain_model((NodeKind.RUN, 0))
        assert "LapsNotPositive" in validate(m).codes()

    def test_bad_node_name(self):
        m = chain_model((NodeKind.RUN, 1))
        bad = ActivityNode(1, NodeKind.RUN, "9lives", 1)
        m = CompetitionModel(m.name, [bad], m.agents, [], m.binding_arrows)
        assert "BadName" in validate(m).codes()

    def test_empty_model_name(self):
        assert "EmptyModelName" in validate(CompetitionModel("")).codes()

    def test_empty_agent_address(self):
        m = CompetitionModel("X", [], [Agent(1, AgentKind.MANUAL, "")], [], [])
        assert "EmptyAgentAddress" in validate(m).codes()

    def test_self_loop_not_a_simple_path(self):
        m = chain_model((NodeKind.RUN, 1))
        m = CompetitionModel(m.name, m.nodes, m.agents, [OrderArrow(1, 1)], m.binding_arrows)
        assert "NotASimplePath" in validate(m).codes()

    def test_cycle_not_a_simple_path(self):
        m = chain_model((NodeKind.SWIM, 1), (NodeKind.RUN, 1))
        m = CompetitionModel(
            m.name, m.nodes, m.agents, [OrderArrow(1, 2), OrderArrow(2, 1)], m.binding_arrows
        )
        assert "NotASimplePath" in validate(m).codes()

    def test_disconnected_chain(self):
        m = chain_model((NodeKind.SWIM, 1), (NodeKind.RUN, 1))
        m = CompetitionModel(m.name, m.nodes, m.agents, [], m.binding_arrows)
        assert "NotASimplePath" in validate(m).codes()

    def test_transition_at_path_end_warning(self):
        m = chain_model((NodeKind.TA1, 1), (NodeKind.RUN, 1))
        report = validate(m)
        assert report.ok
        assert any(w.code is ValidationCode.TRANSITION_AT_PATH_END for w in report.warnings)

    def test_unused_agent_warning(self):
        m = chain_model((NodeKind.RUN, 1))
        agents = list(m.agents) + [Agent(2, AgentKind.MANUAL, "spare")]
        report = validate(CompetitionModel(m.name, m.nodes, agents, m.order_arrows, m.binding_arrows))
        assert report.ok
        assert any(w.code is ValidationCode.UNUSED_AGENT and w.subject == 2 for w in report.warnings)

    def test_validate_is_pure(self):
        m = chain_model((NodeKind.SWIM, 2), (NodeKind.RUN, 1))
        assert validate(m) == validate(m)


class TestOrdering:
    def test_chain(self):
        m = chain_model((NodeKind.SWIM, 1), (NodeKind.TA1, 1), (NodeKind.BIKE, 1))
        assert ordering(m) == [1, 2, 3]

    def test_single_node(self):
        assert ordering(chain_model((NodeKind.RUN, 1))) == [1]

    def test_empty_model(self):
        assert ordering(CompetitionModel("X")) == []

    def test_olympic_path(self, olympic_model):
        assert ordering(olympic_model) == [1, 2, 3, 4, 5]

    def test_declaration_order_is_not_path_order(self):
        # path follows arrows, not node list order
        nodes = [
            ActivityNode(7, NodeKind.RUN, "r", 1),
            ActivityNode(3, NodeKind.SWIM, "s", 1),
        ]
        m = CompetitionModel(
            "X",
            nodes,
            [Agent(1, AgentKind.AUTO, "e")],
            [OrderArrow(3, 7)],
            [BindingArrow(7, 1), BindingArrow(3, 1)],
        )
        assert ordering(m) == [3, 7]

    def test_rejects_invalid_model(self):
        m = CompetitionModel("X", [ActivityNode(1, NodeKind.RUN, "r", 1)], [], [], [])
        with pytest.raises(ValueError):
            ordering(m)

    def test_path_properties_on_random_models(self):
        rng = random.Random(7)
        for _ in range(50):
            m = make_random_model(rng)
            path = ordering(m)
            assert len(path) == len(m.nodes)
            assert set(path) == {n.id for n in m.nodes}
            assert set(zip(path, path[1:])) == {(a.src, a.dst) for a in m.order_arrows}


class TestMeasuringPlaces:
    def test_three_node_path(self):
        m = chain_model((NodeKind.SWIM, 1), (NodeKind.TA1, 1), (NodeKind.BIKE, 1))
        assert measuring_places(m) == {1: 1, 2: 2, 3: 3}

    def test_empty(self):
        assert measuring_places(CompetitionModel("X")) == {}

    def test_olympic_five_entries(self, olympic_model):
        mps = measuring_places(olympic_model)
        assert sorted(mps.values()) == [1, 2, 3, 4, 5]


class TestExchange:
    def test_olympic_round_trip(self, olympic_model):
        assert from_exchange(to_exchange(olympic_model)) == olympic_model

    def test_round_trip_from_json_string(self, olympic_model):
        text = json.dumps(to_exchange(olympic_model))
        assert from_exchange(text) == olympic_model

    def test_positions_survive(self):
        m = chain_model((NodeKind.RUN, 1))
        node = ActivityNode(1, NodeKind.RUN, "n0", 1, position=(10, -20))
        agent = Agent(1, AgentKind.AUTO, "10.0.0.1", position=(0, 5))
        m = CompetitionModel(m.name, [node], [agent], [], m.binding_arrows)
        doc = to_exchange(m)
        assert doc["nodes"][0]["x"] == 10 and doc["nodes"][0]["y"] == -20
        assert from_exchange(doc) == m

    def test_unknown_node_kind_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["nodes"][0]["kind"] = "skate"
        with pytest.raises(SchemaError) as err:
            from_exchange(doc)
        assert "kind" in err.value.path

    def test_missing_laps_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        del doc["nodes"][2]["laps"]
        with pytest.raises(SchemaError) as err:
            from_exchange(doc)
        assert err.value.path == "$.nodes[2].laps"

    def test_unknown_field_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["color"] = "red"
        with pytest.raises(SchemaError):
            from_exchange(doc)

    def test_unknown_nested_field_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["agents"][0]["speed"] = 3
        with pytest.raises(SchemaError):
            from_exchange(doc)

    def test_manual_agent_with_endpoint_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["agents"][1]["endpoint"] = "10.0.0.9"  # manual agents carry "source"
        with pytest.raises(SchemaError):
            from_exchange(doc)

    def test_bool_is_not_an_integer(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["nodes"][0]["laps"] = True
        with pytest.raises(SchemaError):
            from_exchange(doc)

    def test_lonely_x_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["nodes"][0]["x"] = 5
        with pytest.raises(SchemaError) as err:
            from_exchange(doc)
        assert err.value.path.endswith(".y")

    def test_non_positive_id_rejected(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["nodes"][0]["id"] = 0
        with pytest.raises(SchemaError):
            from_exchange(doc)

    def test_zero_laps_is_schema_ok_but_validation_error(self, olympic_model):
        doc = to_exchange(olympic_model)
        doc["nodes"][0]["laps"] = 0
        m = from_exchange(doc)  # structurally fine
        assert "LapsNotPositive" in validate(m).codes()

    def test_not_json_rejected(self):
        with pytest.raises(SchemaError):
            from_exchange("{nope")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32))
    def test_round_trip_property(self, seed):
        m = make_random_model(random.Random(seed), with_positions=True)
        assert from_exchange(to_exchange(m)) == m
