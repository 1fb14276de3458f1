import random
from pathlib import Path

import pytest

from conftest import make_random_model
from easytime.compiler import (
    And,
    Cmp,
    Dec,
    IsSet,
    IsUnset,
    Upd,
    compile_model,
    disassemble,
    finish_var,
    laps_var,
    start_var,
)
from easytime.dsl import parse_model
from easytime.model import ActivityNode, CompetitionModel, NodeKind

GOLDEN = Path(__file__).parent / "data" / "olympic.dis"


def test_rule_block_for_node_with_successor():
    m = parse_model('competition "X"; agent 1 manual "m"; swim s laps 2 agent 1; ta1 t laps 1 agent 1;')
    program = compile_model(m)
    rules = program.programs[1].rules
    assert rules[0] == rules[0].__class__(Cmp(laps_var(1), ">", 0), Dec(laps_var(1)))
    assert rules[1].guard == And((Cmp(laps_var(1), "==", 0), IsUnset(finish_var(1))))
    assert rules[1].action == Upd(finish_var(1))
    assert rules[2].guard == And((IsSet(finish_var(1)), IsUnset(start_var(2))))
    assert rules[2].action == Upd(start_var(2))


def test_terminal_node_has_two_rules(olympic_model):
    program = compile_model(olympic_model)
    assert len(program.programs[5].rules) == 2


def test_rule_counts_olympic(olympic_model):
    program = compile_model(olympic_model)
    assert {mp: len(block.rules) for mp, block in program.programs.items()} == {1: 3, 2: 3, 3: 3, 4: 3, 5: 2}
    assert sum(len(block.rules) for block in program.programs.values()) == 14


def test_empty_model_compiles_to_nothing():
    program = compile_model(CompetitionModel("Empty"))
    assert program.programs == {}
    assert program.path == ()
    assert program.variables == ()


def test_variable_table_initial_values(olympic_model):
    program = compile_model(olympic_model)
    table = dict(program.variables)
    assert table[laps_var(1)] == 2
    assert table[laps_var(3)] == 4
    assert table[start_var(1)] is None
    assert table[finish_var(5)] is None
    assert len(program.variables) == 15


def test_rejects_invalid_model():
    m = CompetitionModel("X", [ActivityNode(1, NodeKind.RUN, "r", 1)], [], [], [])
    with pytest.raises(ValueError):
        compile_model(m)


def test_disassembly_first_rule_line(olympic_model):
    text = disassemble(compile_model(olympic_model))
    lines = text.splitlines()
    assert lines[0] == 'program "Olympic Triathlon"'
    assert lines[1] == "mp[1] node=s"
    assert lines[2] == "(LAPS[s] > 0) -> dec LAPS[s]"


def test_disassembly_matches_golden(olympic_model):
    assert disassemble(compile_model(olympic_model)) == GOLDEN.read_text(encoding="utf-8")


def test_disassembly_deterministic(olympic_model):
    a = disassemble(compile_model(olympic_model))
    b = disassemble(compile_model(olympic_model))
    assert a == b


def test_compile_is_pure(olympic_model):
    assert compile_model(olympic_model) == compile_model(olympic_model)


def test_shape_and_typing_on_random_models():
    rng = random.Random(99)
    for _ in range(40):
        m = make_random_model(rng)
        program = compile_model(m)
        n = len(program.path)
        assert sum(len(b.rules) for b in program.programs.values()) == 3 * n - 1
        declared = {var for var, _ in program.variables}
        for block in program.programs.values():
            for rule in block.rules:
                assert rule.action.var in declared
                for guard in _leaves(rule.guard):
                    if isinstance(guard, Cmp):
                        assert guard.var.kind.value == "laps"
                    if isinstance(guard, (IsSet, IsUnset)):
                        assert guard.var in declared


def _leaves(guard):
    if isinstance(guard, And):
        for part in guard.parts:
            yield from _leaves(part)
    else:
        yield guard
