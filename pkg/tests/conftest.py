import random
from pathlib import Path

import pytest

from easytime.dsl import parse_model
from easytime.model import (
    ActivityNode,
    Agent,
    AgentKind,
    BindingArrow,
    CompetitionModel,
    NodeKind,
    OrderArrow,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
OLYMPIC_ET = REPO_ROOT / "models" / "olympic.et"


@pytest.fixture(scope="session")
def olympic_source() -> str:
    return OLYMPIC_ET.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def olympic_model(olympic_source) -> CompetitionModel:
    return parse_model(olympic_source)


def make_random_model(
    rng: random.Random,
    max_nodes: int = 6,
    max_laps: int = 5,
    canonical_ids: bool = False,
    with_positions: bool = False,
) -> CompetitionModel:
    """A random model that passes validation.

    ``canonical_ids`` numbers nodes 1..n in path order (the shape ``lower``
    produces), which the source-text round trip requires; otherwise ids are
    arbitrary and node list order is shuffled against the path.
    """
    n = rng.randint(1, max_nodes)
    if canonical_ids:
        node_ids = list(range(1, n + 1))
    else:
        node_ids = rng.sample(range(1, 1000), n)

    agent_count = rng.randint(1, 3)
    agent_ids = sorted(rng.sample(range(1, 100), agent_count))
    agents = []
    for agent_id in agent_ids:
        if rng.random() < 0.5:
            agents.append(Agent(agent_id, AgentKind.AUTO, f"10.0.0.{agent_id}", _pos(rng, with_positions)))
        else:
            agents.append(Agent(agent_id, AgentKind.MANUAL, f"desk{agent_id}", _pos(rng, with_positions)))

    nodes = []
    bindings = []
    for idx, node_id in enumerate(node_ids):
        kind = rng.choice(list(NodeKind))
        nodes.append(
            ActivityNode(
                id=node_id,
                kind=kind,
                name=f"{kind.value[0]}{idx}",
                laps=rng.randint(1, max_laps),
                position=_pos(rng, with_positions),
            )
        )
        bindings.append(BindingArrow(node=node_id, agent=rng.choice(agent_ids)))
    order = [OrderArrow(src=a, dst=b) for a, b in zip(node_ids, node_ids[1:])]

    if not canonical_ids:
        shuffled = list(nodes)
        rng.shuffle(shuffled)
        nodes = shuffled
        rng.shuffle(order)
        rng.shuffle(bindings)

    return CompetitionModel(
        name=f"Race {rng.randint(1, 999)}",
        nodes=nodes,
        agents=agents,
        order_arrows=order,
        binding_arrows=bindings,
    )


def _pos(rng: random.Random, enabled: bool):
    if not enabled or rng.random() < 0.3:
        return None
    return (rng.randint(-500, 500), rng.randint(-500, 500))
