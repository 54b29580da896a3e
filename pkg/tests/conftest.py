import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from quantal_hierarchy.game_tree import NodeSpec, Terminal, build_tree

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

payoff_values = st.integers(-10, 10).map(float) | st.floats(-5, 5, allow_nan=False, width=32).map(float)


@st.composite
def tree_specs(
    draw,
    max_levels: int = 3,
    max_actions: int = 3,
    players: int | None = None,
    with_priors: bool = False,
    with_utilities: bool = False,
    min_actions: int = 1,
    integer_payoffs: bool = False,
):
    """Random small game trees as (node descriptions, number of players)."""
    n_players = players if players is not None else draw(st.integers(1, 2))
    values = st.integers(-10, 10).map(float) if integer_payoffs else payoff_values
    nodes: list[NodeSpec] = []
    counter = [0]

    def make(level: int) -> int:
        nid = counter[0]
        counter[0] += 1
        k = draw(st.integers(min_actions, max_actions))
        children = []
        for _ in range(k):
            if level + 1 < max_levels and draw(st.booleans()):
                children.append(make(level + 1))
            else:
                children.append(Terminal(tuple(draw(values) for _ in range(n_players))))
        prior = None
        if with_priors and draw(st.booleans()):
            w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k)))
            prior = list(w / w.sum())
        util = None
        if with_utilities and draw(st.booleans()):
            util = draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=k, max_size=k))
        player = draw(st.integers(0, n_players - 1))
        nodes.append(NodeSpec(nid, player, tuple(range(k)), children, prior, util))
        return nid

    make(0)
    return nodes, n_players


def build(spec):
    nodes, players = spec
    return build_tree(nodes, players)


@pytest.fixture(scope="session")
def ultimatum_0_50():
    from quantal_hierarchy.games import BargainSpec, build_bargain

    return build_bargain(BargainSpec(stages=1, v1=0, v2=50))


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
