import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import build, tree_specs
from oracles import as_tree_policy, leaf_probabilities, path_value
from quantal_hierarchy.game_tree import (
    CycleDetected,
    DanglingChild,
    EmptyActions,
    MissingNodePolicy,
    NodeSpec,
    PayoffArityMismatch,
    Policy,
    Terminal,
    TreeError,
    build_tree,
    dumps_tree,
    expected_payoff,
    leaf_distribution,
    loads_tree,
    uniform_policy,
)
from quantal_hierarchy.games import BargainSpec, CentipedeSpec, build_bargain, build_centipede


def coin():
    return build_tree([NodeSpec("r", 0, ("lo", "hi"), [Terminal((0.0,)), Terminal((10.0,))])], players=1)


def test_minimal_tree():
    t = coin()
    assert t.node_count == 1
    assert t.action_count == 2
    assert np.all(t.is_terminal)


def test_ultimatum_tree_shape():
    t = build_bargain(BargainSpec(stages=1, v1=10, v2=10))
    assert t.node_count == 1 + 101
    assert t.labels[0] == tuple(range(101))
    assert all(t.labels[n] == ("accept", "reject") for n in range(1, 102))
    assert t.max_depth == 1


def test_dangling_child():
    nodes = [NodeSpec(0, 0, ("a", "b"), [1, Terminal((0.0,))])]
    with pytest.raises(DanglingChild):
        build_tree(nodes, players=1)


def test_dangling_child_index_beyond_count():
    nodes = [
        NodeSpec(0, 0, ("a",), [1]),
        NodeSpec(1, 0, ("a",), [5]),
    ]
    with pytest.raises(DanglingChild):
        build_tree(nodes, players=1)


def test_cycle_detected():
    loop = [
        NodeSpec(1, 0, ("a", "b"), [2, Terminal((1.0,))]),
        NodeSpec(2, 0, ("a",), [1]),
    ]
    with pytest.raises(CycleDetected):
        build_tree(loop, players=1)
    detached = [NodeSpec(0, 0, ("a",), [Terminal((0.0,))])] + loop
    with pytest.raises(CycleDetected):
        build_tree(detached, players=1)
    with pytest.raises(CycleDetected):
        build_tree([NodeSpec(0, 0, ("a",), [0])], players=1)


def test_payoff_arity():
    with pytest.raises(PayoffArityMismatch):
        build_tree([NodeSpec(0, 0, ("a",), [Terminal((1.0, 2.0))])], players=1)


def test_empty_actions():
    with pytest.raises(EmptyActions):
        build_tree([NodeSpec(0, 0, (), [])], players=1)


def test_bad_player_and_prior():
    with pytest.raises(TreeError):
        build_tree([NodeSpec(0, 1, ("a",), [Terminal((1.0,))])], players=1)
    with pytest.raises(TreeError):
        build_tree([NodeSpec(0, 0, ("a", "b"), [Terminal((1.0,)), Terminal((0.0,))], prior=[0.7, 0.7])], players=1)


def test_breadth_first_indices():
    nodes = [
        NodeSpec("deep", 0, ("x",), [Terminal((1.0,))]),
        NodeSpec("mid", 0, ("x", "y"), ["deep", Terminal((2.0,))]),
        NodeSpec("root", 0, ("x", "y"), ["mid", "leafnode"]),
        NodeSpec("leafnode", 0, ("x",), [Terminal((3.0,))]),
    ]
    t = build_tree(nodes, players=1)
    assert t.node_ids == ["root", "mid", "leafnode", "deep"]
    assert list(t.node_depth) == [0, 1, 1, 2]


def test_uniform_expected_payoff():
    t = coin()
    assert expected_payoff(t, uniform_policy(t), 0) == 5.0


def test_centipede_first_take():
    t = build_centipede(CentipedeSpec(moves=4))
    probs = np.zeros(t.action_count)
    probs[t.action_slice(0)] = [1.0, 0.0]
    for n in range(1, t.node_count):
        probs[t.action_slice(n)] = [0.5, 0.5]
    assert expected_payoff(t, Policy(t, probs), 0) == pytest.approx(0.4)


def test_missing_node_policy():
    t = coin()
    other = build_centipede(CentipedeSpec(moves=4))
    with pytest.raises(MissingNodePolicy):
        expected_payoff(t, uniform_policy(other), 0)


def random_policy(tree, rng):
    probs = rng.random(tree.action_count) + 1e-3
    sums = np.add.reduceat(probs, tree.act_start[:-1])
    return Policy(tree, probs / np.repeat(sums, np.diff(tree.act_start)))


def test_three_level_binary_enumeration():
    nodes = []
    leaf = iter(range(100))
    for d, ids in enumerate([["r"], ["a", "b"], ["aa", "ab", "ba", "bb"]]):
        for nid in ids:
            if d < 2:
                kids = [nid + "a" if nid != "r" else "a", nid + "b" if nid != "r" else "b"]
            else:
                kids = [Terminal((float(next(leaf)), -1.0)), Terminal((float(next(leaf)) ** 1.5, 2.0))]
            nodes.append(NodeSpec(nid, d % 2, ("L", "R"), kids))
    t = build_tree(nodes, players=2)
    pol = random_policy(t, np.random.default_rng(3))
    by_id = {t.node_ids[n]: pol.node(n) for n in range(t.node_count)}
    want = path_value(nodes, 2, by_id)
    assert expected_payoff(t, pol, 0) == pytest.approx(want[0], rel=1e-12)
    assert expected_payoff(t, pol, 1) == pytest.approx(want[1], rel=1e-12)


@given(tree_specs(), st.integers(0, 2**32 - 1))
def test_expected_payoff_within_leaf_range(spec, seed):
    nodes, players = spec
    t = build(spec)
    pol = random_policy(t, np.random.default_rng(seed))
    for j in range(players):
        leaf = t.act_payoff[t.is_terminal, j]
        v = expected_payoff(t, pol, j)
        assert leaf.min() - 1e-9 <= v <= leaf.max() + 1e-9


@given(tree_specs(with_priors=True, with_utilities=True))
def test_serialize_roundtrip(spec):
    t = build(spec)
    text = dumps_tree(t)
    back = loads_tree(text)
    assert back.node_count == t.node_count
    for name in ("node_player", "node_depth", "act_start", "act_child"):
        np.testing.assert_array_equal(getattr(back, name), getattr(t, name))
    np.testing.assert_array_equal(back.act_payoff, t.act_payoff)
    np.testing.assert_allclose(back.act_prior, t.act_prior, rtol=0, atol=0)
    assert back.labels == t.labels
    if t.act_utility is None:
        assert back.act_utility is None
    else:
        np.testing.assert_array_equal(back.act_utility, t.act_utility)
    assert dumps_tree(back) == text
    json.loads(text)


@given(tree_specs(), st.integers(0, 2**32 - 1))
def test_leaf_probabilities_sum_to_one(spec, seed):
    nodes, _ = spec
    t = build(spec)
    pol = random_policy(t, np.random.default_rng(seed))
    leaves = leaf_distribution(pol)
    assert leaves.sum() == pytest.approx(1.0, abs=1e-9)
    by_id = {t.node_ids[n]: pol.node(n) for n in range(t.node_count)}
    assert sorted(leaves) == pytest.approx(sorted(leaf_probabilities(nodes, by_id)), abs=1e-12)
    np.testing.assert_array_equal(as_tree_policy(t, by_id), pol.probs)


def test_policy_validation():
    t = coin()
    with pytest.raises(ValueError):
        Policy(t, np.array([0.7, 0.7])).validate()
    Policy(t, np.array([0.25, 0.75])).validate()
