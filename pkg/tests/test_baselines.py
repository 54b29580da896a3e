import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import build, tree_specs
from oracles import enumerate_deterministic, index, path_value
from quantal_hierarchy.baselines import (
    CHParams,
    QREParams,
    agent_qre,
    backward_induction,
    best_response,
    cognitive_hierarchy_policy,
    level_k_policy,
    logit_qre_fixed_point,
    mix_policies,
    poisson_weights,
)
from quantal_hierarchy.game_tree import (
    NodeSpec,
    PseudoSequentialGame,
    Terminal,
    build_tree,
    expected_payoff,
    leaf_distribution,
    uniform_policy,
)
from quantal_hierarchy.games import (
    BargainSpec,
    BeautySpec,
    CentipedeSpec,
    MarketSpec,
    build_bargain,
    build_beauty,
    build_centipede,
    build_market,
)


def softmax(x):
    e = np.exp(np.asarray(x, dtype=float) - np.max(x))
    return e / e.sum()


@pytest.fixture(scope="module")
def beauty():
    return build_beauty(BeautySpec())


@pytest.fixture(scope="module")
def twostage():
    return build_bargain(BargainSpec(stages=2, disagreement=0.9))


def fixture_trees():
    return [
        build_centipede(CentipedeSpec(moves=4)),
        build_centipede(CentipedeSpec(moves=6)),
        build_bargain(BargainSpec(stages=1, v1=10, v2=10)),
        build_bargain(BargainSpec(stages=1, v1=70, v2=10)),
    ]


# -- parameters ------------------------------------------------------------------


def test_param_validation():
    with pytest.raises(ValueError):
        QREParams(-1.0)
    with pytest.raises(ValueError):
        QREParams(1.0, fp_tol=0.0)
    with pytest.raises(ValueError):
        QREParams(1.0, damping=0.0)
    with pytest.raises(ValueError):
        CHParams(math.nan)


@pytest.mark.parametrize("tau", [0.0, 0.3, 1.5, 4.0, 9.9])
def test_poisson_weights_normalised(tau):
    w = poisson_weights(tau, 30)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0)


def test_poisson_weights_cap():
    w = poisson_weights(1.5, 10)
    raw = np.array([math.exp(-1.5) * 1.5**k / math.factorial(k) for k in range(11)])
    np.testing.assert_allclose(w, raw / raw.sum(), rtol=1e-13)
    assert list(poisson_weights(0.0, 30)) == [1.0]


# -- simultaneous QRE ------------------------------------------------------------


def test_qre_zero_lambda_uniform(beauty):
    res = logit_qre_fixed_point(beauty, QREParams(0.0))
    np.testing.assert_array_equal(res.probs, np.full(101, 1 / 101))
    assert res.converged


def test_qre_constant_payoffs():
    game = PseudoSequentialGame("const", ("a", "b"), lambda p: np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    for lam in (0.5, 2.0, 7.0):
        res = logit_qre_fixed_point(game, QREParams(lam))
        np.testing.assert_allclose(res.probs, softmax([lam, 0.0]), atol=1e-12)


def test_qre_constant_payoffs_three_actions():
    game = PseudoSequentialGame("const3", ("a", "b", "c"), lambda p: np.array([1.0, 0.0, 0.5]), np.full(3, 1 / 3))
    res = logit_qre_fixed_point(game, QREParams(3.0))
    np.testing.assert_allclose(res.probs, softmax([3.0, 0.0, 1.5]), atol=1e-10)


@pytest.mark.parametrize("c", MarketSpec().capacities)
def test_qre_market_large_lambda_is_mixed_nash(c):
    spec = MarketSpec()
    res = logit_qre_fixed_point(build_market(spec, c), QREParams(1e4))
    assert res.converged
    assert spec.n_players * res.probs[0] == pytest.approx(c, abs=1e-2)


@pytest.mark.parametrize("lam", [0.01, 0.3, 1.0, 5.0, 30.0, 99.0])
def test_qre_is_fixed_point(beauty, lam):
    params = QREParams(lam)
    for game in (beauty, build_market(MarketSpec(), 7)):
        res = logit_qre_fixed_point(game, params)
        assert res.converged
        step = softmax(lam * np.asarray(game.payoffs(res.probs)))
        assert np.max(np.abs(step - res.probs)) < 10 * params.fp_tol


def test_qre_nonconvergence_is_flagged(beauty):
    res = logit_qre_fixed_point(beauty, QREParams(50.0, max_iters=1))
    assert not res.converged
    assert res.residual > 0
    np.testing.assert_allclose(res.probs.sum(), 1.0)


# -- agent QRE ---------------------------------------------------------------------


@pytest.mark.parametrize("tree", fixture_trees(), ids=["c4", "c6", "u10-10", "u70-10"])
def test_agent_qre_zero_lambda_uniform(tree):
    np.testing.assert_allclose(agent_qre(tree, QREParams(0.0)).probs, uniform_policy(tree).probs)


def test_agent_qre_centipede_takes():
    t = build_centipede(CentipedeSpec(moves=4))
    pol = agent_qre(t, QREParams(1e6))
    assert pol.node(0)[0] == pytest.approx(1.0)


def test_agent_qre_two_level_backup():
    nodes = [
        NodeSpec("r", 0, ("L", "R"), ["n", Terminal((1.0, 1.0))]),
        NodeSpec("n", 1, ("a", "b"), [Terminal((3.0, 1.0)), Terminal((0.0, 2.0))]),
    ]
    t = build_tree(nodes, players=2)
    lam = 2.0
    f1 = softmax([lam * 1.0, lam * 2.0])
    v0 = f1 @ [3.0, 0.0]
    f0 = softmax([lam * v0, lam * 1.0])
    pol = agent_qre(t, QREParams(lam))
    np.testing.assert_allclose(pol.node(0), f0, atol=1e-14)
    np.testing.assert_allclose(pol.node(1), f1, atol=1e-14)


# -- backward induction ------------------------------------------------------------


def test_backward_induction_ultimatum(ultimatum_0_50):
    pol = backward_induction(ultimatum_0_50)
    assert int(np.argmax(pol.node(0))) == 49
    assert pol.node(0)[49] == 1.0
    for x in range(50):
        assert pol.node(1 + x)[0] == 1.0  # accepts every request below 50
    assert list(pol.node(51)) == [0.5, 0.5]  # indifferent at exactly 50
    assert 51 in pol.meta["ties"]


def test_backward_induction_ultimatum_lowest():
    t = build_bargain(BargainSpec(stages=1, v1=0, v2=50))
    pol = backward_induction(t, tie_break="lowest")
    assert list(pol.node(51)) == [1.0, 0.0]
    assert int(np.argmax(pol.node(0))) == 50


def test_backward_induction_two_stage(twostage):
    t = twostage
    pol = backward_induction(t)
    assert pol.node(0)[10] == 1.0
    resp = t.act_child[t.action_slice(0)][10]
    assert pol.node(resp)[0] == 1.0  # request 10 is accepted
    reject = t.act_child[t.action_slice(int(t.act_child[t.action_slice(0)][11]))][1]
    assert pol.node(reject)[1] == 1.0  # counter-offer y = 1
    final = t.act_child[t.action_slice(reject)][1]
    payoffs = t.act_payoff[t.action_slice(final)][0]
    assert tuple(payoffs) == (0.9, 89.1)
    assert expected_payoff(t, pol, 0) == 10.0
    assert expected_payoff(t, pol, 1) == 90.0


def test_backward_induction_centipede_six():
    t = build_centipede(CentipedeSpec(moves=6))
    pol = backward_induction(t)
    assert leaf_distribution(pol)[0] == 1.0


@given(tree_specs(max_levels=3, max_actions=3))
def test_backward_induction_beats_deterministic_deviations(spec):
    nodes, players = spec
    t = build(spec)
    bi = backward_induction(t)
    by_id, root = index(nodes)
    root_player = by_id[root].player
    mine = [n.id for n in nodes if n.player == root_player]
    assume(np.prod([len(by_id[i].actions) for i in mine]) <= 729)
    base = {t.node_ids[n]: bi.node(n) for n in range(t.node_count)}
    best = path_value(nodes, players, base)[root_player]
    for choice in enumerate_deterministic(nodes, mine):
        pol = dict(base)
        for nid, a in choice.items():
            pol[nid] = np.eye(len(by_id[nid].actions))[a]
        assert path_value(nodes, players, pol)[root_player] <= best + 1e-9


# -- level-k -----------------------------------------------------------------------


@pytest.mark.parametrize("k,mode", [(1, 33), (2, 22), (3, 15), (4, 10), (5, 7)])
def test_level_k_beauty_spikes(beauty, k, mode):
    pol = level_k_policy(beauty, k)
    assert pol.mode() == mode
    assert pol.root[mode] == 1.0


def test_level_zero_uniform(beauty):
    np.testing.assert_array_equal(level_k_policy(beauty, 0).root, np.full(101, 1 / 101))


def test_level_k_market_threshold():
    spec = MarketSpec()
    for c in spec.capacities:
        pol = level_k_policy(build_market(spec, c), 1)
        assert pol.root[0] == (1.0 if c > 10 else 0.0)


def test_level_k_market_indifference():
    spec = MarketSpec(capacities=(10,))
    pol = level_k_policy(build_market(spec, 10), 1)
    np.testing.assert_array_equal(pol.root, [0.5, 0.5])


@pytest.mark.parametrize("k", [0, 1, 2, 5])
def test_level_k_compositional_beauty(beauty, k):
    lk = level_k_policy(beauty, k).root
    np.testing.assert_array_equal(level_k_policy(beauty, k + 1).root, level_k_policy(beauty, 1, level0=lk).root)


@given(tree_specs(), st.integers(0, 4))
def test_level_k_compositional_trees(spec, k):
    t = build(spec)
    lk = level_k_policy(t, k)
    np.testing.assert_array_equal(level_k_policy(t, k + 1).probs, level_k_policy(t, 1, level0=lk).probs)


def test_best_response_to_uniform_centipede():
    t = build_centipede(CentipedeSpec(moves=4))
    br = best_response(t, uniform_policy(t))
    # last mover takes; the first mover, facing a uniform opponent, passes
    assert br.node(3)[0] == 1.0
    assert br.node(0)[1] == 1.0


# -- cognitive hierarchy -------------------------------------------------------------


def ch_beauty_oracle(tau, cap):
    w = np.array([math.exp(-tau) * tau**k / math.factorial(k) for k in range(cap + 1)])
    w /= w.sum()
    grid = np.arange(101)
    levels = [np.full(101, 1 / 101)]
    for k in range(1, cap + 1):
        mix = sum(w[j] * levels[j] for j in range(k)) / w[:k].sum()
        target = (2 / 3) * float(grid @ mix)
        d = np.abs(grid - target)
        best = d == d.min()
        levels.append(best / best.sum())
    return sum(w[k] * levels[k] for k in range(cap + 1))


def test_ch_beauty_matches_oracle(beauty):
    pol = cognitive_hierarchy_policy(beauty, CHParams(1.5, level_cap=10))
    np.testing.assert_allclose(pol.root, ch_beauty_oracle(1.5, 10), atol=1e-12)


def test_ch_zero_tau_is_level_zero(beauty):
    np.testing.assert_array_equal(cognitive_hierarchy_policy(beauty, CHParams(0.0)).root, np.full(101, 1 / 101))
    t = build_centipede(CentipedeSpec())
    np.testing.assert_allclose(cognitive_hierarchy_policy(t, CHParams(0.0)).probs, uniform_policy(t).probs)


@pytest.mark.parametrize("tau", [0.2, 1.0, 2.5, 6.0])
def test_ch_market_monotone_in_capacity(tau):
    spec = MarketSpec()
    rates = [cognitive_hierarchy_policy(build_market(spec, c), CHParams(tau)).root[0] for c in spec.capacities]
    assert np.all(np.diff(rates) >= -1e-12)
    assert rates[0] < rates[-1]


@pytest.mark.parametrize("tau", [0.37, 1.21, 2.9, 7.3])
def test_ch_continuous_in_tau(beauty, tau):
    games = [beauty, build_market(MarketSpec(), 9)]
    for g in games:
        a = cognitive_hierarchy_policy(g, CHParams(tau)).root
        b = cognitive_hierarchy_policy(g, CHParams(tau + 1e-6)).root
        assert np.max(np.abs(a - b)) < 1e-4
    for t in fixture_trees()[:2]:
        a = cognitive_hierarchy_policy(t, CHParams(tau)).probs
        b = cognitive_hierarchy_policy(t, CHParams(tau + 1e-6)).probs
        assert np.max(np.abs(a - b)) < 1e-4


def test_mixing_is_realization_equivalent():
    t = build_centipede(CentipedeSpec(moves=4))
    take = uniform_policy(t)
    take.probs[:] = np.tile([1.0, 0.0], 4)
    passer = uniform_policy(t)
    passer.probs[:] = np.tile([0.0, 1.0], 4)
    mixed = mix_policies(t, [take, passer], [0.25, 0.75])
    # each role is filled independently from the population: player 1 takes
    # at once w.p. 1/4; otherwise player 2 takes w.p. 1/4; otherwise all pass
    want = [0.25, 0.75 * 0.25, 0.0, 0.0, 0.75 * 0.75]
    np.testing.assert_allclose(leaf_distribution(mixed), want, atol=1e-12)
