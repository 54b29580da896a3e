"""Comparison models: logit QRE, agent-form QRE, level-k, Poisson cognitive
hierarchy and backward induction (Nash for the sequential games)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import poisson

from .game_tree import GameTree, LevelPolicy, Policy, PseudoSequentialGame, uniform_policy

TIE_TOL = 1e-12
STALL = 20


@dataclass(frozen=True)
class QREParams:
    lam: float
    max_iters: int = 20000
    fp_tol: float = 1e-10
    damping: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.fp_tol <= 0 or self.max_iters < 1:
            raise ValueError("fp_tol must be > 0 and max_iters >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class CHParams:
    tau: float
    level_cap: int = 30

    def __post_init__(self):
        if not math.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be finite and >= 0, got {self.tau}")
        if self.level_cap < 0:
            raise ValueError("level_cap must be >= 0")


@dataclass
class QREResult:
    probs: np.ndarray
    converged: bool
    iterations: int
    residual: float


def _logit(u: np.ndarray, lam: float) -> np.ndarray:
    z = lam * u
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def logit_qre_fixed_point(game: PseudoSequentialGame, params: QREParams) -> QREResult:
    """Symmetric logit QRE ``p = logit_lambda(U(p))`` by damped iteration.

    Iteration starts from the uniform point. When the residual stops
    improving for ``STALL`` steps the damping factor is halved and iteration
    resumes from the best iterate so far; this keeps steep games (market entry
    at large lambda) from oscillating. Non-convergence is reported in the
    result, not raised.
    """
    n = game.size
    p = np.full(n, 1.0 / n)
    if params.lam == 0:
        return QREResult(p, True, 0, 0.0)
    if n == 2:
        return _binary_qre(game, params)
    d = params.damping
    best_r, best_p, stall = math.inf, p, 0
    r = math.inf
    for it in range(1, params.max_iters + 1):
        target = _logit(np.asarray(game.payoffs(p), dtype=float), params.lam)
        r = float(np.max(np.abs(target - p)))
        if r < params.fp_tol:
            return QREResult(target, True, it, r)
        if r < best_r * (1 - 1e-3):
            best_r, best_p, stall = r, p, 0
        else:
            stall += 1
            if stall >= STALL:
                d = max(d * 0.5, 1e-9)
                p, stall = best_p, 0
                continue
        p = (1 - d) * p + d * target
    return QREResult(best_p, False, params.max_iters, best_r)


def _binary_qre(game: PseudoSequentialGame, params: QREParams) -> QREResult:
    """Two actions: the fixed point is a root of a scalar function on [0, 1].

    ``g(q) = q - logit(U(q))[0]`` is <= 0 at 0 and >= 0 at 1, so bracketing
    always succeeds, and it avoids the slow damped crawl of steep games.
    """
    calls = 0

    def g(q: float) -> float:
        nonlocal calls
        calls += 1
        return q - _logit(np.asarray(game.payoffs(np.array([q, 1 - q])), dtype=float), params.lam)[0]

    g0, g1 = g(0.0), g(1.0)
    if g0 == 0:
        q = 0.0
    elif g1 == 0:
        q = 1.0
    else:
        q = brentq(g, 0.0, 1.0, xtol=1e-18, rtol=4 * np.finfo(float).eps, maxiter=500)
    p = np.array([q, 1 - q])
    target = _logit(np.asarray(game.payoffs(p), dtype=float), params.lam)
    r = float(np.max(np.abs(target - p)))
    return QREResult(target if r < params.fp_tol else p, r < params.fp_tol, calls, r)


# -- sequential games ----------------------------------------------------------


def _segments(tree: GameTree, lo: int, hi: int):
    a0, a1 = int(tree.act_start[lo]), int(tree.act_start[hi])
    seg = tree.act_node[a0:a1] - lo
    return a0, a1, seg


def agent_qre(tree: GameTree, params: QREParams) -> Policy:
    """Logit agent-form QRE, solved leaf to root.

    Every node plays a logit response with the same precision against the
    continuation values produced by the logit play below it.
    """
    lam = params.lam
    probs = np.empty(tree.action_count)
    value = np.zeros((tree.node_count, tree.players))
    for lo, hi in reversed(tree.level_nodes):
        a0, a1, seg = _segments(tree, lo, hi)
        cont = tree.act_payoff[a0:a1].copy()
        kids = tree.act_child[a0:a1]
        has_kid = kids >= 0
        cont[has_kid] = value[kids[has_kid]]
        own = cont[np.arange(a1 - a0), tree.act_player[a0:a1]]
        top = np.full(hi - lo, -np.inf)
        np.maximum.at(top, seg, own)
        weight = np.exp(lam * (own - top[seg]))
        total = np.bincount(seg, weights=weight, minlength=hi - lo)
        f = weight / total[seg]
        probs[a0:a1] = f
        for j in range(tree.players):
            value[lo:hi, j] = np.bincount(seg, weights=f * cont[:, j], minlength=hi - lo)
    return Policy(tree, probs, meta={"lambda": lam})


def _argmax_policy(own: np.ndarray, seg: np.ndarray, nseg: int, tie_break: str) -> tuple[np.ndarray, np.ndarray]:
    top = np.full(nseg, -np.inf)
    np.maximum.at(top, seg, own)
    tied = own >= top[seg] - TIE_TOL * np.maximum(1.0, np.abs(top[seg]))
    if tie_break == "lowest":
        idx = np.arange(len(own))
        first = np.full(nseg, len(own))
        np.minimum.at(first, seg[tied], idx[tied])
        chosen = idx == first[seg]
    elif tie_break == "split":
        chosen = tied
    else:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    n_chosen = np.bincount(seg, weights=chosen.astype(float), minlength=nseg)
    f = chosen / n_chosen[seg]
    n_tied = np.bincount(seg, weights=tied.astype(float), minlength=nseg)
    return f, np.flatnonzero(n_tied > 1)


def backward_induction(tree: GameTree, tie_break: str = "split") -> Policy:
    """Subgame-perfect play: each node maximises its own continuation value.

    ``tie_break="split"`` spreads probability evenly over exactly tied best
    actions (an indifferent player randomises); ``"lowest"`` picks the
    lowest action index. Nodes with ties are listed in ``policy.meta["ties"]``.
    """
    probs = np.empty(tree.action_count)
    value = np.zeros((tree.node_count, tree.players))
    ties: list[int] = []
    for lo, hi in reversed(tree.level_nodes):
        a0, a1, seg = _segments(tree, lo, hi)
        cont = tree.act_payoff[a0:a1].copy()
        kids = tree.act_child[a0:a1]
        has_kid = kids >= 0
        cont[has_kid] = value[kids[has_kid]]
        own = cont[np.arange(a1 - a0), tree.act_player[a0:a1]]
        f, tied_nodes = _argmax_policy(own, seg, hi - lo, tie_break)
        ties.extend(int(lo + t) for t in tied_nodes)
        probs[a0:a1] = f
        for j in range(tree.players):
            value[lo:hi, j] = np.bincount(seg, weights=f * cont[:, j], minlength=hi - lo)
    return Policy(tree, probs, meta={"tie_break": tie_break, "ties": sorted(ties)})


def best_response(tree: GameTree, others: Policy, tie_break: str = "split") -> Policy:
    """Each node's player best responds to ``others`` at every other player's
    nodes, planning optimally at their own later nodes."""
    probs = np.empty(tree.action_count)
    for i in range(tree.players):
        value = np.zeros(tree.node_count)
        for lo, hi in reversed(tree.level_nodes):
            a0, a1, seg = _segments(tree, lo, hi)
            kids = tree.act_child[a0:a1]
            has_kid = kids >= 0
            cont = tree.act_payoff[a0:a1, i].copy()
            cont[has_kid] = value[kids[has_kid]]
            mine = tree.node_player[lo:hi] == i
            f = others.probs[a0:a1].copy()
            if mine.any():
                br, _ = _argmax_policy(cont, seg, hi - lo, tie_break)
                own_act = mine[seg]
                f[own_act] = br[own_act]
                probs[a0:a1][own_act] = br[own_act]
            value[lo:hi] = np.bincount(seg, weights=f * cont, minlength=hi - lo)
    return Policy(tree, probs)


def own_realization(policy: Policy) -> np.ndarray:
    """For each node, the product of its acting player's own action
    probabilities on the path from the root."""
    tree = policy.tree
    real = np.ones((tree.node_count, tree.players))
    for lo, hi in tree.level_nodes:
        a0, a1, _ = _segments(tree, lo, hi)
        kids = tree.act_child[a0:a1]
        has_kid = kids >= 0
        parent = tree.act_node[a0:a1][has_kid]
        r = real[parent].copy()
        rows = np.arange(len(parent))
        who = tree.act_player[a0:a1][has_kid]
        r[rows, who] *= policy.probs[a0:a1][has_kid]
        real[kids[has_kid]] = r
    return real[np.arange(tree.node_count), tree.node_player]


class _PolicyMixer:
    """Running behaviour-strategy mixture of several policies.

    Mixing behaviour strategies by population weight is done in the
    realization-equivalent way: at each node a policy counts in proportion to
    its weight times the probability that the acting player's own earlier
    choices lead there.
    """

    def __init__(self, tree: GameTree):
        self.tree = tree
        self.num = np.zeros(tree.action_count)
        self.den = np.zeros(tree.node_count)
        self.plain = np.zeros(tree.action_count)
        self.total = 0.0

    def add(self, policy: Policy, weight: float) -> None:
        if weight == 0:
            return
        rho = own_realization(policy) * weight
        self.num += rho[self.tree.act_node] * policy.probs
        self.den += rho
        self.plain += weight * policy.probs
        self.total += weight

    def result(self) -> Policy:
        den = self.den[self.tree.act_node]
        with np.errstate(invalid="ignore", divide="ignore"):
            mixed = np.where(den > 0, self.num / den, self.plain / self.total)
        return Policy(self.tree, mixed)


def mix_policies(tree: GameTree, policies: Sequence[Policy], weights: Sequence[float]) -> Policy:
    mixer = _PolicyMixer(tree)
    for pol, w in zip(policies, weights):
        mixer.add(pol, float(w))
    return mixer.result()


def _best_response_dist(game: PseudoSequentialGame, others: np.ndarray, tie_break: str) -> np.ndarray:
    u = np.asarray(game.payoffs(others), dtype=float)
    f, _ = _argmax_policy(u, np.zeros(len(u), dtype=np.int64), 1, tie_break)
    return f


def level_k_policy(
    game: GameTree | PseudoSequentialGame,
    k: int,
    level0: Policy | np.ndarray | None = None,
    tie_break: str = "split",
):
    """Level-k play: ``k`` rounds of best response starting from ``level0``.

    ``level0`` defaults to the uniform distribution (uniform at every node for
    trees). Exactly tied best responses are split evenly unless
    ``tie_break="lowest"``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if isinstance(game, PseudoSequentialGame):
        f = np.full(game.size, 1.0 / game.size) if level0 is None else np.asarray(level0, dtype=float)
        levels = [f]
        for _ in range(k):
            f = _best_response_dist(game, f, tie_break)
            levels.append(f)
        return LevelPolicy(game, [levels[-1]], meta={"k": k, "chain": levels})
    pol = uniform_policy(game) if level0 is None else level0
    for _ in range(k):
        pol = best_response(game, pol, tie_break)
    pol.meta = {"k": k}
    return pol


def poisson_weights(tau: float, level_cap: int, tail_tol: float = 1e-14) -> np.ndarray:
    """Poisson(tau) masses on 0..K, renormalised, where K is ``level_cap`` or
    the first level beyond which the remaining mass is below ``tail_tol``."""
    if tau == 0:
        return np.array([1.0])
    ks = np.arange(level_cap + 1)
    tail = poisson.sf(ks, tau)
    below = np.flatnonzero(tail < tail_tol)
    cap = int(below[0]) if below.size else level_cap
    w = poisson.pmf(np.arange(cap + 1), tau)
    return w / w.sum()


def cognitive_hierarchy_policy(
    game: GameTree | PseudoSequentialGame,
    params: CHParams,
    level0: Policy | np.ndarray | None = None,
    tie_break: str = "split",
):
    """Poisson cognitive hierarchy.

    Level ``k >= 1`` best responds to the renormalised Poisson mixture of
    levels ``0..k-1``; the prediction is the Poisson mixture of all levels up
    to the cap.
    """
    w = poisson_weights(params.tau, params.level_cap)
    if isinstance(game, PseudoSequentialGame):
        f0 = np.full(game.size, 1.0 / game.size) if level0 is None else np.asarray(level0, dtype=float)
        levels = [f0]
        acc = w[0] * f0
        for k in range(1, len(w)):
            levels.append(_best_response_dist(game, acc / w[:k].sum(), tie_break))
            acc = acc + w[k] * levels[-1]
        return LevelPolicy(game, [acc / w.sum()], meta={"tau": params.tau, "weights": w, "chain": levels})
    pol0 = uniform_policy(game) if level0 is None else level0
    # levels 0..k-1 mixed so far is both what level k answers and a prefix
    # of the population mixture
    mixer = _PolicyMixer(game)
    mixer.add(pol0, w[0])
    for k in range(1, len(w)):
        mixer.add(best_response(game, mixer.result(), tie_break), w[k])
    out = mixer.result()
    out.meta = {"tau": params.tau, "weights": w}
    return out
