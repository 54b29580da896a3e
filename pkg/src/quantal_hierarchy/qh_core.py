"""The Quantal Hierarchy decision rule.

A player at reasoning depth ``k`` (root = 0) has resources
``beta_k = beta * gamma**k`` and plays the logit response

    f[a] ∝ prior[a] * exp(beta_k * U[a])

to the behaviour of the deeper levels. Once ``|beta_k| < epsilon`` the level
is exhausted and simply echoes its prior; that is the base case of the
recursion, so solving proceeds from the exhausted depth (or the leaves)
back up to the root. Everything is evaluated in the log domain.

Two ways of feeding the deeper levels back into ``U`` are supported:

``"expected"`` (default, used for games)
    ``U[a]`` is the acting player's expected payoff of ``a`` given the
    policies already solved below it. With ``gamma = 1`` this is the logit
    agent-form QRE; with ``gamma = 0`` opponents play their priors.

``"free_energy"``
    The nested free-energy recursion for a single decision maker:
    ``U[a]`` is the immediate utility of ``a`` and the future enters through
    the child partition function, ``Z_{k+1} ** (beta_k / beta_{k+1})``
    (``Z_{k+1} ** (1 / gamma)`` under the discounted schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .game_tree import (
    GameTree,
    LevelPolicy,
    Policy,
    PseudoSequentialGame,
    expected_payoff,
)

DEFAULT_EPSILON = 1e-8


class InvalidParams(ValueError):
    pass


class NonFiniteBackup(ArithmeticError):
    pass


class UnboundedDepth(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class NonFiniteUtility(ValueError):
    pass


@dataclass(frozen=True)
class QHParams:
    beta: float
    gamma: float
    epsilon: float = DEFAULT_EPSILON
    adversarial: bool = False

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise InvalidParams(f"beta must be finite, got {self.beta}")
        if self.beta < 0 and not self.adversarial:
            raise InvalidParams("negative beta requires adversarial=True")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParams(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 1e-12 <= self.epsilon <= 1e-4:
            raise InvalidParams(f"epsilon must lie in [1e-12, 1e-4], got {self.epsilon}")

    def level_resource(self, k: int) -> float:
        return self.beta * self.gamma**k

    def exhausted(self, k: int) -> bool:
        return abs(self.level_resource(k)) < self.epsilon


class QHSolution(NamedTuple):
    policy: Policy | LevelPolicy
    log_z: np.ndarray  # per node (tree) or per level (pseudo-sequential)


def level_resources(params: QHParams, depth: int) -> np.ndarray:
    """``beta * gamma**k`` for k = 0..depth-1."""
    return params.beta * params.gamma ** np.arange(depth, dtype=float)


def single_step_decision(utilities, prior, beta: float) -> np.ndarray:
    """Logit choice ``f[a] ∝ prior[a] exp(beta U[a])``."""
    u = np.asarray(utilities, dtype=float)
    p = np.asarray(prior, dtype=float)
    if u.shape != p.shape:
        raise LengthMismatch(f"{u.shape} utilities vs {p.shape} prior")
    if not np.all(np.isfinite(u)):
        raise NonFiniteUtility("utilities must be finite")
    if beta == 0:
        return p / p.sum()
    with np.errstate(divide="ignore"):
        z = np.log(p) + beta * u
    z -= z.max()
    f = np.exp(z)
    return f / f.sum()


def effective_depth(params: QHParams, game: GameTree | PseudoSequentialGame | None = None) -> int:
    """Number of levels that still reason, i.e. the smallest ``k`` with
    ``|beta| gamma**k < epsilon``, capped by the game's own depth."""
    cap = None
    if isinstance(game, GameTree):
        cap = game.depth if game.depth_cap is None else min(game.depth, game.depth_cap)
    elif isinstance(game, PseudoSequentialGame):
        cap = game.depth_cap

    b = abs(params.beta)
    if b < params.epsilon:
        k = 0
    elif params.gamma == 0.0:
        k = 1
    elif params.gamma == 1.0:
        if cap is None:
            raise UnboundedDepth("gamma=1 with beta>0 never exhausts; give the game a depth cap")
        return cap
    else:
        k = max(int(math.floor(math.log(params.epsilon / b) / math.log(params.gamma))), 0)
        while k > 0 and b * params.gamma ** (k - 1) < params.epsilon:
            k -= 1
        while b * params.gamma**k >= params.epsilon:
            k += 1
    return k if cap is None else min(k, cap)


def _segment_logsumexp(x: np.ndarray, starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    m = np.maximum.reduceat(x, starts)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.add.reduceat(np.exp(x - np.repeat(safe, counts)), starts)
    with np.errstate(divide="ignore"):
        return safe + np.log(s)


def _solve_tree(tree: GameTree, betas: np.ndarray, epsilon: float, mode: str) -> QHSolution:
    """Backward pass over depths; ``betas[d]`` is the resource at depth ``d``."""
    if mode not in ("expected", "free_energy"):
        raise ValueError(f"unknown continuation mode {mode!r}")
    probs = np.empty(tree.action_count)
    log_z = np.zeros(tree.node_count)
    values = np.zeros((tree.node_count, tree.players))
    with np.errstate(divide="ignore"):
        log_prior = np.log(tree.act_prior)
    util = tree.immediate_utility()
    payoff = tree.act_payoff.copy()
    payoff[np.arange(tree.action_count), tree.act_player] += util
    echo = np.abs(betas) < epsilon
    if tree.depth_cap is not None:
        echo[tree.depth_cap:] = True

    for d in range(tree.max_depth, -1, -1):
        lo, hi = tree.level_nodes[d]
        a0, a1 = int(tree.act_start[lo]), int(tree.act_start[hi])
        starts = tree.act_start[lo:hi] - a0
        counts = np.diff(tree.act_start[lo:hi + 1])
        child = tree.act_child[a0:a1]
        inner = child >= 0
        players = tree.act_player[a0:a1]

        if echo[d]:
            f = tree.act_prior[a0:a1].copy()
            lz = np.zeros(hi - lo)
        else:
            beta = betas[d]
            if mode == "expected":
                w = payoff[a0:a1].copy()
                w[inner] += values[child[inner]]
                u = w[np.arange(a1 - a0), players]
                logits = log_prior[a0:a1] + beta * u
            else:
                u = util[a0:a1] + np.where(inner, 0.0, tree.act_payoff[a0:a1][np.arange(a1 - a0), players])
                logits = log_prior[a0:a1] + beta * u
                if d + 1 <= tree.max_depth and not echo[d + 1]:
                    ratio = beta / betas[d + 1]
                    logits[inner] += ratio * log_z[child[inner]]
            lz = _segment_logsumexp(logits, starts, counts)
            if not np.all(np.isfinite(lz)):
                raise NonFiniteBackup(f"log partition function overflowed at depth {d}")
            f = np.exp(logits - np.repeat(lz, counts))
            # renormalise away rounding so each node sums to 1 to machine precision
            f /= np.repeat(np.add.reduceat(f, starts), counts)
        probs[a0:a1] = f
        log_z[lo:hi] = lz
        w = payoff[a0:a1].copy()
        w[inner] += values[child[inner]]
        values[lo:hi] = np.add.reduceat(w * f[:, None], starts, axis=0)

    if not np.all(np.isfinite(values)):
        raise NonFiniteBackup("non-finite continuation value")
    return QHSolution(Policy(tree, probs), log_z)


def _solve_levels(game: PseudoSequentialGame, betas: Sequence[float]) -> QHSolution:
    """Levels 0..len(betas)-1 respond with the given resources; the level
    below the last one plays the prior.

    Distributions run along the last axis, so a game whose prior is a stack
    of distributions (several independent games sharing one resource
    schedule) is solved in one pass.
    """
    prior = np.asarray(game.prior, dtype=float)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    f = prior.copy()
    levels = [f]
    log_z = [np.zeros(prior.shape[:-1])]
    for beta in reversed(list(betas)):
        u = np.asarray(game.payoffs(f), dtype=float)
        logits = log_prior + beta * u
        m = logits.max(axis=-1, keepdims=True)
        if not np.all(np.isfinite(m)):
            raise NonFiniteBackup(f"non-finite logits in {game.name}")
        e = np.exp(logits - m)
        s = e.sum(axis=-1, keepdims=True)
        f = e / s
        levels.append(f)
        log_z.append((m + np.log(s))[..., 0])
    levels.reverse()
    log_z.reverse()
    return QHSolution(LevelPolicy(game, levels, meta={"depth": len(betas)}), np.array(log_z))


def solve_qh(
    game: GameTree | PseudoSequentialGame,
    params: QHParams,
    mode: str = "expected",
) -> QHSolution:
    """Quantal Hierarchy policy for ``game``.

    Returns ``(policy, log_z)``. For trees, ``log_z[n]`` is the log partition
    function of node ``n`` (0 at exhausted nodes, where the prior is echoed).
    For pseudo-sequential games the policy lists one distribution per level,
    ending with the exhausted prior level.
    """
    if isinstance(game, PseudoSequentialGame):
        if mode != "expected":
            raise ValueError("pseudo-sequential games only support the expected continuation")
        k = effective_depth(params, game)
        return _solve_levels(game, level_resources(params, k))
    betas = level_resources(params, game.max_depth + 1)
    return _solve_tree(game, betas, params.epsilon, mode)


def heatmap_grid(
    tree: GameTree,
    betas: Sequence[float],
    gammas: Sequence[float],
    epsilon: float = DEFAULT_EPSILON,
    player: int | None = None,
) -> np.ndarray:
    """Expected payoff of the root player under the QH policy on a (beta, gamma) grid.

    Negative betas (adversarial play) are allowed here.
    """
    if player is None:
        player = int(tree.node_player[0])
    out = np.empty((len(betas), len(gammas)))
    for i, b in enumerate(betas):
        for j, g in enumerate(gammas):
            params = QHParams(float(b), float(g), epsilon, adversarial=b < 0)
            policy, _ = solve_qh(tree, params)
            out[i, j] = expected_payoff(tree, policy, player)
    return out
