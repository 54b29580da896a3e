"""Extensive-form game trees, behaviour policies and pseudo-sequential games.

A :class:`GameTree` stores its internal (decision) nodes in breadth-first
order with root 0. Actions are kept in flat arrays, CSR style: the actions of
node ``n`` occupy ``act_start[n]:act_start[n + 1]``. Every action either
points at another decision node or ends the game with a payoff vector.

Simultaneous games that are reasoned about level by level (market entry,
beauty contests) do not fit a finite tree, so they are represented by
:class:`PseudoSequentialGame`: a single decision stage whose payoffs depend on
the action distribution played one level below.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

PRIOR_TOL = 1e-12
POLICY_TOL = 1e-9


class TreeError(ValueError):
    """Malformed tree description."""


class CycleDetected(TreeError):
    pass


class DanglingChild(TreeError):
    pass


class PayoffArityMismatch(TreeError):
    pass


class EmptyActions(TreeError):
    pass


class MissingNodePolicy(ValueError):
    pass


@dataclass(frozen=True)
class Terminal:
    """Leaf reached by an action; ``payoff`` has one entry per player."""

    payoff: tuple[float, ...]


@dataclass
class NodeSpec:
    """Description of one decision node, as accepted by :func:`build_tree`.

    ``children`` holds, per action, either the ``id`` of another node
    description or a :class:`Terminal`. ``utility`` is an optional table of
    immediate utilities ``U[a | history]``; since every node is reached by a
    unique history, a per-node table is fully history-conditional.
    """

    id: Any
    player: int
    actions: Sequence[Any]
    children: Sequence[Any]
    prior: Sequence[float] | None = None
    utility: Sequence[float] | None = None


class GameTree:
    """Immutable rooted tree of decision nodes.

    Build instances with :func:`build_tree`; the constructor takes the
    already validated flat arrays.
    """

    def __init__(
        self,
        players: int,
        node_player: np.ndarray,
        node_depth: np.ndarray,
        act_start: np.ndarray,
        act_child: np.ndarray,
        act_payoff: np.ndarray,
        act_prior: np.ndarray,
        act_utility: np.ndarray | None,
        labels: list[tuple],
        depth_cap: int | None = None,
        node_ids: list | None = None,
    ):
        self.players = int(players)
        self.node_player = node_player
        self.node_depth = node_depth
        self.act_start = act_start
        self.act_child = act_child
        self.act_payoff = act_payoff
        self.act_prior = act_prior
        self.act_utility = act_utility
        self.labels = labels
        self.depth_cap = depth_cap
        # ids of the original node descriptions, by node index
        self.node_ids = list(range(len(node_player))) if node_ids is None else list(node_ids)

        n = len(node_player)
        counts = np.diff(act_start)
        self.act_node = np.repeat(np.arange(n), counts)
        self.act_player = node_player[self.act_node]
        self.is_terminal = act_child < 0
        self.parent = np.full(n, -1, dtype=np.int64)
        self.parent_action = np.full(n, -1, dtype=np.int64)
        internal = np.flatnonzero(~self.is_terminal)
        self.parent[act_child[internal]] = self.act_node[internal]
        self.parent_action[act_child[internal]] = internal
        # BFS order makes every depth a contiguous node range
        self.max_depth = int(node_depth.max()) if n else 0
        bounds = np.searchsorted(node_depth, np.arange(self.max_depth + 2))
        self.level_nodes = [(int(bounds[d]), int(bounds[d + 1])) for d in range(self.max_depth + 1)]
        for arr in (node_player, node_depth, act_start, act_child, act_payoff, act_prior):
            arr.setflags(write=False)
        if act_utility is not None:
            act_utility.setflags(write=False)

    @property
    def node_count(self) -> int:
        return len(self.node_player)

    @property
    def action_count(self) -> int:
        return len(self.act_child)

    @property
    def depth(self) -> int:
        """Number of decision nodes on the longest root-to-leaf path."""
        return self.max_depth + 1

    def actions(self, node: int) -> tuple:
        return self.labels[node]

    def action_slice(self, node: int) -> slice:
        return slice(int(self.act_start[node]), int(self.act_start[node + 1]))

    def prior(self, node: int) -> np.ndarray:
        return self.act_prior[self.action_slice(node)]

    def child(self, node: int, action: int) -> int | Terminal:
        a = self.act_start[node] + action
        c = int(self.act_child[a])
        if c >= 0:
            return c
        return Terminal(tuple(float(x) for x in self.act_payoff[a]))

    def immediate_utility(self) -> np.ndarray:
        if self.act_utility is None:
            return np.zeros(self.action_count)
        return self.act_utility

    def terminal_actions(self) -> np.ndarray:
        return np.flatnonzero(self.is_terminal)

    def __repr__(self) -> str:
        return (
            f"GameTree(nodes={self.node_count}, actions={self.action_count}, "
            f"players={self.players}, depth={self.depth})"
        )


def _as_child(entry: Any) -> Any:
    if isinstance(entry, Terminal):
        return entry
    if isinstance(entry, dict):
        if "payoff" not in entry:
            raise TreeError(f"child record without payoff: {entry!r}")
        return Terminal(tuple(float(x) for x in entry["payoff"]))
    return entry


def _check_distribution(vec: np.ndarray, what: str, tol: float) -> None:
    if np.any(~np.isfinite(vec)) or np.any(vec < 0):
        raise TreeError(f"{what} has negative or non-finite entries")
    sums = vec.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise TreeError(f"{what} sums to {sums!r}, not 1")


def build_tree(
    nodes: Sequence[NodeSpec | dict],
    players: int,
    depth_cap: int | None = None,
) -> GameTree:
    """Validate node descriptions and assemble a :class:`GameTree`.

    Node ids in the descriptions are arbitrary hashables; the result is
    re-indexed breadth-first from the unique root (the only node that is
    nobody's child).
    """
    if players < 1:
        raise TreeError("a game needs at least one player")
    specs = [n if isinstance(n, NodeSpec) else NodeSpec(**n) for n in nodes]
    if not specs:
        raise TreeError("empty tree")
    by_id: dict[Any, NodeSpec] = {}
    for s in specs:
        if s.id in by_id:
            raise TreeError(f"duplicate node id {s.id!r}")
        by_id[s.id] = s

    parents: dict[Any, Any] = {}
    for s in specs:
        if len(s.actions) == 0:
            raise EmptyActions(f"node {s.id!r} has no actions")
        if len(s.children) != len(s.actions):
            raise TreeError(f"node {s.id!r}: {len(s.children)} children for {len(s.actions)} actions")
        if not 0 <= s.player < players:
            raise TreeError(f"node {s.id!r}: acting player {s.player} out of range")
        for entry in s.children:
            c = _as_child(entry)
            if isinstance(c, Terminal):
                if len(c.payoff) != players:
                    raise PayoffArityMismatch(
                        f"node {s.id!r}: payoff of length {len(c.payoff)} for {players} players"
                    )
                continue
            if c not in by_id:
                raise DanglingChild(f"node {s.id!r} points at unknown node {c!r}")
            if c == s.id:
                raise CycleDetected(f"node {s.id!r} is its own child")
            if c in parents:
                raise TreeError(f"node {c!r} has more than one parent")
            parents[c] = s.id

    roots = [s.id for s in specs if s.id not in parents]
    if not roots:
        raise CycleDetected("every node has a parent; no root")
    if len(roots) > 1:
        raise TreeError(f"descriptions form {len(roots)} separate trees")

    order: list[Any] = []
    depth: dict[Any, int] = {roots[0]: 0}
    queue = deque([roots[0]])
    while queue:
        nid = queue.popleft()
        order.append(nid)
        for entry in by_id[nid].children:
            c = _as_child(entry)
            if not isinstance(c, Terminal):
                depth[c] = depth[nid] + 1
                queue.append(c)
    if len(order) != len(specs):
        # nodes with a parent that are unreachable from the root sit on a cycle
        raise CycleDetected("some nodes are not reachable from the root")

    index = {nid: i for i, nid in enumerate(order)}
    n_actions = sum(len(by_id[nid].actions) for nid in order)
    act_start = np.zeros(len(order) + 1, dtype=np.int64)
    act_child = np.full(n_actions, -1, dtype=np.int64)
    act_payoff = np.zeros((n_actions, players))
    act_prior = np.zeros(n_actions)
    act_utility = np.zeros(n_actions)
    has_utility = False
    labels = []
    node_player = np.zeros(len(order), dtype=np.int64)
    node_depth = np.zeros(len(order), dtype=np.int64)
    pos = 0
    for i, nid in enumerate(order):
        s = by_id[nid]
        k = len(s.actions)
        act_start[i] = pos
        node_player[i] = s.player
        node_depth[i] = depth[nid]
        labels.append(tuple(s.actions))
        if s.prior is None:
            act_prior[pos:pos + k] = 1.0 / k
        else:
            prior = np.asarray(s.prior, dtype=float)
            if prior.shape != (k,):
                raise TreeError(f"node {nid!r}: prior length {prior.shape} for {k} actions")
            _check_distribution(prior, f"prior of node {nid!r}", PRIOR_TOL)
            act_prior[pos:pos + k] = prior
        if s.utility is not None:
            util = np.asarray(s.utility, dtype=float)
            if util.shape != (k,) or not np.all(np.isfinite(util)):
                raise TreeError(f"node {nid!r}: utility table must hold {k} finite values")
            act_utility[pos:pos + k] = util
            has_utility = True
        for j, entry in enumerate(s.children):
            c = _as_child(entry)
            if isinstance(c, Terminal):
                act_payoff[pos + j] = c.payoff
            else:
                act_child[pos + j] = index[c]
        pos += k
    act_start[-1] = pos
    if not np.all(np.isfinite(act_payoff)):
        raise TreeError("non-finite terminal payoff")
    return GameTree(
        players,
        node_player,
        node_depth,
        act_start,
        act_child,
        act_payoff,
        act_prior,
        act_utility if has_utility else None,
        labels,
        depth_cap=depth_cap,
        node_ids=order,
    )


# -- serialization -----------------------------------------------------------


def _jsonable(x: Any) -> Any:
    if isinstance(x, np.generic):
        return x.item()
    return x


def tree_to_records(tree: GameTree) -> list[dict]:
    """One record per node, in the format accepted by :func:`build_tree`."""
    records = []
    for n in range(tree.node_count):
        sl = tree.action_slice(n)
        children: list[Any] = []
        for a in range(sl.start, sl.stop):
            c = int(tree.act_child[a])
            children.append(c if c >= 0 else {"payoff": [float(v) for v in tree.act_payoff[a]]})
        rec = {
            "id": n,
            "player": int(tree.node_player[n]),
            "actions": [_jsonable(x) for x in tree.labels[n]],
            "children": children,
            "prior": [float(p) for p in tree.act_prior[sl]],
        }
        if tree.act_utility is not None:
            rec["utility"] = [float(u) for u in tree.act_utility[sl]]
        records.append(rec)
    return records


def dumps_tree(tree: GameTree) -> str:
    doc = {"players": tree.players, "depth_cap": tree.depth_cap, "nodes": tree_to_records(tree)}
    return json.dumps(doc, indent=1)


def loads_tree(text: str) -> GameTree:
    doc = json.loads(text)
    return build_tree(doc["nodes"], doc["players"], depth_cap=doc.get("depth_cap"))


# -- policies ----------------------------------------------------------------


@dataclass
class Policy:
    """Behaviour strategy: one probability vector per decision node.

    ``probs`` is aligned with the tree's flat action arrays.
    """

    tree: GameTree
    probs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (self.tree.action_count,):
            raise MissingNodePolicy(
                f"policy covers {self.probs.shape} actions, tree has {self.tree.action_count}"
            )

    def node(self, n: int) -> np.ndarray:
        return self.probs[self.tree.action_slice(n)]

    def validate(self, tol: float = POLICY_TOL) -> None:
        if np.any(self.probs < -tol) or np.any(self.probs > 1 + tol):
            raise ValueError("policy entries outside [0, 1]")
        sums = np.add.reduceat(self.probs, self.tree.act_start[:-1])
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            raise ValueError(f"policy at node {int(bad[0])} sums to {sums[bad[0]]!r}")

    @classmethod
    def from_nodes(cls, tree: GameTree, vectors: Sequence[Sequence[float]] | dict) -> "Policy":
        probs = np.full(tree.action_count, np.nan)
        for n in range(tree.node_count):
            try:
                vec = vectors[n]
            except (KeyError, IndexError):
                raise MissingNodePolicy(f"no distribution for node {n}") from None
            probs[tree.action_slice(n)] = vec
        return cls(tree, probs)

    def mode(self, n: int = 0) -> Any:
        """Label of the most likely action at node ``n`` (lowest index on ties)."""
        return self.tree.labels[n][int(np.argmax(self.node(n)))]


def uniform_policy(tree: GameTree) -> Policy:
    counts = np.diff(tree.act_start)
    return Policy(tree, 1.0 / np.repeat(counts, counts))


def prior_policy(tree: GameTree) -> Policy:
    return Policy(tree, tree.act_prior.copy())


def reach_probabilities(policy: Policy) -> tuple[np.ndarray, np.ndarray]:
    """Probability of reaching each node, and of playing each action en route."""
    tree = policy.tree
    node_reach = np.zeros(tree.node_count)
    node_reach[0] = 1.0
    act_reach = np.zeros(tree.action_count)
    for lo, hi in tree.level_nodes:
        a0, a1 = tree.act_start[lo], tree.act_start[hi]
        act_reach[a0:a1] = node_reach[tree.act_node[a0:a1]] * policy.probs[a0:a1]
        ch = tree.act_child[a0:a1]
        inner = ch >= 0
        node_reach[ch[inner]] = act_reach[a0:a1][inner]
    return node_reach, act_reach


def leaf_distribution(policy: Policy) -> np.ndarray:
    """Probability of each terminal action (leaf), in flat action order."""
    _, act_reach = reach_probabilities(policy)
    return act_reach[policy.tree.is_terminal]


def node_values(policy: Policy, include_utility: bool = True) -> np.ndarray:
    """Expected payoff vector (one column per player) at every decision node."""
    tree = policy.tree
    values = np.zeros((tree.node_count, tree.players))
    w = tree.act_payoff.copy()
    if include_utility and tree.act_utility is not None:
        w[np.arange(tree.action_count), tree.act_player] += tree.act_utility
    for lo, hi in reversed(tree.level_nodes):
        a0, a1 = tree.act_start[lo], tree.act_start[hi]
        ch = tree.act_child[a0:a1]
        seg = w[a0:a1]
        inner = ch >= 0
        seg[inner] += values[ch[inner]]
        values[lo:hi] = np.add.reduceat(seg * policy.probs[a0:a1, None], tree.act_start[lo:hi] - a0, axis=0)
    return values


def expected_payoff(tree: GameTree, policy: Policy, player: int) -> float:
    """Expected terminal payoff of ``player`` when every node plays ``policy``."""
    if policy.tree is not tree and policy.probs.shape != (tree.action_count,):
        raise MissingNodePolicy("policy does not cover this tree")
    if policy.tree is not tree:
        policy = Policy(tree, policy.probs)
    return float(node_values(policy)[0, player])


# -- pseudo-sequential games ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class PseudoSequentialGame:
    """A simultaneous game unrolled into levels of reasoning.

    Level ``k`` chooses among ``actions`` with payoffs ``payoffs(f_next)``,
    where ``f_next`` is the action distribution of level ``k + 1``. The same
    function doubles as the symmetric payoff function of the simultaneous game
    (payoff of each action against a population playing ``f_next``).
    """

    name: str
    actions: tuple
    payoffs: Callable[[np.ndarray], np.ndarray]
    prior: np.ndarray
    depth_cap: int | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        _check_distribution(np.asarray(self.prior, dtype=float), f"prior of {self.name}", PRIOR_TOL)

    @property
    def size(self) -> int:
        return len(self.actions)


@dataclass
class LevelPolicy:
    """Distributions played at each reasoning level; level 0 is the decider."""

    game: PseudoSequentialGame
    levels: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def root(self) -> np.ndarray:
        return self.levels[0]

    def mode(self, level: int = 0) -> Any:
        return self.game.actions[int(np.argmax(self.levels[level]))]
