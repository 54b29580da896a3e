"""The four canonical game families and the string keys that address them.

Payoffs stay in each game's native units: dollars for the centipede game,
percentage points of the pie for bargaining, the experimental payoff scale for
market entry. The logit resource parameters are scale dependent, so nothing is
normalised here.
"""

from __future__ import annotations

import re
from decimal import Decimal
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .game_tree import GameTree, NodeSpec, PseudoSequentialGame, Terminal, build_tree

GRID = np.arange(101)
# Reasoning chains of the simultaneous games are cut here when gamma is so
# close to 1 that the epsilon rule alone would unroll an impractical number
# of levels (and gamma = 1 would never stop).
REASONING_CAP = 1000


class CapacityOutOfRange(ValueError):
    pass


class InvalidRejectionPayoffs(ValueError):
    pass


class UnknownGame(KeyError):
    pass


# -- market entry --------------------------------------------------------------


@dataclass(frozen=True)
class MarketSpec:
    n_players: int = 20
    capacities: tuple[int, ...] = (1, 3, 5, 7, 9, 11, 13, 15, 17, 19)
    stay_payoff: float = 1.0
    enter_base: float = 1.0
    enter_slope: float = 2.0
    depth_cap: int | None = None

    def __post_init__(self):
        if any(not 1 <= c <= self.n_players for c in self.capacities):
            raise CapacityOutOfRange(f"capacities must lie in [1, {self.n_players}]")


def build_market(spec: MarketSpec, capacity: int) -> PseudoSequentialGame:
    """Market entry at one capacity ``c``.

    Staying out pays a constant; entering pays
    ``enter_base + enter_slope * (c - N * p)`` where ``p`` is the entry
    probability of the level below (so ``N * p`` is the expected number of
    entrants). Actions are ``("enter", "stay")``.
    """
    if capacity not in spec.capacities:
        raise CapacityOutOfRange(f"capacity {capacity} not in {spec.capacities}")
    n = spec.n_players

    def payoffs(lower: np.ndarray) -> np.ndarray:
        entrants = n * lower[0]
        return np.array([spec.enter_base + spec.enter_slope * (capacity - entrants), spec.stay_payoff])

    return PseudoSequentialGame(
        name=f"market:c{capacity}",
        actions=("enter", "stay"),
        payoffs=payoffs,
        prior=np.array([0.5, 0.5]),
        depth_cap=spec.depth_cap,
        values=np.array([1.0, 0.0]),
    )


def build_market_block(spec: MarketSpec) -> PseudoSequentialGame:
    """All capacities of ``spec`` stacked into one game (one row per
    capacity) so they can share a single pass over the reasoning levels."""
    caps = np.asarray(spec.capacities, dtype=float)
    n = spec.n_players

    base = np.empty((len(caps), 2))
    base[:, 0] = spec.enter_base + spec.enter_slope * caps
    base[:, 1] = spec.stay_payoff
    slope = np.array([-spec.enter_slope * n, 0.0])

    def payoffs(lower: np.ndarray) -> np.ndarray:
        return base + lower[:, :1] * slope

    return PseudoSequentialGame(
        name="market:block",
        actions=("enter", "stay"),
        payoffs=payoffs,
        prior=np.full((len(caps), 2), 0.5),
        depth_cap=spec.depth_cap,
        values=np.array([1.0, 0.0]),
    )


def market_nash(spec: MarketSpec, capacity: int) -> np.ndarray:
    """Symmetric mixed equilibrium: expected entrants equal capacity."""
    p = capacity / spec.n_players
    return np.array([p, 1 - p])


# -- p-beauty contest -----------------------------------------------------------


@dataclass(frozen=True)
class BeautySpec:
    p: float = 2.0 / 3.0
    grid_max: int = 100
    depth_cap: int | None = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")


def beauty_target(spec: BeautySpec, lower: np.ndarray) -> float:
    grid = np.arange(spec.grid_max + 1)
    return spec.p * float(grid @ lower) / float(lower.sum())


def build_beauty(spec: BeautySpec) -> PseudoSequentialGame:
    """Guesses 0..grid_max scored by ``-|a - g|`` with ``g`` equal to ``p``
    times the mean guess of the level below."""
    grid = np.arange(spec.grid_max + 1, dtype=float)

    def payoffs(lower: np.ndarray) -> np.ndarray:
        return -np.abs(grid - beauty_target(spec, lower))

    return PseudoSequentialGame(
        name=f"beauty:p={spec.p:.4g}",
        actions=tuple(range(spec.grid_max + 1)),
        payoffs=payoffs,
        prior=np.full(len(grid), 1.0 / len(grid)),
        depth_cap=spec.depth_cap,
        values=grid,
    )


# -- centipede ------------------------------------------------------------------


@dataclass(frozen=True)
class CentipedeSpec:
    """Alternating take/pass game; the pile doubles at every node.

    Taking at node ``i`` (1-based) gives the taker ``large * 2**(i-1)`` and
    the other player ``small * 2**(i-1)``; passing at the last node pays
    the node ``moves + 1`` split to player 1 as taker.
    """

    moves: int = 4
    large: float = 0.40
    small: float = 0.10

    def __post_init__(self):
        if self.moves not in (4, 6):
            raise ValueError("centipede games have 4 or 6 moves")

    def take_payoff(self, node: int) -> tuple[float, float]:
        scale = 2.0 ** (node - 1)
        big, little = self.large * scale, self.small * scale
        return (big, little) if node % 2 == 1 else (little, big)


def build_centipede(spec: CentipedeSpec) -> GameTree:
    nodes = []
    for i in range(1, spec.moves + 1):
        nxt = i + 1 if i < spec.moves else Terminal(spec.take_payoff(spec.moves + 1))
        nodes.append(NodeSpec(i, (i - 1) % 2, ("take", "pass"), [Terminal(spec.take_payoff(i)), nxt]))
    return build_tree(nodes, players=2)


def centipede_outcomes(spec: CentipedeSpec) -> tuple[str, ...]:
    return tuple(f"take{i}" for i in range(1, spec.moves + 1)) + ("pass",)


# -- bargaining -------------------------------------------------------------------


@dataclass(frozen=True)
class BargainSpec:
    """One-stage (ultimatum) or two-stage alternating-offer bargaining.

    Player 1 requests ``x`` of a pie of ``pie``; Player 2 accepts or rejects.
    One stage: rejection pays ``(v1, v2)``. Two stages: rejection lets Player 2
    counter-offer ``y`` for Player 1, worth ``(D y, D (pie - y))`` if
    accepted and ``(0, 0)`` otherwise.
    """

    stages: int = 1
    v1: float = 10.0
    v2: float = 10.0
    disagreement: float = 0.9
    pie: int = 100

    def __post_init__(self):
        if self.stages not in (1, 2):
            raise ValueError("bargaining has 1 or 2 stages")
        if self.stages == 1 and not (0 <= self.v1 <= self.pie and 0 <= self.v2 <= self.pie):
            raise InvalidRejectionPayoffs(f"rejection payoffs ({self.v1}, {self.v2}) outside [0, {self.pie}]")
        if self.stages == 2 and not 0 < self.disagreement <= 1:
            raise ValueError("disagreement penalty D must lie in (0, 1]")


def build_bargain(spec: BargainSpec) -> GameTree:
    pie = spec.pie
    requests = tuple(range(pie + 1))
    nodes = [NodeSpec("root", 0, requests, [("resp", x) for x in requests])]
    for x in requests:
        accept = Terminal((float(x), float(pie - x)))
        if spec.stages == 1:
            reject = Terminal((spec.v1, spec.v2))
        else:
            reject = ("counter", x)
        nodes.append(NodeSpec(("resp", x), 1, ("accept", "reject"), [accept, reject]))
        if spec.stages == 2:
            # decimal product, so that e.g. 0.9 * 99 is exactly 89.1
            d = Decimal(repr(spec.disagreement))
            nodes.append(NodeSpec(("counter", x), 1, requests, [("final", x, y) for y in requests]))
            for y in requests:
                nodes.append(
                    NodeSpec(
                        ("final", x, y),
                        0,
                        ("accept", "reject"),
                        [Terminal((float(d * y), float(d * (pie - y)))), Terminal((0.0, 0.0))],
                    )
                )
    return build_tree(nodes, players=2)


# -- experiment registry -------------------------------------------------------------

BLOCKS = tuple(range(1, 6))
BEAUTY_EXPERIMENTS = ("lab", "classroom", "takehome", "internet", "newspaper", "theorists")
ULTIMATUM_CASES = ("10-10", "10-60", "70-10")
TWO_STAGE_D = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2)

GAME_CLASS = {
    "market": "Market Entrance",
    "beauty": "Beauty Contest",
    "centipede": "Centipede",
    "ultimatum": "Bargaining",
    "twostage": "Bargaining",
}


@dataclass(frozen=True, eq=False)
class Experiment:
    """One row of the comparison: a game together with what gets observed.

    ``kind`` is ``"entry"`` for market blocks (predicted and observed
    vectors are expected entrants per capacity), ``"choice"`` for
    distributions over the root player's actions and ``"outcome"`` for
    distributions over terminal outcomes.
    """

    key: str
    family: str
    kind: str
    games: tuple  # per capacity for market, otherwise a single game
    labels: tuple  # components of the prediction vector
    smoothed: bool = False  # raw scalar choices get density-smoothed
    spec: object = None
    meta: dict = field(default_factory=dict)

    @property
    def game_class(self) -> str:
        return GAME_CLASS[self.family]

    @property
    def game(self):
        return self.games[0]


def _market_experiment(block: int) -> Experiment:
    spec = MarketSpec(depth_cap=REASONING_CAP)
    games = tuple(build_market(spec, c) for c in spec.capacities)
    return Experiment(
        key=f"market:block{block}",
        family="market",
        kind="entry",
        games=games,
        labels=spec.capacities,
        spec=spec,
        meta={"stacked": build_market_block(spec)},
    )


def _parse_ultimatum(case: str) -> BargainSpec:
    m = re.fullmatch(r"(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)", case)
    if not m:
        raise UnknownGame(f"ultimatum case must look like V1-V2, got {case!r}")
    return BargainSpec(stages=1, v1=float(m.group(1)), v2=float(m.group(2)))


@lru_cache(maxsize=64)
def _build(key: str) -> Experiment:
    parts = key.split(":")
    fam = parts[0]
    if fam == "market" and len(parts) == 2:
        m = re.fullmatch(r"block(\d+)", parts[1])
        if not m or int(m.group(1)) not in BLOCKS:
            raise UnknownGame(key)
        return _market_experiment(int(m.group(1)))
    if fam == "beauty" and len(parts) == 2 and parts[1] in BEAUTY_EXPERIMENTS:
        spec = BeautySpec(depth_cap=REASONING_CAP)
        return Experiment(key, "beauty", "choice", (build_beauty(spec),), tuple(range(101)), True, spec)
    if fam == "centipede" and len(parts) == 2 and parts[1] in ("4", "6"):
        spec = CentipedeSpec(moves=int(parts[1]))
        return Experiment(key, "centipede", "outcome", (build_centipede(spec),), centipede_outcomes(spec), False, spec)
    if fam == "ultimatum" and len(parts) == 2:
        try:
            spec = _parse_ultimatum(parts[1])
        except (InvalidRejectionPayoffs, ValueError) as exc:
            raise UnknownGame(f"{key}: {exc}") from None
        return Experiment(key, "ultimatum", "choice", (build_bargain(spec),), tuple(range(101)), True, spec)
    if fam == "twostage" and len(parts) == 2:
        m = re.fullmatch(r"D(0\.\d+|1(?:\.0+)?)", parts[1])
        if not m:
            raise UnknownGame(key)
        d = float(m.group(1))
        spec = BargainSpec(stages=2, disagreement=d)
        return Experiment(key, "twostage", "choice", (build_bargain(spec),), tuple(range(101)), True, spec)
    raise UnknownGame(key)


def canonical_key(key: str) -> tuple[str, int | None]:
    """Split a data/game key into (experiment key, market capacity or None).

    ``market:block2:c7`` addresses capacity 7 of the block-2 experiment.
    """
    parts = key.strip().split(":")
    if parts[0] == "market" and len(parts) == 3:
        m = re.fullmatch(r"c(\d+)", parts[2])
        if not m:
            raise UnknownGame(key)
        c = int(m.group(1))
        if c not in MarketSpec().capacities:
            raise UnknownGame(f"{key}: capacity {c} not in the experimental grid")
        return ":".join(parts[:2]), c
    if parts[0] == "twostage" and len(parts) == 2:
        m = re.fullmatch(r"D(\d*\.?\d+)", parts[1])
        if m:
            return f"twostage:D{float(m.group(1)):g}", None
    return key.strip(), None


def get_experiment(key: str) -> Experiment:
    exp_key, _ = canonical_key(key)
    return _build(exp_key)


def list_game_keys() -> list[str]:
    keys = [f"market:block{b}:c{c}" for b in BLOCKS for c in MarketSpec().capacities]
    keys += [f"beauty:{e}" for e in BEAUTY_EXPERIMENTS]
    keys += ["centipede:4", "centipede:6"]
    keys += [f"ultimatum:{c}" for c in ULTIMATUM_CASES]
    keys += [f"twostage:D{d:g}" for d in TWO_STAGE_D]
    return keys


def list_experiment_keys() -> list[str]:
    keys = [f"market:block{b}" for b in BLOCKS]
    keys += [f"beauty:{e}" for e in BEAUTY_EXPERIMENTS]
    keys += ["centipede:4", "centipede:6"]
    keys += [f"ultimatum:{c}" for c in ULTIMATUM_CASES]
    keys += [f"twostage:D{d:g}" for d in TWO_STAGE_D]
    return keys
