"""Observation files and the empirical vectors models are scored against.

File format (CSV with a header row)::

    game,role,choice,count
    market:block1:c7,entrant,enter,6
    market:block1:c7,entrant,stay,14
    beauty:lab,guesser,33,4
    centipede:4,pair,take2,11
    ultimatum:10-10,proposer,45.5,1

* ``game`` is a game key; market rows name the capacity
  (``market:blockB:cC``), every other family names the experiment.
* ``role`` is the observed player role: ``entrant`` (market), ``guesser``
  (beauty), ``pair`` (centipede, one record per game outcome) or
  ``proposer`` (ultimatum and two-stage bargaining).
* ``choice`` is ``enter``/``stay`` for market entry, ``take1``..``takeN`` or
  ``pass`` for centipede games, and a number in [0, 100] for guesses and
  bargaining requests.
* ``count`` is a non-negative integer multiplicity.

Any violation raises ``DataError`` naming the file, line and field.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import smooth
from .games import Experiment, UnknownGame, canonical_key, get_experiment

COLUMNS = ("game", "role", "choice", "count")
ROLES = {
    "market": "entrant",
    "beauty": "guesser",
    "centipede": "pair",
    "ultimatum": "proposer",
    "twostage": "proposer",
}
MARKET_CHOICES = ("enter", "stay")


class DataError(ValueError):
    """An observation file violates the schema."""


class EmptyObservations(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observations for one experiment, grouped in strata.

    Market experiments have one stratum per capacity; everything else has a
    single stratum. ``values[s]`` holds category codes (market: 0 = enter,
    1 = stay; centipede: outcome index) or scalar choices, ``counts[s]`` the
    matching multiplicities.
    """

    key: str
    strata: tuple
    values: tuple
    counts: tuple

    @property
    def experiment(self) -> Experiment:
        return get_experiment(self.key)

    @property
    def total(self) -> int:
        return int(sum(int(c.sum()) for c in self.counts))

    def stratum_totals(self) -> list[int]:
        return [int(c.sum()) for c in self.counts]

    def fingerprint(self) -> bytes:
        """Canonical byte string of the data (used to derive fit seeds)."""
        parts = [self.key.encode()]
        for s, v, c in zip(self.strata, self.values, self.counts):
            order = np.lexsort((c, v))
            parts += [repr(s).encode(), np.ascontiguousarray(v[order], dtype=float).tobytes(), np.ascontiguousarray(c[order], dtype=np.int64).tobytes()]
        return b"|".join(parts)


def _err(source: str, line: int, msg: str) -> DataError:
    return DataError(f"{source}:{line}: {msg}")


def _parse_count(raw: str, source: str, line: int) -> int:
    try:
        value = int(raw.strip())
    except ValueError:
        raise _err(source, line, f"count {raw!r} is not an integer") from None
    if value < 0:
        raise _err(source, line, f"count {value} is negative")
    return value


def parse_observations(text: str, source: str = "<data>") -> dict[str, ObservationSet]:
    """Parse observation CSV text into one ``ObservationSet`` per experiment,
    in order of first appearance."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    if tuple(h.strip().lower() for h in header) != COLUMNS:
        raise DataError(f"{source}:1: header must be {','.join(COLUMNS)}, got {','.join(header)}")

    grouped: dict[str, dict] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(COLUMNS):
            raise _err(source, line, f"expected {len(COLUMNS)} fields, got {len(row)}")
        game, role, choice, count = (cell.strip() for cell in row)
        try:
            exp_key, capacity = canonical_key(game)
            exp = get_experiment(exp_key)
        except UnknownGame as exc:
            raise _err(source, line, f"unknown game key {game!r} ({exc})") from None
        if exp.family == "market" and capacity is None:
            raise _err(source, line, f"market records must name a capacity, e.g. {exp_key}:c7")
        if role != ROLES[exp.family]:
            raise _err(source, line, f"role {role!r} invalid for {exp.family}; expected {ROLES[exp.family]!r}")
        if exp.family == "market":
            if choice not in MARKET_CHOICES:
                raise _err(source, line, f"market choice must be enter or stay, got {choice!r}")
            value = float(MARKET_CHOICES.index(choice))
        elif exp.kind == "outcome":
            if choice not in exp.labels:
                raise _err(source, line, f"outcome must be one of {', '.join(exp.labels)}, got {choice!r}")
            value = float(exp.labels.index(choice))
        else:
            try:
                value = float(choice)
            except ValueError:
                raise _err(source, line, f"choice {choice!r} is not a number") from None
            if not (math.isfinite(value) and 0 <= value <= 100):
                raise _err(source, line, f"choice {choice!r} outside [0, 100]")
        n = _parse_count(count, source, line)
        stratum = capacity if capacity is not None else "all"
        grouped.setdefault(exp_key, defaultdict(lambda: defaultdict(int)))[stratum][value] += n

    out = {}
    for key, strata in grouped.items():
        exp = get_experiment(key)
        if exp.family == "market":
            order = [c for c in exp.labels if c in strata]
            missing = [c for c in exp.labels if c not in strata]
            if missing:
                raise DataError(f"{source}: {key} has no records for capacities {missing}")
        else:
            order = ["all"]
        values, counts = [], []
        for s in order:
            items = sorted(strata[s].items())
            values.append(np.array([v for v, _ in items], dtype=float))
            counts.append(np.array([c for _, c in items], dtype=np.int64))
        obs = ObservationSet(key, tuple(order), tuple(values), tuple(counts))
        if any(t == 0 for t in obs.stratum_totals()):
            raise DataError(f"{source}: {key} has a stratum with zero total count")
        out[key] = obs
    return out


def load_observations(path: str | Path) -> dict[str, ObservationSet]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_observations(text, str(path))


def load_many(paths) -> dict[str, ObservationSet]:
    merged: dict[str, ObservationSet] = {}
    for p in paths:
        for key, obs in load_observations(p).items():
            if key in merged:
                raise DataError(f"{p}: experiment {key} already loaded from another file")
            merged[key] = obs
    return merged


def dumps_observations(sets) -> str:
    """Serialise observation sets back to the CSV format (rows with zero
    count are dropped)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for obs in sets:
        exp = obs.experiment
        role = ROLES[exp.family]
        for s, vals, cnts in zip(obs.strata, obs.values, obs.counts):
            game = f"{obs.key}:c{s}" if exp.family == "market" else obs.key
            for v, c in zip(vals, cnts):
                if c == 0:
                    continue
                if exp.family == "market":
                    choice = MARKET_CHOICES[int(v)]
                elif exp.kind == "outcome":
                    choice = exp.labels[int(v)]
                else:
                    choice = f"{v:g}"
                w.writerow((game, role, choice, int(c)))
    return buf.getvalue()


def from_frequencies(key: str, vectors, totals) -> ObservationSet:
    """Build an observation set whose strata hold ``round(total * p)``
    observations of each category (market: ``vectors`` are per-capacity
    enter probabilities; otherwise one distribution over the experiment's
    labels or grid)."""
    exp = get_experiment(key)
    if exp.family == "market":
        strata = tuple(exp.labels)
        probs = [np.array([p, 1 - p]) for p in np.asarray(vectors, dtype=float)]
        codes = [np.array([0.0, 1.0])] * len(strata)
    else:
        strata = ("all",)
        probs = [np.asarray(vectors, dtype=float)]
        codes = [np.arange(len(probs[0]), dtype=float)]
    totals = np.broadcast_to(np.asarray(totals), (len(strata),))
    counts = tuple(np.rint(t * p).astype(np.int64) for t, p in zip(totals, probs))
    return ObservationSet(key, strata, tuple(codes), counts)


def sample_observations(key: str, vectors, totals, rng: np.random.Generator) -> ObservationSet:
    """Multinomial draw of ``totals`` observations per stratum."""
    exp = get_experiment(key)
    if exp.family == "market":
        strata = tuple(exp.labels)
        probs = [np.array([p, 1 - p]) for p in np.asarray(vectors, dtype=float)]
    else:
        strata = ("all",)
        probs = [np.asarray(vectors, dtype=float)]
    totals = np.broadcast_to(np.asarray(totals), (len(strata),))
    counts = tuple(rng.multinomial(int(t), p / p.sum()).astype(np.int64) for t, p in zip(totals, probs))
    codes = tuple(np.arange(len(p), dtype=float) for p in probs)
    return ObservationSet(key, strata, codes, counts)


def split_half(obs: ObservationSet, rng: np.random.Generator) -> tuple[ObservationSet, ObservationSet]:
    """Random 50/50 partition of the raw observations, stratum by stratum.

    Each stratum of ``n`` observations sends ``n // 2`` of them (plus the odd
    one with probability 1/2) to the first half, drawn without replacement.
    """
    first, second = [], []
    for counts in obs.counts:
        n = int(counts.sum())
        take = n // 2 + (int(rng.integers(2)) if n % 2 else 0)
        a = rng.multivariate_hypergeometric(counts, take, method="marginals") if take else np.zeros_like(counts)
        first.append(a.astype(np.int64))
        second.append((counts - a).astype(np.int64))
    return (
        ObservationSet(obs.key, obs.strata, obs.values, tuple(first)),
        ObservationSet(obs.key, obs.strata, obs.values, tuple(second)),
    )


def observed_vector(obs: ObservationSet, bandwidth: str | None = "scott") -> np.ndarray:
    """Empirical counterpart of the experiment's prediction vector.

    Market: observed entrants per capacity (``N`` times the entry share).
    Centipede: outcome frequencies. Guesses and requests: a kernel density
    on the grid 0..100 with the given bandwidth rule, or, with
    ``bandwidth=None``, the histogram of choices rounded to the grid.
    """
    exp = obs.experiment
    if obs.total == 0:
        raise EmptyObservations(f"{obs.key}: no observations")
    if exp.family == "market":
        return np.array([exp.spec.n_players * float(c[v == 0].sum()) / float(c.sum()) for v, c in zip(obs.values, obs.counts)])
    values, counts = obs.values[0], obs.counts[0]
    if exp.kind == "outcome":
        hist = np.bincount(values.astype(int), weights=counts, minlength=len(exp.labels))
        return hist / hist.sum()
    if bandwidth is None or not exp.smoothed:
        hist = np.bincount(np.rint(values).astype(int), weights=counts, minlength=len(exp.labels))
        return hist / hist.sum()
    return smooth(values, bandwidth, weights=counts)
