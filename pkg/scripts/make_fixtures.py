#!/usr/bin/env python3
"""Write the synthetic observation bundle used by the tests and the README.

Each experiment gets its own CSV in ``data/``. Observations are seeded
multinomial draws from a known generating model, so the files are exactly
reproducible:

    python3 scripts/make_fixtures.py            # writes ./data
    python3 scripts/make_fixtures.py --out /tmp/bundle
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from quantal_hierarchy.data import dumps_observations, sample_observations
from quantal_hierarchy.games import get_experiment
from quantal_hierarchy.models import parse_model, predict


@dataclass(frozen=True)
class Fixture:
    key: str
    model: str  # generating model
    per_stratum: int  # observations per stratum (per capacity for markets)
    seed: int

    @property
    def filename(self) -> str:
        return self.key.replace(":", "_") + ".csv"


BUNDLE = (
    Fixture("market:block1", "qh:beta=1.2,gamma=0.8", 100, 101),
    Fixture("beauty:lab", "qh:beta=0.3,gamma=0.6", 150, 102),
    Fixture("beauty:classroom", "qh:beta=0.15,gamma=0.8", 150, 103),
    Fixture("centipede:4", "qh:beta=3,gamma=0.5", 150, 104),
    Fixture("ultimatum:10-10", "qh:beta=0.3,gamma=0.7", 120, 105),
    Fixture("ultimatum:70-10", "qh:beta=0.2,gamma=0.5", 120, 106),
)


def probabilities(fx: Fixture) -> np.ndarray:
    exp = get_experiment(fx.key)
    vec = predict(exp, parse_model(fx.model))
    if exp.kind == "entry":
        return vec / exp.spec.n_players  # entrants -> entry probability
    return vec


def write_bundle(out: Path, bundle=BUNDLE) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fx in bundle:
        obs = sample_observations(fx.key, probabilities(fx), fx.per_stratum, np.random.default_rng(fx.seed))
        path = out / fx.filename
        path.write_text(dumps_observations([obs]))
        paths.append(path)
    return paths


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    args = ap.parse_args(argv)
    for p in write_bundle(args.out):
        print(p)


if __name__ == "__main__":
    main()
