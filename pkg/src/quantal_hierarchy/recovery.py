"""Parameter-recovery checks on synthetic data.

A case generates near-noise-free observations from a known model (counts
``round(total * p)`` with a very large total), runs the full 5x2
cross-validation of one family on them and reports the mean out-of-sample
RMSE. Recovery is judged in prediction space: parameters that are not
identifiable are fine as long as the predictions match.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .data import from_frequencies
from .fitting import CVPlan, CVResult, cross_validate
from .games import get_experiment
from .models import parse_model, predict

TOTAL = 10**8  # observations per stratum


@dataclass(frozen=True)
class RecoveryCase:
    key: str
    truth: str  # generating model
    family: str  # family that is re-fitted

    @property
    def label(self) -> str:
        return f"{self.family} on {self.key} from {self.truth}"


GAMES = ("market:block1", "beauty:lab", "centipede:4", "ultimatum:10-10")

TRUTHS = {
    "qh": ("qh:beta=1.2,gamma=0.8", "qh:beta=0.3,gamma=0.6", "qh:beta=3,gamma=0.5", "qh:beta=0.3,gamma=0.7"),
    "qre": ("qre:lambda=1.5", "qre:lambda=0.5", "qre:lambda=4", "qre:lambda=0.2"),
    "ch": ("ch:tau=1.5", "ch:tau=1.5", "ch:tau=2", "ch:tau=1.5"),
    "levelk": ("levelk:k=1", "levelk:k=2", "levelk:k=1", "levelk:k=1"),
    "nash": ("nash",) * 4,
}

CASES = tuple(RecoveryCase(key, truth, fam) for fam, truths in TRUTHS.items() for key, truth in zip(GAMES, truths))


@dataclass
class RecoveryResult:
    case: RecoveryCase
    cv: CVResult
    seconds: float

    @property
    def rmse(self) -> float:
        return self.cv.rmse_mean


def synthetic_observations(key: str, truth: str, total: int = TOTAL):
    exp = get_experiment(key)
    vec = predict(exp, parse_model(truth))
    if exp.kind == "entry":
        vec = vec / exp.spec.n_players
    return from_frequencies(key, vec, total)


def run_case(case: RecoveryCase, budget: int | None = None, seed: int = 0) -> RecoveryResult:
    """Cross-validate ``case.family`` on data generated by ``case.truth``.
    Choice data are compared as histograms (no smoothing), so the only
    error left is the fit itself."""
    start = time.perf_counter()
    obs = synthetic_observations(case.key, case.truth)
    cv = cross_validate(case.family, get_experiment(case.key), obs, CVPlan(seed=seed), budget, bandwidth=None)
    return RecoveryResult(case, cv, time.perf_counter() - start)
