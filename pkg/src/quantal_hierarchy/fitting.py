"""Parameter search and 5x2 repeated cross-validation.

Continuous parameters are searched by a seeded adaptive sampler: a random
exploration phase over the whole box followed by local Gaussian refinement
around the best points found so far, with a fixed evaluation budget. The
level-k depth is searched exhaustively. The training objective is the mean
squared error between the prediction vector and the observed vector.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import EmptyObservations, ObservationSet, observed_vector, split_half
from .evaluation import mean_std, mse, rmse
from .games import Experiment
from .models import FAMILIES, ModelSpec, ModelSpecError, levelk_table, predict

DEFAULT_BUDGET = 1000
LEVELK_MAX = 100


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    lo: float
    hi: float
    upper_open: bool = True
    # log-like warp so that small values, where these models change fastest,
    # get as much attention as large ones; ``None`` keeps the scale linear
    warp: float | None = None

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        if self.warp is None:
            x = self.lo + (self.hi - self.lo) * u
        else:
            a = math.log1p((self.hi - self.lo) / self.warp)
            x = self.lo + self.warp * np.expm1(a * u)
        if self.upper_open:
            x = np.minimum(x, np.nextafter(self.hi, self.lo))
        return np.clip(x, self.lo, self.hi)


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[Param, ...]

    @property
    def dim(self) -> int:
        return len(self.params)

    def decode(self, u: np.ndarray) -> dict:
        return {p.name: float(p.from_unit(np.asarray(u[i]))) for i, p in enumerate(self.params)}


SEARCH_SPACES = {
    "qh": SearchSpace((Param("beta", 0.0, 100.0, warp=0.05), Param("gamma", 0.0, 1.0, upper_open=False))),
    "qre": SearchSpace((Param("lambda", 0.0, 100.0, warp=0.05),)),
    "aqre": SearchSpace((Param("lambda", 0.0, 100.0, warp=0.05),)),
    "ch": SearchSpace((Param("tau", 0.0, 10.0, warp=0.05),)),
}


@dataclass
class FitResult:
    spec: ModelSpec
    train_mse: float
    evaluations: int
    seed: int


@dataclass
class FoldResult:
    repeat: int
    fold: int
    fit: FitResult
    test_rmse: float


@dataclass
class CVPlan:
    repeats: int = 5
    folds: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.folds != 2:
            raise ValueError("only two-fold repeats are supported")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class CVResult:
    family: str
    experiment: str
    folds: list[FoldResult]
    rmse_mean: float
    rmse_std: float
    mean_params: dict = field(default_factory=dict)


def _reflect(u: np.ndarray) -> np.ndarray:
    u = np.mod(u, 2.0)
    return np.where(u > 1.0, 2.0 - u, u)


def adaptive_search(
    objective: Callable[[np.ndarray], float],
    dim: int,
    budget: int,
    rng: np.random.Generator,
    explore_frac: float = 0.25,
    n_local: int = 3,
) -> tuple[np.ndarray, float, int]:
    """Minimise ``objective`` over the unit cube with exactly ``budget`` calls.

    The first ``explore_frac`` of the budget samples the cube uniformly. The
    rest runs ``n_local`` interleaved (1+1) searches seeded at the best
    distinct exploration points; each perturbs its incumbent with a Gaussian
    step (reflected at the cube faces) whose scale grows after a success and
    shrinks after a failure. Returns ``(best point, best value, calls)``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n_explore = max(1, min(budget, int(round(budget * explore_frac))))
    pts = rng.random((n_explore, dim))
    vals = np.array([objective(p) for p in pts])
    calls = n_explore
    order = np.argsort(vals, kind="stable")
    inc = [pts[i].copy() for i in order[:n_local]]
    inc_val = [float(vals[i]) for i in order[:n_local]]
    sigma = [0.1] * len(inc)
    best_i = int(order[0])
    best, best_val = pts[best_i].copy(), float(vals[best_i])
    j = 0
    while calls < budget:
        i = j % len(inc)
        j += 1
        cand = _reflect(inc[i] + sigma[i] * rng.standard_normal(dim))
        v = objective(cand)
        calls += 1
        if v < inc_val[i]:
            inc[i], inc_val[i] = cand, v
            sigma[i] = min(sigma[i] * 1.5, 0.5)
            if v < best_val:
                best, best_val = cand.copy(), v
        else:
            sigma[i] = max(sigma[i] * 0.9, 1e-9)
    return best, best_val, calls


def _train_vector(train, bandwidth: str | None) -> np.ndarray:
    if isinstance(train, ObservationSet):
        return observed_vector(train, bandwidth)
    vec = np.asarray(train, dtype=float)
    if vec.size == 0:
        raise EmptyObservations("empty training vector")
    return vec


def fit_model(
    family: str,
    exp: Experiment,
    train,
    budget: int | None = None,
    seed: int = 0,
    bandwidth: str | None = "scott",
    levelk_cache: np.ndarray | None = None,
) -> FitResult:
    """Fit one model family to training data by minimising MSE.

    ``train`` is an ``ObservationSet`` (turned into the observed vector with
    ``bandwidth``) or an observed vector. Continuous families use
    ``budget`` evaluations (default 1000); level-k tries every
    ``k`` in 0..100; Nash has nothing to fit. Deterministic given ``seed``.
    """
    if family not in FAMILIES:
        raise ModelSpecError(f"unknown model family {family!r}")
    if isinstance(train, ObservationSet) and train.total == 0:
        raise EmptyObservations(f"{train.key}: no training observations")
    target = _train_vector(train, bandwidth)

    if family == "nash":
        spec = ModelSpec("nash")
        return FitResult(spec, mse(predict(exp, spec), target), 1, seed)

    if family == "levelk":
        k_max = LEVELK_MAX if budget is None else min(LEVELK_MAX, budget - 1)
        if k_max < 0:
            raise ValueError("budget must be >= 1")
        table = levelk_cache[: k_max + 1] if levelk_cache is not None else levelk_table(exp, k_max)
        errs = np.mean((table - target) ** 2, axis=1)
        k = int(np.argmin(errs))  # lowest k among equal errors
        return FitResult(ModelSpec("levelk", {"k": k}), float(errs[k]), k_max + 1, seed)

    space = SEARCH_SPACES[family]
    budget = DEFAULT_BUDGET if budget is None else budget
    rng = np.random.default_rng(seed)
    base = ModelSpec(family)

    def objective(u: np.ndarray) -> float:
        spec = base.with_params(**space.decode(u))
        return mse(predict(exp, spec), target)

    u, val, calls = adaptive_search(objective, space.dim, budget, rng)
    return FitResult(base.with_params(**space.decode(u)), float(val), calls, seed)


def derive_seed(plan_seed: int, family: str, train: ObservationSet) -> int:
    """Fit seed from the plan seed, the family and the training data itself,
    so a fit does not depend on which fold slot its data occupied."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(plan_seed).encode())
    h.update(family.encode())
    h.update(train.fingerprint())
    return int.from_bytes(h.digest(), "little")


@dataclass
class _Split:
    repeat: int
    halves: tuple[ObservationSet, ObservationSet]
    vectors: tuple[np.ndarray, np.ndarray]


def make_splits(obs: ObservationSet, plan: CVPlan, bandwidth: str | None = "scott") -> list[_Split]:
    """The ``plan.repeats`` random halvings, with each half's observed
    vector (smoothed independently when a bandwidth rule applies)."""
    totals = obs.stratum_totals()
    if obs.total < 4 or min(totals) < 2:
        raise InsufficientData(f"{obs.key}: need >= 4 observations and >= 2 per stratum for 5x2 CV")
    splits = []
    for r in range(plan.repeats):
        rng = np.random.default_rng([plan.seed, r])
        a, b = split_half(obs, rng)
        splits.append(_Split(r, (a, b), (observed_vector(a, bandwidth), observed_vector(b, bandwidth))))
    return splits


def cross_validate(
    family: str,
    exp: Experiment,
    obs: ObservationSet,
    plan: CVPlan | None = None,
    budget: int | None = None,
    bandwidth: str | None = "scott",
    splits: list[_Split] | None = None,
) -> CVResult:
    """Fit on one half and score RMSE on the other, both ways, for every
    repeat of the plan. The aggregate is the mean test RMSE of all fits."""
    plan = plan or CVPlan()
    splits = splits if splits is not None else make_splits(obs, plan, bandwidth)
    cache = levelk_table(exp, LEVELK_MAX if budget is None else min(LEVELK_MAX, budget - 1)) if family == "levelk" else None
    folds = []
    for sp in splits:
        for f in range(2):
            train_obs, train_vec = sp.halves[f], sp.vectors[f]
            test_vec = sp.vectors[1 - f]
            seed = derive_seed(plan.seed, family, train_obs)
            fit = fit_model(family, exp, train_vec, budget, seed, bandwidth, levelk_cache=cache)
            folds.append(FoldResult(sp.repeat, f, fit, rmse(predict(exp, fit.spec), test_vec)))
    m, s = mean_std([fr.test_rmse for fr in folds])
    names = FAMILIES[family].params
    mean_params = {p: float(np.mean([fr.fit.spec.params[p] for fr in folds])) for p in names}
    return CVResult(family, exp.key, folds, m, s, mean_params)
