"""Model specifications and the prediction vectors they produce.

A model string follows the ``family:key=value,...`` grammar::

    qh:beta=0.08,gamma=0.76[,epsilon=1e-8]
    qre:lambda=1.2          (agent form on sequential games)
    aqre:lambda=1.2         (agent form, sequential games only)
    levelk:k=2
    ch:tau=1.5
    nash

Parsing is strict: unknown families, unknown keys, missing keys and
malformed numbers are all errors. ``parse_model(..., free=True)`` also
accepts a bare family name (``qh``), meaning "parameters to be fitted".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from .game_tree import GameTree, LevelPolicy, Policy, PseudoSequentialGame, leaf_distribution
from .games import Experiment, market_nash
from .qh_core import DEFAULT_EPSILON, QHParams, solve_qh


class ModelSpecError(ValueError):
    """A model string or parameter set is malformed."""


@dataclass(frozen=True)
class Family:
    name: str
    label: str  # column header in reports
    params: tuple[str, ...]
    optional: tuple[str, ...] = ()
    integer: tuple[str, ...] = ()


FAMILIES = {
    "qh": Family("qh", "Quantal Hierarchy", ("beta", "gamma"), ("epsilon",)),
    "levelk": Family("levelk", "Level-k", ("k",), integer=("k",)),
    "ch": Family("ch", "Cognitive Hierarchy", ("tau",)),
    "qre": Family("qre", "QRE", ("lambda",)),
    "aqre": Family("aqre", "Agent QRE", ("lambda",)),
    "nash": Family("nash", "Nash", ()),
}
# families compared by default, in report column order
DEFAULT_FAMILIES = ("qh", "levelk", "ch", "qre", "nash")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: dict = field(default_factory=dict)

    @property
    def free(self) -> bool:
        """True when parameters are missing and must be fitted."""
        return any(p not in self.params for p in FAMILIES[self.family].params)

    def with_params(self, **params) -> "ModelSpec":
        merged = dict(self.params)
        merged.update(params)
        return validate_spec(ModelSpec(self.family, merged))

    def __str__(self) -> str:
        if not self.params:
            return self.family
        fam = FAMILIES[self.family]
        order = [p for p in fam.params + fam.optional if p in self.params]
        return self.family + ":" + ",".join(f"{k}={_fmt(self.params[k])}" for k in order)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def validate_spec(spec: ModelSpec) -> ModelSpec:
    fam = FAMILIES.get(spec.family)
    if fam is None:
        raise ModelSpecError(f"unknown model family {spec.family!r}; expected one of {', '.join(FAMILIES)}")
    for k, v in spec.params.items():
        if k not in fam.params + fam.optional:
            raise ModelSpecError(f"{spec.family}: unknown parameter {k!r}")
        if k in fam.integer:
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ModelSpecError(f"{spec.family}: {k} must be a non-negative integer")
        elif not math.isfinite(v):
            raise ModelSpecError(f"{spec.family}: {k} must be finite")
    p = spec.params
    if spec.family == "qh":
        if "beta" in p and p["beta"] < 0:
            raise ModelSpecError("qh: beta must be >= 0")
        if "gamma" in p and not 0 <= p["gamma"] <= 1:
            raise ModelSpecError("qh: gamma must lie in [0, 1]")
        if "epsilon" in p and not 1e-12 <= p["epsilon"] <= 1e-4:
            raise ModelSpecError("qh: epsilon must lie in [1e-12, 1e-4]")
    for k in ("lambda", "tau"):
        if k in p and p[k] < 0:
            raise ModelSpecError(f"{spec.family}: {k} must be >= 0")
    return spec


def parse_model(text: str, free: bool = False) -> ModelSpec:
    """Parse a model string. With ``free=True`` parameters may be omitted."""
    text = text.strip()
    family, sep, rest = text.partition(":")
    family = family.strip().lower()
    if family not in FAMILIES:
        raise ModelSpecError(f"unknown model family {family!r}; expected one of {', '.join(FAMILIES)}")
    fam = FAMILIES[family]
    params: dict = {}
    if sep and not rest.strip():
        raise ModelSpecError(f"{text!r}: empty parameter list after ':'")
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            key, value = key.strip(), value.strip()
            if not eq or not key or not value:
                raise ModelSpecError(f"{text!r}: expected key=value, got {item!r}")
            if key in params:
                raise ModelSpecError(f"{text!r}: duplicate parameter {key!r}")
            if key not in fam.params + fam.optional:
                raise ModelSpecError(f"{family}: unknown parameter {key!r} (accepted: {', '.join(fam.params + fam.optional) or 'none'})")
            try:
                params[key] = int(value) if key in fam.integer else float(value)
            except ValueError:
                raise ModelSpecError(f"{text!r}: {key} has non-numeric value {value!r}") from None
    spec = validate_spec(ModelSpec(family, params))
    if spec.free and not free:
        missing = [p for p in fam.params if p not in params]
        raise ModelSpecError(f"{family}: missing parameter(s) {', '.join(missing)}")
    return spec


# -- predictions --------------------------------------------------------------------


class ModelEvaluationFailure(RuntimeError):
    """A model could not be evaluated at some parameter point."""

    def __init__(self, spec: ModelSpec, game: str, cause: Exception):
        super().__init__(f"{spec} failed on {game}: {type(cause).__name__}: {cause}")
        self.spec = spec
        self.cause = cause


def _qh_params(spec: ModelSpec) -> QHParams:
    p = spec.params
    return QHParams(float(p["beta"]), float(p["gamma"]), float(p.get("epsilon", DEFAULT_EPSILON)))


def _policy(game, spec: ModelSpec):
    """Raw model output for a single game: a tree Policy or a root
    distribution over the actions of a pseudo-sequential game."""
    fam, p = spec.family, spec.params
    seq = isinstance(game, GameTree)
    if fam == "qh":
        pol, _ = solve_qh(game, _qh_params(spec))
        return pol if seq else pol.root
    if fam in ("qre", "aqre"):
        params = bl.QREParams(float(p["lambda"]))
        if seq:
            return bl.agent_qre(game, params)
        if fam == "aqre":
            raise ModelSpecError("aqre applies to sequential games only; use qre")
        return bl.logit_qre_fixed_point(game, params).probs
    if fam == "levelk":
        out = bl.level_k_policy(game, int(p["k"]))
        return out if seq else out.root
    if fam == "ch":
        out = bl.cognitive_hierarchy_policy(game, bl.CHParams(float(p["tau"])))
        return out if seq else out.root
    if fam == "nash":
        return bl.backward_induction(game) if seq else None
    raise ModelSpecError(f"unknown family {fam!r}")


def _nash_simultaneous(exp: Experiment, game: PseudoSequentialGame) -> np.ndarray:
    if exp.family == "market":
        cap = exp.labels[exp.games.index(game)]
        return market_nash(exp.spec, cap)
    if exp.family == "beauty":
        out = np.zeros(game.size)
        out[0] = 1.0  # everyone guesses 0
        return out
    raise ModelSpecError(f"no equilibrium prediction for {exp.key}")


def to_vector(exp: Experiment, outputs: list) -> np.ndarray:
    """Map per-game model outputs onto the experiment's prediction vector."""
    if exp.kind == "entry":
        return np.array([exp.spec.n_players * float(np.asarray(o)[0]) for o in outputs])
    out = outputs[0]
    if exp.kind == "choice":
        if isinstance(out, Policy):
            return out.node(0).copy()
        return np.asarray(out, dtype=float).copy()
    if exp.kind == "outcome":
        return leaf_distribution(out)
    raise ValueError(f"unknown experiment kind {exp.kind!r}")


def predict(exp: Experiment, spec: ModelSpec) -> np.ndarray:
    """Prediction vector of ``spec`` on ``exp``.

    Market blocks give expected entrants per capacity, choice games the
    distribution over the root player's actions, and the centipede games the
    distribution over terminal outcomes.
    """
    if spec.free:
        raise ModelSpecError(f"{spec} has unfitted parameters")
    if spec.family == "qh" and "stacked" in exp.meta:
        # one pass over the levels for every market capacity at once
        try:
            rows = _policy(exp.meta["stacked"], spec)
        except (ArithmeticError, ValueError) as exc:
            raise ModelEvaluationFailure(spec, exp.key, exc) from exc
        return to_vector(exp, list(rows))
    outputs = []
    for game in exp.games:
        try:
            out = _policy(game, spec)
            if out is None:
                out = _nash_simultaneous(exp, game)
        except ModelSpecError:
            raise
        except (ArithmeticError, ValueError) as exc:
            raise ModelEvaluationFailure(spec, exp.key, exc) from exc
        outputs.append(out)
    vec = to_vector(exp, outputs)
    if not np.all(np.isfinite(vec)):
        raise ModelEvaluationFailure(spec, exp.key, ArithmeticError("non-finite prediction"))
    return vec


def predict_game(game, spec: ModelSpec):
    """Model output for one game: ``Policy`` on trees, ``LevelPolicy``-root
    vector on pseudo-sequential games."""
    return _policy(game, spec)


def levelk_table(exp: Experiment, k_max: int) -> np.ndarray:
    """Level-k prediction vectors for k = 0..k_max, computed along a single
    best-response chain (row ``k`` is level ``k``)."""
    per_game = []
    for game in exp.games:
        if isinstance(game, PseudoSequentialGame):
            chain = bl.level_k_policy(game, k_max).meta["chain"]
            per_game.append(chain)
        else:
            pol = bl.uniform_policy(game)
            chain = [pol]
            for _ in range(k_max):
                pol = bl.best_response(game, pol)
                chain.append(pol)
            per_game.append(chain)
    return np.array([to_vector(exp, [chain[k] for chain in per_game]) for k in range(k_max + 1)])


def model_label(family: str) -> str:
    return FAMILIES[family].label


__all__ = [
    "DEFAULT_FAMILIES",
    "FAMILIES",
    "LevelPolicy",
    "ModelEvaluationFailure",
    "ModelSpec",
    "ModelSpecError",
    "levelk_table",
    "model_label",
    "parse_model",
    "predict",
    "predict_game",
    "to_vector",
]
