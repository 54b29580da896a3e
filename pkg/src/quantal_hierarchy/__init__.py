"""Quantal Hierarchy model of bounded rationality on extensive-form games,
with logit QRE, level-k, cognitive hierarchy and equilibrium baselines."""

from .game_tree import GameTree, Policy, build_tree, expected_payoff
from .models import ModelSpec, parse_model, predict
from .qh_core import QHParams, effective_depth, single_step_decision, solve_qh

__version__ = "0.1.0"

__all__ = [
    "GameTree",
    "ModelSpec",
    "Policy",
    "QHParams",
    "build_tree",
    "effective_depth",
    "expected_payoff",
    "parse_model",
    "predict",
    "single_step_decision",
    "solve_qh",
]
