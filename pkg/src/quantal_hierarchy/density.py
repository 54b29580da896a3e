"""Gaussian kernel density smoothing of scalar choices onto the action grid.

Choices in the large-action games (guesses, bargaining requests) are smoothed
before any model sees them. The density lives on the integer grid 0..100:
every kernel is evaluated on the grid, truncated to it and renormalised, so
each observation contributes exactly its weight in probability mass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.optimize import brentq
from scipy.special import logsumexp

GRID = np.arange(101, dtype=float)
BANDWIDTH_FLOOR = 1e-3
RULES = ("scott", "silverman", "sheather-jones")


class DegenerateSample(UserWarning):
    """All samples coincide, so a rule-of-thumb bandwidth would be zero."""


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class KDEModel:
    samples: np.ndarray  # distinct sample values, sorted
    weights: np.ndarray  # multiplicity of each value
    bandwidth: float
    rule: str
    grid: np.ndarray = GRID

    @property
    def n(self) -> float:
        return float(self.weights.sum())


def _collapse(samples, weights) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(samples, dtype=float).ravel()
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
    if x.shape != w.shape:
        raise ValueError("samples and weights differ in length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise ValueError("samples and weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    keep = w > 0
    values, inverse = np.unique(x[keep], return_inverse=True)
    return values, np.bincount(inverse, weights=w[keep], minlength=len(values))


def weighted_std(x: np.ndarray, w: np.ndarray) -> float:
    """Sample standard deviation (n - 1 denominator) of weighted data."""
    n = w.sum()
    mean = float(w @ x) / n
    return math.sqrt(float(w @ (x - mean) ** 2) / (n - 1))


def weighted_quantile(x: np.ndarray, w: np.ndarray, q: float) -> float:
    """Quantile of sorted ``x`` repeated ``w`` times, matching
    ``np.quantile`` (linear interpolation) on the expanded data."""
    n = w.sum()
    pos = (n - 1) * q
    cum = np.cumsum(w)
    lo, hi = math.floor(pos), math.ceil(pos)
    x_lo = x[np.searchsorted(cum, lo, side="right")]
    x_hi = x[np.searchsorted(cum, hi, side="right")]
    return float(x_lo + (x_hi - x_lo) * (pos - lo))


def scott_bandwidth(x: np.ndarray, w: np.ndarray) -> float:
    return weighted_std(x, w) * w.sum() ** -0.2


def silverman_bandwidth(x: np.ndarray, w: np.ndarray) -> float:
    sigma = weighted_std(x, w)
    iqr = weighted_quantile(x, w, 0.75) - weighted_quantile(x, w, 0.25)
    spread = min(sigma, iqr / 1.34) if iqr > 0 else sigma
    return 0.9 * spread * w.sum() ** -0.2


def _isj_fixed_point(t: float, n: float, k_sq: np.ndarray, a_sq: np.ndarray) -> float:
    """``t - xi * gamma^[l](t)`` from the diffusion estimator with l = 7."""
    ell = 7
    f = 0.5 * math.pi ** (2 * ell) * np.sum(k_sq**ell * a_sq * np.exp(-k_sq * math.pi**2 * t))
    for j in range(ell - 1, 1, -1):
        c1 = (1 + 0.5 ** (j + 0.5)) / 3
        c2 = np.prod(np.arange(1.0, 2 * j + 1, 2)) / math.sqrt(math.pi / 2)
        t_j = (c1 * c2 / (n * f)) ** (2.0 / (3 + 2 * j))
        f = 0.5 * math.pi ** (2 * j) * np.sum(k_sq**j * a_sq * np.exp(-k_sq * math.pi**2 * t_j))
    return t - (2 * n * math.sqrt(math.pi) * f) ** -0.4


def sheather_jones_bandwidth(x: np.ndarray, w: np.ndarray, bins: int = 2**12) -> float:
    """Improved Sheather-Jones plug-in bandwidth (diffusion / DCT solver).

    The data are linearly binned on ``[min - R/2, max + R/2]``; the plug-in equation
    is solved for the scaled squared bandwidth with Brent's method. When no
    root exists in the bracket the Silverman bandwidth is returned instead,
    with a warning.
    """
    n = float(w.sum())
    lo, hi = float(x.min()), float(x.max())
    spread = hi - lo
    lo, hi = lo - spread / 2, hi + spread / 2
    span = hi - lo
    # linear binning: each point splits its weight between the two nearest
    # bin centres, which keeps the estimate symmetric under reflection
    pos = (x - lo) / span * (bins - 1)
    left = np.minimum(np.floor(pos).astype(int), bins - 2)
    frac = pos - left
    hist = np.bincount(left, weights=w * (1 - frac), minlength=bins)
    hist += np.bincount(left + 1, weights=w * frac, minlength=bins)
    a = dct(hist / n, type=2)
    k_sq = np.arange(1, bins, dtype=float) ** 2
    a_sq = a[1:] ** 2
    try:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            t = brentq(_isj_fixed_point, 0.0, 0.1, args=(n, k_sq, a_sq), xtol=1e-14)
    except ValueError:
        t = float("nan")
    if not (math.isfinite(t) and t > 0):
        warnings.warn("Sheather-Jones equation has no root; falling back to Silverman", RuntimeWarning, stacklevel=3)
        return silverman_bandwidth(x, w)
    return math.sqrt(t) * span


_RULE_FUNCS = {
    "scott": scott_bandwidth,
    "silverman": silverman_bandwidth,
    "sheather-jones": sheather_jones_bandwidth,
}


def normalise_rule(rule: str) -> str:
    key = rule.strip().lower().replace("_", "-")
    aliases = {"sj": "sheather-jones", "isj": "sheather-jones", "sheatherjones": "sheather-jones"}
    key = aliases.get(key, key)
    if key not in RULES:
        raise ValueError(f"unknown bandwidth rule {rule!r}; choose from {', '.join(RULES)}")
    return key


def fit_kde(samples, rule: str = "scott", weights=None, grid: np.ndarray = GRID) -> KDEModel:
    """Choose a bandwidth for ``samples`` (optionally with integer-like
    ``weights``, i.e. counts) by the named rule.

    Scott: ``sigma * n**(-1/5)``; Silverman: ``0.9 * min(sigma, IQR/1.34) *
    n**(-1/5)``; Sheather-Jones: the improved plug-in solution. ``sigma`` is
    the sample standard deviation. Identical samples give a zero bandwidth,
    which is floored at ``BANDWIDTH_FLOOR`` with a ``DegenerateSample``
    warning.
    """
    rule = normalise_rule(rule)
    x, w = _collapse(samples, weights)
    if w.sum() < 2:
        raise InsufficientSamples("kernel density estimation needs at least 2 samples")
    if len(x) == 1:
        warnings.warn(f"all samples equal {x[0]:g}; bandwidth floored at {BANDWIDTH_FLOOR}", DegenerateSample, stacklevel=2)
        h = BANDWIDTH_FLOOR
    else:
        h = max(_RULE_FUNCS[rule](x, w), BANDWIDTH_FLOOR)
    return KDEModel(x, w, float(h), rule, np.asarray(grid, dtype=float))


def evaluate(model: KDEModel) -> np.ndarray:
    """Probability vector over ``model.grid``.

    Each kernel is truncated to the grid and renormalised there (in the log
    domain, so a very narrow kernel between grid points still lands on its
    nearest neighbours), then kernels are summed with their weights.
    """
    z = (model.grid[None, :] - model.samples[:, None]) / model.bandwidth
    logk = -0.5 * z**2
    logk -= logsumexp(logk, axis=1, keepdims=True)
    dens = model.weights @ np.exp(logk)
    return dens / dens.sum()


def smooth(samples, rule: str = "scott", weights=None) -> np.ndarray:
    """``evaluate(fit_kde(...))`` in one call."""
    return evaluate(fit_kde(samples, rule, weights))
