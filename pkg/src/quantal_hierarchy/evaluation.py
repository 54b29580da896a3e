"""Error metric, tie-averaged ranking across experiments, and report files."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_DOWN, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata


class LengthMismatch(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


def rmse(predicted, observed) -> float:
    """Root mean squared elementwise difference of two equal-length vectors."""
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape:
        raise LengthMismatch(f"{p.shape} vs {o.shape}")
    return float(np.sqrt(np.mean((p - o) ** 2)))


def mse(predicted, observed) -> float:
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape:
        raise LengthMismatch(f"{p.shape} vs {o.shape}")
    return float(np.mean((p - o) ** 2))


@dataclass(frozen=True)
class RankRow:
    game_class: str
    experiment: str
    errors: np.ndarray
    ranks: np.ndarray


@dataclass
class RankTable:
    """Per-experiment ranks, class averages and the overall rank.

    ``class_average[c][m]`` is model ``m``'s mean rank over the experiments
    of class ``c``; ``overall`` is the mean of the class averages, so each
    class weighs the same however many experiments it has.
    """

    models: tuple[str, ...]
    rows: list[RankRow]
    classes: tuple[str, ...]
    class_average: dict[str, np.ndarray]
    overall: np.ndarray
    meta: dict = field(default_factory=dict)

    def rounded(self, decimals: int = 2) -> tuple[dict[str, list[Decimal]], list[Decimal]]:
        """Class averages and overall ranks as a printed table shows them.

        Class averages are rounded to ``decimals`` places first and the
        overall rank is the mean of those rounded values, itself rounded;
        both steps round halves down.
        """
        q = Decimal(1).scaleb(-decimals)
        classes = {
            c: [Decimal(repr(float(v))).quantize(q, ROUND_HALF_DOWN) for v in avg]
            for c, avg in self.class_average.items()
        }
        n = len(self.classes)
        overall = [
            (sum(classes[c][j] for c in self.classes) / n).quantize(q, ROUND_HALF_DOWN)
            for j in range(len(self.models))
        ]
        return classes, overall

    def ranks_of(self, model: str) -> np.ndarray:
        j = self.models.index(model)
        return np.array([r.ranks[j] for r in self.rows])


def rank_row(errors: Sequence[float], decimals: int | None = None) -> np.ndarray:
    """Ranks 1..M of one row of errors, lower error first; ties share the
    average of the ranks they span. With ``decimals`` the errors are rounded
    first, so values that print the same tie."""
    e = np.asarray(errors, dtype=float)
    if not np.all(np.isfinite(e)):
        raise NonFiniteError(f"non-finite error in row {list(e)}")
    if decimals is not None:
        e = np.round(e, decimals)
    return rankdata(e, method="average")


def rank_models(
    rows: Iterable[tuple[str, str, Mapping[str, float]]],
    models: Sequence[str] | None = None,
    decimals: int | None = None,
) -> RankTable:
    """Rank models within each experiment and aggregate by game class.

    ``rows`` yields ``(game_class, experiment, {model: error})``. Every row
    must cover the same models (``models`` fixes the column order; by default
    the order of the first row).
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no experiments to rank")
    if models is None:
        models = tuple(rows[0][2].keys())
    models = tuple(models)
    if len(models) < 1:
        raise ValueError("need at least one model")
    out_rows = []
    classes: list[str] = []
    for cls, exp, errs in rows:
        if set(errs) != set(models):
            raise ValueError(f"{exp}: models {sorted(errs)} differ from {sorted(models)}")
        e = np.array([float(errs[m]) for m in models])
        out_rows.append(RankRow(cls, exp, e, rank_row(e, decimals)))
        if cls not in classes:
            classes.append(cls)
    class_average = {
        c: np.mean([r.ranks for r in out_rows if r.game_class == c], axis=0) for c in classes
    }
    overall = np.mean([class_average[c] for c in classes], axis=0)
    return RankTable(models, out_rows, tuple(classes), class_average, overall)


def rank_range_summary(table: RankTable) -> dict[str, tuple[float, float, float]]:
    """(best, median, worst) per-experiment rank of every model."""
    if not table.rows:
        raise ValueError("empty rank table")
    out = {}
    for m in table.models:
        r = table.ranks_of(m)
        out[m] = (float(r.min()), float(np.median(r)), float(r.max()))
    return out


# -- report files -----------------------------------------------------------------

REPORT_COLUMNS = ("game_class", "experiment", "model", "rmse_mean", "rmse_std", "rank")


def _num(x: float, digits: int = 6) -> str:
    return f"{x:.{digits}f}"


def _rank(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def report_csv(table: RankTable, stds: Mapping[tuple[str, str], float] | None = None) -> str:
    """Machine-readable report: one line per (experiment, model), then the
    class-average and overall ranks (their RMSE fields are empty)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in table.rows:
        for j, m in enumerate(table.models):
            sd = "" if stds is None else _num(stds[(row.experiment, m)])
            w.writerow((row.game_class, row.experiment, m, _num(row.errors[j]), sd, _rank(row.ranks[j])))
    for c in table.classes:
        for j, m in enumerate(table.models):
            w.writerow((c, "Average Rank", m, "", "", _rank(table.class_average[c][j])))
    for j, m in enumerate(table.models):
        w.writerow(("Overall", "Rank", m, "", "", _rank(table.overall[j])))
    return buf.getvalue()


def report_text(table: RankTable, labels: Mapping[str, str] | None = None, digits: int = 3) -> str:
    """Aligned human-readable table: ``rmse (rank)`` per cell, class
    averages after each class and the overall rank last."""
    labels = labels or {}
    head = ["", ""] + [labels.get(m, m) for m in table.models]
    lines: list[list[str]] = []
    for c in table.classes:
        first = True
        for row in table.rows:
            if row.game_class != c:
                continue
            cells = [f"{e:.{digits}f} ({_rank(r)})" for e, r in zip(row.errors, row.ranks)]
            lines.append([c if first else "", row.experiment] + cells)
            first = False
        lines.append(["", "Average Rank"] + [_rank(v) for v in table.class_average[c]])
    lines.append(["Overall", "Rank"] + [_rank(v) for v in table.overall])
    widths = [max(len(r[i]) for r in [head] + lines) for i in range(len(head))]

    def fmt(r):
        return "  ".join(cell.ljust(widths[i]) if i < 2 else cell.rjust(widths[i]) for i, cell in enumerate(r)).rstrip()

    sep = "-" * len(fmt(head))
    return "\n".join([fmt(head), sep] + [fmt(r) for r in lines]) + "\n"


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return float(v.mean()), sd


def finite_or_raise(x: float, what: str) -> float:
    if not math.isfinite(x):
        raise NonFiniteError(f"{what} is not finite")
    return x
