#!/usr/bin/env python3
"""Re-rank a published comparison table from its RMSE values alone.

Reads the ``error (rank)`` cells of ``tests/fixtures/table1_published.csv``
(or another file in the same layout), recomputes every rank with the
package's ranking code, and prints the recomputed table next to a
line-by-line comparison with the printed ranks.

    python3 scripts/reproduce_table1_ranks.py [path]
"""

from __future__ import annotations

import csv
import re
import sys
from decimal import Decimal
from pathlib import Path

from quantal_hierarchy.evaluation import rank_models, report_text

MODELS = ("qh", "levelk", "ch", "qre", "nash")
CELL = re.compile(r"^\s*([0-9.]+)\s*\(([0-9.]+)\)\s*$")
DEFAULT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "table1_published.csv"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    path = Path(argv[0]) if argv else DEFAULT
    rows, printed, averages, overall = [], [], {}, {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["game_class"] == "Overall":
                overall = {m: Decimal(rec[m]) for m in MODELS}
            elif rec["experiment"] == "Average Rank":
                averages[rec["game_class"]] = {m: Decimal(rec[m]) for m in MODELS}
            else:
                cells = {m: CELL.match(rec[m]).groups() for m in MODELS}
                rows.append((rec["game_class"], rec["experiment"], {m: float(e) for m, (e, _) in cells.items()}))
                printed.append({m: float(r) for m, (_, r) in cells.items()})
    table = rank_models(rows, MODELS)
    print(report_text(table))
    mismatches = 0
    for row, want in zip(table.rows, printed):
        got = dict(zip(MODELS, row.ranks))
        if any(got[m] != want[m] for m in MODELS):
            mismatches += 1
            print(f"rank mismatch in {row.experiment}: {got} vs printed {want}")
    classes, overall_rounded = table.rounded(2)
    for c, avg in averages.items():
        if classes[c] != [avg[m] for m in MODELS]:
            mismatches += 1
            print(f"class average mismatch in {c}: {classes[c]} vs printed {avg}")
    if overall and overall_rounded != [overall[m] for m in MODELS]:
        mismatches += 1
        print(f"overall mismatch: {overall_rounded} vs printed {overall}")
    shown = ", ".join(f"{m} {v.normalize()}" for m, v in zip(MODELS, overall_rounded))
    print(f"overall ranks (two decimals, halves down): {shown}")
    print("all printed ranks reproduced" if not mismatches else f"{mismatches} mismatches")
    return 0 if not mismatches else 1


if __name__ == "__main__":
    sys.exit(main())
