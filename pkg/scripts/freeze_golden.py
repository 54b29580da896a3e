#!/usr/bin/env python3
"""Regenerate the frozen evaluation report in ``tests/golden``.

The determinism check re-runs the command recorded in
``tests/golden/command.json`` and compares the reports byte for byte with
the files written here. Re-freeze only after a deliberate change to the
models, the fitting procedure or the report format:

    python3 scripts/freeze_golden.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from quantal_hierarchy.cli import main as qh

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"
# data paths are relative to the repository root
COMMAND = ["evaluate", "--data", *sorted(str(p.relative_to(ROOT)) for p in (ROOT / "data").glob("*.csv")), "--budget", "100", "--seed", "0"]


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    argv = [a if not a.endswith(".csv") else str(ROOT / a) for a in COMMAND]
    code = qh(["--output-dir", str(GOLDEN), *argv])
    if code == 0:
        (GOLDEN / "command.json").write_text(json.dumps(COMMAND, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
