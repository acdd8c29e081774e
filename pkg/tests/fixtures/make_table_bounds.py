"""Regenerate ``table_bounds.json``: per-row bounds on the achieved residuals.

Each bound is 1.5 times the achieved magnitude (plus 1e-12) so regressions
in the propagator or coefficient code show up as exceeded bounds.

    python3 tests/fixtures/make_table_bounds.py
"""
import json
from pathlib import Path

from cp3.tables import validate_all


def main():
    out = {}
    for r in validate_all():
        values = {"x0": r.x0_error, **r.coefficients}
        out[r.label] = {k: 1.5 * abs(v) + 1e-12 for k, v in values.items()}
    path = Path(__file__).with_name("table_bounds.json")
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
