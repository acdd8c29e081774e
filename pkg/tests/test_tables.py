import json
from pathlib import Path

import numpy as np
import pytest

from cp3.designer import Family
from cp3.tables import (COEF_TOL, QUARANTINE, X0_TOL, all_entries, labels, lookup,
                        spec_for_label, validate_all, validate_entry, verify_checksums)

BOUNDS = json.loads((Path(__file__).parent / "fixtures" / "table_bounds.json").read_text())


@pytest.fixture(scope="module")
def reports():
    return {r.label: r for r in validate_all()}


def test_checksums():
    assert all(verify_checksums().values())


def test_lookup_examples():
    assert lookup("S-NB2").params_pi == pytest.approx((0.6930, 0.4430))
    assert lookup("P-PB3").params_pi == pytest.approx((1.6631, 1.3708, 1.0588, 0.3485))


def test_unknown_label_lists_valid_ones():
    with pytest.raises(KeyError, match="S-NB2"):
        lookup("S-NB99")


def test_labels_unique_and_complete():
    names = labels()
    assert len(names) == len(set(names)) == 70
    assert {"S-NB7", "S-PB7e", "P-NB7", "P-PB7e", "P-BB3", "Sa-PB5@P=0.1", "Pa-PB5b@P=0.9"} <= set(names)


def test_label_parsing():
    s = spec_for_label("Pa-PB5b@P=0.3")
    assert s.family is Family.PB and s.pb_class == "b"
    assert s.target_prob == 0.3 and s.suppress_leakage == 2
    assert spec_for_label("S-PB3").pb_class == "a"
    with pytest.raises(ValueError):
        spec_for_label("X-NB3")


def test_every_row_passes_or_is_documented(reports):
    assert len(reports) == 70
    for r in reports.values():
        assert r.status in {"pass", "filter", "quarantined"}, r.label
        if r.status == "quarantined":
            assert r.label in QUARANTINE and r.note


def test_thresholds(reports):
    for r in reports.values():
        assert abs(r.x0_error) <= X0_TOL
        if r.status == "pass":
            assert r.max_coefficient < COEF_TOL


def test_rounding_quarantine_is_consistent(reports):
    for label, (kind, _) in QUARANTINE.items():
        r = reports[label]
        assert r.status == "quarantined"
        if kind == "rounding":
            assert r.rounding_consistent


def test_quarantine_has_no_stale_entries(reports):
    # a quarantined row that starts passing should leave the list
    for label in QUARANTINE:
        assert reports[label].max_coefficient >= COEF_TOL or abs(reports[label].x0_error) > X0_TOL


def test_tightened_bounds(reports):
    assert set(BOUNDS) == set(reports)
    for label, bounds in BOUNDS.items():
        r = reports[label]
        values = {"x0": r.x0_error, **r.coefficients}
        for name, bound in bounds.items():
            assert abs(values[name]) <= bound, (label, name)


def test_identity_and_widths(reports):
    for r in reports.values():
        if r.label.startswith("S"):
            assert r.identity_error < 1e-10
        assert set(r.widths) == {"W", "W_l", "W_h"}
    assert reports["S-NB7"].widths["W"] == pytest.approx(0.2822, abs=0.005)


def test_pnb7_polish_distance():
    r = validate_entry(lookup("P-NB7"), with_polish=True)
    assert r.polish_distance_pi > 0.01


def test_entries_have_sources():
    assert all(e.source for e in all_entries())
    assert np.allclose(lookup("S-NB5").params / np.pi, lookup("S-NB5").params_pi)
