"""Reference sequences and their validation.

The bundled JSON files hold the printed parameter values (in units of pi,
four decimals).  Rounding to four decimals perturbs every coefficient, so
validation reports, next to the plain thresholds, the first-order bound that
rounding alone can produce and how far the row sits from the nearest exact
root.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import Modulation, PulseSequence, strength_closed_form
from .designer import (DesignSpec, Family, build_sequence, filter_value, polish, residual_names,
                       residual_vector)
from .profile import widths

TABLE_FILES = ("table1.json", "table2.json", "table3.json", "table4.json", "table5.json")

CHECKSUMS = {
    "table1.json": "3023cf61aa509c648e462efa8621312564cfb57c17bb66b1a9cfaec3e8f49093",
    "table2.json": "afea0199885d56163967b537168d170657dd9e46a1049f1b352f53de46b69107",
    "table3.json": "65449ed803371666890ca4456937dd0d252db0f2a77d7694ebdbe3337f5c89a1",
    "table4.json": "503f55e4da74667597fa49799121117d0fe4644f80238a1dc7a30b9838973ccc",
    "table5.json": "9cd0c9c9de370d592a6faa79912467fffb171fd0dafad9958fae16ef0c5b9cef",
}

# half a unit in the fourth printed decimal, in radians
ROUNDING = 5e-5 * np.pi

X0_TOL = 2e-3
COEF_TOL = 1e-2
IDENTITY_TOL = 1e-10

# Rows whose printed values break the plain thresholds: (kind, reason).
# kind 'rounding' is re-checked on every run: each offending coefficient must
# stay inside its first-order rounding bound.
_ROUNDING_NOTE = ("high-order coefficients are amplified far beyond 1e-2 by four-decimal "
                  "rounding of the printed values; every offending coefficient stays within "
                  "its propagated rounding bound")
QUARANTINE: dict[str, tuple[str, str]] = {
    "S-PB4a": ("rounding", _ROUNDING_NOTE),
    "S-PB4b": ("rounding", _ROUNDING_NOTE),
    "S-PB5b": ("rounding", _ROUNDING_NOTE),
    "S-PB5c": ("rounding", _ROUNDING_NOTE),
    "S-PB6b": ("rounding", _ROUNDING_NOTE),
    "S-PB6c": ("rounding", _ROUNDING_NOTE),
    "S-PB6d": ("rounding", _ROUNDING_NOTE),
    "S-PB7a": ("rounding", _ROUNDING_NOTE),
    "S-PB7b": ("rounding", _ROUNDING_NOTE),
    "S-PB7c": ("rounding", _ROUNDING_NOTE),
    "S-PB7d": ("rounding", _ROUNDING_NOTE),
    "S-PB7e": ("rounding", _ROUNDING_NOTE),
    "P-NB3": ("rounding", _ROUNDING_NOTE),
    "P-NB5": ("rounding", _ROUNDING_NOTE),
    "Pa-NB5@P=0.9": ("rounding", _ROUNDING_NOTE),
    "Pa-NB5@P=0.8": ("rounding", _ROUNDING_NOTE),
    "Pa-NB5@P=0.7": ("rounding", _ROUNDING_NOTE),
    "Pa-NB5@P=0.6": ("rounding", _ROUNDING_NOTE),
    "Pa-NB5@P=0.4": ("rounding", _ROUNDING_NOTE),
    "Pa-NB5@P=0.3": ("rounding", _ROUNDING_NOTE),
    "Pa-PB5b@P=0.9": ("rounding", _ROUNDING_NOTE),
    "Pa-PB5b@P=0.8": ("rounding", _ROUNDING_NOTE),
    "Pa-PB5b@P=0.7": ("rounding", _ROUNDING_NOTE),
    "Pa-PB5b@P=0.3": ("rounding", _ROUNDING_NOTE),
    "Pa-PB5b@P=0.2": ("rounding", _ROUNDING_NOTE),
    "S-PB3": ("imprecise", "x2 = 0.030 at the printed values, about three times its rounding bound; "
                          "the nearest exact root lies 4e-4 pi away, so the row was printed from "
                          "a slightly unconverged solution"),
    "P-NB7": ("not-a-root", "the printed phases are not close to an exact root: polishing moves "
                            "them by 0.06 pi and multi-start search finds no exact seven-pulse "
                            "solution; the profile still matches the strength-modulated "
                            "seven-pulse narrowband profile to 3e-4"),
}

_LABEL = re.compile(r"^(?P<mod>[SP])(?P<arb>a?)-(?P<fam>NB|PB|BB)(?P<n>\d+)(?P<cls>[a-e]?)"
                    r"(?:@P=(?P<prob>[0-9.]+))?$")


@dataclass(frozen=True)
class ReferenceEntry:
    label: str
    source: str
    spec: DesignSpec
    params_pi: tuple[float, ...]

    @property
    def params(self) -> np.ndarray:
        return np.array(self.params_pi) * np.pi

    @property
    def sequence(self) -> PulseSequence:
        seq = build_sequence(self.params, self.spec)
        return PulseSequence(seq.pulses, seq.modulation, self.label)


def spec_for_label(label: str) -> DesignSpec:
    """Design spec encoded by a label such as ``"S-PB5b"`` or ``"Pa-NB5@P=0.3"``."""
    m = _LABEL.match(label)
    if m is None:
        raise ValueError(f"cannot parse sequence label {label!r}")
    mod = Modulation.STRENGTH if m["mod"] == "S" else Modulation.PHASE
    fam = Family(m["fam"].lower())
    n = int(m["n"])
    cls = (m["cls"] or "a") if fam is Family.PB else None
    prob = float(m["prob"]) if m["prob"] else 1.0
    leak = (1 if mod is Modulation.STRENGTH else 2) if m["arb"] else 0
    return DesignSpec(fam, mod, n, cls, prob, leak)


def _read(name: str) -> bytes:
    return resources.files("cp3.data").joinpath(name).read_bytes()


def checksum(name: str) -> str:
    return hashlib.sha256(_read(name)).hexdigest()


def verify_checksums() -> dict[str, bool]:
    """``{file: matches}`` against the recorded SHA-256 digests."""
    return {name: checksum(name) == digest for name, digest in CHECKSUMS.items()}


def all_entries() -> list[ReferenceEntry]:
    entries = []
    for name in TABLE_FILES:
        for row in json.loads(_read(name)):
            spec = spec_for_label(row["label"])
            entries.append(ReferenceEntry(row["label"], row["source"], spec, tuple(row["params_pi"])))
    return entries


def labels() -> list[str]:
    return [e.label for e in all_entries()]


def lookup(label: str) -> ReferenceEntry:
    for entry in all_entries():
        if entry.label == label:
            return entry
    raise KeyError(f"unknown label {label!r}; valid labels: {', '.join(labels())}")


@dataclass
class RowReport:
    label: str
    source: str
    status: str
    x0: float
    x0_error: float
    coefficients: dict[str, float]
    rounding_bounds: dict[str, float]
    filter_value: float | None = None
    polish_distance_pi: float | None = None
    polish_norm: float | None = None
    rounding_consistent: bool = True
    identity_error: float | None = None
    widths: dict | None = None
    note: str = ""

    @property
    def max_coefficient(self) -> float:
        return max((abs(v) for v in self.coefficients.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            "label": self.label, "source": self.source, "status": self.status,
            "x0": self.x0, "x0_error": self.x0_error,
            "coefficients": self.coefficients, "rounding_bounds": self.rounding_bounds,
            "filter_value": self.filter_value, "polish_distance_pi": self.polish_distance_pi,
            "polish_norm": self.polish_norm, "rounding_consistent": self.rounding_consistent,
            "identity_error": self.identity_error, "widths": self.widths, "note": self.note,
        }


def rounding_bounds(entry: ReferenceEntry, step: float = 1e-6) -> dict[str, float]:
    """First-order change of each residual under a worst-case rounding error."""
    p = entry.params
    jac = np.empty((len(residual_names(entry.spec)), p.size))
    for j in range(p.size):
        dp = np.zeros_like(p)
        dp[j] = step
        jac[:, j] = (residual_vector(p + dp, entry.spec) - residual_vector(p - dp, entry.spec)) / (2 * step)
    bounds = np.abs(jac).sum(axis=1) * ROUNDING
    return dict(zip(residual_names(entry.spec), bounds.tolist()))


def _wrapped_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = np.mod(a - b + np.pi, 2 * np.pi) - np.pi
    return float(np.max(np.abs(d)))


def _identity_error(entry: ReferenceEntry, x0: float) -> float | None:
    """Distance between the computed error-free transfer and the closed form."""
    if entry.spec.modulation is not Modulation.STRENGTH:
        return None
    return float(abs(abs(strength_closed_form(entry.params)[1, 0]) ** 2 - x0))


def validate_entry(entry: ReferenceEntry, with_polish: bool = False) -> RowReport:
    """Check one printed row against its design equations.

    The report also carries the width metrics of the printed row and, for
    strength modulation, the mismatch with the closed-form error-free
    transfer.
    """
    spec = entry.spec
    names = residual_names(spec)
    r = residual_vector(entry.params, spec)
    values = dict(zip(names, r.tolist()))
    x0_err = values.pop("x0")
    x0 = x0_err + spec.target_prob
    bounds = rounding_bounds(entry)
    extra = {"identity_error": _identity_error(entry, x0),
             "widths": {k: v for k, v in widths(entry.sequence).to_dict().items() if k in ("W", "W_l", "W_h")}}
    identity_ok = extra["identity_error"] is None or extra["identity_error"] <= IDENTITY_TOL
    if spec.is_filtered:
        fval = filter_value(entry.params, spec)
        ok = abs(x0_err) <= X0_TOL and identity_ok
        return RowReport(entry.label, entry.source, "filter" if ok else "fail", x0, x0_err, values,
                         bounds, filter_value=fval, **extra,
                         note="filter design: coefficients reported without a hard bound")
    report = RowReport(entry.label, entry.source, "pass", x0, x0_err, values, bounds, **extra)
    ok = abs(x0_err) <= X0_TOL and report.max_coefficient < COEF_TOL
    if not identity_ok:
        report.status, report.note = "fail", "closed-form error-free transfer disagrees with the propagator"
        return report
    if with_polish or not ok:
        refined, norm = polish(entry.params, spec)
        report.polish_distance_pi = _wrapped_distance(refined, entry.params) / np.pi
        report.polish_norm = norm
    if not ok:
        offending = [k for k, v in values.items() if abs(v) >= COEF_TOL]
        report.rounding_consistent = all(abs(values[k]) <= bounds[k] for k in offending)
        kind, note = QUARANTINE.get(entry.label, (None, ""))
        if kind is None or (kind == "rounding" and not report.rounding_consistent):
            report.status = "fail"
        else:
            report.status = "quarantined"
            report.note = f"{kind}: {note}"
    return report


def validate_all(with_polish: bool = False, only: list[str] | None = None) -> list[RowReport]:
    entries = all_entries()
    if only is not None:
        entries = [e for e in entries if e.label in set(only)]
    return [validate_entry(e, with_polish) for e in entries]
