"""Excitation-profile sweeps and width metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .core import PulseSequence, populations
from .taylor import Target
from .validation import check_grid

HALF = 0.5
LOW = 1e-4
HIGH = 0.999

DEFAULT_RANGE = (-1.2, 1.2)
DEFAULT_POINTS = 2001


@dataclass
class ProfileCurve:
    """Sampled profile; keeps the sequence so widths can use the exact curve."""

    eps_grid: np.ndarray
    values: np.ndarray
    target: Target = Target.TRANSFER
    sequence: PulseSequence | None = None
    detuning: float = 0.0

    def __post_init__(self):
        self.eps_grid = np.asarray(self.eps_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.target = Target(self.target)
        if self.eps_grid.shape != self.values.shape or self.eps_grid.ndim != 1:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.eps_grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    def __len__(self):
        return self.eps_grid.size

    def to_csv(self, path=None) -> str:
        """``eps,probability`` rows with 12 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["eps", "probability"])
        for e, v in zip(self.eps_grid, self.values):
            writer.writerow([f"{e:.12g}", f"{v:.12g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _exact(seq: PulseSequence, target: Target, detuning: float):
    col = 1 if target is Target.TRANSFER else 2

    def profile(eps):
        return populations(seq, eps, detuning)[..., col]
    return profile


def sweep(seq: PulseSequence, eps_min: float = DEFAULT_RANGE[0], eps_max: float = DEFAULT_RANGE[1],
          n_points: int = DEFAULT_POINTS, target: Target | str = Target.TRANSFER,
          detuning: float = 0.0) -> ProfileCurve:
    """Transfer (or leakage) probability on a uniform grid of area errors."""
    grid = check_grid(eps_min, eps_max, n_points)
    target = Target(target)
    values = np.clip(_exact(seq, target, detuning)(grid), 0.0, 1.0)
    return ProfileCurve(grid, values, target, seq, detuning)


@dataclass
class WidthReport:
    """Widths of the central transfer region; ``None`` marks an absent width."""

    W: float | None
    W_l: float | None
    W_h: float | None
    thresholds: dict = field(default_factory=lambda: {"W": HALF, "W_l": LOW, "W_h": HIGH})
    crossings: dict = field(default_factory=dict)
    method: str = "bisection"

    @property
    def absent(self) -> list[str]:
        return [k for k in ("W", "W_l", "W_h") if getattr(self, k) is None]

    def to_dict(self) -> dict:
        return {"W": self.W, "W_l": self.W_l, "W_h": self.W_h, "thresholds": dict(self.thresholds),
                "crossings": {k: list(v) for k, v in self.crossings.items()}, "method": self.method,
                "absent": self.absent}


def _crossings(f, grid: np.ndarray, level: float, xtol: float) -> list[float]:
    """All sign changes of ``f - level`` on ``grid``, refined by Brent's method."""
    vals = f(grid) - level
    out = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        out.append(brentq(lambda e: float(f(np.array([e]))[0]) - level, grid[i], grid[i + 1], xtol=xtol))
    for i in np.flatnonzero(vals == 0.0):
        out.append(float(grid[i]))
    return sorted(out)


def widths(source, n_grid: int = 4001, xtol: float = 1e-10) -> WidthReport:
    """Full width at half maximum ``W``, low-excitation width ``W_l`` and
    high-excitation width ``W_h``.

    ``W`` and ``W_h`` are measured around ``eps = 0``: ``W`` from the first
    0.5 crossings on either side, ``W_h`` from the outermost 0.999 crossings
    inside that half-maximum window.  ``W_l = |1 - e+| + |1 + e-|`` uses the
    1e-4 crossings met first when walking inward from ``+-1``.

    ``source`` is a pulse sequence or a :class:`ProfileCurve`.  Crossings are
    located on the exact profile when a sequence is available and by linear
    interpolation of the samples otherwise.
    """
    if isinstance(source, ProfileCurve):
        curve = source
        if curve.sequence is not None:
            f = _exact(curve.sequence, curve.target, curve.detuning)
            method = "bisection"
        else:
            def f(eps):
                return np.interp(eps, curve.eps_grid, curve.values)
            method = "interpolation"
    else:
        f = _exact(source, Target.TRANSFER, 0.0)
        method = "bisection"

    pos = np.linspace(0.0, 1.0, n_grid)
    neg = -pos
    p0 = float(f(np.array([0.0]))[0])
    cross = {}

    def side(grid, level):
        c = _crossings(f, np.sort(grid), level, xtol)
        return c

    w = wh = wl = None
    half_edges = None
    if p0 > HALF:
        right = [c for c in side(pos, HALF) if c > 0]
        left = [c for c in side(neg, HALF) if c < 0]
        if right and left:
            half_edges = (max(left), min(right))
            w = half_edges[1] - half_edges[0]
            cross["W"] = half_edges
    if p0 > HIGH:
        hi_r = np.linspace(0.0, half_edges[1] if half_edges else 1.0, n_grid)
        hi_l = np.linspace(half_edges[0] if half_edges else -1.0, 0.0, n_grid)
        right = [c for c in side(hi_r, HIGH) if c > 0]
        left = [c for c in side(hi_l, HIGH) if c < 0]
        if right and left:
            cross["W_h"] = (min(left), max(right))
            wh = cross["W_h"][1] - cross["W_h"][0]
    if float(f(np.array([1.0]))[0]) < LOW and float(f(np.array([-1.0]))[0]) < LOW:
        right = [c for c in side(pos, LOW) if c < 1.0]
        left = [c for c in side(neg, LOW) if c > -1.0]
        if right and left:
            cross["W_l"] = (min(left), max(right))
            wl = abs(1.0 - cross["W_l"][1]) + abs(1.0 + cross["W_l"][0])
    return WidthReport(w, wl, wh, crossings=cross, method=method)
