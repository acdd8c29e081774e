"""Exact Taylor coefficients of excitation profiles.

For resonant sequences of ``2 pi`` pulses the error enters only through
``exp(+-i pi (1 + eps))``, so every final population is a trigonometric
polynomial in ``eps`` with period 4:

    P(eps) = sum_k c_k exp(i k pi eps / 2),   |k| <= 4 N.

Sampling one period densely enough recovers the ``c_k`` exactly (up to
round-off) and derivatives of any order follow analytically.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from math import factorial
from typing import Iterable

import numpy as np
from numpy import cos, pi

from .core import E, F, TWO_PI, PulseSequence, compose_many


class Target(str, enum.Enum):
    TRANSFER = "transfer"
    LEAKAGE = "leakage"


class Center(float, enum.Enum):
    ZERO = 0.0
    PLUS_ONE = 1.0
    MINUS_ONE = -1.0


PERIOD = 4.0
# coefficients below this are reported as zero in validation output
NEAR_ZERO = 1e-9


@dataclass(frozen=True)
class TrigPolynomial:
    """``P(eps) = sum_k c_k exp(i k pi eps / 2)`` with ``k = -K..K``."""

    coeffs: np.ndarray  # index j holds c_{j - max_index}
    max_index: int

    @property
    def harmonics(self) -> dict[int, complex]:
        return {k: complex(c) for k, c in zip(self.indices, self.coeffs)}

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.max_index, self.max_index + 1)

    def __call__(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        waves = np.exp(1j * pi / 2 * np.multiply.outer(eps, self.indices))
        return (waves @ self.coeffs).real

    def derivative(self, eps, order: int) -> np.ndarray:
        k = self.indices
        eps = np.asarray(eps, dtype=float)
        waves = np.exp(1j * pi / 2 * np.multiply.outer(eps, k))
        return (waves @ (self.coeffs * (1j * pi / 2 * k) ** order)).real

    def mean(self) -> float:
        return float(self.coeffs[self.max_index].real)


@dataclass(frozen=True)
class CoefficientSet:
    """Taylor coefficients ``(1/m!) d^m P / d eps^m`` at ``center``."""

    center: Center
    values: np.ndarray
    target: Target

    def __getitem__(self, order: int) -> float:
        return float(self.values[order])

    def __len__(self):
        return len(self.values)


def _check_band_limited(seq: PulseSequence, detuning: float = 0.0):
    if detuning != 0.0 or any(abs(p.area - TWO_PI) > 1e-12 for p in seq):
        raise ValueError("profile not band-limited under these settings")


def sample_profile(seq: PulseSequence, target: Target | str, eps) -> np.ndarray:
    u = compose_many(seq, eps)
    row = F if Target(target) is Target.TRANSFER else E
    return np.abs(u[..., row, 0]) ** 2


def _sample_column(seq: PulseSequence) -> np.ndarray:
    """First propagator column on ``16 N + 1`` points of one period.

    That many samples leave a wide margin over the ``4 N`` bandwidth of any
    population, so nothing aliases.
    """
    _check_band_limited(seq)
    n = len(seq)
    if n == 0:
        raise ValueError("empty sequence")
    m = 16 * n + 1
    eps = PERIOD * np.arange(m) / m
    return compose_many(seq, eps)[:, :, 0]


def _harmonics(samples: np.ndarray, kmax: int) -> np.ndarray:
    """Dense ``c_k`` for ``|k| <= kmax`` along the first axis of ``samples``."""
    m = samples.shape[0]
    c = np.fft.fft(samples, axis=0) / m
    k = np.rint(np.fft.fftfreq(m, 1.0 / m)).astype(int)
    keep = np.abs(k) <= kmax
    dense = np.zeros((2 * kmax + 1,) + samples.shape[1:], dtype=complex)
    dense[k[keep] + kmax] = c[keep]
    return dense


def _fit_from_column(col: np.ndarray, target: Target | str, n: int) -> TrigPolynomial:
    row = F if Target(target) is Target.TRANSFER else E
    dense = _harmonics(np.abs(col[:, row]) ** 2, 4 * n)
    # enforce the Hermitian symmetry of a real profile
    dense = 0.5 * (dense + dense[::-1].conj())
    return TrigPolynomial(dense, 4 * n)


def fit_profile(seq: PulseSequence, target: Target | str = Target.TRANSFER) -> TrigPolynomial:
    """Recover the harmonics of a transfer or leakage profile by DFT."""
    return _fit_from_column(_sample_column(seq), target, len(seq))


def _taylor_sums(coeffs: np.ndarray, center: float, max_order: int) -> np.ndarray:
    kmax = (coeffs.shape[0] - 1) // 2
    k = np.arange(-kmax, kmax + 1).reshape((-1,) + (1,) * (coeffs.ndim - 1))
    term = coeffs * np.exp(1j * pi / 2 * k * center)
    step = 1j * pi / 2 * k
    out = np.empty((max_order + 1,) + coeffs.shape[1:], dtype=complex)
    for m in range(max_order + 1):
        out[m] = term.sum(axis=0) / factorial(m)
        term = term * step
    return out


def amplitude_coefficients(seq: PulseSequence, centers: Iterable[float], max_order: int) -> dict:
    """Complex Taylor coefficients of the amplitudes ``U[:, g]``.

    Returns ``{center: array of shape (max_order + 1, 3)}`` with rows
    ordered by power of ``eps - center`` and columns by final state.
    Populations are squared moduli of these, so a population vanishing to
    order ``2 J`` is equivalent to the amplitude vanishing to order ``J``.
    """
    n = len(seq)
    # amplitudes only carry harmonics |k| <= 2 N
    coeffs = _harmonics(_sample_column(seq), 2 * n)
    return {float(c): _taylor_sums(coeffs, float(c), max_order) for c in centers}


def taylor_at(poly: TrigPolynomial, center: Center | float, max_order: int,
              target: Target | str = Target.TRANSFER) -> CoefficientSet:
    """Taylor coefficients of order ``0..max_order`` by exact differentiation."""
    center = Center(float(center))
    values = _taylor_sums(poly.coeffs, center.value, max_order).real
    return CoefficientSet(center, values, Target(target))


def population_taylor(seq: PulseSequence, target: Target | str, centers: Iterable[float],
                      max_order: int) -> dict[float, np.ndarray]:
    """Taylor coefficients of a population as Cauchy products of amplitudes.

    Same values as ``taylor_at(fit_profile(...))`` but far less round-off at
    high orders: amplitudes carry half the bandwidth, and near a design
    root every product term is itself small.
    """
    row = F if Target(target) is Target.TRANSFER else E
    amps = amplitude_coefficients(seq, centers, max_order)
    out = {}
    for c, a in amps.items():
        col = a[:, row]
        out[c] = np.convolve(col, col.conj())[: max_order + 1].real
    return out


def coefficients(seq: PulseSequence, target: Target | str, center: Center | float,
                 max_order: int) -> np.ndarray:
    """Taylor coefficients ``0..max_order`` of a profile around ``center``."""
    center = Center(float(center))
    return population_taylor(seq, target, [center.value], max_order)[center.value]


def bernstein_scale(order: int, n_pulses: int) -> float:
    """Upper bound ``(2 pi N)^m / m!`` on ``|coefficient_m|`` for an
    ``N``-pulse profile bounded by one."""
    return (2 * pi * n_pulses) ** order / factorial(order)


def appendix_coefficients(phi2: float, varphi2: float, phi3: float, varphi3: float) -> dict[str, float]:
    """Closed-form Taylor coefficients of the phase-modulated three-pulse
    sequence (``theta = pi/4``, first-pulse phases zero).

    Returns ``x2, x4, x6, x8`` at ``eps = 0`` and ``xt4, xt6, xt8, xt10`` at
    ``eps = +-1``.  Serves as an oracle independent of the propagator.
    """
    p2, v2, p3, v3 = phi2, varphi2, phi3, varphi3
    x2 = -pi**2 / 2 * (2 * cos(v2) + 2 * cos(-v2 + p2 - p3) + 2 * cos(p2 - p3) + 3)
    x4 = pi**4 / 48 * (
        87 + 88 * cos(v2) + 6 * cos(p2 - v2 + v3 - p3) + 12 * cos(p2 - 2 * v2 + v3 - p3)
        + 6 * cos(2 * (p2 - v2) + v3 - p3) + 76 * cos(p2 - v2 - p3) + 12 * cos(2 * p2 - v2 - p3)
        + 24 * cos(v2 + p2 - p3) + 6 * cos(p2 - v2) + 88 * cos(p2 - p3))
    x6 = -pi**6 / 1440 * (
        270 * cos(v2 - v3) + 390 * cos(p2 - v2 + v3 - p3) + 180 * cos(2 * v2 - v3) + 2224 * cos(v2)
        + 840 * cos(v2 + p2 - p3)
        + 90 * (cos(p3) + cos(v3) + cos(v2 - p3) + cos(v3 + p2 - v2) + cos(v3 + p2 - 2 * v2)
                + cos(2 * p2 - v2 + v3 - p3) + cos(v3 + p2 - p3))
        + 210 * cos(2 * (p2 - v2) + v3 - p3)
        + 420 * (cos(2 * p2 - v2 - p3) + cos(p2 - 2 * v2 + v3 - p3))
        + 1624 * cos(p2 - v2 - p3) + 390 * cos(p2 - v2) + 2224 * cos(p2 - p3)
        + 180 * cos(2 * p2 - p3) + 270 * cos(p2) + 2121)
    x8 = pi**8 / 80640 * (
        18900 * cos(v2 - v3) + 10080 * cos(2 * v2 - v3) + 1260 * cos(v2 - v3 + p3) + 5040 * cos(v2 - p3)
        + 63508 * cos(v2) + 6300 * cos(v3) + 2520 * cos(v2 - v3 + p2) + 6300 * cos(p2 - v2 + v3)
        + 5040 * cos(p2 - 2 * v2 + v3) + 630 * cos(p3 - v3) + 17136 * cos(p2 - v2 + v3 - p3)
        + 5040 * cos(2 * p2 - v2 + v3 - p3) + 12852 * cos(p2 - 2 * v2 + v3 - p3) + 6300 * cos(p3)
        + 6426 * cos(2 * (p2 - v2) + v3 - p3) + 39316 * cos(p2 - v2 - p3) + 12852 * cos(2 * p2 - v2 - p3)
        + 17136 * cos(p2 - v2) + 25704 * cos(v2 + p2 - p3) + 5040 * cos(v3 + p2 - p3)
        + 63508 * cos(p2 - p3) + 10080 * cos(2 * p2 - p3) + 18900 * cos(p2) + 1260 * cos(p2 - v3) + 65337)
    xt4 = pi**4 / 16 * (
        4 * (cos(p2 - v3) + cos(p2 - p3) + cos(v2 - v3 + p3) + cos(v2) + cos(p3) + cos(v3) + cos(v3 + p2 - v2))
        + 15 + 2 * (cos(p2 - v2 + v3 - p3) + cos(p3 - v3) + cos(p2 - v2))
        + 12 * (cos(p2) + cos(v2 - v3)) + 8 * cos(v2 - v3 + p2))
    xt6 = -pi**6 / 96 * (
        102 * cos(v2 - v3) + 12 * cos(2 * v2 - v3) + 28 * cos(v2 - v3 + p3) + 6 * cos(v2 - p3) + 40 * cos(v2)
        + 34 * cos(v3) + 56 * cos(v2 - v3 + p2) + 34 * cos(v3 + p2 - v2) + 6 * cos(v3 + p2 - 2 * v2)
        + 26 * cos(p2 - v2 + v3 - p3) + 102 * cos(p2) + 6 * cos(2 * p2 - v2 + v3 - p3) + 26 * cos(p2 - v2)
        + 28 * cos(p2 - v3) + 6 * cos(v3 + p2 - p3) + 40 * cos(p2 - p3) + 12 * cos(2 * p2 - p3)
        + 14 * cos(p3 - v3) + 34 * cos(p3) + 117)
    xt8 = pi**8 / 1280 * (
        852 * cos(v2 - v3) + 160 * cos(2 * v2 - v3) + 204 * cos(v2 - v3 + p3) + 80 * cos(v2 - p3)
        + 404 * cos(v2) + 284 * cos(v3) + 408 * cos(v2 - v3 + p2) + 284 * cos(p2 - v2 + v3)
        + 80 * cos(p2 - 2 * v2 + v3) + 272 * cos(p2 - v2 + v3 - p3) + 985 + 80 * cos(2 * p2 - v2 + v3 - p3)
        + 20 * cos(p2 - 2 * v2 + v3 - p3) + 20 * cos(p2 - v2 - p3) + 20 * cos(2 * p2 - v2 - p3)
        + 10 * cos(2 * (p2 - v2) + v3 - p3) + 40 * cos(v2 + p2 - p3) + 272 * cos(p2 - v2)
        + 204 * cos(p2 - v3) + 404 * cos(p2 - p3) + 80 * cos(v3 + p2 - p3) + 160 * cos(2 * p2 - p3)
        + 852 * cos(p2) + 102 * cos(p3 - v3) + 284 * cos(p3))
    xt10 = -pi**10 / 483840 * (
        121164 * cos(v2 - v3) + 28224 * cos(2 * v2 - v3) + 26276 * cos(v2 - v3 + p3) + 14112 * cos(v2 - p3)
        + 145659 + 40388 * cos(v3) + 52552 * cos(v2 - v3 + p2) + 40388 * cos(v3 + p2 - v2)
        + 14112 * cos(v3 + p2 - 2 * v2) + 68990 * cos(v2) + 44512 * cos(p2 - v2 + v3 - p3)
        + 14112 * cos(2 * p2 - v2 + v3 - p3) + 6300 * cos(p2 - 2 * v2 + v3 - p3) + 40388 * cos(p3)
        + 3150 * cos(2 * (p2 - v2) + v3 - p3) + 8190 * cos(p2 - v2 - p3) + 6300 * cos(2 * p2 - v2 - p3)
        + 12600 * cos(v2 + p2 - p3) + 44512 * cos(p2 - v2) + 26276 * cos(p2 - v3)
        + 14112 * cos(v3 + p2 - p3) + 68990 * cos(p2 - p3) + 28224 * cos(2 * p2 - p3)
        + 121164 * cos(p2) + 13138 * cos(p3 - v3))
    return {"x2": x2, "x4": x4, "x6": x6, "x8": x8,
            "xt4": xt4, "xt6": xt6, "xt8": xt8, "xt10": xt10}


def named_coefficient(name: str) -> tuple[Target, Center, int]:
    """Decode ``"x4"``, ``"xt6"``, ``"y2"``, ``"yt2"`` into (target, center, order)."""
    head = name.rstrip("0123456789")
    order = int(name[len(head):])
    table = {"x": (Target.TRANSFER, Center.ZERO), "xt": (Target.TRANSFER, Center.PLUS_ONE),
             "y": (Target.LEAKAGE, Center.ZERO), "yt": (Target.LEAKAGE, Center.PLUS_ONE)}
    if head not in table:
        raise ValueError(f"unknown coefficient name {name!r}")
    return (*table[head], order)


def evaluate_named(seq: PulseSequence, names: Iterable[str]) -> dict[str, float]:
    """Evaluate a set of named coefficients from a single propagator sweep."""
    names = list(names)
    decoded = {name: named_coefficient(name) for name in names}
    if not decoded:
        return {}
    top = max(o for _, _, o in decoded.values())
    centers = sorted({c.value for _, c, _ in decoded.values()})
    amps = amplitude_coefficients(seq, centers, top)
    cache = {}
    out = {}
    for name, (target, center, order) in decoded.items():
        key = (target, center)
        if key not in cache:
            col = amps[center.value][:, F if target is Target.TRANSFER else E]
            cache[key] = np.convolve(col, col.conj())[: top + 1].real
        out[name] = float(cache[key][order])
    return out
