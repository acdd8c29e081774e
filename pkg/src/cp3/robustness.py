"""Robustness of composite sequences against phase, detuning and waveform errors.

Also hosts a time-dependent Schroedinger-equation integrator for smooth
control waveforms, used when pulse edges are not ideal steps.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import E, F, G, TWO_PI, Modulation, Pulse, PulseSequence, populations
from .profile import ProfileCurve
from .validation import check_eps, check_grid

CONTOUR_LEVELS = (0.5, 0.9, 0.99, 0.999)


def reference_coupling(area: float = TWO_PI, duration: float = 1.0) -> float:
    """Coupling strength used as the detuning unit: ``lambda`` at ``theta = pi/4``."""
    return area / duration * np.cos(np.pi / 4)


class ErrorKind(str, enum.Enum):
    PHASE_DIFFERENCE = "phase-difference"
    PHASE_PAIR = "phase-pair"
    DETUNING = "detuning"
    WAVEFORM = "waveform"


@dataclass(frozen=True)
class ErrorModel:
    """A systematic error of one kind.

    ``magnitude`` is the relative phase error ``delta`` for the phase kinds,
    the detuning in units of :func:`reference_coupling` for ``DETUNING``, and
    the edge steepness ``eta`` for ``WAVEFORM``.
    """

    kind: ErrorKind
    magnitude: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ErrorKind(self.kind))
        if not np.isfinite(self.magnitude):
            raise ValueError("error magnitude must be finite")
        if self.kind is ErrorKind.WAVEFORM and self.magnitude <= 0:
            raise ValueError("eta must be positive")


def apply_phase_error(seq: PulseSequence, model: ErrorModel) -> PulseSequence:
    """Scale the phases of ``seq`` by ``1 + delta``.

    Strength modulation: the difference ``Psi_n = phi_n - varphi_n`` is
    scaled with ``varphi_n`` held fixed.  Phase modulation: ``phi_n`` and
    ``varphi_n`` are both scaled by the same factor.  The result carries no
    modulation tag since it no longer satisfies the design constraints.
    """
    delta = model.magnitude
    if model.kind is ErrorKind.PHASE_DIFFERENCE:
        if seq.modulation is not Modulation.STRENGTH:
            raise ValueError("a phase-difference error applies to strength-modulated sequences")
        pulses = [Pulse(p.theta, p.varphi + (p.phi - p.varphi) * (1 + delta), p.varphi, p.area, p.duration)
                  for p in seq]
    elif model.kind is ErrorKind.PHASE_PAIR:
        if seq.modulation is not Modulation.PHASE:
            raise ValueError("a phase-pair error applies to phase-modulated sequences")
        pulses = [Pulse(p.theta, p.phi * (1 + delta), p.varphi * (1 + delta), p.area, p.duration)
                  for p in seq]
    else:
        raise ValueError(f"{model.kind.value} is not a phase error")
    return PulseSequence(tuple(pulses), None, seq.label)


# -- smooth waveforms ------------------------------------------------------

@dataclass
class ControlWaveform:
    """Controls of a sequence with sigmoid edges of steepness ``eta``.

    Each control is ``a(t) = a_1 + sum_k (a_{k+1} - a_k) s(t - b_k)`` with
    ``s(x) = 1 / (1 + exp(-eta x))`` and ``b_k`` the boundary between pulses
    ``k`` and ``k + 1``.  ``eta = inf`` gives the ideal steps.  Phases are
    interpolated between their stored values in ``[0, 2 pi)``.
    """

    sequence: PulseSequence
    eta: float
    smooth: tuple[str, ...]
    time_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    omega: np.ndarray = field(default_factory=lambda: np.empty(0))
    lam: np.ndarray = field(default_factory=lambda: np.empty(0))
    phi: np.ndarray = field(default_factory=lambda: np.empty(0))
    varphi: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def boundaries(self) -> np.ndarray:
        return np.cumsum([p.duration for p in self.sequence])

    @property
    def total_time(self) -> float:
        return float(self.boundaries[-1])

    def _plateaus(self) -> dict[str, np.ndarray]:
        pulses = list(self.sequence)
        return {"omega": np.array([p.omega for p in pulses]), "lam": np.array([p.lam for p in pulses]),
                "phi": np.array([p.phi for p in pulses]), "varphi": np.array([p.varphi for p in pulses])}

    def controls(self, t) -> dict[str, np.ndarray]:
        """Control values at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        edges = self.boundaries[:-1]
        idx = np.clip(np.searchsorted(self.boundaries, t, side="left"), 0, len(self.sequence) - 1)
        out = {}
        for name, plateau in self._plateaus().items():
            if name in self.smooth and np.isfinite(self.eta) and edges.size:
                x = np.clip(self.eta * (t[:, None] - edges[None, :]), -700, 700)
                steps = 1.0 / (1.0 + np.exp(-x))
                out[name] = plateau[0] + steps @ np.diff(plateau)
            else:
                out[name] = plateau[idx]
        return out

    def hamiltonians(self, t, eps, detuning: float = 0.0) -> np.ndarray:
        """``H(t)`` for each time and area error, shape ``(len(t), len(eps), 3, 3)``."""
        c = self.controls(t)
        scale = 1.0 + np.asarray(eps, dtype=float)
        h = np.zeros((c["omega"].size, scale.size, 3, 3), dtype=complex)
        ge = 0.5 * c["omega"] * np.exp(1j * c["phi"])
        fe = 0.5 * c["lam"] * np.exp(1j * c["varphi"])
        h[:, :, G, E] = np.multiply.outer(ge, scale)
        h[:, :, F, E] = np.multiply.outer(fe, scale)
        h[:, :, E, G] = h[:, :, G, E].conj()
        h[:, :, E, F] = h[:, :, F, E].conj()
        h[:, :, E, E] = detuning
        return h


def sigmoid_waveform(seq: PulseSequence, eta: float, samples_per_pulse: int = 200) -> ControlWaveform:
    """Smooth version of ``seq``.

    Strength modulation smooths ``Omega(t)`` and keeps ``lambda`` stepwise;
    phase modulation smooths both phases.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if seq.modulation is Modulation.STRENGTH:
        smooth = ("omega",)
    elif seq.modulation is Modulation.PHASE:
        smooth = ("phi", "varphi")
    else:
        raise ValueError("waveform distortion needs a sequence with a known modulation")
    wf = ControlWaveform(seq, float(eta), smooth)
    grid = np.linspace(0.0, wf.total_time, samples_per_pulse * len(seq) + 1)
    c = wf.controls(grid)
    wf.time_grid = grid
    wf.omega, wf.lam, wf.phi, wf.varphi = c["omega"], c["lam"], c["phi"], c["varphi"]
    return wf


class ConvergenceError(RuntimeError):
    pass


def _expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return np.einsum("...ij,...j,...kj->...ik", v, np.exp(-1j * w * dt), v.conj())


def _propagate(wf: ControlWaveform, eps: np.ndarray, steps_per_pulse: int, detuning: float) -> np.ndarray:
    total = np.broadcast_to(np.eye(3, dtype=complex), (eps.size, 3, 3)).copy()
    start = 0.0
    for pulse in wf.sequence:
        h = pulse.duration / steps_per_pulse
        mids = start + h * (np.arange(steps_per_pulse) + 0.5)
        if detuning == 0.0:
            # H(t, eps) = (1 + eps) H(t, 0): one eigendecomposition per step
            w, v = np.linalg.eigh(wf.hamiltonians(mids, [0.0])[:, 0])
            phases = np.exp(-1j * h * np.multiply.outer(1.0 + eps, w))
            us = np.einsum("tij,etj,tkj->teik", v, phases, v.conj())
        else:
            us = _expm_hermitian(wf.hamiltonians(mids, eps, detuning), h)
        for u in us:
            total = u @ total
        start += pulse.duration
    return total


def integrate_tdse(wf: ControlWaveform, eps, dt: float = 1e-3, detuning: float = 0.0,
                   check: bool = True, tol: float = 1e-6) -> np.ndarray:
    """Propagator of a smooth waveform by midpoint exponentials.

    The step is ``exp(-i H(t_mid) dt)``, second order in ``dt`` and exactly
    unitary.  Steps are aligned with pulse boundaries (``dt`` is rounded
    down to divide each pulse).  With ``check`` the run is repeated at
    ``dt / 2``; if any probability moves by ``tol`` or more a
    :class:`ConvergenceError` names a step that should pass.  Returns the
    finer result, shape ``(len(eps), 3, 3)``.
    """
    eps = check_eps(eps)
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = max(1, int(np.ceil(min(p.duration for p in wf.sequence) / dt - 1e-9)))
    coarse = _propagate(wf, eps, steps, detuning)
    if not check:
        return coarse
    fine = _propagate(wf, eps, 2 * steps, detuning)
    diff = float(np.max(np.abs(np.abs(fine[:, :, G]) ** 2 - np.abs(coarse[:, :, G]) ** 2)))
    if diff >= tol:
        # the error is second order in the step
        suggested = 0.9 * dt * np.sqrt(tol / diff)
        raise ConvergenceError(f"time step {dt:g} not converged (probability change {diff:.2e}); "
                               f"try dt <= {suggested:.2e}")
    return fine


def waveform_profile(seq: PulseSequence, eta: float, eps, dt: float = 1e-3,
                     check: bool = True) -> np.ndarray:
    """Transfer probability of the sigmoid-edged version of ``seq``."""
    u = integrate_tdse(sigmoid_waveform(seq, eta), eps, dt=dt, check=check)
    return np.abs(u[:, F, G]) ** 2


# -- 2-D sweeps -----------------------------------------------------------

@dataclass
class Grid2D:
    """Transfer probability on an (error, eps) product grid."""

    kind: ErrorKind
    eps: np.ndarray
    errors: np.ndarray
    probability: np.ndarray  # shape (len(errors), len(eps))
    levels: tuple[float, ...] = CONTOUR_LEVELS

    def row(self, i: int) -> ProfileCurve:
        return ProfileCurve(self.eps, self.probability[i])

    def contour_points(self, level: float) -> list[tuple[float, float]]:
        """``(eps, error)`` points where the probability crosses ``level``,
        linearly interpolated along each error row."""
        pts = []
        for err, row in zip(self.errors, self.probability):
            d = row - level
            for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0):
                t = d[i] / (d[i] - d[i + 1])
                pts.append((float(self.eps[i] + t * (self.eps[i + 1] - self.eps[i])), float(err)))
        return pts

    def contours(self) -> dict[float, list[tuple[float, float]]]:
        return {lv: self.contour_points(lv) for lv in self.levels}

    def to_csv(self, path=None) -> str:
        """``eps,error,probability`` rows, error-major, 10 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["eps", "error", "probability"])
        for err, row in zip(self.errors, self.probability):
            for e, p in zip(self.eps, row):
                writer.writerow([f"{e:.10g}", f"{err:.10g}", f"{p:.10g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def sweep2d(seq: PulseSequence, kind: ErrorKind | str, eps_range=(-1.0, 1.0),
            error_range=(-0.2, 0.2), resolution=(201, 41), dt: float = 1e-3) -> Grid2D:
    """Transfer probability over area error and one other error.

    ``resolution`` is ``(n_eps, n_errors)``.  For ``WAVEFORM`` the error axis
    holds ``eta`` values (integrated without the step-halving check).
    """
    kind = ErrorKind(kind)
    eps = check_grid(eps_range[0], eps_range[1], resolution[0])
    errors = check_grid(error_range[0], error_range[1], resolution[1])
    prob = np.empty((errors.size, eps.size))
    for i, err in enumerate(errors):
        if kind is ErrorKind.DETUNING:
            det = err * reference_coupling(seq.pulses[0].area, seq.pulses[0].duration)
            prob[i] = populations(seq, eps, det)[:, F]
        elif kind is ErrorKind.WAVEFORM:
            prob[i] = waveform_profile(seq, err, eps, dt=dt, check=False)
        else:
            prob[i] = populations(apply_phase_error(seq, ErrorModel(kind, err)), eps)[:, F]
    return Grid2D(kind, eps, errors, np.clip(prob, 0.0, 1.0))
