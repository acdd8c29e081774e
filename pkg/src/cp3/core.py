"""Pulses, Hamiltonians and exact propagators for a resonant Lambda system.

Basis order throughout is ``(|g>, |f>, |e>)``: two ground states coupled to a
common excited state.  A pulse is described by its total (generalized Rabi)
area ``A``, the coupling-strength ratio ``theta`` with ``tan(theta) = Omega /
lambda`` and the two field phases.  Angles are radians internally.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

G, F, E = 0, 1, 2


class Modulation(str, enum.Enum):
    STRENGTH = "strength"
    PHASE = "phase"


def _wrap(angle: float) -> float:
    out = float(np.mod(angle, TWO_PI))
    # np.mod can return exactly 2*pi for tiny negative inputs
    return 0.0 if out >= TWO_PI else out


@dataclass(frozen=True)
class Pulse:
    """One constant segment of a composite sequence.

    Parameters
    ----------
    theta : float
        Coupling-strength ratio, ``tan(theta) = Omega / lambda``.
    phi, varphi : float
        Phases of the ``|g>-|e>`` and ``|f>-|e>`` couplings.
    area : float
        Generalized Rabi area ``sqrt(Omega**2 + lambda**2) * duration``.
    duration : float
        Segment length in arbitrary time units.
    """

    theta: float
    phi: float = 0.0
    varphi: float = 0.0
    area: float = TWO_PI
    duration: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.area) and self.area > 0):
            raise ValueError(f"pulse area must be positive, got {self.area!r}")
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"pulse duration must be positive, got {self.duration!r}")
        for name in ("theta", "phi", "varphi"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, _wrap(value))

    @property
    def omega(self) -> float:
        """Rabi frequency of the ``|g>-|e>`` coupling."""
        return self.area / self.duration * np.sin(self.theta)

    @property
    def lam(self) -> float:
        """Rabi frequency of the ``|f>-|e>`` coupling."""
        return self.area / self.duration * np.cos(self.theta)


@dataclass(frozen=True)
class PulseSequence:
    """Ordered pulses; the first pulse acts first.

    ``modulation`` records how the sequence was designed and enforces the
    matching constraints: strength modulation fixes ``phi = pi/2`` and
    ``varphi = 0``; phase modulation shares one ratio ``theta`` (``pi/4``
    for population inversion) and zeroes the phases of the first pulse.
    ``None`` marks an unconstrained sequence, e.g. one with injected
    phase errors.
    """

    pulses: tuple[Pulse, ...]
    modulation: Modulation | None = Modulation.STRENGTH
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if self.modulation is not None:
            object.__setattr__(self, "modulation", Modulation(self.modulation))
        tol = 1e-12
        if self.modulation is Modulation.STRENGTH:
            for p in self.pulses:
                if abs(p.phi - np.pi / 2) > tol or min(p.varphi, TWO_PI - p.varphi) > tol:
                    raise ValueError("strength modulation requires phi = pi/2 and varphi = 0 on every pulse")
        elif self.modulation is Modulation.PHASE:
            if any(abs(p.theta - self.pulses[0].theta) > tol for p in self.pulses):
                raise ValueError("phase modulation requires one shared theta")
            if self.pulses and (self.pulses[0].phi > tol or self.pulses[0].varphi > tol):
                raise ValueError("phase modulation requires zero phases on the first pulse")

    def __len__(self):
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)

    @classmethod
    def strength(cls, thetas: Sequence[float], area: float = TWO_PI, label: str = "") -> "PulseSequence":
        """Strength-modulated sequence from coupling ratios (radians)."""
        pulses = [Pulse(theta=t, phi=np.pi / 2, varphi=0.0, area=area) for t in thetas]
        return cls(tuple(pulses), Modulation.STRENGTH, label)

    @classmethod
    def phase(cls, phases: Sequence[float], theta: float = np.pi / 4, area: float = TWO_PI,
              label: str = "") -> "PulseSequence":
        """Phase-modulated sequence from ``(phi_2, varphi_2, phi_3, ...)``.

        The first pulse carries zero phases; every pulse shares ``theta``.
        """
        phases = np.asarray(phases, dtype=float).ravel()
        if phases.size % 2:
            raise ValueError("phases must come in (phi, varphi) pairs")
        pairs = [(0.0, 0.0)] + [tuple(p) for p in phases.reshape(-1, 2)]
        pulses = [Pulse(theta=theta, phi=a, varphi=b, area=area) for a, b in pairs]
        return cls(tuple(pulses), Modulation.PHASE, label)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.pulses])

    @property
    def phases(self) -> np.ndarray:
        """``(phi_n, varphi_n)`` pairs, shape ``(N, 2)``."""
        return np.array([(p.phi, p.varphi) for p in self.pulses])


@dataclass(frozen=True)
class ErrorContext:
    """Systematic errors shared by all pulses of a sequence.

    ``eps`` scales every pulse area to ``A (1 + eps)``; ``detuning`` is a
    one-photon detuning of the excited state, in the same units as the Rabi
    frequencies.
    """

    eps: float = 0.0
    detuning: float = 0.0


def build_hamiltonian(pulse: Pulse, detuning: float = 0.0) -> np.ndarray:
    """Rotating-frame Hamiltonian of one pulse (hbar = 1)."""
    h = np.zeros((3, 3), dtype=complex)
    h[G, E] = 0.5 * pulse.omega * np.exp(1j * pulse.phi)
    h[F, E] = 0.5 * pulse.lam * np.exp(1j * pulse.varphi)
    h[E, G] = np.conj(h[G, E])
    h[E, F] = np.conj(h[F, E])
    h[E, E] = detuning
    return h


def _eig(pulse: Pulse, detuning: float):
    w, v = np.linalg.eigh(build_hamiltonian(pulse, detuning))
    return w, v


def _propagators(pulse: Pulse, eps: np.ndarray, detuning: float = 0.0) -> np.ndarray:
    """Stack of single-pulse propagators, one per entry of ``eps``."""
    eps = np.asarray(eps, dtype=float)
    if detuning == 0.0:
        # exp(-i H T (1+eps)) shares eigenvectors for all eps
        w, v = _eig(pulse, 0.0)
        phases = np.exp(-1j * np.multiply.outer(1.0 + eps, w) * pulse.duration)
        return np.einsum("ij,...j,kj->...ik", v, phases, v.conj())
    # detuning does not scale with the area error
    base = build_hamiltonian(pulse, 0.0)
    det = np.zeros((3, 3))
    det[E, E] = detuning
    hs = np.multiply.outer(1.0 + eps, base) + det
    w, v = np.linalg.eigh(hs)
    phases = np.exp(-1j * w * pulse.duration)
    return np.einsum("...ij,...j,...kj->...ik", v, phases, v.conj())


def propagator(pulse: Pulse, ctx: ErrorContext = ErrorContext()) -> np.ndarray:
    """Exact ``exp(-i H T)`` for a pulse whose area is scaled by ``1 + eps``."""
    return _propagators(pulse, np.asarray(ctx.eps), ctx.detuning)


def compose_many(seq: PulseSequence | Sequence[Pulse], eps, detuning: float = 0.0) -> np.ndarray:
    """Total propagators ``U_N ... U_1`` evaluated for an array of errors."""
    pulses = tuple(seq)
    if not pulses:
        raise ValueError("empty sequence")
    eps = np.asarray(eps, dtype=float)
    total = _propagators(pulses[0], eps, detuning)
    for p in pulses[1:]:
        total = _propagators(p, eps, detuning) @ total
    return total


def compose(seq: PulseSequence, ctx: ErrorContext = ErrorContext()) -> np.ndarray:
    """Total propagator of a sequence under a homogeneous area error."""
    return compose_many(seq, ctx.eps, ctx.detuning)


def transfer_prob(seq, ctx: ErrorContext = ErrorContext()) -> float:
    """Population of ``|f>`` after the sequence, starting from ``|g>``."""
    return float(abs(compose(seq, ctx)[F, G]) ** 2)


def leak_prob(seq, ctx: ErrorContext = ErrorContext()) -> float:
    """Population left in the excited state ``|e>``, starting from ``|g>``."""
    return float(abs(compose(seq, ctx)[E, G]) ** 2)


def populations(seq, eps, detuning: float = 0.0) -> np.ndarray:
    """Final populations ``(P_g, P_f, P_e)`` for each error; shape ``(..., 3)``."""
    u = compose_many(seq, eps, detuning)
    return np.abs(u[..., :, G]) ** 2


def unitarity_error(u: np.ndarray) -> float:
    """``max |U^dagger U - 1|`` over a single matrix or a stack."""
    u = np.asarray(u)
    ident = np.eye(u.shape[-1])
    return float(np.max(np.abs(np.swapaxes(u.conj(), -1, -2) @ u - ident)))


def strength_closed_form(thetas: Sequence[float]) -> np.ndarray:
    """Error-free total propagator of a strength-modulated sequence.

    With every area at ``2 pi`` the excited state decouples and the ground
    block is a rotation by the alternating sum ``2 * sum (-1)^(n+1) theta_n``.
    """
    n = len(thetas)
    alt = 2.0 * sum((-1) ** k * t for k, t in enumerate(thetas))
    sgn = (-1) ** n
    return np.array([
        [np.cos(alt), -1j * np.sin(alt), 0],
        [-sgn * 1j * np.sin(alt), sgn * np.cos(alt), 0],
        [0, 0, sgn],
    ], dtype=complex)
