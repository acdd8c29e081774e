"""Composite 2 pi pulse sequences for ground-state transfer in a Lambda system."""
from .core import (ErrorContext, Modulation, Pulse, PulseSequence, build_hamiltonian, compose,
                   compose_many, leak_prob, populations, propagator, transfer_prob)
from .designer import (CompositePulseDesigner, DesignResult, DesignSpec, Family, NoSolutionError,
                       design, residual_vector, solve_arbitrary_transfer, solve_exact, solve_filtered)
from .taylor import CoefficientSet, TrigPolynomial, coefficients, fit_profile

__all__ = [
    "CoefficientSet", "CompositePulseDesigner", "DesignResult", "DesignSpec", "ErrorContext",
    "Family", "Modulation", "NoSolutionError", "Pulse", "PulseSequence", "TrigPolynomial",
    "build_hamiltonian", "coefficients", "compose", "compose_many", "design", "fit_profile",
    "leak_prob", "populations", "propagator", "residual_vector", "solve_arbitrary_transfer",
    "solve_exact", "solve_filtered", "transfer_prob",
]
__version__ = "0.1.0"
