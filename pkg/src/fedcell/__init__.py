"""Energy-aware resource allocation and training for federated learning
over a wireless cell: a joint (time, bandwidth, frequency, power, accuracy)
energy minimizer, a completion-time minimizer that seeds it, baseline
schemes for comparison, and an executable federated training loop."""

from .model import (Allocation, DivergenceError, EnergyTimeBreakdown,
                    FlParams, InfeasibleError, IterationCoefficients,
                    NetworkScenario, SolveReport, UserParams,
                    derive_coefficients)
from .numerics import Tolerance

__all__ = [
    "Allocation",
    "DivergenceError",
    "EnergyTimeBreakdown",
    "FlParams",
    "InfeasibleError",
    "IterationCoefficients",
    "NetworkScenario",
    "SolveReport",
    "Tolerance",
    "UserParams",
    "derive_coefficients",
]
