"""Noisy quantum annealing of the transverse-field Ising chain.

Mode-resolved noise-averaged master equation, stochastic trajectories,
a small-N full-chain reference, and the scaling analyses built on them.
"""

__version__ = "0.1.0"

from .model import Annealing, FieldRamp, ModelParams, coefficients, momenta  # noqa: E402
from .evolve import IntegratorConfig, evolve_all, integrate_mode  # noqa: E402
from .observables import ObservableRecord, measure, simulate  # noqa: E402

__all__ = [
    "__version__",
    "Annealing",
    "FieldRamp",
    "ModelParams",
    "coefficients",
    "momenta",
    "IntegratorConfig",
    "evolve_all",
    "integrate_mode",
    "ObservableRecord",
    "measure",
    "simulate",
]
