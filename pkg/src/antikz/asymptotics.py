"""Closed-form crossing probabilities and their Brillouin-zone sums."""

from __future__ import annotations

import math

import numpy as np

from .model import FieldRamp, ModelParams, momenta

__all__ = [
    "landau_zener",
    "kayanuma",
    "mode_adiabaticity",
    "kayanuma_density",
    "sweep_time",
    "brillouin_sum",
]


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("adiabaticity parameter must be >= 0")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def landau_zener(x):
    """Coherent crossing: exp(-2 pi x) with x = Delta^2/|v|."""
    return _out(np.exp(-2.0 * np.pi * _check_x(x)))


def kayanuma(x):
    """Crossing under fast diagonal noise: (1 + exp(-4 pi x)) / 2."""
    return _out(0.5 * (1.0 + np.exp(-4.0 * np.pi * _check_x(x))))


def mode_adiabaticity(k, tau):
    """x = tau k^2 for a mode crossing at inverse sweep rate ``tau``."""
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("tau must be > 0")
    return _out(np.asarray(tau, dtype=float) * np.asarray(k, dtype=float) ** 2)


def kayanuma_density(tau: float) -> float:
    """1/2 + 1/(4 pi sqrt(tau))."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return 0.5 + 1.0 / (4.0 * math.pi * math.sqrt(tau))


def sweep_time(params: ModelParams) -> float:
    """Inverse sweep rate of the transverse field, |dg/dt|^-1.

    ``mode_adiabaticity`` expects this time rather than the ramp length: a
    field ramp from g_start to g_end in time tau sweeps at |g_end - g_start|/tau.
    """
    proto = params.protocol
    if isinstance(proto, FieldRamp):
        return params.tau / abs(proto.g_end - proto.g_start)
    return params.tau


def brillouin_sum(prob, tau: float, N: int) -> float:
    """(1/N) sum over all N momenta of prob(tau k^2), using the k <-> -k symmetry."""
    ks = momenta(N)
    return 2.0 * math.fsum(np.asarray(prob(mode_adiabaticity(ks, tau)), dtype=float)) / N
