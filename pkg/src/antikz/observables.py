"""Final-state diagnostics: excitation density, residual energy, energy spread."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import ModelParams, mode_arrays, momenta

__all__ = [
    "ObservableRecord",
    "ModeSetError",
    "excitation_probabilities",
    "excitation_density",
    "residual_energy",
    "energy_spread",
    "measure",
    "simulate",
]

METHODS = ("master-equation", "trajectory", "oracle")


class ModeSetError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableRecord:
    protocol: str
    N: int
    lam: float
    tau: float
    w2: float
    method: str
    n_w: float
    q: float
    de: float
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not (-1e-12 <= self.n_w <= 1 + 1e-12):
            raise ValueError(f"n_w outside [0, 1]: {self.n_w}")
        if self.q < -1e-9:
            raise ValueError(f"negative residual energy {self.q}")
        if self.de < 0:
            raise ValueError(f"negative energy spread {self.de}")

    def as_dict(self) -> dict:
        return asdict(self)


def _stack(states, params: ModelParams):
    ks = np.array([k for k, _ in states], dtype=float)
    expected = momenta(params.N)
    if ks.shape != expected.shape or not np.allclose(np.sort(ks), expected, rtol=0, atol=1e-12):
        raise ModeSetError(
            f"expected one state per k in momenta({params.N}), got {ks.size} states"
        )
    rhos = np.array([np.asarray(r, dtype=complex) for _, r in states])
    return ks, rhos


def _final_field(ks, params):
    a = mode_arrays(ks, params)
    return a["hz_end"], a["hx_end"]


def _energies(ks, rhos, params):
    hz, hx = _final_field(ks, params)
    # Tr[rho H] and Tr[rho H^2] with H = hz sz + hx sx, H^2 = |h|^2 I
    e1 = hz * (rhos[:, 0, 0] - rhos[:, 1, 1]).real + 2.0 * hx * rhos[:, 0, 1].real
    gap = np.hypot(hz, hx)
    return e1, gap


def excitation_probabilities(states, params: ModelParams) -> np.ndarray:
    """1 - <G_k(tau)|rho_k|G_k(tau)> for each mode, in the order given."""
    ks, rhos = _stack(states, params)
    e1, gap = _energies(ks, rhos, params)
    trace = (rhos[:, 0, 0] + rhos[:, 1, 1]).real
    # ground projector: (1 - H/|h|)/2
    return 0.5 * (trace + e1 / gap) - (trace - 1.0)


def excitation_density(states, params: ModelParams) -> float:
    """n_W = (2/N) sum_{k>0} (1 - <G_k|rho_k|G_k>).

    Gives 0 in the adiabatic limit and 1/2 for fully mixed modes.
    """
    p = excitation_probabilities(states, params)
    return 2.0 * math.fsum(p) / params.N


def residual_energy(states, params: ModelParams) -> float:
    """Energy per site above the final ground state, summed mode by mode."""
    ks, rhos = _stack(states, params)
    e1, gap = _energies(ks, rhos, params)
    return math.fsum(e1 + gap) / params.N


def energy_spread(states, params: ModelParams) -> float:
    """sqrt(sum_k Var_k) / N for the factorised final state."""
    ks, rhos = _stack(states, params)
    e1, gap = _energies(ks, rhos, params)
    var = gap**2 - e1**2
    if np.min(var) < -1e-12:
        raise ArithmeticError(f"negative mode energy variance {np.min(var):.3e}")
    return math.sqrt(max(math.fsum(np.clip(var, 0.0, None)), 0.0)) / params.N


def measure(states, params: ModelParams, method: str = "master-equation",
            seed: int = 0) -> ObservableRecord:
    return ObservableRecord(
        protocol=params.protocol.name, N=params.N, lam=params.lam, tau=params.tau,
        w2=params.w2, method=method,
        n_w=excitation_density(states, params),
        q=residual_energy(states, params),
        de=energy_spread(states, params),
        seed=seed,
    )


def simulate(params: ModelParams, cfg=None, threads: int | None = None,
             seed: int = 0) -> ObservableRecord:
    """Master-equation run of every mode followed by :func:`measure`."""
    from .evolve import evolve_all

    return measure(evolve_all(params, cfg, threads), params, seed=seed)
