"""Noisy transverse-field Ising chain reduced to independent momentum modes.

Each positive momentum k carries a two-level problem in the even-parity
pseudospin basis {|up>_k = c_k^+ c_-k^+ |0>, |down>_k = |0>}.  The mode
Hamiltonian is ``hz(t) sz + hx(t) sx`` and the noise couples through the
constant operator ``vz sz + vx sx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

__all__ = [
    "Annealing",
    "FieldRamp",
    "Protocol",
    "ModelParams",
    "ModeCoefficients",
    "GapClosedError",
    "momenta",
    "coefficients",
    "mode_arrays",
    "ground_state",
    "initial_state",
    "check_density_matrix",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1j], [1j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


class GapClosedError(ValueError):
    """Raised when a mode Hamiltonian vanishes identically (no ground state)."""


@dataclass(frozen=True)
class Annealing:
    """g0(t) = t/tau from the paramagnet (g=0) to the ferromagnet (g=1)."""

    name: str = field(default="annealing", init=False)

    def g(self, s):
        return s


@dataclass(frozen=True)
class FieldRamp:
    """Transverse field ramped linearly from ``g_start`` to ``g_end``, J = 1."""

    g_start: float = 2.0
    g_end: float = 0.0
    name: str = field(default="field-ramp", init=False)

    def __post_init__(self):
        for v in (self.g_start, self.g_end):
            if not math.isfinite(v):
                raise ValueError(f"field-ramp endpoints must be finite, got {v}")
        if self.g_start == self.g_end:
            raise ValueError("field-ramp needs g_start != g_end")

    def g(self, s):
        return self.g_start + (self.g_end - self.g_start) * s


Protocol = Union[Annealing, FieldRamp]


@dataclass(frozen=True)
class ModelParams:
    """Chain size, energy scale, ramp time, noise strength and protocol.

    ``w2`` and ``tau`` are in time units; ``lam`` (the energy scale) defaults
    to one.
    """

    N: int
    tau: float
    w2: float = 0.0
    lam: float = 1.0
    protocol: Protocol = field(default_factory=Annealing)

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N:
            raise ValueError(f"N must be an integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be even and >= 4, got {self.N}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not (math.isfinite(self.w2) and self.w2 >= 0):
            raise ValueError(f"w2 must be >= 0, got {self.w2}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not isinstance(self.protocol, (Annealing, FieldRamp)):
            raise TypeError(f"unknown protocol {self.protocol!r}")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def h_bound(self) -> float:
        """Upper bound on the mode generator scale used for step control."""
        if isinstance(self.protocol, Annealing):
            return 4.0 * self.lam
        gmax = max(abs(self.protocol.g_start), abs(self.protocol.g_end))
        return 2.0 * self.lam * (gmax + 1.0)

    @property
    def v2_bound(self) -> float:
        """Upper bound on the squared noise operator norm over all k."""
        if isinstance(self.protocol, Annealing):
            return 16.0 * self.lam**2
        return 4.0 * self.lam**2


@dataclass(frozen=True)
class ModeCoefficients:
    """Coefficients of one mode; ``hz``, ``hx`` are linear in t on [0, tau]."""

    k: float
    tau: float
    hz_start: float
    hz_end: float
    hx_start: float
    hx_end: float
    vz: float
    vx: float

    def hz(self, t):
        return self.hz_start + (self.hz_end - self.hz_start) * (np.asarray(t) / self.tau)

    def hx(self, t):
        return self.hx_start + (self.hx_end - self.hx_start) * (np.asarray(t) / self.tau)

    def hamiltonian(self, t: float) -> np.ndarray:
        return float(self.hz(t)) * SIGMA_Z + float(self.hx(t)) * SIGMA_X

    def noise_operator(self) -> np.ndarray:
        return self.vz * SIGMA_Z + self.vx * SIGMA_X


def momenta(N: int) -> np.ndarray:
    """Positive antiperiodic momenta (2m-1) pi / N for m = 1..N/2."""
    if isinstance(N, bool) or int(N) != N:
        raise ValueError(f"N must be an integer, got {N!r}")
    N = int(N)
    if N < 4 or N % 2:
        raise ValueError(f"N must be even and >= 4, got {N}")
    m = np.arange(1, N // 2 + 1)
    return (2 * m - 1) * np.pi / N


def mode_arrays(ks, params: ModelParams) -> dict[str, np.ndarray]:
    """Vectorised coefficient endpoints for an array of momenta."""
    ks = np.asarray(ks, dtype=float)
    c, s = np.cos(ks), np.sin(ks)
    lam = params.lam
    proto = params.protocol
    if isinstance(proto, Annealing):
        hz_start = np.full_like(ks, 2.0 * lam)
        hz_end = 2.0 * lam * (1.0 - 1.0 - c)
        hx_start = np.zeros_like(ks)
        hx_end = 2.0 * lam * s
        vz = -2.0 * lam * (1.0 + c)
        vx = 2.0 * lam * s
    else:
        hz_start = 2.0 * lam * (proto.g_start - c)
        hz_end = 2.0 * lam * (proto.g_end - c)
        hx_start = 2.0 * lam * s
        hx_end = 2.0 * lam * s
        vz = np.full_like(ks, 2.0 * lam)
        vx = np.zeros_like(ks)
    return dict(hz_start=hz_start, hz_end=hz_end, hx_start=hx_start,
                hx_end=hx_end, vz=vz, vx=vx)


def coefficients(k: float, params: ModelParams) -> ModeCoefficients:
    """Coefficient functions of mode ``k`` for the chosen protocol.

    Annealing: hz = 2L[1 - g0 - g0 cos k], hx = 2L g0 sin k,
    vz = -2L(1 + cos k), vx = 2L sin k.
    FieldRamp: hz = 2L[g - cos k], hx = 2L sin k, vz = 2L, vx = 0.
    """
    if not (0.0 < k < np.pi):
        raise ValueError(f"momentum must lie in (0, pi), got {k}")
    a = mode_arrays(np.array([k]), params)
    return ModeCoefficients(k=float(k), tau=params.tau,
                            **{name: float(v[0]) for name, v in a.items()})


def _lowest_eigvec(hz: float, hx: float) -> np.ndarray:
    e = math.hypot(hz, hx)
    if e == 0.0:
        raise GapClosedError("hz = hx = 0: the mode gap is closed exactly")
    # two algebraically equivalent forms; take the better-conditioned one
    if hz >= 0:
        u = np.array([hx, -(e + hz)])
    else:
        u = np.array([hz - e, hx])
    u = u / np.linalg.norm(u)
    first = u[0] if u[0] != 0.0 else u[1]
    if first < 0:
        u = -u
    return u.astype(complex)


def ground_state(k: float, t: float, params: ModelParams) -> np.ndarray:
    """Normalised lowest eigenvector of ``hz(t) sz + hx(t) sx``.

    Phase convention: the first nonzero component is real and positive.
    """
    co = coefficients(k, params)
    return _lowest_eigvec(float(co.hz(t)), float(co.hx(t)))


def initial_state(k: float, params: ModelParams | None = None) -> np.ndarray:
    """Mode density matrix at t = 0.

    Without ``params`` (or for annealing) this is the vacuum projector
    diag(0, 1), the g = 0 ground state.  For a field ramp the vacuum is not
    an eigenstate of H_k(0), so the ground projector at g_start is returned.
    """
    if params is None or isinstance(params.protocol, Annealing):
        return np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
    g = ground_state(k, 0.0, params)
    return np.outer(g, g.conj())


def check_density_matrix(rho, atol: float = 1e-9) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit trace and PSD."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != rho.shape[-1:] * 2:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2)))) > atol:
        raise ValueError("density matrix is not Hermitian")
    if np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0)) > atol:
        raise ValueError("density matrix does not have unit trace")
    herm = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    if np.min(np.linalg.eigvalsh(herm)) < -atol:
        raise ValueError("density matrix has a negative eigenvalue")
