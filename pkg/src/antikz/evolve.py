"""Noise-averaged master equation, integrated mode by mode.

Each mode obeys

    d rho/dt = -i[h(t).sigma, rho] - (W^2/2) [v.sigma, [v.sigma, rho]]

which in the Bloch parametrisation rho = (1 + r.sigma)/2 becomes the real
linear system

    dr/dt = 2 h x r + 2 W^2 (v (v.r) - |v|^2 r).

The trace is fixed at one by construction and Hermiticity is exact.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from scipy.integrate import solve_ivp

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

from .model import ModeCoefficients, ModelParams, initial_state, mode_arrays, momenta

__all__ = [
    "IntegratorConfig",
    "IntegrationError",
    "StepSizeError",
    "to_bloch",
    "from_bloch",
    "integrate_mode",
    "evolve_bloch",
    "evolve_all",
    "full_space_oracle",
]

MAX_QUIET_STEPS = 10_000_000
POSITIVITY_FLOOR = -1e-9


class IntegrationError(RuntimeError):
    """Numerical fault while integrating a mode; carries the momentum."""

    def __init__(self, message: str, k: float | None = None):
        super().__init__(message if k is None else f"{message} (k={k!r})")
        self.k = k


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control for the mode and full-space integrators.

    ``method`` is ``"rk4"`` (fixed step, the default) or ``"adaptive"``
    (embedded Dormand-Prince 8(5,3) with ``rtol``/``atol``).  With
    ``dt=None`` the step is chosen from the model's norm bounds.
    ``renormalize_every`` is only used by the full-space oracle, where the
    density matrix is evolved directly.
    """

    method: str = "rk4"
    dt: float | None = None
    rtol: float = 1e-10
    atol: float = 1e-12
    renormalize_every: int = 100

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.renormalize_every < 1:
            raise ValueError("renormalize_every must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be > 0")

    def step(self, params: ModelParams) -> float:
        if self.dt is None:
            dt = min(1e-2, 0.05 / params.h_bound)
            if params.w2 > 0:
                dt = min(dt, 0.05 / (params.w2 * params.v2_bound))
            return dt
        limit = 0.1 / max(params.h_bound, params.w2 * params.v2_bound)
        if self.dt > limit:
            raise StepSizeError(
                f"dt={self.dt} exceeds the stability/accuracy bound {limit:.6g}"
            )
        return self.dt


def to_bloch(rho) -> np.ndarray:
    rho = np.asarray(rho)
    return np.array([
        2.0 * rho[..., 0, 1].real,
        -2.0 * rho[..., 0, 1].imag,
        (rho[..., 0, 0] - rho[..., 1, 1]).real,
    ]).T


def from_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    rx, ry, rz = r[..., 0], r[..., 1], r[..., 2]
    rho = np.empty(r.shape[:-1] + (2, 2), dtype=complex)
    rho[..., 0, 0] = 0.5 * (1 + rz)
    rho[..., 1, 1] = 0.5 * (1 - rz)
    rho[..., 0, 1] = 0.5 * (rx - 1j * ry)
    rho[..., 1, 0] = 0.5 * (rx + 1j * ry)
    return rho


@numba.njit(cache=True, inline="always")
def _bloch_rhs(x, y, z, hz, hx, vz, vx, w2):
    vr = vx * x + vz * z
    vv = vx * vx + vz * vz
    dx = -2.0 * hz * y + 2.0 * w2 * (vx * vr - vv * x)
    dy = 2.0 * (hz * x - hx * z) - 2.0 * w2 * vv * y
    dz = 2.0 * hx * y + 2.0 * w2 * (vz * vr - vv * z)
    return dx, dy, dz


@numba.njit(cache=True, parallel=True, nogil=True)
def _rk4_modes(r0, hz_a, hz_b, hx_a, hx_b, vz, vx, tau, w2, nsteps):
    out = np.empty_like(r0)
    h = tau / nsteps
    for m in numba.prange(r0.shape[0]):
        x, y, z = r0[m, 0], r0[m, 1], r0[m, 2]
        dhz = hz_b[m] - hz_a[m]
        dhx = hx_b[m] - hx_a[m]
        a, b = vz[m], vx[m]
        for i in range(nsteps):
            s0 = (i * h) / tau
            s1 = (i * h + 0.5 * h) / tau
            s2 = ((i + 1) * h) / tau
            hz0, hx0 = hz_a[m] + dhz * s0, hx_a[m] + dhx * s0
            hz1, hx1 = hz_a[m] + dhz * s1, hx_a[m] + dhx * s1
            hz2, hx2 = hz_a[m] + dhz * s2, hx_a[m] + dhx * s2
            k1x, k1y, k1z = _bloch_rhs(x, y, z, hz0, hx0, a, b, w2)
            k2x, k2y, k2z = _bloch_rhs(x + 0.5 * h * k1x, y + 0.5 * h * k1y,
                                       z + 0.5 * h * k1z, hz1, hx1, a, b, w2)
            k3x, k3y, k3z = _bloch_rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y,
                                       z + 0.5 * h * k2z, hz1, hx1, a, b, w2)
            k4x, k4y, k4z = _bloch_rhs(x + h * k3x, y + h * k3y, z + h * k3z,
                                       hz2, hx2, a, b, w2)
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        out[m, 0], out[m, 1], out[m, 2] = x, y, z
    return out


def _adaptive_mode(r0, hz_a, hz_b, hx_a, hx_b, vz, vx, tau, w2, cfg):
    def f(t, r):
        s = t / tau
        hz = hz_a + (hz_b - hz_a) * s
        hx = hx_a + (hx_b - hx_a) * s
        return _bloch_rhs(r[0], r[1], r[2], hz, hx, vz, vx, w2)

    sol = solve_ivp(f, (0.0, tau), r0, method="DOP853",
                    rtol=cfg.rtol, atol=cfg.atol)
    if not sol.success:
        raise IntegrationError(f"adaptive integrator failed: {sol.message}")
    return sol.y[:, -1]


def _check_positive(r, ks):
    # eigenvalues of (1 + r.sigma)/2 are (1 +- |r|)/2
    norms = np.linalg.norm(r, axis=1)
    bad = np.nonzero((1.0 - norms) / 2.0 < POSITIVITY_FLOOR)[0]
    if bad.size:
        m = int(bad[0])
        raise IntegrationError(
            f"negative eigenvalue {(1 - norms[m]) / 2:.3e} after integration",
            k=float(ks[m]),
        )


def _integrate(r0, arrays, ks, tau, w2, dt, cfg, threads):
    if cfg.method == "adaptive":
        out = np.empty_like(r0)
        for m in range(r0.shape[0]):
            try:
                out[m] = _adaptive_mode(
                    r0[m], arrays["hz_start"][m], arrays["hz_end"][m],
                    arrays["hx_start"][m], arrays["hx_end"][m],
                    arrays["vz"][m], arrays["vx"][m], tau, w2, cfg)
            except IntegrationError as exc:
                raise IntegrationError(str(exc), k=float(ks[m])) from exc
    else:
        nsteps = max(1, math.ceil(tau / dt - 1e-12))
        if nsteps > MAX_QUIET_STEPS:
            warnings.warn(f"mode integration needs {nsteps} RK4 steps", RuntimeWarning,
                          stacklevel=3)
        prev = numba.get_num_threads()
        if threads is not None:
            numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
        try:
            out = _rk4_modes(np.ascontiguousarray(r0, dtype=float),
                             *(np.ascontiguousarray(arrays[n], dtype=float) for n in
                               ("hz_start", "hz_end", "hx_start", "hx_end", "vz", "vx")),
                             float(tau), float(w2), int(nsteps))
        finally:
            numba.set_num_threads(prev)
    if not np.all(np.isfinite(out)):
        m = int(np.nonzero(~np.all(np.isfinite(out), axis=1))[0][0])
        raise IntegrationError("non-finite Bloch vector", k=float(ks[m]))
    _check_positive(out, ks)
    return out


def integrate_mode(rho0, coeffs: ModeCoefficients, params: ModelParams,
                   cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Integrate one mode from t = 0 to ``coeffs.tau``.

    Parameters
    ----------
    rho0 : (2, 2) array
        Initial mode density matrix.
    coeffs : ModeCoefficients
        Coefficient functions; the ramp length is ``coeffs.tau``.
    params : ModelParams
        Supplies the noise strength and the step-size bounds.
    cfg : IntegratorConfig, optional

    Returns
    -------
    (2, 2) complex array
        The mode density matrix at the end of the ramp.
    """
    cfg = cfg or IntegratorConfig()
    dt = cfg.step(params)
    arrays = {n: np.array([getattr(coeffs, n)]) for n in
              ("hz_start", "hz_end", "hx_start", "hx_end", "vz", "vx")}
    r0 = to_bloch(np.asarray(rho0)).reshape(1, 3)
    r = _integrate(r0, arrays, np.array([coeffs.k]), coeffs.tau, params.w2, dt, cfg, None)
    return from_bloch(r[0])


def evolve_bloch(params: ModelParams, cfg: IntegratorConfig | None = None,
                 threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Final Bloch vectors for all positive momenta; returns ``(ks, r)``."""
    cfg = cfg or IntegratorConfig()
    dt = cfg.step(params)
    ks = momenta(params.N)
    arrays = mode_arrays(ks, params)
    r0 = np.array([to_bloch(initial_state(k, params)) for k in ks])
    return ks, _integrate(r0, arrays, ks, params.tau, params.w2, dt, cfg, threads)


def evolve_all(params: ModelParams, cfg: IntegratorConfig | None = None,
               threads: int | None = None) -> list[tuple[float, np.ndarray]]:
    """Final ``(k, rho_k)`` for every k in ``momenta(N)``."""
    ks, r = evolve_bloch(params, cfg, threads)
    rhos = from_bloch(r)
    return [(float(k), rhos[m]) for m, k in enumerate(ks)]


def full_space_oracle(params: ModelParams, cfg: IntegratorConfig | None = None):
    """Unfactorised master equation on the spin chain (N <= 10)."""
    from .oracle import full_space_oracle as _oracle

    return _oracle(params, cfg)
