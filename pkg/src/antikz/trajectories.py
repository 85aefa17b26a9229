"""Stochastic Schroedinger trajectories for individual noise realisations.

Every step applies the exact unitary

    U_n = exp(-i [H(t_n + dt/2) dt + V dG_n]),   dG_n = W sqrt(dt) xi_n,

so each realisation stays pure and normalised.  Averaging the projectors
over realisations reproduces the double-commutator master equation
(up to O(dt) bias), which is what the verification runs test.

The deviates xi_n come from a Philox counter-based generator keyed by
(seed, k) with the trajectory index in the counter, so any trajectory can
be regenerated on its own, and results do not depend on how the work is
split across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, coefficients, ground_state

__all__ = [
    "TrajectoryConfig",
    "AveragedState",
    "noise_generator",
    "sample_trajectory",
    "sample_trajectories",
    "sample_chain_trajectories",
    "noise_average",
    "channel_average",
]

_U64 = (1 << 64) - 1
CHAIN_KEY = _U64  # stands in for k in full-space runs
BATCH = 1000


@dataclass(frozen=True)
class TrajectoryConfig:
    n_traj: int = 1000
    dt: float = 2e-3
    seed: int = 0
    scope: str = "mode"  # "mode" or "full"
    workers: int = 1

    def __post_init__(self):
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError(f"n_traj must be a positive integer, got {self.n_traj}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if int(self.seed) != self.seed or not (0 <= self.seed <= _U64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.scope not in ("mode", "full"):
            raise ValueError(f"scope must be 'mode' or 'full', got {self.scope!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def check(self, params: ModelParams) -> None:
        if params.w2 * params.v2_bound * self.dt >= 0.1:
            raise ValueError(f"trajectory dt={self.dt} too large: W^2 |V|^2 dt must be < 0.1")
        if params.h_bound * self.dt >= 0.1:
            raise ValueError(f"trajectory dt={self.dt} too large: |H| dt must be < 0.1")


@dataclass
class AveragedState:
    """Mean projector over trajectories with entrywise standard errors."""

    mean: np.ndarray
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    n_traj: int

    @property
    def stderr(self) -> np.ndarray:
        return np.hypot(self.stderr_real, self.stderr_imag)


def _key_word(k) -> int:
    if k is None:
        return CHAIN_KEY
    return int(np.float64(k).view(np.uint64))


def noise_generator(seed: int, k, traj_index: int) -> np.random.Generator:
    """Independent stream for trajectory ``traj_index`` of mode ``k``."""
    key = np.array([int(seed) & _U64, _key_word(k)], dtype=np.uint64)
    counter = np.array([0, 0, int(traj_index) & _U64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _steps(params: ModelParams, cfg: TrajectoryConfig) -> tuple[int, float]:
    n = max(1, math.ceil(params.tau / cfg.dt - 1e-12))
    return n, params.tau / n


def _deviates(seed, k, indices, nsteps):
    return np.array([noise_generator(seed, k, i).standard_normal(nsteps) for i in indices])


def sample_trajectories(k: float, params: ModelParams, cfg: TrajectoryConfig,
                        indices) -> np.ndarray:
    """Final mode states for the given trajectory indices, shape (M, 2)."""
    cfg.check(params)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    co = coefficients(k, params)
    nsteps, h = _steps(params, cfg)
    xi = _deviates(cfg.seed, k, indices, nsteps)
    dgamma = math.sqrt(params.w2 * h) * xi
    psi = np.tile(ground_state(k, 0.0, params), (indices.size, 1))
    p0, p1 = psi[:, 0].copy(), psi[:, 1].copy()
    for n in range(nsteps):
        tm = (n + 0.5) * h
        az = float(co.hz(tm)) * h + co.vz * dgamma[:, n]
        ax = float(co.hx(tm)) * h + co.vx * dgamma[:, n]
        theta = np.hypot(ax, az)
        c = np.cos(theta)
        s = np.sinc(theta / np.pi)  # sin(theta)/theta
        p0, p1 = (c * p0 - 1j * s * (az * p0 + ax * p1),
                  c * p1 - 1j * s * (ax * p0 - az * p1))
    return np.stack([p0, p1], axis=1)


def sample_trajectory(k: float, params: ModelParams, cfg: TrajectoryConfig,
                      traj_index: int) -> np.ndarray:
    """Final state of one noise realisation of mode ``k``."""
    return sample_trajectories(k, params, cfg, [traj_index])[0]


def sample_chain_trajectories(params: ModelParams, cfg: TrajectoryConfig,
                              indices) -> np.ndarray:
    """Full-chain realisations (N <= 10) in the reduced symmetric basis."""
    from .oracle import reduced_chain

    cfg.check(params)
    chain = reduced_chain(params.N)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    nsteps, h = _steps(params, cfg)
    xi = _deviates(cfg.seed, None, indices, nsteps)
    dgamma = math.sqrt(params.w2 * h) * xi
    V = chain.noise_operator(params)
    _, g0 = chain.ground_state(0.0, params)
    psi = np.tile(g0.astype(complex), (indices.size, 1))
    for n in range(nsteps):
        A = chain.hamiltonian((n + 0.5) * h / params.tau, params) * h
        gen = A[None, :, :] + dgamma[:, n, None, None] * V[None, :, :]
        w, Q = np.linalg.eigh(gen)
        coef = np.einsum("mji,mj->mi", Q, psi)
        psi = np.einsum("mij,mj->mi", Q, np.exp(-1j * w) * coef)
    return psi


def _reduce(projectors: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # exactly rounded sums, so the result is independent of batching order
    M = projectors.shape[0]
    shape = projectors.shape[1:]
    flat = projectors.reshape(M, -1)
    mean = np.empty(flat.shape[1], dtype=complex)
    err_re = np.empty(flat.shape[1])
    err_im = np.empty(flat.shape[1])
    for j in range(flat.shape[1]):
        parts = []
        for vals in (flat[:, j].real, flat[:, j].imag):
            if np.all(vals == vals[0]):
                parts.append((float(vals[0]), 0.0))
                continue
            mu = math.fsum(vals) / M
            var = math.fsum((vals - mu) ** 2) / (M - 1) if M > 1 else 0.0
            parts.append((mu, math.sqrt(var / M)))
        mean[j] = complex(parts[0][0], parts[1][0])
        err_re[j], err_im[j] = parts[0][1], parts[1][1]
    return mean.reshape(shape), err_re.reshape(shape), err_im.reshape(shape)


def noise_average(k, params: ModelParams, cfg: TrajectoryConfig) -> AveragedState:
    """Average |psi><psi| over ``cfg.n_traj`` realisations.

    With ``cfg.scope == "full"`` the chain is simulated instead of a single
    mode; ``k`` is then ignored and the mean is returned in the reduced
    basis of :func:`antikz.oracle.reduced_chain`.
    """
    if cfg.scope == "full":
        def run(idx):
            return sample_chain_trajectories(params, cfg, idx)
    else:
        def run(idx):
            return sample_trajectories(k, params, cfg, idx)

    batches = [np.arange(a, min(a + BATCH, cfg.n_traj)) for a in range(0, cfg.n_traj, BATCH)]
    if cfg.workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            states = list(pool.map(run, batches))
    else:
        states = [run(b) for b in batches]
    psi = np.concatenate(states)
    projectors = psi[:, :, None] * psi[:, None, :].conj()
    projectors = 0.5 * (projectors + np.conj(np.swapaxes(projectors, 1, 2)))
    mean, err_re, err_im = _reduce(projectors)
    return AveragedState(mean=mean, stderr_real=err_re, stderr_imag=err_im,
                         n_traj=cfg.n_traj)


def channel_average(k: float, params: ModelParams, cfg: TrajectoryConfig,
                    nodes: int = 24) -> np.ndarray:
    """Infinite-sample limit of :func:`noise_average` for the discretised scheme.

    Steps are independent, so the mean state follows the averaged one-step
    channel E_xi[U(xi) rho U(xi)^+]; the Gaussian expectation is taken with
    Gauss-Hermite quadrature.  The difference to the master equation is the
    pure time-discretisation bias.
    """
    cfg.check(params)
    co = coefficients(k, params)
    nsteps, h = _steps(params, cfg)
    x, wts = np.polynomial.hermite_e.hermegauss(nodes)
    wts = wts / wts.sum()
    dg = math.sqrt(params.w2 * h) * x
    g = ground_state(k, 0.0, params)
    rho = np.outer(g, g.conj())
    for n in range(nsteps):
        tm = (n + 0.5) * h
        az = float(co.hz(tm)) * h + co.vz * dg
        ax = float(co.hx(tm)) * h + co.vx * dg
        theta = np.hypot(ax, az)
        c = np.cos(theta)
        s = np.sinc(theta / np.pi)
        U = np.empty((nodes, 2, 2), dtype=complex)
        U[:, 0, 0] = c - 1j * s * az
        U[:, 0, 1] = -1j * s * ax
        U[:, 1, 0] = -1j * s * ax
        U[:, 1, 1] = c + 1j * s * az
        rho = np.einsum("q,qij,jk,qlk->il", wts, U, rho, U.conj())
    return rho
