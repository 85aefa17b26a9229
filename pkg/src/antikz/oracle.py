"""Full spin-chain master equation for small N, used as an independent check.

The chain Hamiltonian only contains the translation-invariant sums
X = sum_n sx_n and ZZ = sum_n sz_n sz_{n+1} (periodic), and the initial
state |+...+> is symmetric.  The dynamics therefore stays inside the
smallest subspace containing |+...+> that is invariant under X and ZZ.
That subspace is built explicitly (Krylov closure, exact to round-off) and
the density matrix is evolved there; :attr:`FullSpaceState.rho_full`
embeds it back into the 2^N-dimensional space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .evolve import IntegrationError, IntegratorConfig
from .model import Annealing, ModelParams

__all__ = ["SpinChain", "FullSpaceState", "spin_operators", "reduced_chain",
           "full_space_oracle", "MAX_ORACLE_N"]

MAX_ORACLE_N = 10


@lru_cache(maxsize=None)
def spin_operators(N: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse X = sum sx_n and ZZ = sum sz_n sz_{n+1} (periodic) in the sz basis."""
    dim = 1 << N
    idx = np.arange(dim)
    rows, cols = [], []
    for n in range(N):
        rows.append(idx)
        cols.append(idx ^ (1 << n))
    X = sp.csr_matrix((np.ones(N * dim), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dim, dim))
    z = 1 - 2 * ((idx[:, None] >> np.arange(N)) & 1)
    zz = np.sum(z * np.roll(z, -1, axis=1), axis=1).astype(float)
    ZZ = sp.diags(zz).tocsr()
    return X, ZZ


def _krylov_closure(ops, v0, tol=1e-10):
    basis = [v0 / np.linalg.norm(v0)]
    frontier = list(basis)
    while frontier:
        new = []
        for v in frontier:
            for op in ops:
                w = op @ v
                for _ in range(2):
                    B = np.array(basis)
                    w = w - B.T @ (B @ w)
                nrm = np.linalg.norm(w)
                if nrm > tol:
                    w = w / nrm
                    basis.append(w)
                    new.append(w)
        frontier = new
    return np.array(basis).T


@dataclass(frozen=True)
class SpinChain:
    """Chain operators restricted to the dynamically reachable subspace."""

    N: int
    basis: np.ndarray   # (2^N, d) real isometry
    X: np.ndarray       # (d, d)
    ZZ: np.ndarray      # (d, d)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def hamiltonian(self, s: float, params: ModelParams) -> np.ndarray:
        """Deterministic Hamiltonian H0 at ramp fraction s = t/tau."""
        lam = params.lam
        if isinstance(params.protocol, Annealing):
            return -lam * ((1.0 - s) * self.X + s * self.ZZ)
        return -lam * (params.protocol.g(s) * self.X + self.ZZ)

    def noise_operator(self, params: ModelParams) -> np.ndarray:
        lam = params.lam
        if isinstance(params.protocol, Annealing):
            return -lam * (-self.X + self.ZZ)
        return -lam * self.X

    def ground_state(self, s: float, params: ModelParams) -> tuple[float, np.ndarray]:
        w, u = np.linalg.eigh(self.hamiltonian(s, params))
        return float(w[0]), u[:, 0]


@lru_cache(maxsize=None)
def _chain(N: int) -> SpinChain:
    X, ZZ = spin_operators(N)
    plus = np.ones(1 << N)
    B = _krylov_closure((X, ZZ), plus)
    return SpinChain(N=N, basis=B, X=B.T @ (X @ B), ZZ=B.T @ (ZZ @ B))


def reduced_chain(N: int) -> SpinChain:
    if isinstance(N, bool) or int(N) != N or N % 2 or not (4 <= N <= MAX_ORACLE_N):
        raise ValueError(f"full-space oracle needs even 4 <= N <= {MAX_ORACLE_N}, got {N}")
    return _chain(int(N))


@dataclass
class FullSpaceState:
    """Noise-averaged chain state at the end of the ramp."""

    params: ModelParams
    chain: SpinChain
    rho: np.ndarray     # (d, d) in the reduced basis

    @property
    def rho_full(self) -> np.ndarray:
        B = self.chain.basis
        return B @ self.rho @ B.T

    def expectation(self, op_reduced: np.ndarray) -> float:
        return float(np.trace(self.rho @ op_reduced).real)

    def energy(self, s: float = 1.0) -> float:
        return self.expectation(self.chain.hamiltonian(s, self.params))

    def residual_energy(self) -> float:
        H = self.chain.hamiltonian(1.0, self.params)
        e0 = float(np.linalg.eigvalsh(H)[0])
        return (self.expectation(H) - e0) / self.params.N

    def energy_spread(self) -> float:
        H = self.chain.hamiltonian(1.0, self.params)
        var = self.expectation(H @ H) - self.expectation(H) ** 2
        if var < -1e-10:
            raise ArithmeticError(f"negative energy variance {var:.3e}")
        return math.sqrt(max(var, 0.0)) / self.params.N

    def excitation_density(self) -> float:
        """Kink density (1/2N) sum_n (1 - sz_n sz_{n+1}).

        This equals the quasiparticle density when the final Hamiltonian is
        the bare Ising coupling, which is the end point of both protocols
        with their default parameters.
        """
        p = self.params
        end_field = 0.0 if isinstance(p.protocol, Annealing) else p.protocol.g_end
        if end_field != 0.0:
            raise ValueError("oracle excitation density needs a vanishing final "
                             f"transverse field, got g_end={end_field}")
        return 0.5 * (1.0 - self.expectation(self.chain.ZZ) / p.N)


def _initial(chain: SpinChain, params: ModelParams) -> np.ndarray:
    _, g = chain.ground_state(0.0, params)
    return np.outer(g, g).astype(complex)


def _rhs(rho, H, V, V2, w2):
    Hr = H @ rho
    out = -1j * (Hr - Hr.conj().T)
    if w2:
        A = V2 @ rho
        out -= 0.5 * w2 * (A + A.conj().T - 2.0 * V @ rho @ V)
    return out


def full_space_oracle(params: ModelParams, cfg: IntegratorConfig | None = None,
                      ) -> FullSpaceState:
    """Integrate d rho/dt = -i[H0(t), rho] - (W^2/2)[V, [V, rho]] on the chain.

    Starts from the ground state of H0(0) (all spins along +x for annealing)
    and uses periodic spin boundary conditions.
    """
    chain = reduced_chain(params.N)
    cfg = cfg or IntegratorConfig()
    V = chain.noise_operator(params)
    V2 = V @ V
    rho = _initial(chain, params)
    tau, w2 = params.tau, params.w2

    if cfg.method == "adaptive":
        d = chain.dim

        def f(t, y):
            H = chain.hamiltonian(t / tau, params)
            return _rhs(y.reshape(d, d), H, V, V2, w2).ravel()

        sol = solve_ivp(f, (0.0, tau), rho.ravel(), method="DOP853",
                        rtol=cfg.rtol, atol=cfg.atol)
        if not sol.success:
            raise IntegrationError(f"oracle integration failed: {sol.message}")
        rho = sol.y[:, -1].reshape(d, d)
    else:
        hnorm = max(np.linalg.norm(chain.hamiltonian(s, params), 2) for s in (0.0, 1.0))
        vnorm2 = np.linalg.norm(V, 2) ** 2
        # the chain norm grows with N, so the mode step is tightened here
        dt = min(cfg.step(params), 0.02 / hnorm)
        if w2:
            dt = min(dt, 0.02 / (w2 * vnorm2))
        nsteps = max(1, math.ceil(tau / dt - 1e-12))
        h = tau / nsteps
        for i in range(nsteps):
            t = i * h
            H0 = chain.hamiltonian(t / tau, params)
            H1 = chain.hamiltonian((t + 0.5 * h) / tau, params)
            H2 = chain.hamiltonian((t + h) / tau, params)
            k1 = _rhs(rho, H0, V, V2, w2)
            k2 = _rhs(rho + 0.5 * h * k1, H1, V, V2, w2)
            k3 = _rhs(rho + 0.5 * h * k2, H1, V, V2, w2)
            k4 = _rhs(rho + h * k3, H2, V, V2, w2)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if (i + 1) % cfg.renormalize_every == 0:
                rho = 0.5 * (rho + rho.conj().T)
                rho /= np.trace(rho).real
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    if np.linalg.eigvalsh(rho)[0] < -1e-9:
        raise IntegrationError("oracle density matrix lost positivity")
    return FullSpaceState(params=params, chain=chain, rho=rho)
