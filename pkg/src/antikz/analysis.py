"""Scaling analyses on sweep data: KZM exponent, heating rate, optimal ramp time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .evolve import IntegratorConfig
from .model import ModelParams
from .observables import ObservableRecord, simulate

__all__ = [
    "KzmTheory",
    "FitResult",
    "LineFit",
    "HeatingFit",
    "SweepSpec",
    "TauOpt",
    "BracketError",
    "DEFAULT_W2_GRID",
    "KZM_TAU_GRID",
    "TAU_SEARCH_GRID",
    "fit_power_law",
    "fit_line",
    "heating_rate",
    "run_sweep",
    "find_tau_opt",
    "scan_tau_opt",
    "fit_tau_opt_scaling",
    "quench_time_map",
]

# Noise strengths (time units) whose optimal ramp times fall inside [4, 2000].
DEFAULT_W2_GRID = (1e-5, 3e-5, 1e-4, 3e-4, 1e-3)
KZM_TAU_GRID = (16.0, 32.0, 64.0, 128.0, 256.0, 512.0)
TAU_SEARCH_GRID = tuple(float(t) for t in np.geomspace(4.0, 2000.0, 13))

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class BracketError(ValueError):
    """The scanned tau grid does not bracket an interior minimum."""


@dataclass(frozen=True)
class KzmTheory:
    d: float = 1.0
    nu: float = 1.0
    z: float = 1.0

    @property
    def beta(self) -> float:
        return self.d * self.nu / (1.0 + self.z * self.nu)

    @property
    def tau_opt_exponent(self) -> float:
        """Exponent of tau_opt in the heating rate (and in W^2, since r ~ W^2)."""
        return -1.0 / (self.beta + 1.0)


@dataclass(frozen=True)
class FitResult:
    prefactor: float
    exponent: float
    prefactor_err: float
    exponent_err: float
    r2: float
    n_points: int

    def __call__(self, x):
        return self.prefactor * np.asarray(x, dtype=float) ** self.exponent


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    r2: float


def _ols(x: np.ndarray, y: np.ndarray) -> LineFit:
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("x values must not all be equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    if sst == 0.0 or ssr <= 1e-30 * max(sst, 1.0):
        r2 = 1.0
    else:
        r2 = 1.0 - ssr / sst
    s2 = ssr / (n - 2) if n > 2 else 0.0
    return LineFit(slope=slope, intercept=intercept,
                   slope_err=math.sqrt(s2 / sxx),
                   intercept_err=math.sqrt(s2 * (1.0 / n + xm**2 / sxx)),
                   r2=r2)


def fit_line(x, y) -> LineFit:
    """Ordinary least-squares straight line with standard errors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 (x, y) pairs")
    return _ols(x, y)


def fit_power_law(points: Iterable[tuple[float, float]]) -> FitResult:
    """Least-squares line through (ln x, ln y); y = prefactor * x**exponent.

    ``prefactor_err`` is propagated from the intercept error to first order.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least 3 (x, y) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("power-law fit needs finite, strictly positive data")
    line = _ols(np.log(pts[:, 0]), np.log(pts[:, 1]))
    pref = math.exp(line.intercept)
    return FitResult(prefactor=pref, exponent=line.slope,
                     prefactor_err=pref * line.intercept_err,
                     exponent_err=line.slope_err, r2=line.r2,
                     n_points=int(pts.shape[0]))


@dataclass(frozen=True)
class HeatingFit:
    rate: float
    residual: float
    w2: float
    taus: tuple[float, ...]
    excess: tuple[float, ...]


def heating_rate(noisy: Sequence[ObservableRecord], clean: Sequence[ObservableRecord],
                 window: float = 1.0) -> HeatingFit:
    """Zero-intercept slope of dn = n_W - n_0 against tau where W^2 tau < window.

    ``residual`` is ||dn - r tau|| / ||dn|| over the fitted points.
    """
    noisy = sorted(noisy, key=lambda r: r.tau)
    clean = sorted(clean, key=lambda r: r.tau)
    t1 = [r.tau for r in noisy]
    t0 = [r.tau for r in clean]
    if t1 != t0:
        raise ValueError("noisy and noise-free records must share one tau grid")
    w2s = {r.w2 for r in noisy}
    if len(w2s) != 1:
        raise ValueError(f"noisy records mix noise strengths {sorted(w2s)}")
    if any(r.w2 != 0 for r in clean):
        raise ValueError("reference records must be noise-free")
    w2 = w2s.pop()
    sel = [(a.tau, a.n_w - b.n_w) for a, b in zip(noisy, clean) if w2 * a.tau < window]
    if not sel:
        raise ValueError(f"no ramp times with W^2 tau < {window} at W^2={w2}")
    taus = np.array([s[0] for s in sel])
    dn = np.array([s[1] for s in sel])
    rate = float(taus @ dn / (taus @ taus))
    norm = float(np.linalg.norm(dn))
    residual = float(np.linalg.norm(dn - rate * taus) / norm) if norm > 0 else 0.0
    return HeatingFit(rate=rate, residual=residual, w2=w2,
                      taus=tuple(taus.tolist()), excess=tuple(dn.tolist()))


def _increasing(name, grid):
    grid = tuple(float(v) for v in grid)
    if not grid:
        raise ValueError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return grid


@dataclass(frozen=True)
class SweepSpec:
    tau_grid: tuple[float, ...]
    w2_grid: tuple[float, ...] = DEFAULT_W2_GRID
    base: ModelParams = field(default_factory=lambda: ModelParams(N=1024, tau=1.0))
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        object.__setattr__(self, "tau_grid", _increasing("tau_grid", self.tau_grid))
        object.__setattr__(self, "w2_grid", _increasing("w2_grid", self.w2_grid))
        if self.tau_grid[0] <= 0 or self.w2_grid[0] < 0:
            raise ValueError("grids must be positive (w2 may start at 0)")

    def params(self, tau: float, w2: float) -> ModelParams:
        return self.base.with_(tau=float(tau), w2=float(w2))


def run_sweep(spec: SweepSpec, w2_values: Iterable[float] | None = None,
              threads: int | None = None,
              on_record: Callable[[ObservableRecord], None] | None = None,
              seed: int = 0) -> list[ObservableRecord]:
    """Master-equation records for every (W^2, tau) pair, W^2-major order."""
    out = []
    for w2 in (spec.w2_grid if w2_values is None else w2_values):
        for tau in spec.tau_grid:
            rec = simulate(spec.params(tau, w2), spec.integrator, threads, seed=seed)
            out.append(rec)
            if on_record is not None:
                on_record(rec)
    return out


@dataclass(frozen=True)
class TauOpt:
    w2: float
    tau_opt: float
    n_min: float
    evaluations: int


def _sign(x):
    return "+" if x > 0 else ("-" if x < 0 else "0")


def find_tau_opt(w2: float, search: SweepSpec,
                 objective: Callable[[float], float] | None = None,
                 rtol: float = 1e-2, threads: int | None = None) -> tuple[float, float]:
    """Ramp time minimising n_W at noise strength ``w2``.

    A scan over ``search.tau_grid`` locates the smallest grid value; golden
    section in log(tau) between its two neighbours then refines it to a
    relative tau tolerance ``rtol``.  Equal values keep the smaller tau.
    ``objective`` (tau -> n_W) replaces the master-equation run when given.
    """
    return _find_tau_opt(w2, search, objective, rtol, threads)[:2]


def _find_tau_opt(w2, search, objective, rtol, threads):
    if w2 <= 0:
        raise BracketError("W^2 = 0: n_W decreases monotonically, no interior minimum")
    if objective is None:
        def objective(tau):
            return simulate(search.params(tau, w2), search.integrator, threads).n_w
    grid = search.tau_grid
    if len(grid) < 3:
        raise BracketError("need at least 3 grid points to bracket a minimum")
    vals = [objective(t) for t in grid]
    i = int(np.argmin(vals))
    if i == 0 or i == len(grid) - 1:
        raise BracketError(
            f"minimum not bracketed at W^2={w2}: grid-start slope {_sign(vals[1] - vals[0])}, "
            f"grid-end slope {_sign(vals[-1] - vals[-2])} on tau in [{grid[0]}, {grid[-1]}]"
        )
    best_u, best_f = math.log(grid[i]), vals[i]
    evals = len(grid)

    def consider(u, f):
        nonlocal best_u, best_f
        if f < best_f or (f == best_f and u < best_u):
            best_u, best_f = u, f

    a, b = math.log(grid[i - 1]), math.log(grid[i + 1])
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = objective(math.exp(c)), objective(math.exp(d))
    evals += 2
    consider(c, fc)
    consider(d, fd)
    tol = math.log1p(rtol)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = objective(math.exp(c))
            consider(c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = objective(math.exp(d))
            consider(d, fd)
        evals += 1
    return math.exp(best_u), best_f, evals


def scan_tau_opt(w2_grid: Sequence[float], search: SweepSpec,
                 objective: Callable[[float, float], float] | None = None,
                 rtol: float = 1e-2, threads: int | None = None) -> list[TauOpt]:
    """:func:`find_tau_opt` for each noise strength; ``objective(tau, w2)``."""
    out = []
    for w2 in w2_grid:
        f = None if objective is None else (lambda t, w2=w2: objective(t, w2))
        tau, n, ev = _find_tau_opt(w2, search, f, rtol, threads)
        out.append(TauOpt(w2=float(w2), tau_opt=tau, n_min=n, evaluations=ev))
    return out


def fit_tau_opt_scaling(w2_grid: Sequence[float], base: SweepSpec,
                        objective: Callable[[float, float], float] | None = None,
                        rtol: float = 1e-2, threads: int | None = None) -> FitResult:
    """Power-law fit tau_opt = a (W^2)^b over ``w2_grid``."""
    w2 = np.asarray(w2_grid, dtype=float)
    if w2.size < 4 or np.any(w2 <= 0):
        raise ValueError("need at least 4 positive noise strengths")
    if math.log10(w2.max() / w2.min()) < 1.5 - 1e-9:
        raise ValueError("noise strengths must span at least 1.5 decades")
    points = scan_tau_opt(w2_grid, base, objective, rtol, threads)
    return fit_power_law([(p.w2, p.tau_opt) for p in points])


def quench_time_map(tau: float) -> float:
    """Quench time of the equivalent linear B/J ramp near the critical point."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return tau / 4.0
