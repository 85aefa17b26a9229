"""Batch command line: ``antikz --config run.cfg [--output ...]``.

Exit status: 0 success, 1 configuration error, 2 simulation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from typing import Callable

import numpy as np

from . import __version__
from .analysis import (DEFAULT_W2_GRID, BracketError, KzmTheory, fit_line, fit_power_law,
                       heating_rate, scan_tau_opt)
from .asymptotics import brillouin_sum, kayanuma_density, landau_zener, sweep_time
from .config import ConfigError, RunConfig, load_config
from .evolve import IntegrationError, StepSizeError, integrate_mode
from .model import GapClosedError, ModelParams, check_density_matrix, coefficients, initial_state
from .observables import ModeSetError, ObservableRecord, simulate
from .output import ResultWriter, emit_plot_data, emit_tau_opt_data, write_metadata

__all__ = ["main", "run", "SimulationError"]

log = logging.getLogger("antikz")

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_IO = 0, 1, 2, 3
_SIM_ERRORS = (IntegrationError, StepSizeError, GapClosedError, BracketError,
               ModeSetError, ArithmeticError, ValueError)


class SimulationError(RuntimeError):
    pass


def _at(params: ModelParams, fn: Callable):
    # attach the sweep coordinates to anything the kernels raise
    try:
        return fn()
    except _SIM_ERRORS as exc:
        raise SimulationError(f"{type(exc).__name__} at tau={params.tau!r}, "
                              f"w2={params.w2!r}: {exc}") from exc


def _fit_dict(fit) -> dict:
    return {"prefactor": fit.prefactor, "exponent": fit.exponent,
            "prefactor_err": fit.prefactor_err, "exponent_err": fit.exponent_err,
            "r2": fit.r2, "n_points": fit.n_points}


class _Run:
    def __init__(self, cfg: RunConfig, writer: ResultWriter, threads: int | None):
        self.cfg = cfg
        self.writer = writer
        self.threads = threads
        self.records: list[ObservableRecord] = []
        self.fits: dict = {}
        self.checks: dict = {}
        self.extra_plot: list = []

    def emit(self, rec: ObservableRecord) -> ObservableRecord:
        self.writer.write(rec)
        self.records.append(rec)
        return rec

    def master(self, params: ModelParams) -> ObservableRecord:
        rec = _at(params, lambda: simulate(params, self.cfg.integrator, self.threads,
                                           seed=self.cfg.seed))
        return self.emit(rec)

    # commands

    def single(self):
        self.master(self.cfg.params)

    def sweep_tau(self):
        spec = self.cfg.sweep
        w2 = spec.w2_grid[0]
        recs = [self.master(spec.params(t, w2)) for t in spec.tau_grid]
        if len(recs) >= 3:
            fit = fit_power_law([(r.tau, r.n_w) for r in recs])
            self.fits["n_w_vs_tau"] = _fit_dict(fit)
            if w2 == 0:
                self.fits["n_w_vs_tau"]["kzm_target"] = -KzmTheory().beta

    def sweep_w2(self):
        spec = self.cfg.sweep
        clean = [self.master(spec.params(t, 0.0)) for t in spec.tau_grid]
        rates = {}
        for w2 in spec.w2_grid:
            if w2 == 0:
                continue
            noisy = [self.master(spec.params(t, w2)) for t in spec.tau_grid]
            try:
                h = heating_rate(noisy, clean)
            except ValueError as exc:
                self.fits.setdefault("heating", {})[format(w2, ".17g")] = {"error": str(exc)}
                continue
            rates[w2] = h.rate
            self.fits.setdefault("heating", {})[format(w2, ".17g")] = {
                "rate": h.rate, "residual": h.residual, "taus": list(h.taus)}
        if len(rates) >= 3:
            line = fit_line(list(rates), list(rates.values()))
            self.fits["rate_vs_w2"] = {"slope": line.slope, "intercept": line.intercept,
                                       "slope_err": line.slope_err, "r2": line.r2,
                                       "lambda": self.cfg.params.lam}

    def tau_opt(self):
        spec = self.cfg.sweep

        def objective(tau, w2):
            return self.master(spec.params(tau, w2)).n_w

        try:
            points = scan_tau_opt(spec.w2_grid, spec, objective, threads=self.threads)
        except BracketError as exc:
            raise SimulationError(str(exc)) from exc
        self.fits["tau_opt"] = [{"w2": p.w2, "tau_opt": p.tau_opt, "n_min": p.n_min,
                                 "evaluations": p.evaluations} for p in points]
        fit = None
        w2 = np.array(spec.w2_grid)
        if w2.size >= 4 and math.log10(w2.max() / w2.min()) >= 1.5 - 1e-9:
            fit = fit_power_law([(p.w2, p.tau_opt) for p in points])
            self.fits["tau_opt_vs_w2"] = _fit_dict(fit)
            self.fits["tau_opt_vs_w2"]["theory_exponent"] = KzmTheory().tau_opt_exponent
        self.extra_plot.append((points, fit))

    def verify_novikov(self):
        from .trajectories import noise_average

        cfg, p, tc = self.cfg, self.cfg.params, self.cfg.trajectories
        if tc.scope == "full":
            from .oracle import FullSpaceState, full_space_oracle

            ref = _at(p, lambda: full_space_oracle(p, cfg.integrator))
            avg = _at(p, lambda: noise_average(None, p, tc))
            master_rho = ref.rho
            traj_state = FullSpaceState(params=p, chain=ref.chain, rho=avg.mean)
            for method, st in (("oracle", ref), ("trajectory", traj_state)):
                self.emit(ObservableRecord(
                    protocol=p.protocol.name, N=p.N, lam=p.lam, tau=p.tau, w2=p.w2,
                    method=method, n_w=st.excitation_density(), q=st.residual_energy(),
                    de=st.energy_spread(), seed=tc.seed))
        else:
            k = cfg.traj_k
            avg = _at(p, lambda: noise_average(k, p, tc))
            master_rho = _at(p, lambda: integrate_mode(initial_state(k, p),
                                                       coefficients(k, p), p, cfg.integrator))
            check_density_matrix(master_rho)
        diff = avg.mean - master_rho
        with np.errstate(divide="ignore", invalid="ignore"):
            zr = np.where(avg.stderr_real > 0, np.abs(diff.real) / avg.stderr_real,
                          np.where(np.abs(diff.real) > 1e-12, np.inf, 0.0))
            zi = np.where(avg.stderr_imag > 0, np.abs(diff.imag) / avg.stderr_imag,
                          np.where(np.abs(diff.imag) > 1e-12, np.inf, 0.0))
        zmax = float(max(zr.max(), zi.max()))
        self.checks["novikov"] = {
            "k": cfg.traj_k, "scope": tc.scope, "n_traj": tc.n_traj, "dt": tc.dt,
            "seed": tc.seed, "max_abs_dev_over_stderr": zmax, "threshold": 3.0,
            "pass": zmax < 3.0, "max_abs_dev": float(np.abs(diff).max()),
        }
        if tc.scope == "mode":
            self.checks["novikov"]["trajectory_mean"] = [[str(v) for v in row] for row in avg.mean]
            self.checks["novikov"]["master"] = [[str(v) for v in row] for row in master_rho]

    def verify_oracle(self):
        from .oracle import full_space_oracle

        spec = self.cfg.sweep
        rows = []
        for w2 in spec.w2_grid:
            for tau in spec.tau_grid:
                p = spec.params(tau, w2)
                me = self.master(p)
                st = _at(p, lambda: full_space_oracle(p, self.cfg.integrator))
                orc = self.emit(ObservableRecord(
                    protocol=p.protocol.name, N=p.N, lam=p.lam, tau=tau, w2=w2,
                    method="oracle", n_w=st.excitation_density(), q=st.residual_energy(),
                    de=st.energy_spread(), seed=self.cfg.seed))
                rows.append({"tau": tau, "w2": w2, "dn_w": abs(me.n_w - orc.n_w),
                             "dq": abs(me.q - orc.q), "dde": abs(me.de - orc.de)})
        self.checks["oracle"] = {"points": rows, "tolerance": 1e-5,
                                 "pass": all(r["dn_w"] < 1e-5 and r["dq"] < 1e-5 for r in rows)}

    def asymptotics(self):
        spec = self.cfg.sweep
        w2 = spec.w2_grid[0]
        rows = []
        for tau in spec.tau_grid:
            p = spec.params(tau, w2)
            rec = self.master(p)
            nk = kayanuma_density(tau)
            row = {"tau": tau, "n_w": rec.n_w, "kayanuma_density": nk,
                   "rel_dev": abs(rec.n_w - nk) / (rec.n_w - 0.5) if rec.n_w != 0.5 else None}
            if w2 == 0:
                row["landau_zener_sum"] = brillouin_sum(landau_zener, sweep_time(p), p.N)
            rows.append(row)
        self.checks["asymptotics"] = {"w2": w2, "points": rows}


_DISPATCH = {
    "single": _Run.single, "sweep-tau": _Run.sweep_tau, "sweep-w2": _Run.sweep_w2,
    "tau-opt": _Run.tau_opt, "verify-novikov": _Run.verify_novikov,
    "verify-oracle": _Run.verify_oracle, "asymptotics": _Run.asymptotics,
}


def run(cfg: RunConfig, threads: int | None = None) -> int:
    """Execute ``cfg``; writes the results table and its metadata sidecar."""
    t0 = time.perf_counter()
    meta = {"version": __version__, "config": cfg.echo(), "status": "running"}
    if cfg.sweep is not None and cfg.sweep.w2_grid == DEFAULT_W2_GRID:
        meta["default_w2_grid"] = list(DEFAULT_W2_GRID)
    try:
        writer = ResultWriter(cfg.output_path, cfg.format)
    except OSError as exc:
        log.error("cannot open output %s: %s", cfg.output_path, exc)
        return EXIT_IO
    state = _Run(cfg, writer, threads)
    status = EXIT_OK
    try:
        _DISPATCH[cfg.command](state)
        meta["status"] = "ok"
    except SimulationError as exc:
        log.error("simulation failed: %s", exc)
        meta.update(status="failed", error=str(exc))
        status = EXIT_SIM
    except OSError as exc:
        log.error("I/O error: %s", exc)
        meta.update(status="failed", error=str(exc))
        status = EXIT_IO
    finally:
        writer.close()
    meta.update(rows=writer.rows, fits=state.fits, checks=state.checks,
                wall_time_s=time.perf_counter() - t0)
    try:
        if cfg.plot_dir and state.records:
            meta["plot_files"] = emit_plot_data(state.records, cfg.plot_dir)
            for points, fit in state.extra_plot:
                meta["plot_files"] += emit_tau_opt_data(points, fit, cfg.plot_dir)
        write_metadata(cfg.output_path, meta)
    except OSError as exc:
        log.error("cannot write metadata: %s", exc)
        return EXIT_IO if status == EXIT_OK else status
    for name, fit in state.fits.items():
        log.info("%s: %s", name, fit)
    for name, chk in state.checks.items():
        if "pass" in chk:
            log.info("%s check: %s", name, "PASS" if chk["pass"] else "FAIL")
    return status


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="antikz", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="flat key = value run file")
    ap.add_argument("--output", help="results table path (overrides output_path)")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: available cores)")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                    help="unsigned 64-bit seed (overrides seed)")
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.seed is not None and not 0 <= args.seed < 1 << 64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None and args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {"output_path": args.output, "seed": args.seed, "format": args.format}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    status = run(cfg, threads)
    if status == EXIT_OK:
        print(f"wrote {cfg.output_path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
