"""Flat ``key = value`` run configuration with dotted section keys.

Example::

    command = sweep-tau
    params.N = 1024
    params.w2 = 0
    sweep.tau_grid = 16, 32, 64, 128, 256, 512   # or geomspace(4, 2000, 13)

Lines starting with ``#`` and trailing ``# ...`` comments are ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import DEFAULT_W2_GRID, KZM_TAU_GRID, TAU_SEARCH_GRID, SweepSpec
from .evolve import IntegratorConfig
from .model import Annealing, FieldRamp, ModelParams
from .trajectories import TrajectoryConfig

__all__ = ["ConfigError", "RunConfig", "COMMANDS", "parse_config", "load_config"]

COMMANDS = ("single", "sweep-tau", "sweep-w2", "tau-opt", "verify-novikov",
            "verify-oracle", "asymptotics")
_U64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Bad configuration; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {s!r}")
    return v


def _int(s: str) -> int:
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v <= _U64:
        raise ValueError(f"expected an unsigned 64-bit integer, got {s!r}")
    return v


_GEOM = re.compile(r"^geomspace\(\s*([^,]+),\s*([^,]+),\s*([^,)]+)\)$")


def _grid(s: str) -> tuple[float, ...]:
    m = _GEOM.match(s.strip())
    if m:
        a, b, n = _float(m[1]), _float(m[2]), _int(m[3])
        if a <= 0 or b <= 0 or n < 1:
            raise ValueError("geomspace needs positive endpoints and n >= 1")
        return tuple(float(v) for v in np.geomspace(a, b, n))
    return tuple(_float(p) for p in s.split(",") if p.strip())


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


def _pos(parse):
    def wrapped(s):
        v = parse(s)
        if not v > 0:
            raise ValueError(f"must be > 0, got {s}")
        return v
    return wrapped


_SCHEMA: dict[str, Callable[[str], object]] = {
    "command": _choice(*COMMANDS),
    "params.N": _int,
    "params.lambda": _float,
    "params.tau": _float,
    "params.w2": _float,
    "params.protocol": _choice("annealing", "field-ramp"),
    "params.g_start": _float,
    "params.g_end": _float,
    "sweep.tau_grid": _grid,
    "sweep.w2_grid": _grid,
    "integrator.method": _choice("rk4", "adaptive"),
    "integrator.dt": _pos(_float),
    "integrator.rtol": _pos(_float),
    "integrator.atol": _pos(_float),
    "integrator.renormalize_every": _pos(_int),
    "trajectories.n_traj": _pos(_int),
    "trajectories.dt": _pos(_float),
    "trajectories.seed": _u64,
    "trajectories.scope": _choice("mode", "full"),
    "trajectories.k": _float,
    "seed": _u64,
    "output_path": str,
    "format": _choice("csv", "json"),
    "plot_dir": str,
}

# ModelParams checks, reported against the config key that caused them
_PARAM_CHECKS = (
    ("params.N", lambda v: v >= 4 and v % 2 == 0, "must be even and >= 4"),
    ("params.tau", lambda v: v > 0, "must be > 0"),
    ("params.w2", lambda v: v >= 0, "must be >= 0"),
    ("params.lambda", lambda v: v > 0, "must be > 0"),
)


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    sweep: SweepSpec | None = None
    trajectories: TrajectoryConfig | None = None
    traj_k: float | None = None
    seed: int = 0
    output_path: str = "results.csv"
    format: str = "csv"
    plot_dir: str | None = None
    source: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Resolved configuration as plain data for the metadata sidecar."""
        p = self.params
        out = {
            "command": self.command,
            "params": {"N": p.N, "lambda": p.lam, "tau": p.tau, "w2": p.w2,
                       "protocol": p.protocol.name},
            "integrator": {"method": self.integrator.method, "dt": self.integrator.dt,
                           "rtol": self.integrator.rtol, "atol": self.integrator.atol,
                           "renormalize_every": self.integrator.renormalize_every},
            "seed": self.seed,
            "output_path": self.output_path,
            "format": self.format,
            "plot_dir": self.plot_dir,
            "source": dict(self.source),
        }
        if isinstance(p.protocol, FieldRamp):
            out["params"].update(g_start=p.protocol.g_start, g_end=p.protocol.g_end)
        if self.sweep is not None:
            out["sweep"] = {"tau_grid": list(self.sweep.tau_grid),
                            "w2_grid": list(self.sweep.w2_grid)}
        if self.trajectories is not None:
            t = self.trajectories
            out["trajectories"] = {"n_traj": t.n_traj, "dt": t.dt, "seed": t.seed,
                                   "scope": t.scope, "k": self.traj_k}
        return out


def _read_pairs(text: str) -> tuple[dict[str, object], dict[str, int], dict[str, str]]:
    values, lines, raw = {}, {}, {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=no)
        key, val = (s.strip() for s in body.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError("unknown key", line=no, field=key)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})",
                              line=no, field=key)
        if not val:
            raise ConfigError("missing value", line=no, field=key)
        try:
            values[key] = _SCHEMA[key](val)
        except ValueError as exc:
            raise ConfigError(str(exc), line=no, field=key) from None
        lines[key] = no
        raw[key] = val
    return values, lines, raw


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig` from configuration text.

    ``overrides`` maps keys (``seed``, ``output_path``, ``format``) to
    already-typed values taken from the command line.
    """
    values, lines, raw = _read_pairs(text)
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
            lines.pop(k, None)
            if k == "seed":
                values.pop("trajectories.seed", None)

    def err(key, msg):
        return ConfigError(msg, line=lines.get(key), field=key)

    if "command" not in values:
        raise ConfigError("required key missing", field="command")
    command = values["command"]

    for key, ok, msg in _PARAM_CHECKS:
        if key in values and not ok(values[key]):
            raise err(key, f"{msg}, got {raw.get(key, values[key])}")

    proto_name = values.get("params.protocol", "annealing")
    if proto_name == "annealing":
        for key in ("params.g_start", "params.g_end"):
            if key in values:
                raise err(key, "only valid with params.protocol = field-ramp")
        protocol = Annealing()
    else:
        try:
            protocol = FieldRamp(g_start=values.get("params.g_start", 2.0),
                                 g_end=values.get("params.g_end", 0.0))
        except ValueError as exc:
            raise err("params.g_end", str(exc)) from None

    if command == "asymptotics" and proto_name != "field-ramp":
        raise err("params.protocol", "asymptotics compares field-ramp runs; set field-ramp")

    default_N = 8 if command == "verify-oracle" else 1024
    needs_tau = command in ("single", "verify-novikov") or (
        command == "verify-oracle" and "sweep.tau_grid" not in values)
    if needs_tau and "params.tau" not in values:
        raise err("params.tau", f"required for command '{command}'")
    params = ModelParams(N=values.get("params.N", default_N),
                         tau=values.get("params.tau", 1.0),
                         w2=values.get("params.w2", 0.0),
                         lam=values.get("params.lambda", 1.0),
                         protocol=protocol)
    if command == "verify-oracle" and params.N > 10:
        raise err("params.N", f"verify-oracle needs N <= 10, got {params.N}")

    try:
        integrator = IntegratorConfig(
            method=values.get("integrator.method", "rk4"),
            dt=values.get("integrator.dt"),
            rtol=values.get("integrator.rtol", 1e-10),
            atol=values.get("integrator.atol", 1e-12),
            renormalize_every=values.get("integrator.renormalize_every", 100),
        )
    except ValueError as exc:
        raise err("integrator", str(exc)) from None

    sweep = None
    if command in ("sweep-tau", "sweep-w2", "tau-opt", "asymptotics", "verify-oracle"):
        default_tau = {"tau-opt": TAU_SEARCH_GRID,
                       "asymptotics": (1000.0, 2154.43469003188, 4641.588833612777, 10000.0),
                       }.get(command, KZM_TAU_GRID)
        if command == "verify-oracle" and "sweep.tau_grid" not in values:
            default_tau = (params.tau,)
        w2_default = DEFAULT_W2_GRID if command in ("sweep-w2", "tau-opt") else (params.w2,)
        if "sweep.w2_grid" in values and command in ("sweep-tau", "asymptotics"):
            raise err("sweep.w2_grid", f"not used by '{command}'; set params.w2")
        tau_grid = values.get("sweep.tau_grid", default_tau)
        w2_grid = values.get("sweep.w2_grid", w2_default)
        for key, grid, low in (("sweep.tau_grid", tau_grid, "> 0"),
                               ("sweep.w2_grid", w2_grid, ">= 0")):
            if not grid:
                raise err(key, "grid must not be empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise err(key, "grid must be strictly increasing")
            if (grid[0] <= 0) if low == "> 0" else (grid[0] < 0):
                raise err(key, f"grid values must be {low}")
        if command == "tau-opt" and w2_grid[0] <= 0:
            raise err("sweep.w2_grid", "tau-opt needs W^2 > 0")
        sweep = SweepSpec(tau_grid=tau_grid, w2_grid=w2_grid, base=params,
                          integrator=integrator)
    else:
        for key in ("sweep.tau_grid", "sweep.w2_grid"):
            if key in values:
                raise err(key, f"not used by '{command}'")

    if integrator.dt is not None:
        w2_max = max(sweep.w2_grid) if sweep is not None else params.w2
        try:
            integrator.step(params.with_(w2=max(w2_max, params.w2)))
        except ValueError as exc:
            raise err("integrator.dt", str(exc)) from None

    seed = values.get("seed", 0)
    trajectories, traj_k = None, None
    if command == "verify-novikov":
        traj_k = values.get("trajectories.k", math.pi / 2)
        if not 0 < traj_k < math.pi:
            raise err("trajectories.k", f"must lie in (0, pi), got {traj_k}")
        try:
            trajectories = TrajectoryConfig(
                n_traj=values.get("trajectories.n_traj", 10_000),
                dt=values.get("trajectories.dt", 2e-3),
                seed=values.get("trajectories.seed", seed),
                scope=values.get("trajectories.scope", "mode"),
            )
            trajectories.check(params)
        except ValueError as exc:
            raise err("trajectories.dt", str(exc)) from None
        if params.w2 <= 0:
            raise err("params.w2", "verify-novikov needs W^2 > 0")
        if trajectories.scope == "full" and params.N > 10:
            raise err("params.N", f"full-chain trajectories need N <= 10, got {params.N}")
    else:
        for key in values:
            if key.startswith("trajectories."):
                raise err(key, f"not used by '{command}'")

    fmt = values.get("format", "csv")
    return RunConfig(
        command=command, params=params, integrator=integrator, sweep=sweep,
        trajectories=trajectories, traj_k=traj_k, seed=seed,
        output_path=values.get("output_path", f"results.{fmt}"),
        format=fmt, plot_dir=values.get("plot_dir"), source=raw,
    )


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, overrides)
