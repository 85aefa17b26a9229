"""Result tables, metadata sidecars and plot-ready column files."""

from __future__ import annotations

import json
import math
import os
from collections import defaultdict
from typing import Iterable, Sequence

from .observables import ObservableRecord

__all__ = [
    "CSV_HEADER",
    "format_float",
    "format_row",
    "ResultWriter",
    "sidecar_path",
    "write_metadata",
    "emit_plot_data",
    "emit_tau_opt_data",
]

CSV_FIELDS = ("protocol", "N", "lambda", "tau", "w2", "method", "n_w", "q", "de", "seed")
CSV_HEADER = ",".join(CSV_FIELDS)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _values(rec: ObservableRecord) -> dict:
    return {"protocol": rec.protocol, "N": rec.N, "lambda": rec.lam, "tau": rec.tau,
            "w2": rec.w2, "method": rec.method, "n_w": rec.n_w, "q": rec.q,
            "de": rec.de, "seed": rec.seed}


def format_row(rec: ObservableRecord) -> str:
    out = []
    for name, v in _values(rec).items():
        out.append(format_float(v) if isinstance(v, float) else str(v))
    return ",".join(out)


def _json_row(rec: ObservableRecord) -> str:
    parts = []
    for name, v in _values(rec).items():
        if isinstance(v, float):
            val = format_float(v) if math.isfinite(v) else "null"
        else:
            val = json.dumps(v)
        parts.append(f"{json.dumps(name)}: {val}")
    return "{" + ", ".join(parts) + "}"


class ResultWriter:
    """Append-only result table; every row is flushed to disk as it arrives.

    JSON output is an array of objects, one per line, closed by :meth:`close`
    even when the run fails, so rows already written stay readable.
    """

    def __init__(self, path: str, fmt: str = "csv"):
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        self.path = path
        self.fmt = fmt
        self.rows = 0
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(CSV_HEADER + "\n" if fmt == "csv" else "[")
        self._flush()

    def _flush(self):
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def write(self, rec: ObservableRecord) -> None:
        if self.fmt == "csv":
            self._fh.write(format_row(rec) + "\n")
        else:
            self._fh.write(("\n" if self.rows == 0 else ",\n") + _json_row(rec))
        self.rows += 1
        self._flush()

    def close(self) -> None:
        if self._fh.closed:
            return
        if self.fmt == "json":
            self._fh.write("\n]\n" if self.rows else "]\n")
        self._flush()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def sidecar_path(output_path: str) -> str:
    return output_path + ".meta.json"


def _clean(obj):
    # JSON has no inf/nan
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_metadata(output_path: str, meta: dict) -> str:
    path = sidecar_path(output_path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


_PLOT_UNITS = ("tau [1/Lambda]", "w2 [1/Lambda]", "n_w [per site]", "q [Lambda per site]",
               "de [Lambda per site]", "dn_w [per site]")


def emit_plot_data(records: Sequence[ObservableRecord], out_dir: str,
                   prefix: str = "fig2") -> list[str]:
    """Write one column file per W^2: tau, w2, n_w, q, de, dn_w.

    dn_w = n_w - n_0 uses noise-free records at the same tau when present
    (same protocol, N and lambda) and is ``nan`` otherwise.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    os.makedirs(out_dir, exist_ok=True)
    ref = {(r.protocol, r.N, r.lam, r.tau): r.n_w for r in records if r.w2 == 0}
    groups = defaultdict(list)
    for r in records:
        groups[r.w2].append(r)
    paths = []
    for w2 in sorted(groups):
        rows = sorted(groups[w2], key=lambda r: r.tau)
        path = os.path.join(out_dir, f"{prefix}_w2={format(w2, 'g')}.dat")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + ", ".join(_PLOT_UNITS) + "\n")
            for r in rows:
                n0 = ref.get((r.protocol, r.N, r.lam, r.tau), math.nan)
                cols = (r.tau, r.w2, r.n_w, r.q, r.de, r.n_w - n0)
                fh.write(" ".join(format_float(c) for c in cols) + "\n")
        paths.append(path)
    return paths


def emit_tau_opt_data(points: Iterable, fit, out_dir: str, samples: int = 50) -> list[str]:
    """(w2, tau_opt, n_min) pairs and samples of the fitted power law."""
    import numpy as np

    points = list(points)
    if not points:
        raise ValueError("no tau_opt points to emit")
    os.makedirs(out_dir, exist_ok=True)
    p1 = os.path.join(out_dir, "fig3_tau_opt.dat")
    with open(p1, "w", encoding="utf-8") as fh:
        fh.write("# w2 [1/Lambda], tau_opt [1/Lambda], n_min [per site]\n")
        for p in points:
            fh.write(f"{format_float(p.w2)} {format_float(p.tau_opt)} {format_float(p.n_min)}\n")
    paths = [p1]
    if fit is not None:
        w2 = np.array([p.w2 for p in points])
        xs = np.geomspace(w2.min(), w2.max(), samples)
        p2 = os.path.join(out_dir, "fig3_fit.dat")
        with open(p2, "w", encoding="utf-8") as fh:
            fh.write(f"# w2 [1/Lambda], tau_fit [1/Lambda]; tau = a w2^b with "
                     f"a={format_float(fit.prefactor)} b={format_float(fit.exponent)}\n")
            for x, y in zip(xs, fit(xs)):
                fh.write(f"{format_float(x)} {format_float(y)}\n")
        paths.append(p2)
    return paths
