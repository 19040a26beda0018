"""CSV artifact emission and reproducibility manifests.

Floats are written with shortest round-trip decimal formatting (``repr``),
so files are byte-stable across runs and platforms with IEEE-754 doubles.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .fitting import FitResult
from .protocols import MemoryResult
from .spectroscopy import TransmissionMap
from .dynamics import SimulationTrace

__all__ = [
    "write_rows",
    "write_sweep",
    "write_trace",
    "write_xy",
    "write_memory",
    "write_fit",
    "write_manifest",
]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_rows(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_sweep(path: Path, tmap: TransmissionMap) -> Path:
    """Field-major sweep CSV: b_tesla, f_hz, s21_re, s21_im, s21_abs."""
    rows = []
    for i, b in enumerate(tmap.grid.b):
        for j, f in enumerate(tmap.grid.f):
            v = tmap.values[i, j]
            rows.append((b, f, v.real, v.imag, abs(v)))
    return write_rows(path, ["b_tesla", "f_hz", "s21_re", "s21_im", "s21_abs"], rows)


def write_trace(path: Path, trace: SimulationTrace, decimation: int = 1) -> Path:
    """Time-trace CSV: t_s, a_out_re, a_out_im, a_out_abs, alpha_abs, mx_abs."""
    sl = slice(None, None, max(int(decimation), 1))
    rows = zip(
        trace.t[sl],
        trace.a_out[sl].real,
        trace.a_out[sl].imag,
        np.abs(trace.a_out[sl]),
        np.abs(trace.alpha[sl]),
        np.abs(trace.mx[sl]),
    )
    return write_rows(
        path, ["t_s", "a_out_re", "a_out_im", "a_out_abs", "alpha_abs", "mx_abs"], rows
    )


def write_xy(path: Path, header: tuple[str, str], x, y) -> Path:
    return write_rows(path, list(header), zip(np.asarray(x), np.asarray(y)))


def write_memory(path: Path, result: MemoryResult) -> Path:
    """Per-pulse memory CSV: pulse_idx, t_in_s, e_in, t_echo_s, e_echo,
    amp_echo, efficiency."""
    rows = [
        (
            j,
            result.t_in[j],
            result.e_in[j],
            result.t_echo[j],
            result.e_echo[j],
            result.amp_echo[j],
            result.efficiency[j],
        )
        for j in range(result.experiment.n_pulses)
    ]
    return write_rows(
        path,
        ["pulse_idx", "t_in_s", "e_in", "t_echo_s", "e_echo", "amp_echo", "efficiency"],
        rows,
    )


def write_fit(path: Path, result: FitResult, extras: dict | None = None) -> Path:
    """parameter,value,stderr rows plus a machine-readable JSON sidecar."""
    stderr = result.stderr
    rows = [(n, v, e) for n, v, e in zip(result.names, result.params, stderr)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["parameter,value,stderr"]
    lines.extend(f"{n},{_fmt(v)},{_fmt(e)}" for n, v, e in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    summary = {
        "parameters": {
            n: {"value": float(v), "stderr": float(e)} for n, v, e in rows
        },
        "rss": result.rss,
        "converged": result.converged,
        "iterations": result.iterations,
        "at_bounds": list(result.at_bounds),
    }
    if extras:
        summary.update(extras)
    path.with_suffix(".json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def write_manifest(out_path: Path, entries: dict) -> Path:
    """Reproducibility sidecar <out>.manifest.json."""
    out_path = Path(out_path)
    manifest = {"version": __version__}
    manifest.update(entries)
    path = out_path.with_name(out_path.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
