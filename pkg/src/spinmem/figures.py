"""Figure rendering for the CLI report path.

Every emitting subcommand can drop a PNG next to its CSV; the CSV stays the
authoritative artifact, the figure is a quick-look rendering of the same
data.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .protocols import MemoryResult
from .spectroscopy import TransmissionMap
from .dynamics import SimulationTrace

__all__ = [
    "render_sweep",
    "render_trace",
    "render_xy",
    "render_memory",
]

_DPI = 150


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_sweep(path: Path, tmap: TransmissionMap) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    mesh = ax.pcolormesh(
        tmap.grid.b * 1e3,
        tmap.grid.f / 1e9,
        tmap.magnitude.T,
        shading="auto",
        cmap="viridis",
        rasterized=True,
    )
    fig.colorbar(mesh, ax=ax, label="|S21|")
    ax.set_xlabel("magnetic field (mT)")
    ax.set_ylabel("probe frequency (GHz)")
    ax.set_title("cw transmission")
    return _save(fig, path)


def render_trace(path: Path, trace: SimulationTrace, title: str = "time trace") -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    t_us = trace.t * 1e6
    ax.plot(t_us, np.abs(trace.a_out), lw=0.8, label="|a_out|")
    mx = np.abs(trace.mx)
    if mx.max() > 0:
        ax.plot(t_us, mx / mx.max() * np.abs(trace.a_out).max(), lw=0.6, alpha=0.5,
                label="|m_x| (scaled)")
    ax.set_xlabel("time (µs)")
    ax.set_ylabel("output field (√photons/s)")
    ax.legend(frameon=False)
    ax.set_title(title)
    return _save(fig, path)


def render_xy(
    path: Path,
    x,
    y,
    xlabel: str,
    ylabel: str,
    title: str = "",
    logx: bool = False,
    overlay=None,
) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    plot = ax.semilogx if logx else ax.plot
    plot(np.asarray(x), np.asarray(y), "o-", ms=3, lw=0.8)
    if overlay is not None:
        xo, yo, label = overlay
        plot(xo, yo, "--", lw=1.0, label=label)
        ax.legend(frameon=False)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def render_memory(path: Path, result: MemoryResult, eseem_curve=None) -> Path:
    fig, (ax, ax2) = plt.subplots(
        2, 1, figsize=(8, 6), gridspec_kw={"height_ratios": [2, 1]}
    )
    trace = result.trace
    ax.plot(trace.t * 1e6, np.abs(trace.a_out), lw=0.7)
    ax.plot(result.t_echo * 1e6, result.amp_echo, "v", ms=5, label="retrieved")
    if eseem_curve is not None:
        te, env = eseem_curve
        scale = result.amp_echo.max() if result.amp_echo.max() > 0 else 1.0
        ax.plot(te * 1e6, env * scale, ":", lw=1.2, label="superhyperfine envelope")
    ax.set_xlabel("time (µs)")
    ax.set_ylabel("|a_out|")
    ax.legend(frameon=False)
    ax.set_title("multimode storage and retrieval")

    ax2.semilogy(result.storage_delay * 1e6, np.maximum(result.efficiency, 1e-12), "s", ms=4)
    ax2.set_xlabel("storage delay (µs)")
    ax2.set_ylabel("efficiency")
    return _save(fig, path)
