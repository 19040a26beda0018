"""Steady-state cw transmission spectra versus probe frequency and field.

The transmission model is the standard input-output form for a two-port
cavity loaded with Lorentzian-broadened spin ensembles,

    S21(w) = sqrt(k_in*k_out) / [i(w0 - w) + kappa + sum_j chi_j(w, B)],
    chi_j  = v_j^2 / (i(w_s_j(B) - w) + gamma_star_j),

with every sub-ensemble declared on the device included in the sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import MU_B_OVER_H
from .device import DeviceConfig, Resonator, SubEnsemble

__all__ = [
    "FieldSweepGrid",
    "TransmissionMap",
    "s21",
    "field_sweep",
    "normal_mode_splitting",
    "interpolated_peaks",
    "measured_splitting",
    "dip_fields",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FieldSweepGrid:
    """Strictly ascending field (T) and probe frequency (Hz) axes."""

    b: np.ndarray
    f: np.ndarray

    def __post_init__(self) -> None:
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        f = np.atleast_1d(np.asarray(self.f, dtype=float))
        if b.size == 0 or f.size == 0:
            raise ValueError("sweep grid axes must be nonempty")
        if b.size > 1 and not np.all(np.diff(b) > 0):
            raise ValueError("field axis must be strictly increasing")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise ValueError("frequency axis must be strictly increasing")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "f", f)

    @property
    def shape(self) -> tuple[int, int]:
        return self.b.size, self.f.size


@dataclass(frozen=True)
class TransmissionMap:
    """Complex S21 over a field sweep grid, row-major (field-major)."""

    grid: FieldSweepGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"value shape {values.shape} does not match grid {self.grid.shape}"
            )
        if np.abs(values).max() > 1.0 + 1e-9:
            raise ValueError("|S21| exceeds unity; device is not passive")
        object.__setattr__(self, "values", values)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


def _susceptibility_sum(
    device: DeviceConfig, omega: np.ndarray, b: np.ndarray | float
) -> np.ndarray:
    chi = np.zeros(np.broadcast(omega, b).shape, dtype=complex)
    for ens in device.ensembles:
        omega_s = np.asarray(b, dtype=float) * (TWO_PI * ens.g * MU_B_OVER_H)
        omega_s = omega_s + ens.freq_offset
        chi = chi + ens.coupling**2 / (1j * (omega_s - omega) + ens.gamma_star)
    return chi


def s21(omega, device: DeviceConfig, b: float | None = None):
    """Complex transmission at angular probe frequency omega (rad/s).

    Accepts scalar or array omega; the field defaults to the device working
    point.  Pure function, safe to evaluate concurrently.
    """
    if b is None:
        b = device.field
    omega = np.asarray(omega, dtype=float)
    res = device.resonator
    denom = 1j * (res.omega0 - omega) + res.kappa
    denom = denom + _susceptibility_sum(device, omega, b)
    out = math.sqrt(res.kappa_in * res.kappa_out) / denom
    return out if out.ndim else complex(out)


def field_sweep(device: DeviceConfig, grid: FieldSweepGrid) -> TransmissionMap:
    """Pointwise s21 over the grid, field-major; deterministic.

    Rows are evaluated independently so a work pool may split them, but the
    result is always assembled in grid order.
    """
    omega = TWO_PI * grid.f[np.newaxis, :]
    b = grid.b[:, np.newaxis]
    res = device.resonator
    denom = 1j * (res.omega0 - omega) + res.kappa
    denom = denom + _susceptibility_sum(device, omega, b)
    values = math.sqrt(res.kappa_in * res.kappa_out) / denom
    return TransmissionMap(grid, values)


def normal_mode_splitting(resonator: Resonator, ensemble: SubEnsemble) -> float:
    """Hybridized-mode frequency splitting on resonance, in Hz.

    Returns 2*sqrt(v^2 - (kappa - gamma_star)^2/4) when the radicand is
    positive, else 0 (anticrossing not resolved).  Note this is the
    complex-eigenfrequency splitting; the maxima of |S21| on the real axis
    sit slightly further apart when kappa and gamma_star are comparable
    to v (see measured_splitting).
    """
    radicand = ensemble.coupling**2 - (resonator.kappa - ensemble.gamma_star) ** 2 / 4.0
    if radicand <= 0:
        return 0.0
    return 2.0 * math.sqrt(radicand) / TWO_PI


def interpolated_peaks(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions and heights of strict interior maxima of y, refined by a
    three-point parabola through each maximum."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = np.where((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:]))[0] + 1
    pos, height = [], []
    for i in idx:
        denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
        shift = 0.0 if denom == 0 else 0.5 * (y[i - 1] - y[i + 1]) / denom
        shift = float(np.clip(shift, -0.5, 0.5))
        dx = 0.5 * (x[i + 1] - x[i - 1])
        pos.append(x[i] + shift * dx)
        height.append(y[i] - 0.25 * (y[i - 1] - y[i + 1]) * shift)
    return np.array(pos), np.array(height)


def measured_splitting(f: np.ndarray, magnitude: np.ndarray) -> float:
    """Separation (Hz) of the two tallest interpolated peaks of |S21|(f).

    Returns 0 when fewer than two interior peaks exist.
    """
    pos, height = interpolated_peaks(f, magnitude)
    if pos.size < 2:
        return 0.0
    top = np.argsort(height)[-2:]
    lo, hi = sorted(pos[top])
    return float(hi - lo)


def dip_fields(tmap: TransmissionMap, f_probe: float) -> np.ndarray:
    """Fields at which |S21(f_probe, B)| has interior local minima.

    Used to locate where transition lines cross a fixed probe frequency;
    minima are refined by quadratic interpolation and returned ascending.
    """
    j = int(np.argmin(np.abs(tmap.grid.f - f_probe)))
    column = tmap.magnitude[:, j]
    pos, _ = interpolated_peaks(tmap.grid.b, -column)
    return pos
