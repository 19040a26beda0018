"""Device description and closed-form thermal/Zeeman utilities.

Unit conventions: every rate stored on a device object is angular (rad/s);
functions that take or return a plain frequency use cyclic Hz and say so.
Magnetic fields are tesla, temperatures kelvin, spin densities 1/cm^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import H_PLANCK, K_B, MU_B_OVER_H, MU_B_OVER_KB

__all__ = [
    "SubEnsemble",
    "Resonator",
    "DeviceConfig",
    "zeeman_frequency",
    "effective_temperature",
    "boltzmann_populations",
    "thermal_occupancy",
    "photon_count",
]

TWO_PI = 2.0 * math.pi


def zeeman_frequency(g: float, b: float) -> float:
    """Electron Zeeman transition frequency g*mu_B*B/h in Hz (cyclic).

    Linear in both g and B; B must be non-negative.
    """
    if b < 0:
        raise ValueError(f"magnetic field must be >= 0, got {b}")
    return g * MU_B_OVER_H * b


def effective_temperature(g: float, b: float) -> float:
    """Zeeman temperature g*mu_B*B/k_B in kelvin.

    The temperature scale at which thermal flips of a transition with the
    given g-factor unfreeze.
    """
    if b < 0:
        raise ValueError(f"magnetic field must be >= 0, got {b}")
    return g * MU_B_OVER_KB * b


def boltzmann_populations(t_i: float, t: float) -> tuple[float, float]:
    """Two-level occupation probabilities (P_up, P_down) at temperature t.

    t_i is the level splitting expressed as a temperature.  The pair always
    sums to one.
    """
    if t <= 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    if t_i < 0:
        raise ValueError(f"level-splitting temperature must be >= 0, got {t_i}")
    # x >= 0 here, so exp(-x) never overflows
    ex = math.exp(-t_i / t)
    p_up = ex / (1.0 + ex)
    return p_up, 1.0 / (1.0 + ex)


def thermal_occupancy(f: float, t: float) -> float:
    """Bose-Einstein mean photon number of a mode at f (Hz) and t (K)."""
    if f <= 0:
        raise ValueError(f"frequency must be > 0, got {f}")
    if t <= 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    return 1.0 / math.expm1(H_PLANCK * f / (K_B * t))


def photon_count(power: float, duration: float, f: float) -> float:
    """Number of photons in a rectangular pulse: power*duration/(h*f).

    Power in watts, duration in seconds, f in Hz.  Zero power gives zero;
    negative inputs and non-positive duration or frequency are rejected.
    """
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    if duration <= 0 or f <= 0:
        raise ValueError("duration and frequency must be > 0")
    return power * duration / (H_PLANCK * f)


@dataclass(frozen=True)
class SubEnsemble:
    """One erbium Zeeman transition coupled to the resonator.

    coupling      collective coupling v_N (rad/s)
    gamma_star    inhomogeneous HWHM linewidth (rad/s)
    gamma_h       homogeneous decoherence rate 1/T2 (1/s)
    gamma_1       longitudinal relaxation rate 1/T1 (1/s)
    density       spin concentration (1/cm^3)
    freq_offset   additive offset of the transition line (rad/s); absorbs the
                  difference between the rounded g-factor and the fitted line
                  position.
    """

    label: str
    g: float
    coupling: float
    gamma_star: float
    gamma_h: float
    gamma_1: float
    density: float = 0.0
    freq_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.g <= 0:
            raise ValueError(f"{self.label}: g-factor must be > 0, got {self.g}")
        for name in ("coupling", "gamma_star", "gamma_h", "gamma_1", "density"):
            if getattr(self, name) < 0:
                raise ValueError(f"{self.label}: {name} must be >= 0")
        if self.gamma_h > self.gamma_star > 0:
            raise ValueError(
                f"{self.label}: homogeneous rate {self.gamma_h} exceeds "
                f"inhomogeneous width {self.gamma_star}"
            )

    def spin_frequency(self, b: float) -> float:
        """Transition frequency at field b, angular rad/s (offset included)."""
        return TWO_PI * zeeman_frequency(self.g, b) + self.freq_offset

    @property
    def t2(self) -> float:
        """Homogeneous coherence time 1/gamma_h in seconds."""
        return 1.0 / self.gamma_h

    @property
    def t2_star(self) -> float:
        """Free-induction decay time 1/gamma_star in seconds."""
        return 1.0 / self.gamma_star


@dataclass(frozen=True)
class Resonator:
    """Single cavity mode with two external ports and internal loss.

    All rates are angular HWHM-type amplitude decay rates (rad/s); the total
    linewidth is their sum.
    """

    omega0: float
    kappa_int: float
    kappa_in: float
    kappa_out: float

    def __post_init__(self) -> None:
        if self.omega0 <= 0:
            raise ValueError("resonance frequency must be > 0")
        for name in ("kappa_int", "kappa_in", "kappa_out"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def kappa(self) -> float:
        """Total HWHM linewidth (rad/s)."""
        return self.kappa_int + self.kappa_in + self.kappa_out

    @property
    def f0(self) -> float:
        """Resonance frequency in Hz."""
        return self.omega0 / TWO_PI

    @classmethod
    def from_total(
        cls,
        omega0: float,
        kappa: float,
        q_internal: float | None = None,
        kappa_int: float | None = None,
    ) -> "Resonator":
        """Build from the total linewidth plus either Q_i or kappa_int.

        The external budget kappa - kappa_int is split symmetrically between
        the two ports; override the per-port fields directly for an
        asymmetric device.
        """
        if kappa_int is None:
            if q_internal is None:
                raise ValueError("need q_internal or kappa_int to split ports")
            kappa_int = omega0 / (2.0 * q_internal)
        kappa_ext = kappa - kappa_int
        if kappa_ext < 0:
            raise ValueError(
                f"internal loss {kappa_int} exceeds total linewidth {kappa}"
            )
        return cls(omega0, kappa_int, kappa_ext / 2.0, kappa_ext / 2.0)


@dataclass(frozen=True)
class DeviceConfig:
    """Resonator, its sub-ensembles, the applied DC field and temperature."""

    resonator: Resonator
    ensembles: tuple[SubEnsemble, ...]
    field: float
    temperature: float

    def __post_init__(self) -> None:
        if self.field < 0:
            raise ValueError("DC field must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        labels = [e.label for e in self.ensembles]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate ensemble labels: {labels}")
        object.__setattr__(self, "ensembles", tuple(self.ensembles))

    def ensemble(self, label: str) -> SubEnsemble:
        for e in self.ensembles:
            if e.label == label:
                return e
        raise KeyError(f"no ensemble labelled {label!r}")

    def resonant_ensemble(self) -> SubEnsemble:
        """The sub-ensemble tuned closest to the cavity at the working field."""
        if not self.ensembles:
            raise ValueError("device has no ensembles")
        return min(
            self.ensembles,
            key=lambda e: abs(e.spin_frequency(self.field) - self.resonator.omega0),
        )

    def spectator_temperatures(self, resonant_label: str | None = None) -> np.ndarray:
        """Effective Zeeman temperatures of the non-resonant sub-ensembles."""
        if resonant_label is None:
            resonant_label = self.resonant_ensemble().label
        temps = [
            effective_temperature(e.g, self.field)
            for e in self.ensembles
            if e.label != resonant_label
        ]
        return np.array(sorted(temps, reverse=True))

    def at_field(self, b: float) -> "DeviceConfig":
        return replace(self, field=b)
