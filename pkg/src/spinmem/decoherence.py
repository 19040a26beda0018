"""Closed-form decoherence models.

Covers the temperature dependence of the coherence time driven by thermal
flip-flops of the spectator sub-ensembles, the two-pulse superhyperfine
echo-envelope modulation, the combined echo-decay law, and the
flip-angle dependence from instantaneous spin diffusion.  All functions are
pure and accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TemperatureModel",
    "Nucleus",
    "EseemParams",
    "IdModel",
    "t2_of_temperature",
    "eseem_envelope",
    "echo_decay",
    "id_rate",
    "dipolar_coupling_from_id",
]


@dataclass(frozen=True)
class TemperatureModel:
    """Residual rate plus flip-flop contributions of three spectator baths.

    gamma_r   residual dephasing rate (1/s), temperature independent
    xi        flip-flop rate amplitude (1/s), shared by the three baths
    temps     effective Zeeman temperatures (K) of the spectator ensembles
    """

    gamma_r: float
    xi: float
    temps: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.gamma_r <= 0:
            raise ValueError("gamma_r must be > 0")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        temps = tuple(float(t) for t in self.temps)
        if len(temps) != 3:
            raise ValueError(f"expected 3 spectator temperatures, got {len(temps)}")
        if any(t <= 0 for t in temps):
            raise ValueError("spectator temperatures must be > 0")
        object.__setattr__(self, "temps", temps)


@dataclass(frozen=True)
class Nucleus:
    """Superhyperfine partner: modulation depth and split nuclear frequencies.

    Frequencies are angular (rad/s).
    """

    depth: float
    omega_alpha: float
    omega_beta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError(f"modulation depth must lie in [0, 1], got {self.depth}")
        if self.omega_alpha <= 0 or self.omega_beta <= 0:
            raise ValueError("nuclear frequencies must be > 0")


@dataclass(frozen=True)
class EseemParams:
    """Collection of modulating nuclei (possibly empty: no modulation)."""

    nuclei: tuple[Nucleus, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nuclei", tuple(self.nuclei))


@dataclass(frozen=True)
class IdModel:
    """Echo-decay rate versus refocusing-pulse angle.

    gamma_0    flip-angle independent rate (1/s)
    gamma_id   instantaneous-diffusion rate at theta2 = pi (1/s)
    """

    gamma_0: float
    gamma_id: float

    def __post_init__(self) -> None:
        if self.gamma_0 < 0 or self.gamma_id < 0:
            raise ValueError("rates must be >= 0")


def t2_of_temperature(t, model: TemperatureModel):
    """Coherence time T2(T) in seconds.

    1/T2 = gamma_r + sum_i xi / [(1 + e^{T_i/T})(1 + e^{-T_i/T})], summed
    over the three spectator baths.  Monotonically non-increasing in T.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("temperature must be > 0")
    rate = np.full(t.shape, model.gamma_r)
    for t_i in model.temps:
        # 1/((1+e^x)(1+e^-x)) = e^-x/(1+e^-x)^2, overflow-free for x >= 0
        ex = np.exp(-t_i / t)
        rate = rate + model.xi * ex / (1.0 + ex) ** 2
    out = 1.0 / rate
    return out if out.ndim else float(out)


def eseem_envelope(tau, params: EseemParams):
    """Two-pulse echo modulation factor at pulse separation tau (s).

    Product over nuclei of
        1 - (k/4) [2 - 2cos(wa t) - 2cos(wb t) + cos((wa-wb) t) + cos((wa+wb) t)]
    which equals 1 - (k/2)(1 - cos(wa t))(1 - cos(wb t)).  Bounded below by
    1 - 2k per nucleus, so the factor stays within [0, 1] for k <= 1/2.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    env = np.ones(tau.shape)
    for nuc in params.nuclei:
        a, b = nuc.omega_alpha * tau, nuc.omega_beta * tau
        bracket = (
            2.0
            - 2.0 * np.cos(a)
            - 2.0 * np.cos(b)
            + np.cos(a - b)
            + np.cos(a + b)
        )
        env = env * (1.0 - 0.25 * nuc.depth * bracket)
    return env if env.ndim else float(env)


def echo_decay(two_tau, t2: float, a0: float, params: EseemParams):
    """Echo amplitude at total delay 2*tau: a0 * exp(-2tau/T2) * envelope(tau)."""
    two_tau = np.asarray(two_tau, dtype=float)
    if np.any(two_tau < 0):
        raise ValueError("two_tau must be >= 0")
    out = a0 * np.exp(-two_tau / t2) * eseem_envelope(two_tau / 2.0, params)
    return out if out.ndim else float(out)


def id_rate(theta2, model: IdModel):
    """Decoherence rate 1/T2 for refocusing angle theta2 in [0, pi]:
    gamma_0 + gamma_id * sin^2(theta2/2)."""
    theta2 = np.asarray(theta2, dtype=float)
    if np.any((theta2 < 0) | (theta2 > math.pi)):
        raise ValueError("theta2 must lie in [0, pi]")
    out = model.gamma_0 + model.gamma_id * np.sin(theta2 / 2.0) ** 2
    return out if out.ndim else float(out)


def dipolar_coupling_from_id(model: IdModel) -> float:
    """Nearest-neighbour dipolar coupling v_D/2pi in Hz, taken as
    gamma_id/pi.

    The proportionality constant is a documented convention chosen so the
    two measured T2 endpoints reproduce the quoted coupling; it is not
    derived from first principles.
    """
    return model.gamma_id / math.pi
