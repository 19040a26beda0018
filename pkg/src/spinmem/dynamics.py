"""Time-domain semiclassical dynamics of the cavity-coupled spin ensemble.

The inhomogeneous line is discretized into spin packets with detunings
delta_k and couplings g_k.  In a frame rotating at ``frame_frequency`` the
equations of motion integrated here are

    d alpha /dt = -(kappa + i Dc) alpha - i sum_k g_k s_k + sqrt(k_in) beta(t)
    d s_k   /dt = -(gamma_h + i Dk) s_k + i g_k alpha sz_k
    d sz_k  /dt = -gamma_1 (sz_k - sz_eq) - 4 g_k Im(conj(alpha) s_k)

with Dc = omega0 - w_frame, Dk = omega_s + delta_k - w_frame, sz_eq = -1.
alpha is the cavity amplitude in sqrt(photons), beta the input drive in
sqrt(photons/s), and s_k / sz_k the packet coherence and inversion.  A
lossless run conserves |alpha|^2 + sum_k (sz_k + 1)/2.

Integration is fixed-step classical RK4.  The per-step kernel is jitted
(single thread, sequential packet reduction) so results are bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .device import DeviceConfig, SubEnsemble

__all__ = [
    "DEFAULT_DT",
    "DEFAULT_PACKETS",
    "DEFAULT_CUTOFF_FACTOR",
    "SpinPacket",
    "EnsembleDiscretization",
    "EnsembleState",
    "PulseSegment",
    "PulseSequence",
    "SimulationTrace",
    "StepInstabilityError",
    "CalibrationError",
    "PulseCalibration",
    "HahnEchoResult",
    "FidResult",
    "discretize_ensemble",
    "sample_ensemble",
    "integrate",
    "total_excitation",
    "calibrate_pi_pulse",
    "simulate_hahn_echo",
    "simulate_fid",
    "find_echo",
]

TWO_PI = 2.0 * math.pi

DEFAULT_DT = 0.05e-9
DEFAULT_PACKETS = 2001
DEFAULT_CUTOFF_FACTOR = 20.0

# Reassociation/contraction only: keeps NaN/Inf semantics for the
# instability check while letting LLVM vectorize the packet loops.  The
# coupling sum then reduces in a fixed-shape tree, identical on every run.
_FASTMATH = {"reassoc", "contract", "arcp"}


class StepInstabilityError(RuntimeError):
    """Raised when the integrator detects a blown-up inversion."""

    def __init__(self, step: int, t: float, dt: float):
        self.step = step
        self.t = t
        self.dt = dt
        super().__init__(
            f"|s_z| exceeded 1 + 1e-6 at step {step} (t = {t * 1e9:.2f} ns); "
            f"dt = {dt * 1e9:.3g} ns is too large for this drive/detuning range"
        )


class CalibrationError(RuntimeError):
    """Pulse calibration could not invert the central packet."""

    def __init__(self, amplitude: float, achieved_sz: float):
        self.amplitude = amplitude
        self.achieved_sz = achieved_sz
        super().__init__(
            f"no drive amplitude reached s_z > 0; best candidate "
            f"|beta| = {amplitude:.6g} left s_z = {achieved_sz:.4f}"
        )


@dataclass(frozen=True)
class SpinPacket:
    """One detuning bin of the discretized line: detuning from the ensemble
    center (rad/s), packet coupling (rad/s), and Bloch state."""

    delta: float
    g: float
    s: complex = 0.0j
    sz: float = -1.0


@dataclass(frozen=True)
class EnsembleDiscretization:
    """Deterministic packet decomposition of one inhomogeneous line.

    Equal-spaced detuning bins with analytic lineshape masses; the outermost
    bins absorb the tail mass beyond the cutoff so the weights sum to one
    and sum(g_k^2) equals the collective coupling squared exactly.
    """

    detunings: np.ndarray
    couplings: np.ndarray
    weights: np.ndarray
    cutoff: float
    distribution: str = "lorentzian"

    def __post_init__(self) -> None:
        d = np.asarray(self.detunings, dtype=float)
        g = np.asarray(self.couplings, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if not (d.shape == g.shape == w.shape) or d.ndim != 1 or d.size < 1:
            raise ValueError("detunings/couplings/weights must be matching 1-d arrays")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.detunings.size

    @property
    def total_coupling(self) -> float:
        """Collective coupling sqrt(sum g_k^2), rad/s."""
        return math.sqrt(float(np.sum(self.couplings**2)))

    @property
    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.detunings)))

    def packet(self, k: int) -> SpinPacket:
        return SpinPacket(float(self.detunings[k]), float(self.couplings[k]))

    def susceptibility(self, delta_probe, gamma_h: float):
        """Discrete-sum susceptibility sum_k g_k^2/(i(dp - delta_k) + gamma_h)."""
        dp = np.atleast_1d(np.asarray(delta_probe, dtype=float))
        chi = np.sum(
            self.couplings**2
            / (1j * (dp[:, None] - self.detunings[None, :]) + gamma_h),
            axis=1,
        )
        return chi if np.ndim(delta_probe) else complex(chi[0])


def _lorentzian_bin_masses(delta: np.ndarray, hwhm: float) -> np.ndarray:
    dd = delta[1] - delta[0]
    inner = delta[:-1] + 0.5 * dd
    edges = np.concatenate(([-np.inf], inner, [np.inf]))
    cdf = np.arctan(edges / hwhm) / math.pi
    return np.diff(cdf)


def _gaussian_bin_masses(delta: np.ndarray, hwhm: float) -> np.ndarray:
    sigma = hwhm / math.sqrt(2.0 * math.log(2.0))
    dd = delta[1] - delta[0]
    inner = delta[:-1] + 0.5 * dd
    edges = np.concatenate(([-np.inf], inner, [np.inf]))
    cdf = np.array([0.5 * (1.0 + math.erf(e / (sigma * math.sqrt(2.0)))) for e in edges])
    return np.diff(cdf)


def discretize_ensemble(
    coupling: float,
    gamma_star: float,
    m: int = DEFAULT_PACKETS,
    cutoff_factor: float = DEFAULT_CUTOFF_FACTOR,
    distribution: str = "lorentzian",
    allow_degenerate: bool = False,
) -> EnsembleDiscretization:
    """Deterministic quadrature discretization of the inhomogeneous line.

    m equal-spaced detuning bins spanning +-cutoff_factor*gamma_star, each
    carrying the analytic probability mass of its bin (outer bins extend to
    infinity), couplings g_k = coupling*sqrt(w_k), all packets starting in
    the ground state.  m = 1 collapses the line to a single resonant packet
    and must be requested explicitly.
    """
    if m < 1:
        raise ValueError(f"packet count must be >= 1, got {m}")
    if m == 1:
        if not allow_degenerate:
            raise ValueError("m < 2 cannot resolve the lineshape (pass allow_degenerate=True for a single-packet model)")
        return EnsembleDiscretization(
            np.zeros(1), np.array([coupling]), np.ones(1), 0.0, distribution
        )
    if cutoff_factor <= 1:
        raise ValueError(f"cutoff_factor must be > 1, got {cutoff_factor}")
    if gamma_star <= 0:
        raise ValueError("gamma_star must be > 0")

    cutoff = cutoff_factor * gamma_star
    delta = np.linspace(-cutoff, cutoff, m)
    if distribution == "lorentzian":
        w = _lorentzian_bin_masses(delta, gamma_star)
    elif distribution == "gaussian":
        w = _gaussian_bin_masses(delta, gamma_star)
    else:
        raise ValueError(f"unknown lineshape {distribution!r}")
    w = w / w.sum()
    g = coupling * np.sqrt(w)
    return EnsembleDiscretization(delta, g, w, cutoff, distribution)


def sample_ensemble(
    coupling: float,
    gamma_star: float,
    m: int,
    cutoff_factor: float = DEFAULT_CUTOFF_FACTOR,
    seed: int = 0,
    distribution: str = "lorentzian",
) -> EnsembleDiscretization:
    """Seeded random-sampling alternative to the quadrature discretization.

    Detunings are drawn from the (cutoff-truncated) lineshape with equal
    weights 1/m; used for cross-validating the deterministic binning only.
    """
    if m < 2:
        raise ValueError("sampled mode needs m >= 2")
    rng = np.random.default_rng(seed)
    cutoff = cutoff_factor * gamma_star
    u_max = math.atan(cutoff / gamma_star) / math.pi
    if distribution == "lorentzian":
        u = rng.uniform(-u_max, u_max, size=m)
        delta = gamma_star * np.tan(math.pi * u)
    elif distribution == "gaussian":
        sigma = gamma_star / math.sqrt(2.0 * math.log(2.0))
        delta = rng.normal(0.0, sigma, size=m)
        delta = np.clip(delta, -cutoff, cutoff)
    else:
        raise ValueError(f"unknown lineshape {distribution!r}")
    delta = np.sort(delta)
    w = np.full(m, 1.0 / m)
    g = coupling * np.sqrt(w)
    return EnsembleDiscretization(delta, g, w, cutoff, distribution)


@dataclass
class EnsembleState:
    """Instantaneous integrator state: cavity amplitude plus packet arrays."""

    alpha: complex
    s: np.ndarray
    sz: np.ndarray

    @classmethod
    def ground(cls, m: int) -> "EnsembleState":
        return cls(0.0j, np.zeros(m, dtype=complex), -np.ones(m))

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.alpha, self.s.copy(), self.sz.copy())


def total_excitation(state: EnsembleState) -> float:
    """Conserved quantity of the lossless system: photons plus flipped spins."""
    return float(abs(state.alpha) ** 2 + np.sum(state.sz + 1.0) / 2.0)


@dataclass(frozen=True)
class PulseSegment:
    """Constant complex drive beta_in (sqrt(photons/s)) for a duration (s)."""

    duration: float
    amplitude: complex = 0.0j

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")


@dataclass(frozen=True)
class PulseSequence:
    """Contiguous list of drive segments starting at t = 0."""

    segments: tuple[PulseSegment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    @classmethod
    def from_events(
        cls, events: list[tuple[float, float, complex]]
    ) -> "PulseSequence":
        """Build from (start, width, amplitude) pulse events, filling gaps
        with zero drive.  Events must not overlap."""
        segs: list[PulseSegment] = []
        t = 0.0
        for start, width, amp in sorted(events, key=lambda e: e[0]):
            if start < t - 1e-15:
                raise ValueError(f"pulse starting at {start} s overlaps the previous one")
            if start > t:
                segs.append(PulseSegment(start - t, 0.0j))
            segs.append(PulseSegment(width, complex(amp)))
            t = start + width
        return cls(tuple(segs))

    def sample(self, dt: float, n_steps: int) -> np.ndarray:
        """Per-step drive amplitudes; segment boundaries snap to the step
        grid (nearest step, so at most dt/2 of shift)."""
        drive = np.zeros(n_steps, dtype=complex)
        t = 0.0
        for seg in self.segments:
            i0 = int(round(t / dt))
            i1 = int(round((t + seg.duration) / dt))
            drive[max(i0, 0) : min(i1, n_steps)] = seg.amplitude
            t += seg.duration
        return drive


@dataclass(frozen=True)
class SimulationTrace:
    """Uniformly sampled output of one integration run.

    a_out = sqrt(kappa_out) * alpha at every sample; mx is the
    coupling-weighted transverse magnetization sum_k g_k s_k.
    """

    dt: float
    t: np.ndarray
    alpha: np.ndarray
    a_out: np.ndarray
    mx: np.ndarray
    final_state: EnsembleState

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Sample indices with t0 <= t <= t1."""
        return np.where((self.t >= t0) & (self.t <= t1))[0]


@njit(cache=True, fastmath=_FASTMATH)
def _rk4_run(y, sz, coef, g, kin_sqrt, gamma1, sz_eq, drive, dt,
             record_every, rec_alpha, rec_mx):  # pragma: no cover - jitted
    m = sz.shape[0]
    ks = np.empty((4, m), np.complex128)
    kz = np.empty((4, m), np.float64)
    ka = np.empty(4, np.complex128)
    st = np.empty(m, np.complex128)
    zt = np.empty(m, np.float64)
    alpha = y[0]
    s = y[1:]

    acc = 0.0 + 0.0j
    for k in range(m):
        acc += g[k] * s[k]
    rec_alpha[0] = alpha
    rec_mx[0] = acc
    rec = 1

    n_steps = drive.shape[0]
    for n in range(n_steps):
        beta = drive[n]
        for stage in range(4):
            if stage == 0:
                at = alpha
                for k in range(m):
                    st[k] = s[k]
                    zt[k] = sz[k]
            elif stage < 3:
                h = 0.5 * dt
                at = alpha + h * ka[stage - 1]
                for k in range(m):
                    st[k] = s[k] + h * ks[stage - 1, k]
                    zt[k] = sz[k] + h * kz[stage - 1, k]
            else:
                at = alpha + dt * ka[2]
                for k in range(m):
                    st[k] = s[k] + dt * ks[2, k]
                    zt[k] = sz[k] + dt * kz[2, k]
            acc = 0.0 + 0.0j
            ac = np.conj(at)
            for k in range(m):
                acc += g[k] * st[k]
                ks[stage, k] = coef[k + 1] * st[k] + 1j * at * g[k] * zt[k]
                kz[stage, k] = gamma1 * (sz_eq - zt[k]) - 4.0 * g[k] * (ac * st[k]).imag
            ka[stage] = coef[0] * at - 1j * acc + kin_sqrt * beta

        c = dt / 6.0
        alpha = alpha + c * (ka[0] + 2.0 * ka[1] + 2.0 * ka[2] + ka[3])
        worst = 0.0
        for k in range(m):
            s[k] = s[k] + c * (ks[0, k] + 2.0 * ks[1, k] + 2.0 * ks[2, k] + ks[3, k])
            sz[k] = sz[k] + c * (kz[0, k] + 2.0 * kz[1, k] + 2.0 * kz[2, k] + kz[3, k])
            a = abs(sz[k])
            if a > worst:
                worst = a
        if not worst <= 1.0 + 1e-6:
            y[0] = alpha
            return n

        if (n + 1) % record_every == 0:
            acc = 0.0 + 0.0j
            for k in range(m):
                acc += g[k] * s[k]
            rec_alpha[rec] = alpha
            rec_mx[rec] = acc
            rec += 1

    y[0] = alpha
    return -1


def _stability_bound(device, disc, ensemble, sequence, dt) -> float:
    res = device.resonator
    max_det = float(np.max(np.abs(disc.detunings))) if disc.m else 0.0
    beta_max = max((abs(s.amplitude) for s in sequence.segments), default=0.0)
    if res.kappa > 0:
        alpha_est = math.sqrt(res.kappa_in) * beta_max / res.kappa
    else:
        on = sum(s.duration for s in sequence.segments if abs(s.amplitude) > 0)
        alpha_est = math.sqrt(res.kappa_in) * beta_max * on
    rabi = 2.0 * float(np.max(disc.couplings)) * alpha_est if disc.m else 0.0
    return dt * (max_det + res.kappa + rabi)


def integrate(
    device: DeviceConfig,
    disc: EnsembleDiscretization,
    sequence: PulseSequence,
    dt: float = DEFAULT_DT,
    frame_frequency: float | None = None,
    *,
    ensemble: SubEnsemble | None = None,
    t_final: float | None = None,
    record_every: int = 1,
    initial_state: EnsembleState | None = None,
) -> SimulationTrace:
    """Fixed-step RK4 integration of the driven cavity-ensemble system.

    The frame rotates at frame_frequency (rad/s, default: the cavity);
    ensemble selects which sub-ensemble the discretization represents
    (default: the one resonant at the device working point).  Deterministic:
    identical inputs give bit-identical traces.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    res = device.resonator
    if ensemble is None:
        ensemble = device.resonant_ensemble()
    if frame_frequency is None:
        frame_frequency = res.omega0

    margin = _stability_bound(device, disc, ensemble, sequence, dt)
    if margin >= 0.1:
        raise ValueError(
            f"dt = {dt * 1e9:.3g} ns violates the stability bound: "
            f"dt*(max detuning + kappa + Rabi) = {margin:.3f} >= 0.1"
        )

    total = sequence.total_duration
    if t_final is not None:
        total = max(total, t_final)
    n_steps = int(math.ceil(total / dt - 1e-9))

    omega_s = ensemble.spin_frequency(device.field)
    coef = np.empty(disc.m + 1, dtype=complex)
    coef[0] = -(res.kappa + 1j * (res.omega0 - frame_frequency))
    coef[1:] = -(ensemble.gamma_h + 1j * (omega_s + disc.detunings - frame_frequency))

    state = initial_state.copy() if initial_state is not None else EnsembleState.ground(disc.m)
    y = np.empty(disc.m + 1, dtype=complex)
    y[0] = state.alpha
    y[1:] = state.s
    sz = np.asarray(state.sz, dtype=float).copy()

    drive = sequence.sample(dt, n_steps)
    n_rec = n_steps // record_every + 1
    rec_alpha = np.empty(n_rec, dtype=complex)
    rec_mx = np.empty(n_rec, dtype=complex)

    bad = _rk4_run(
        y, sz, coef, disc.couplings, math.sqrt(res.kappa_in), ensemble.gamma_1,
        -1.0, drive, dt, record_every, rec_alpha, rec_mx,
    )
    if bad >= 0:
        raise StepInstabilityError(bad, bad * dt, dt)

    final = EnsembleState(complex(y[0]), y[1:].copy(), sz)
    t = np.arange(n_rec) * (dt * record_every)
    a_out = math.sqrt(res.kappa_out) * rec_alpha
    return SimulationTrace(dt * record_every, t, rec_alpha, a_out, rec_mx, final)


@dataclass(frozen=True)
class PulseCalibration:
    """Result of the pi-pulse amplitude search."""

    amplitude: float
    achieved_sz: float
    duration: float


def _final_central_sz(device, disc, ensemble, amplitude, duration, settle, dt) -> float:
    seq = PulseSequence((PulseSegment(duration, amplitude + 0.0j),))
    trace = integrate(
        device, disc, seq, dt, ensemble=ensemble,
        t_final=duration + settle, record_every=10**9,
    )
    return float(trace.final_state.sz[disc.center_index])


def calibrate_pi_pulse(
    device: DeviceConfig,
    disc: EnsembleDiscretization,
    duration: float,
    *,
    ensemble: SubEnsemble | None = None,
    dt: float = DEFAULT_DT,
    settle: float | None = None,
    rtol: float = 1e-4,
) -> PulseCalibration:
    """Scalar search for the drive amplitude that best inverts the central
    (resonant) packet with a rectangular pulse of the given duration.

    The figure of merit is s_z of the delta = 0 packet once the cavity has
    rung down; the search brackets the analytic flat-cavity estimate
    pi*kappa/(2 g_c sqrt(k_in) T) and refines by golden section.
    """
    if duration <= 0:
        raise ValueError("pulse duration must be > 0")
    res = device.resonator
    if ensemble is None:
        ensemble = device.resonant_ensemble()
    if settle is None:
        settle = max(5.0 / res.kappa, 2.0 / ensemble.gamma_star) if res.kappa > 0 else 100e-9

    g_c = float(disc.couplings[disc.center_index])
    a_guess = math.pi * res.kappa / (2.0 * g_c * math.sqrt(res.kappa_in) * duration)

    def objective(a: float) -> float:
        return _final_central_sz(device, disc, ensemble, a, duration, settle, dt)

    grid = a_guess * np.linspace(0.4, 1.8, 9)
    scores = [objective(a) for a in grid]
    best = int(np.argmax(scores))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    while (hi - lo) > rtol * a_guess:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = objective(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = objective(x1)
    a_best = 0.5 * (lo + hi)
    sz_best = objective(a_best)
    if sz_best <= 0.0:
        raise CalibrationError(a_best, sz_best)
    return PulseCalibration(float(a_best), sz_best, duration)


@dataclass(frozen=True)
class HahnEchoResult:
    """Echo location and size extracted from a two-pulse run.

    trace is the phase-cycled average when cycling is enabled; raw_trace is
    the first (refocusing phase 0) run with pulse feedthrough intact.
    """

    tau: float
    theta2: float
    echo_time: float
    echo_amplitude: float
    echo_energy: float
    expected_time: float
    trace: SimulationTrace
    raw_trace: SimulationTrace


def find_echo(
    trace: SimulationTrace,
    center: float,
    half_width: float,
    min_prominence: float = 0.5,
) -> tuple[float, float, float]:
    """(time, amplitude, energy) of the echo lobe inside the window.

    At this device's cooperativity the emitted burst is re-absorbed and
    re-emitted, so |a_out| rings at the hybridization period and a trailing
    lobe can exceed the first one.  The echo is therefore taken as the
    interior local maximum nearest ``center`` among those reaching
    ``min_prominence`` of the window maximum; energy integrates |a_out|^2
    over the whole window.  No qualifying interior maximum means no echo
    (amplitude 0).
    """
    idx = trace.window(center - half_width, center + half_width)
    if idx.size < 3:
        return math.nan, 0.0, 0.0
    mag = np.abs(trace.a_out[idx])
    peak = float(mag.max())
    if peak <= 0.0:
        return math.nan, 0.0, 0.0
    local = np.where((mag[1:-1] >= mag[:-2]) & (mag[1:-1] >= mag[2:]))[0] + 1
    local = local[mag[local] >= min_prominence * peak]
    if local.size == 0:
        return math.nan, 0.0, 0.0
    times = trace.t[idx[local]]
    i = local[int(np.argmin(np.abs(times - center)))]
    energy = float(np.trapezoid(mag**2, trace.t[idx]))
    return float(trace.t[idx[i]]), float(mag[i]), energy


def simulate_hahn_echo(
    device: DeviceConfig,
    disc: EnsembleDiscretization,
    tau: float,
    theta2: float = math.pi,
    *,
    pi_amplitude: float | None = None,
    pi_duration: float = 40e-9,
    first_pulse: PulseSegment | None = None,
    ensemble: SubEnsemble | None = None,
    dt: float = DEFAULT_DT,
    record_every: int = 10,
    tail: float = 1e-6,
    window_half: float = 300e-9,
    phase_cycle: bool = True,
) -> HahnEchoResult:
    """Two-pulse echo: pi/2 at t = 0, a theta2 pulse at t = tau, integrated
    to 2*tau + tail.

    Pulse timing is referenced to pulse centers, so the echo is expected at
    the first-pulse center plus 2*tau.  The refocusing angle scales the
    second pulse's amplitude relative to the calibrated pi pulse.  Passing
    first_pulse substitutes an arbitrary excitation pulse (e.g. a weak one)
    for the default pi/2.

    phase_cycle averages two runs with the refocusing phase at 0 and pi.
    The refocusing pulse partially inverts the line, and the resulting
    single-pulse emission (which flips sign with that phase, unlike the
    echo, which goes as twice the phase) would otherwise bury weak echoes.
    """
    if not 0.0 < theta2 <= math.pi + 1e-12:
        raise ValueError(f"theta2 must lie in (0, pi], got {theta2}")
    if pi_amplitude is None:
        pi_amplitude = calibrate_pi_pulse(
            device, disc, pi_duration, ensemble=ensemble, dt=dt
        ).amplitude
    if first_pulse is None:
        first_pulse = PulseSegment(pi_duration / 2.0, pi_amplitude + 0.0j)
    if tau <= max(first_pulse.duration, pi_duration):
        raise ValueError("tau must exceed the pulse widths")

    c1 = first_pulse.duration / 2.0
    refocus_amp = pi_amplitude * (theta2 / math.pi)
    expected = c1 + 2.0 * tau
    phases = (0.0, math.pi) if phase_cycle else (0.0,)
    traces = []
    for phi in phases:
        events = [
            (0.0, first_pulse.duration, first_pulse.amplitude),
            (
                c1 + tau - pi_duration / 2.0,
                pi_duration,
                refocus_amp * complex(math.cos(phi), math.sin(phi)),
            ),
        ]
        traces.append(
            integrate(
                device, disc, PulseSequence.from_events(events), dt,
                ensemble=ensemble, t_final=expected + tail,
                record_every=record_every,
            )
        )
    raw = traces[0]
    if len(traces) == 1:
        trace = raw
    else:
        trace = SimulationTrace(
            dt=raw.dt,
            t=raw.t,
            alpha=0.5 * (traces[0].alpha + traces[1].alpha),
            a_out=0.5 * (traces[0].a_out + traces[1].a_out),
            mx=0.5 * (traces[0].mx + traces[1].mx),
            final_state=raw.final_state,
        )
    echo_time, amp, energy = find_echo(trace, expected, window_half)
    return HahnEchoResult(tau, theta2, echo_time, amp, energy, expected, trace, raw)


@dataclass(frozen=True)
class FidResult:
    """Free-induction decay time and the quality of its exponential fit.

    rate_drift compares the fitted rate in a later window against the main
    one; an exponential envelope keeps it near zero while a Gaussian line
    roughly doubles the local rate per window step.
    """

    t2_star: float
    decay_rate: float
    fit_rms_residual: float
    rate_drift: float


def simulate_fid(
    device: DeviceConfig,
    disc: EnsembleDiscretization,
    *,
    ensemble: SubEnsemble | None = None,
    pulse_width: float = 2e-9,
    amplitude: float = 1.0,
    dt: float = DEFAULT_DT,
    record_every: int = 2,
    fit_window: tuple[float, float] | None = None,
) -> FidResult:
    """Weak-pulse free induction decay of the transverse magnetization.

    Fits a single exponential to |sum_k g_k s_k|.  Two artifacts must be
    kept out of the fit: the outermost detuning bins (which carry the
    folded tail mass and beat at the cutoff frequency) are removed by a
    complex boxcar over two cutoff periods, and the hybridized-mode beats
    are averaged by fitting across one full beat period starting at 1/
    gamma_star, where the cavity ring-up has passed.  Returns the 1/e time
    and the rms log-residual of the fit (large residual flags a
    non-exponential envelope, e.g. a Gaussian line).
    """
    if ensemble is None:
        ensemble = device.resonant_ensemble()
    gs = ensemble.gamma_star
    beat = TWO_PI / ensemble.coupling if ensemble.coupling > 0 else 2.0 / gs
    if fit_window is None:
        fit_window = (1.0 / gs, 1.0 / gs + beat)
    check_end = max(fit_window[1], 13.0 / gs) + beat
    seq = PulseSequence((PulseSegment(pulse_width, amplitude + 0.0j),))
    trace = integrate(
        device, disc, seq, dt, ensemble=ensemble,
        t_final=check_end + 0.05e-6, record_every=record_every,
    )
    if disc.cutoff > 0:
        win = max(1, int(round(2.0 * TWO_PI / disc.cutoff / trace.dt)))
        smooth = np.convolve(trace.mx, np.ones(win) / win, mode="same")
    else:
        smooth = trace.mx

    def window_rate(t0: float, t1: float) -> tuple[float, float]:
        idx = trace.window(t0, t1)
        t = trace.t[idx]
        y = np.abs(smooth[idx])
        if idx.size < 4 or np.any(y <= 0):
            raise RuntimeError("magnetization envelope vanished inside the fit window")
        logy = np.log(y)
        slope, intercept = np.polyfit(t, logy, 1)
        resid = logy - (slope * t + intercept)
        return float(slope), float(np.sqrt(np.mean(resid**2)))

    slope, rms = window_rate(*fit_window)
    if slope >= 0:
        raise RuntimeError(
            "free-induction envelope does not decay; check the discretization"
        )
    rate = -slope

    # lineshape flag: refit deep in the tail, where a Lorentzian line keeps
    # decaying at gamma_star while other shapes have drifted away from the
    # early-window rate
    late_slope, _ = window_rate(8.0 / gs, 13.0 / gs)
    drift = abs(late_slope / slope - 1.0) if slope != 0 else math.inf
    return FidResult(1.0 / rate, rate, rms, drift)
