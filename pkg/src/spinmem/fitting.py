"""Deterministic nonlinear least squares and the model-specific fits.

The engine is a damped Gauss-Newton (Levenberg-Marquardt) loop with a
forward-difference Jacobian, diagonal damping and bound projection.  It is
stateless and reentrant; given identical inputs it produces bit-identical
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoherence import (
    EseemParams,
    IdModel,
    Nucleus,
    TemperatureModel,
    dipolar_coupling_from_id,
    echo_decay,
    id_rate,
    t2_of_temperature,
)
from .device import Resonator
from .spectroscopy import TransmissionMap

__all__ = [
    "FitProblem",
    "FitResult",
    "least_squares",
    "ResonatorFit",
    "CrossingFit",
    "EchoDecayFit",
    "TemperatureFit",
    "Theta2Fit",
    "fit_resonator",
    "fit_avoided_crossing",
    "fit_echo_decay",
    "fit_t2_temperature",
    "fit_theta2",
]

TWO_PI = 2.0 * math.pi

MAX_ITERATIONS = 500
STEP_TOL = 1e-10
COST_TOL = 1e-12
JACOBIAN_RELATIVE_STEP = 1e-6
JACOBIAN_ABSOLUTE_FLOOR = 1e-12
DAMPING_CAP = 1e12


@dataclass(frozen=True)
class FitProblem:
    """Residual model with named parameters, start values and box bounds."""

    names: tuple[str, ...]
    x0: np.ndarray
    residual: "callable"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        x0 = np.asarray(self.x0, dtype=float)
        n = x0.size
        if len(self.names) != n:
            raise ValueError("one name per parameter required")
        lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if np.any(lower > upper):
            raise ValueError("lower bounds exceed upper bounds")
        if np.any(x0 < lower) or np.any(x0 > upper):
            raise ValueError("initial values must lie within the bounds")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", tuple(self.names))


@dataclass(frozen=True)
class FitResult:
    """Best-fit parameters with covariance and convergence diagnostics."""

    names: tuple[str, ...]
    params: np.ndarray
    rss: float
    covariance: np.ndarray | None
    converged: bool
    iterations: int
    at_bounds: tuple[str, ...] = ()
    cost_history: tuple[float, ...] = field(default=(), repr=False)

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    @property
    def stderr(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(len(self.names), np.nan)
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])


def _forward_jacobian(residual, x, r0):
    n = x.size
    jac = np.empty((r0.size, n))
    for j in range(n):
        h = JACOBIAN_RELATIVE_STEP * abs(x[j])
        if h < JACOBIAN_ABSOLUTE_FLOOR:
            h = JACOBIAN_ABSOLUTE_FLOOR
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (residual(xp) - r0) / h
    return jac


def least_squares(problem: FitProblem) -> FitResult:
    """Levenberg-Marquardt minimization of sum(residual(x)^2).

    Accepted iterations never increase the cost.  Convergence is declared
    when the relative step drops below 1e-10 or the relative cost change
    below 1e-12; hitting the iteration limit or the damping cap returns the
    best point found with converged = False.
    """
    x = problem.x0.copy()
    r = np.asarray(problem.residual(x), dtype=float)
    if r.size < x.size:
        raise ValueError("residual vector shorter than the parameter vector")
    cost = float(r @ r)
    # start essentially undamped (pure Gauss-Newton); rejected steps raise
    # the damping geometrically, so well-behaved problems converge in one
    # or two iterations
    lam = 1e-12
    converged = False
    history = [cost]
    jac = None
    iteration = 0

    while iteration < MAX_ITERATIONS:
        iteration += 1
        jac = _forward_jacobian(problem.residual, x, r)
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.maximum(np.diag(jtj), 1e-30)

        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_new = np.clip(x + step, problem.lower, problem.upper)
                r_new = np.asarray(problem.residual(x_new), dtype=float)
                cost_new = float(r_new @ r_new)
                if cost_new <= cost:
                    break
            lam *= 10.0
            if lam > DAMPING_CAP:
                break
        if lam > DAMPING_CAP:
            break

        step_size = float(np.linalg.norm(x_new - x))
        rel_step = step_size / max(float(np.linalg.norm(x)), 1e-300)
        rel_cost = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-14)
        if cost == 0.0 or rel_step < STEP_TOL or rel_cost < COST_TOL:
            converged = True
            break

    if jac is None:
        jac = _forward_jacobian(problem.residual, x, r)
    covariance = None
    dof = r.size - x.size
    if dof > 0:
        jtj = jac.T @ jac
        try:
            cov = np.linalg.pinv(jtj) * (cost / dof)
            covariance = 0.5 * (cov + cov.T)
        except np.linalg.LinAlgError:
            covariance = None

    tol = 1e-12
    at = tuple(
        name
        for name, v, lo, hi in zip(problem.names, x, problem.lower, problem.upper)
        if (np.isfinite(lo) and abs(v - lo) <= tol * max(abs(lo), 1.0))
        or (np.isfinite(hi) and abs(v - hi) <= tol * max(abs(hi), 1.0))
    )
    return FitResult(
        problem.names, x, cost, covariance, converged, iteration, at, tuple(history)
    )


# ---------------------------------------------------------------------------
# model-specific fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResonatorFit:
    f0: float
    kappa: float          # HWHM, Hz
    amplitude: float
    result: FitResult


def _lorentzian_mag(f, f0, hwhm, amp):
    return amp * hwhm / np.sqrt((f - f0) ** 2 + hwhm**2)


def fit_resonator(f: np.ndarray, magnitude: np.ndarray) -> ResonatorFit:
    """Lorentzian magnitude fit of a single transmission peak.

    Returns center frequency and HWHM linewidth in Hz.  Initial guesses come
    from the peak sample and the width at |S21| = peak/sqrt(2).
    """
    f = np.asarray(f, dtype=float)
    magnitude = np.asarray(magnitude, dtype=float)
    i_pk = int(np.argmax(magnitude))
    amp0 = float(magnitude[i_pk])
    f00 = float(f[i_pk])
    above = magnitude >= amp0 / math.sqrt(2.0)
    span = f[above]
    hwhm0 = max((span[-1] - span[0]) / 2.0, (f[1] - f[0])) if span.size > 1 else (f[-1] - f[0]) / 10.0

    def residual(p):
        return _lorentzian_mag(f, p[0], p[1], p[2]) - magnitude

    problem = FitProblem(
        names=("f0", "kappa", "amplitude"),
        x0=np.array([f00, hwhm0, amp0]),
        residual=residual,
        lower=np.array([f[0], 0.0, 0.0]),
        upper=np.array([f[-1], (f[-1] - f[0]), 10.0 * amp0]),
    )
    res = least_squares(problem)
    return ResonatorFit(res["f0"], res["kappa"], res["amplitude"], res)


@dataclass(frozen=True)
class CrossingFit:
    coupling: float       # v_N/2pi, Hz
    gamma_star: float     # HWHM, Hz
    slope: float          # line slope d f_s/dB, Hz/T
    result: FitResult


def _crossing_model(b, f, resonator: Resonator, offset: float):
    """|S21|(B, f) of a single line with fixed resonator parameters.

    Fit parameters (all cyclic Hz): coupling, inhomogeneous width, Zeeman
    slope.  offset is the fixed zero-field intercept of the line.
    """
    prefactor = math.sqrt(resonator.kappa_in * resonator.kappa_out) / TWO_PI
    omega = f[np.newaxis, :]
    f0 = resonator.omega0 / TWO_PI

    def model(p):
        v, gam, slope = p
        fs = slope * b[:, np.newaxis] + offset
        denom = (
            1j * (f0 - omega)
            + resonator.kappa / TWO_PI
            + v**2 / (1j * (fs - omega) + gam)
        )
        return np.abs(prefactor / denom)

    return model


def fit_avoided_crossing(
    tmap: TransmissionMap,
    resonator: Resonator,
    slope_guess: float,
    offset: float = 0.0,
) -> CrossingFit:
    """Fit the full transmission model over a 2-d anticrossing map.

    Resonator parameters are held fixed (fit them first, far from the
    crossing); the free parameters are the collective coupling, the
    inhomogeneous HWHM and the field-to-frequency slope.  The fit is flagged
    unconverged when the recovered crossing lies outside the map.
    """
    b = tmap.grid.b
    f = tmap.grid.f
    data = tmap.magnitude
    model = _crossing_model(b, f, resonator, offset)

    def residual(p):
        return (model(p) - data).ravel()

    v0 = max(resonator.kappa / TWO_PI, 1e5)
    gam0 = resonator.kappa / TWO_PI

    problem = FitProblem(
        names=("coupling", "gamma_star", "slope"),
        x0=np.array([v0, gam0, slope_guess]),
        residual=residual,
        lower=np.array([0.0, 1e3, 0.1 * slope_guess]),
        upper=np.array([1e9, 1e9, 10.0 * slope_guess]),
    )
    res = least_squares(problem)

    crossing_b = (resonator.omega0 / TWO_PI - offset) / max(res["slope"], 1e-300)
    if not (b[0] <= crossing_b <= b[-1]) or "coupling" in res.at_bounds:
        res = FitResult(
            res.names, res.params, res.rss, res.covariance, False,
            res.iterations, res.at_bounds, res.cost_history,
        )
    return CrossingFit(res["coupling"], res["gamma_star"], res["slope"], res)


@dataclass(frozen=True)
class EchoDecayFit:
    t2: float
    a0: float
    eseem: EseemParams
    modulation_frequency: float   # Hz (mean of the two fitted branches)
    result: FitResult


def fit_echo_decay(
    two_tau: np.ndarray,
    amplitude: np.ndarray,
    larmor_guess: float,
) -> EchoDecayFit:
    """Fit the modulated echo-decay law to (2*tau, amplitude) points.

    larmor_guess seeds both superhyperfine branch frequencies (Hz).  Needs
    at least 8 points spanning one modulation period.
    """
    two_tau = np.asarray(two_tau, dtype=float)
    amplitude = np.asarray(amplitude, dtype=float)
    if two_tau.size < 8:
        raise ValueError("need at least 8 echo-decay points")
    if larmor_guess <= 0:
        raise ValueError("larmor_guess must be > 0")
    span = (two_tau.max() - two_tau.min()) / 2.0
    if span < 1.0 / larmor_guess:
        raise ValueError("tau span must cover at least one modulation period")

    a00 = float(np.max(amplitude))
    # crude rate seed from the endpoint ratio, ESEEM ignored
    tail = max(float(np.mean(amplitude[-3:])), 1e-12 * a00)
    t20 = (two_tau.max() - two_tau.min()) / max(math.log(a00 / tail), 0.1)

    def residual(p):
        t2, a0, depth, fa, fb = p
        params = EseemParams((Nucleus(depth, TWO_PI * fa, TWO_PI * fb),))
        return echo_decay(two_tau, t2, a0, params) - amplitude

    # the modulation landscape has local minima in frequency; a short
    # deterministic multi-start around the Larmor seed avoids them
    res = None
    for scale in (1.0, 0.85, 1.15):
        problem = FitProblem(
            names=("t2", "a0", "depth", "f_alpha", "f_beta"),
            x0=np.array([t20, a00, 0.2, scale * larmor_guess, scale * larmor_guess]),
            residual=residual,
            lower=np.array([1e-9, 0.0, 0.0, 0.2 * larmor_guess, 0.2 * larmor_guess]),
            upper=np.array([1.0, 10.0 * a00, 1.0, 5.0 * larmor_guess, 5.0 * larmor_guess]),
        )
        candidate = least_squares(problem)
        if res is None or candidate.rss < res.rss:
            res = candidate
    eseem = EseemParams(
        (Nucleus(res["depth"], TWO_PI * res["f_alpha"], TWO_PI * res["f_beta"]),)
    )
    f_mod = 0.5 * (res["f_alpha"] + res["f_beta"])
    return EchoDecayFit(res["t2"], res["a0"], eseem, f_mod, res)


@dataclass(frozen=True)
class TemperatureFit:
    gamma_r: float
    xi: float
    result: FitResult


def fit_t2_temperature(
    temperature: np.ndarray,
    t2: np.ndarray,
    spectator_temps: tuple[float, float, float],
) -> TemperatureFit:
    """Fit the flip-flop model to (T, T2) data.

    The spectator Zeeman temperatures are inputs computed from the device,
    not fitted; gamma_r and xi are the only free parameters.
    """
    temperature = np.asarray(temperature, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if temperature.size < 3:
        raise ValueError("need at least 3 temperature points")

    gamma0 = 1.0 / float(np.max(t2))
    xi0 = max(1.0 / float(np.min(t2)) - gamma0, 0.1 * gamma0)

    def residual(p):
        model = TemperatureModel(p[0], p[1], spectator_temps)
        return t2_of_temperature(temperature, model) - t2

    problem = FitProblem(
        names=("gamma_r", "xi"),
        x0=np.array([gamma0, xi0]),
        residual=residual,
        lower=np.array([1e-6, 0.0]),
        upper=np.array([1e12, 1e12]),
    )
    res = least_squares(problem)
    return TemperatureFit(res["gamma_r"], res["xi"], res)


@dataclass(frozen=True)
class Theta2Fit:
    model: IdModel
    dipolar_coupling: float   # v_D/2pi, Hz
    result: FitResult


def fit_theta2(theta2: np.ndarray, t2: np.ndarray) -> Theta2Fit:
    """Fit the instantaneous-diffusion angle dependence to (theta2, T2) data
    and convert the diffusion rate to a dipolar coupling."""
    theta2 = np.asarray(theta2, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.unique(theta2).size < 3:
        raise ValueError("need at least 3 distinct refocusing angles")
    if np.any((theta2 < 0) | (theta2 > math.pi)):
        raise ValueError("angles must lie in [0, pi]")

    g00 = 1.0 / float(np.max(t2))
    gid0 = max(1.0 / float(np.min(t2)) - g00, 1e-3 * g00)

    def residual(p):
        return 1.0 / id_rate(theta2, IdModel(p[0], p[1])) - t2

    problem = FitProblem(
        names=("gamma_0", "gamma_id"),
        x0=np.array([g00, gid0]),
        residual=residual,
        lower=np.array([0.0, 0.0]),
        upper=np.array([1e12, 1e12]),
    )
    res = least_squares(problem)
    model = IdModel(res["gamma_0"], res["gamma_id"])
    return Theta2Fit(model, dipolar_coupling_from_id(model), res)
