"""Command-line interface.

    spinmem <subcommand> --config <file> --out <path> [global flags]

Subcommands: sweep, echo, fid, echodecay, t2scan, theta2scan, memory, fit,
recipe {fig1b,fig2a,fig2b,fig3,fig4}.  Every emitting subcommand writes a
CSV artifact, a rendered PNG next to it (disable with --no-plot) and a
reproducibility manifest <out>.manifest.json.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .configfile import Config, ConfigError, load_config
from .decoherence import eseem_envelope, id_rate, t2_of_temperature
from .device import DeviceConfig
from .dynamics import (
    CalibrationError,
    StepInstabilityError,
    calibrate_pi_pulse,
    discretize_ensemble,
    integrate,
    sample_ensemble,
    simulate_fid,
    simulate_hahn_echo,
)
from .fitting import (
    fit_avoided_crossing,
    fit_echo_decay,
    fit_resonator,
    fit_t2_temperature,
    fit_theta2,
)
from .protocols import MemoryExperiment, run_memory
from .spectroscopy import FieldSweepGrid, TransmissionMap, field_sweep
from . import figures, report

TWO_PI = 2.0 * math.pi

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinmem",
        description="cavity + erbium spin-ensemble simulator and fitting toolkit",
    )
    parser.add_argument("--version", action="version", version=f"spinmem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_out=True) -> None:
        p.add_argument("--config", type=Path, default=None,
                       help="config file (default: bundled er_yso.cfg)")
        if needs_out:
            p.add_argument("--out", type=Path, default=None,
                           help="output CSV path (default: ./<name>.csv)")
        p.add_argument("--dt-ns", type=float, default=None, help="integrator step")
        p.add_argument("--packets", type=int, default=None,
                       help="spin-packet count for the discretized line")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent scan points")
        p.add_argument("--seed", type=int, default=None,
                       help="switch to the seeded random-sampling discretization")
        p.add_argument("--no-plot", action="store_true",
                       help="skip the PNG rendering next to the CSV")

    for name, help_ in [
        ("sweep", "cw transmission map over (field, frequency)"),
        ("echo", "two-pulse echo time trace (or a custom pulse.N.* sequence)"),
        ("fid", "free-induction decay trace and T2* estimate"),
        ("echodecay", "closed-form modulated echo-decay curve"),
        ("t2scan", "coherence time versus temperature"),
        ("theta2scan", "coherence time versus refocusing angle"),
        ("memory", "multimode storage/retrieval run"),
    ]:
        common(sub.add_parser(name, help=help_))

    fit = sub.add_parser("fit", help="nonlinear least-squares parameter extraction")
    common(fit)
    fit.add_argument("--model", required=True,
                     choices=["resonator", "crossing", "echodecay", "t2", "theta2"])
    fit.add_argument("--data", type=Path, required=True, help="input CSV file")

    recipe = sub.add_parser("recipe", help="bundled figure-reproduction runs")
    recipe.add_argument("name", choices=["fig1b", "fig2a", "fig2b", "fig3", "fig4"])
    common(recipe)
    return parser


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.dtype.names is None:
        raise ConfigError(f"{path}: expected a CSV file with a header row")
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


class _Run:
    """Shared context for one CLI invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg: Config = load_config(args.config)
        self.device: DeviceConfig = self.cfg.device()
        opts = self.cfg.dynamics_options()
        self.dt = (args.dt_ns * 1e-9) if args.dt_ns else opts["dt"]
        self.packets = args.packets or opts["packets"]
        self.cutoff = opts["cutoff_factor"]
        self.lineshape = opts["lineshape"]
        self.decimation = self.cfg.getint("output.decimation", 1)

    def out_path(self, default_name: str) -> Path:
        out = self.args.out
        if out is None:
            return Path(f"{default_name}.csv")
        if out.is_dir():
            return out / f"{default_name}.csv"
        return out

    def discretization(self):
        ens = self.device.resonant_ensemble()
        if self.args.seed is not None:
            return sample_ensemble(
                ens.coupling, ens.gamma_star, self.packets, self.cutoff,
                seed=self.args.seed, distribution=self.lineshape,
            )
        return discretize_ensemble(
            ens.coupling, ens.gamma_star, self.packets, self.cutoff,
            distribution=self.lineshape,
        )

    def manifest(self, out: Path, command: str, **extra) -> None:
        entries = {
            "command": command,
            "config": str(self.args.config or "bundled er_yso.cfg"),
            "config_sha256": self.cfg.sha256(),
            "dt_ns": self.dt * 1e9,
            "packets": self.packets,
            "cutoff_factor": self.cutoff,
            "threads": self.args.threads,
            "seed": self.args.seed,
        }
        entries.update(extra)
        report.write_manifest(out, entries)

    @property
    def plot(self) -> bool:
        return not self.args.no_plot


def _fig_path(out: Path) -> Path:
    return out.with_suffix(".png")


# --------------------------------------------------------------------------
# subcommand runners
# --------------------------------------------------------------------------


def _sweep_map(run: _Run) -> TransmissionMap:
    cfg = run.cfg
    grid = FieldSweepGrid(
        np.linspace(cfg.getfloat("sweep.b_min_mt"), cfg.getfloat("sweep.b_max_mt"),
                    cfg.getint("sweep.b_points")) * 1e-3,
        np.linspace(cfg.getfloat("sweep.f_min_ghz"), cfg.getfloat("sweep.f_max_ghz"),
                    cfg.getint("sweep.f_points")) * 1e9,
    )
    if run.args.threads > 1:
        chunks = np.array_split(np.arange(grid.b.size), run.args.threads)
        values = np.empty(grid.shape, dtype=complex)

        def work(rows):
            sub = FieldSweepGrid(grid.b[rows], grid.f)
            return rows, field_sweep(run.device, sub).values

        with ThreadPoolExecutor(max_workers=run.args.threads) as pool:
            for rows, vals in pool.map(work, [c for c in chunks if c.size]):
                values[rows] = vals
        return TransmissionMap(grid, values)
    return field_sweep(run.device, grid)


def cmd_sweep(run: _Run, name: str = "sweep") -> int:
    tmap = _sweep_map(run)
    out = run.out_path(name)
    report.write_sweep(out, tmap)
    if run.plot:
        figures.render_sweep(_fig_path(out), tmap)
    run.manifest(out, name, b_points=int(tmap.grid.b.size), f_points=int(tmap.grid.f.size))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_echo(run: _Run, name: str = "echo") -> int:
    cfg = run.cfg
    disc = run.discretization()
    out = run.out_path(name)
    custom = cfg.pulse_sequence()
    if custom is not None:
        trace = integrate(
            run.device, disc, custom, run.dt,
            t_final=custom.total_duration + cfg.getfloat("echo.tail_us", 1.0) * 1e-6,
            record_every=max(run.decimation, 1),
        )
        report.write_trace(out, trace)
        if run.plot:
            figures.render_trace(_fig_path(out), trace, title="custom sequence")
        run.manifest(out, name, sequence="custom")
        print(f"wrote {out} (custom pulse sequence)")
        return EXIT_OK

    tau = cfg.getfloat("echo.tau_us") * 1e-6
    theta2 = math.radians(cfg.getfloat("echo.theta2_deg", 180.0))
    result = simulate_hahn_echo(
        run.device, disc, tau, theta2,
        pi_duration=cfg.getfloat("echo.pi_ns", 40.0) * 1e-9,
        dt=run.dt, record_every=max(run.decimation, 1),
        tail=cfg.getfloat("echo.tail_us", 1.0) * 1e-6,
    )
    report.write_trace(out, result.trace)
    if run.plot:
        figures.render_trace(_fig_path(out), result.trace,
                             title=f"two-pulse echo, tau = {tau * 1e9:.0f} ns")
    run.manifest(
        out, name, tau_s=tau, theta2_rad=theta2,
        echo_time_s=result.echo_time, echo_amplitude=result.echo_amplitude,
        echo_energy=result.echo_energy,
    )
    print(f"wrote {out}; echo at {result.echo_time * 1e9:.1f} ns "
          f"(expected {result.expected_time * 1e9:.1f} ns), "
          f"amplitude {result.echo_amplitude:.4g}")
    return EXIT_OK


def cmd_fid(run: _Run, name: str = "fid") -> int:
    cfg = run.cfg
    disc = run.discretization()
    window = None
    if cfg.has("fid.window_from_us") and cfg.has("fid.window_to_us"):
        window = (cfg.getfloat("fid.window_from_us") * 1e-6,
                  cfg.getfloat("fid.window_to_us") * 1e-6)
    ens = run.device.resonant_ensemble()
    seq_width = cfg.getfloat("fid.pulse_ns", 2.0) * 1e-9
    fid = simulate_fid(
        run.device, disc, pulse_width=seq_width, dt=run.dt, fit_window=window
    )
    # emit the underlying trace for inspection
    from .dynamics import PulseSegment, PulseSequence

    trace = integrate(
        run.device, disc,
        PulseSequence((PulseSegment(seq_width, 1.0 + 0.0j),)), run.dt,
        t_final=0.6e-6, record_every=max(run.decimation, 1),
    )
    out = run.out_path(name)
    report.write_trace(out, trace)
    if run.plot:
        figures.render_trace(_fig_path(out), trace, title="free induction decay")
    run.manifest(out, name, t2_star_s=fid.t2_star,
                 fit_rms_residual=fid.fit_rms_residual,
                 gamma_star_expectation_s=1.0 / ens.gamma_star)
    print(f"wrote {out}; T2* = {fid.t2_star * 1e9:.2f} ns")
    return EXIT_OK


def cmd_echodecay(run: _Run, name: str = "echodecay") -> int:
    cfg = run.cfg
    two_tau = np.linspace(
        cfg.getfloat("echodecay.two_tau_min_us") * 1e-6,
        cfg.getfloat("echodecay.two_tau_max_us") * 1e-6,
        cfg.getint("echodecay.points"),
    )
    ens = run.device.resonant_ensemble()
    from .decoherence import echo_decay

    amp = echo_decay(two_tau, ens.t2, cfg.getfloat("echodecay.a0", 1.0), cfg.eseem())
    out = run.out_path(name)
    report.write_xy(out, ("two_tau_s", "amplitude"), two_tau, amp)
    if run.plot:
        figures.render_xy(_fig_path(out), two_tau * 1e6, amp,
                          "total delay 2tau (µs)", "echo amplitude",
                          title="modulated echo decay")
    run.manifest(out, name, t2_s=ens.t2)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_t2scan(run: _Run, name: str = "t2scan") -> int:
    cfg = run.cfg
    temps = np.geomspace(cfg.getfloat("t2scan.t_min_k"), cfg.getfloat("t2scan.t_max_k"),
                         cfg.getint("t2scan.points"))
    model = cfg.temperature_model(run.device)
    t2 = t2_of_temperature(temps, model)
    out = run.out_path(name)
    report.write_xy(out, ("temperature_k", "t2_s"), temps, t2)
    if run.plot:
        figures.render_xy(_fig_path(out), temps, t2 * 1e6, "temperature (K)",
                          "T2 (µs)", title="coherence vs temperature", logx=True)
    run.manifest(out, name, gamma_r_per_s=model.gamma_r, xi_per_s=model.xi,
                 spectator_temps_k=list(model.temps))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_theta2scan(run: _Run, name: str = "theta2scan") -> int:
    cfg = run.cfg
    theta = np.linspace(0.0, math.pi, cfg.getint("theta2scan.points"))
    model = cfg.id_model()
    t2 = 1.0 / id_rate(theta, model)
    out = run.out_path(name)
    report.write_xy(out, ("theta2_rad", "t2_s"), theta, t2)
    if run.plot:
        figures.render_xy(_fig_path(out), theta, t2 * 1e6,
                          "refocusing angle (rad)", "T2 (µs)",
                          title="instantaneous diffusion")
    run.manifest(out, name, gamma0_per_s=model.gamma_0, gamma_id_per_s=model.gamma_id)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_memory(run: _Run, name: str = "memory", force_eseem: bool | None = None) -> int:
    cfg = run.cfg
    disc = run.discretization()
    experiment = MemoryExperiment(
        n_pulses=cfg.getint("memory.n_pulses", 16),
        width=cfg.getfloat("memory.width_ns", 10.0) * 1e-9,
        spacing=cfg.getfloat("memory.spacing_ns", 150.0) * 1e-9,
        t_refocus=cfg.getfloat("memory.t_refocus_us", 2.4) * 1e-6,
        amplitude_rel=cfg.getfloat("memory.amplitude_rel", 0.02),
        pi_duration=cfg.getfloat("echo.pi_ns", 40.0) * 1e-9,
        tail=cfg.getfloat("memory.tail_us", 0.4) * 1e-6,
    )
    use_eseem = bool(cfg.getint("memory.eseem", 0)) if force_eseem is None else force_eseem
    eseem = cfg.eseem() if use_eseem else None
    result = run_memory(run.device, disc, experiment, eseem=eseem, dt=run.dt)
    out = run.out_path(name)
    report.write_memory(out, result)
    if run.plot:
        curve = None
        if use_eseem:
            te = np.linspace(result.t_echo.min(), result.t_echo.max(), 400)
            env = eseem_envelope(te - experiment.t_refocus, cfg.eseem())
            curve = (te, env)
        figures.render_memory(_fig_path(out), result, eseem_curve=curve)
    run.manifest(
        out, name,
        n_pulses=experiment.n_pulses,
        reversed_order=result.reversed_order,
        efficiency_at_t2=result.efficiency_at_t2,
        t2_pulse_index=result.t2_pulse_index,
        linear_regime_ok=result.linear_regime_ok,
        max_excitation=result.max_excitation,
        eseem_applied=use_eseem,
    )
    print(f"wrote {out}; {experiment.n_pulses} echoes, reversed order: "
          f"{result.reversed_order}, efficiency at T2: {result.efficiency_at_t2:.3e}")
    return EXIT_OK


def cmd_fit(run: _Run) -> int:
    args = run.args
    data = _read_csv(args.data)
    out = run.out_path(f"fit_{args.model}")
    cfg = run.cfg
    extras: dict = {"model": args.model, "data": str(args.data)}

    if args.model == "resonator":
        f, mag = data["f_hz"], data["s21_abs"]
        fit = fit_resonator(f, mag)
        extras.update(f0_hz=fit.f0, kappa_hz=fit.kappa)
        result = fit.result
        if run.plot:
            from .fitting import _lorentzian_mag

            figures.render_xy(_fig_path(out), f / 1e9, mag, "frequency (GHz)", "|S21|",
                              title="resonator fit",
                              overlay=(f / 1e9, _lorentzian_mag(f, fit.f0, fit.kappa,
                                                                fit.amplitude), "fit"))
    elif args.model == "crossing":
        b = np.unique(data["b_tesla"])
        f = np.unique(data["f_hz"])
        if b.size * f.size != data["f_hz"].size:
            raise ConfigError(f"{args.data}: crossing data must cover a full grid")
        mag = data["s21_abs"].reshape(b.size, f.size)
        tmap = TransmissionMap(FieldSweepGrid(b, f), mag.astype(complex))
        ens = run.device.resonant_ensemble()
        from .constants import MU_B_OVER_H

        fit = fit_avoided_crossing(
            tmap, run.device.resonator,
            slope_guess=ens.g * MU_B_OVER_H,
            offset=ens.freq_offset / TWO_PI,
        )
        extras.update(coupling_hz=fit.coupling, gamma_star_hz=fit.gamma_star,
                      slope_hz_per_t=fit.slope)
        result = fit.result
    elif args.model == "echodecay":
        larmor = cfg.getfloat("eseem.f_alpha_mhz", 0.513) * 1e6
        fit = fit_echo_decay(data["two_tau_s"], data["amplitude"], larmor)
        extras.update(t2_s=fit.t2, modulation_frequency_hz=fit.modulation_frequency)
        result = fit.result
        if run.plot:
            from .decoherence import echo_decay

            tt = data["two_tau_s"]
            model_amp = echo_decay(tt, fit.t2, fit.a0, fit.eseem)
            figures.render_xy(_fig_path(out), tt * 1e6, data["amplitude"],
                              "2tau (µs)", "amplitude", title="echo-decay fit",
                              overlay=(tt * 1e6, model_amp, "fit"))
    elif args.model == "t2":
        temps = tuple(run.device.spectator_temperatures())
        fit = fit_t2_temperature(data["temperature_k"], data["t2_s"], temps)
        extras.update(gamma_r_per_s=fit.gamma_r, xi_per_s=fit.xi,
                      spectator_temps_k=list(temps))
        result = fit.result
        if run.plot:
            from .decoherence import TemperatureModel

            tt = data["temperature_k"]
            model_t2 = t2_of_temperature(tt, TemperatureModel(fit.gamma_r, fit.xi, temps))
            figures.render_xy(_fig_path(out), tt, data["t2_s"] * 1e6, "temperature (K)",
                              "T2 (µs)", title="T2(T) fit", logx=True,
                              overlay=(tt, model_t2 * 1e6, "fit"))
    else:  # theta2
        fit = fit_theta2(data["theta2_rad"], data["t2_s"])
        extras.update(gamma0_per_s=fit.model.gamma_0, gamma_id_per_s=fit.model.gamma_id,
                      dipolar_coupling_hz=fit.dipolar_coupling)
        result = fit.result
        if run.plot:
            th = data["theta2_rad"]
            figures.render_xy(_fig_path(out), th, data["t2_s"] * 1e6,
                              "refocusing angle (rad)", "T2 (µs)", title="theta2 fit",
                              overlay=(th, 1e6 / id_rate(th, fit.model), "fit"))

    report.write_fit(out, result, extras)
    run.manifest(out, f"fit {args.model}", **{k: v for k, v in extras.items()
                                              if isinstance(v, (int, float, str, bool))})
    print(f"wrote {out}; converged: {result.converged}")
    if not result.converged:
        return EXIT_NUMERICAL
    return EXIT_OK


_RECIPES = {
    "fig1b": ("cw transmission map with all four transitions", "sweep"),
    "fig2a": ("two-pulse echo trace at tau = 400 ns", "echo"),
    "fig2b": ("superhyperfine-modulated echo decay", "echodecay"),
    "fig3": ("coherence time versus temperature", "t2scan"),
    "fig4": ("16-pulse storage and retrieval with envelope overlay", "memory"),
}


def cmd_recipe(run: _Run) -> int:
    name = run.args.name
    runner = _RECIPES[name][1]
    if runner == "sweep":
        return cmd_sweep(run, name=name)
    if runner == "echo":
        return cmd_echo(run, name=name)
    if runner == "echodecay":
        return cmd_echodecay(run, name=name)
    if runner == "t2scan":
        return cmd_t2scan(run, name=name)
    return cmd_memory(run, name=name, force_eseem=True)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        run = _Run(args)
        handler = {
            "sweep": cmd_sweep,
            "echo": cmd_echo,
            "fid": cmd_fid,
            "echodecay": cmd_echodecay,
            "t2scan": cmd_t2scan,
            "theta2scan": cmd_theta2scan,
            "memory": cmd_memory,
            "fit": cmd_fit,
            "recipe": cmd_recipe,
        }[args.command]
        return handler(run)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepInstabilityError, CalibrationError, ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
