"""Flat key=value device/experiment configuration files.

The format is UTF-8 text, one ``section.key = value`` per line, ``#``
comments.  All values at the file boundary are cyclic frequencies (Hz with
unit suffixes in the key names) or SI scalars; conversion to the internal
angular-frequency convention happens here.  Unknown keys are rejected by
name.  A bundled ``er_yso.cfg`` encodes the characterized device.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .decoherence import EseemParams, IdModel, Nucleus, TemperatureModel
from .device import DeviceConfig, Resonator, SubEnsemble
from .dynamics import PulseSequence

__all__ = ["ConfigError", "Config", "load_config", "default_config_path"]

TWO_PI = 2.0 * math.pi

_ENSEMBLE_KEYS = {
    "g", "vn_mhz", "gamma2star_mhz", "t2_us", "t1_s", "ns_cm3", "f_offset_mhz",
}

_SCALAR_KEYS = {
    "ensembles",
    "resonator.f0_ghz", "resonator.kappa_mhz", "resonator.qi",
    "resonator.kappa_int_mhz", "resonator.kappa_in_mhz", "resonator.kappa_out_mhz",
    "field.b_tesla", "temperature_k",
    "eseem.depth", "eseem.f_alpha_mhz", "eseem.f_beta_mhz",
    "t2model.gamma_r_per_s", "t2model.xi_per_s",
    "idmodel.gamma0_per_s", "idmodel.gamma_id_per_s",
    "dynamics.dt_ns", "dynamics.packets", "dynamics.cutoff_factor",
    "dynamics.lineshape",
    "echo.tau_us", "echo.theta2_deg", "echo.pi_ns", "echo.pi_half_ns",
    "echo.tail_us",
    "fid.pulse_ns", "fid.window_from_us", "fid.window_to_us",
    "sweep.b_min_mt", "sweep.b_max_mt", "sweep.b_points",
    "sweep.f_min_ghz", "sweep.f_max_ghz", "sweep.f_points",
    "t2scan.t_min_k", "t2scan.t_max_k", "t2scan.points",
    "theta2scan.points",
    "echodecay.two_tau_min_us", "echodecay.two_tau_max_us",
    "echodecay.points", "echodecay.a0",
    "memory.n_pulses", "memory.width_ns", "memory.spacing_ns",
    "memory.t_refocus_us", "memory.amplitude_rel", "memory.tail_us",
    "memory.eseem",
    "output.decimation",
}

_PULSE_KEY = re.compile(r"^pulse\.(\d+)\.(t_start_ns|width_ns|amplitude|phase_deg)$")


class ConfigError(ValueError):
    """Malformed configuration file or unknown/missing key."""


def default_config_path() -> Path:
    """Location of the bundled device file."""
    return Path(resources.files("spinmem").joinpath("data/er_yso.cfg"))  # type: ignore[arg-type]


@dataclass
class Config:
    """Parsed key=value map with typed access and model constructors."""

    entries: dict[str, str]
    source: str = "<memory>"

    # -- raw access ---------------------------------------------------------

    def has(self, key: str) -> bool:
        return key in self.entries

    def _raw(self, key: str, default=None):
        if key in self.entries:
            return self.entries[key]
        if default is None:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return default

    def getstr(self, key: str, default: str | None = None) -> str:
        return str(self._raw(key, default))

    def getfloat(self, key: str, default: float | None = None) -> float:
        raw = self._raw(key, default)
        try:
            return float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.source}: key {key!r} is not a number: {raw!r}") from exc

    def getint(self, key: str, default: int | None = None) -> int:
        value = self.getfloat(key, default)
        if value != int(value):
            raise ConfigError(f"{self.source}: key {key!r} must be an integer")
        return int(value)

    def sha256(self) -> str:
        payload = "\n".join(f"{k}={v}" for k, v in sorted(self.entries.items()))
        return hashlib.sha256(payload.encode()).hexdigest()

    # -- model constructors --------------------------------------------------

    def ensemble_labels(self) -> tuple[str, ...]:
        raw = self.getstr("ensembles", "")
        labels = tuple(s.strip() for s in raw.split(",") if s.strip())
        return labels

    def resonator(self) -> Resonator:
        omega0 = TWO_PI * self.getfloat("resonator.f0_ghz") * 1e9
        kappa = TWO_PI * self.getfloat("resonator.kappa_mhz") * 1e6
        if self.has("resonator.kappa_in_mhz") or self.has("resonator.kappa_out_mhz"):
            kin = TWO_PI * self.getfloat("resonator.kappa_in_mhz") * 1e6
            kout = TWO_PI * self.getfloat("resonator.kappa_out_mhz") * 1e6
            kint = kappa - kin - kout
            if kint < -1e-9 * kappa:
                raise ConfigError(f"{self.source}: port rates exceed the total linewidth")
            return Resonator(omega0, max(kint, 0.0), kin, kout)
        if self.has("resonator.kappa_int_mhz"):
            kint = TWO_PI * self.getfloat("resonator.kappa_int_mhz") * 1e6
            return Resonator.from_total(omega0, kappa, kappa_int=kint)
        return Resonator.from_total(omega0, kappa, q_internal=self.getfloat("resonator.qi"))

    def sub_ensemble(self, label: str) -> SubEnsemble:
        def key(suffix: str) -> str:
            return f"{label}.{suffix}"

        t2 = self.getfloat(key("t2_us")) * 1e-6
        t1 = self.getfloat(key("t1_s"))
        return SubEnsemble(
            label=label,
            g=self.getfloat(key("g")),
            coupling=TWO_PI * self.getfloat(key("vn_mhz")) * 1e6,
            gamma_star=TWO_PI * self.getfloat(key("gamma2star_mhz")) * 1e6,
            gamma_h=1.0 / t2,
            gamma_1=1.0 / t1,
            density=self.getfloat(key("ns_cm3"), 0.0),
            freq_offset=TWO_PI * self.getfloat(key("f_offset_mhz"), 0.0) * 1e6,
        )

    def device(self) -> DeviceConfig:
        labels = self.ensemble_labels()
        if not labels:
            raise ConfigError(f"{self.source}: no ensembles declared")
        return DeviceConfig(
            resonator=self.resonator(),
            ensembles=tuple(self.sub_ensemble(lbl) for lbl in labels),
            field=self.getfloat("field.b_tesla"),
            temperature=self.getfloat("temperature_k"),
        )

    def eseem(self) -> EseemParams:
        if not self.has("eseem.depth"):
            return EseemParams(())
        return EseemParams(
            (
                Nucleus(
                    self.getfloat("eseem.depth"),
                    TWO_PI * self.getfloat("eseem.f_alpha_mhz") * 1e6,
                    TWO_PI * self.getfloat("eseem.f_beta_mhz") * 1e6,
                ),
            )
        )

    def temperature_model(self, device: DeviceConfig) -> TemperatureModel:
        temps = device.spectator_temperatures()
        if temps.size != 3:
            raise ConfigError(
                f"{self.source}: temperature model needs exactly 3 spectator "
                f"ensembles, found {temps.size}"
            )
        return TemperatureModel(
            self.getfloat("t2model.gamma_r_per_s"),
            self.getfloat("t2model.xi_per_s"),
            tuple(temps),
        )

    def id_model(self) -> IdModel:
        return IdModel(
            self.getfloat("idmodel.gamma0_per_s"),
            self.getfloat("idmodel.gamma_id_per_s"),
        )

    def dynamics_options(self) -> dict:
        return {
            "dt": self.getfloat("dynamics.dt_ns", 0.05) * 1e-9,
            "packets": self.getint("dynamics.packets", 2001),
            "cutoff_factor": self.getfloat("dynamics.cutoff_factor", 20.0),
            "lineshape": self.getstr("dynamics.lineshape", "lorentzian"),
        }

    def pulse_sequence(self) -> PulseSequence | None:
        """Custom drive defined by numbered pulse.N.* entries, if any."""
        indices = sorted(
            {int(m.group(1)) for k in self.entries if (m := _PULSE_KEY.match(k))}
        )
        if not indices:
            return None
        events = []
        for i in indices:
            start = self.getfloat(f"pulse.{i}.t_start_ns") * 1e-9
            width = self.getfloat(f"pulse.{i}.width_ns") * 1e-9
            amp = self.getfloat(f"pulse.{i}.amplitude")
            phase = math.radians(self.getfloat(f"pulse.{i}.phase_deg", 0.0))
            events.append((start, width, amp * complex(math.cos(phase), math.sin(phase))))
        return PulseSequence.from_events(events)


def _validate_keys(entries: dict[str, str], source: str) -> None:
    labels = {s.strip() for s in entries.get("ensembles", "").split(",") if s.strip()}
    for key in entries:
        if key in _SCALAR_KEYS or _PULSE_KEY.match(key):
            continue
        prefix, _, suffix = key.partition(".")
        if prefix in labels and suffix in _ENSEMBLE_KEYS:
            continue
        raise ConfigError(f"{source}: unknown config key {key!r}")


def parse_config(text: str, source: str = "<memory>") -> Config:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    _validate_keys(entries, source)
    return Config(entries, source)


def load_config(path: str | Path | None = None) -> Config:
    """Parse a config file; None loads the bundled device file."""
    if path is None:
        path = default_config_path()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, source=str(path))
