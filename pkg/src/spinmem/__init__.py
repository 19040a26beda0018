"""spinmem: semiclassical simulator and fitting toolkit for a microwave
resonator coupled to an inhomogeneously broadened erbium spin ensemble."""

__version__ = "0.1.0"

from .constants import CODATA2018, PhysicalConstants
from .device import (
    DeviceConfig,
    Resonator,
    SubEnsemble,
    boltzmann_populations,
    effective_temperature,
    photon_count,
    thermal_occupancy,
    zeeman_frequency,
)
from .configfile import Config, ConfigError, load_config
from .spectroscopy import (
    FieldSweepGrid,
    TransmissionMap,
    field_sweep,
    normal_mode_splitting,
    s21,
)
from .dynamics import (
    EnsembleDiscretization,
    EnsembleState,
    PulseSegment,
    PulseSequence,
    SimulationTrace,
    calibrate_pi_pulse,
    discretize_ensemble,
    integrate,
    sample_ensemble,
    simulate_fid,
    simulate_hahn_echo,
)
from .decoherence import (
    EseemParams,
    IdModel,
    Nucleus,
    TemperatureModel,
    dipolar_coupling_from_id,
    echo_decay,
    eseem_envelope,
    id_rate,
    t2_of_temperature,
)
from .fitting import (
    FitProblem,
    FitResult,
    fit_avoided_crossing,
    fit_echo_decay,
    fit_resonator,
    fit_t2_temperature,
    fit_theta2,
    least_squares,
)
from .protocols import MemoryExperiment, MemoryResult, ModeCapacity, mode_capacity, run_memory

__all__ = [
    "__version__",
    "CODATA2018",
    "PhysicalConstants",
    "DeviceConfig",
    "Resonator",
    "SubEnsemble",
    "zeeman_frequency",
    "effective_temperature",
    "boltzmann_populations",
    "thermal_occupancy",
    "photon_count",
    "Config",
    "ConfigError",
    "load_config",
    "FieldSweepGrid",
    "TransmissionMap",
    "s21",
    "field_sweep",
    "normal_mode_splitting",
    "EnsembleDiscretization",
    "EnsembleState",
    "PulseSegment",
    "PulseSequence",
    "SimulationTrace",
    "discretize_ensemble",
    "sample_ensemble",
    "integrate",
    "calibrate_pi_pulse",
    "simulate_hahn_echo",
    "simulate_fid",
    "EseemParams",
    "IdModel",
    "Nucleus",
    "TemperatureModel",
    "t2_of_temperature",
    "eseem_envelope",
    "echo_decay",
    "id_rate",
    "dipolar_coupling_from_id",
    "FitProblem",
    "FitResult",
    "least_squares",
    "fit_resonator",
    "fit_avoided_crossing",
    "fit_echo_decay",
    "fit_t2_temperature",
    "fit_theta2",
    "MemoryExperiment",
    "MemoryResult",
    "ModeCapacity",
    "mode_capacity",
    "run_memory",
]
