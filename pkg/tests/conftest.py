"""Shared fixtures; the expensive simulations run once per session."""

from __future__ import annotations

import time

import numpy as np
import pytest

from spinmem.configfile import load_config
from spinmem.dynamics import calibrate_pi_pulse, discretize_ensemble, simulate_hahn_echo
from spinmem.protocols import MemoryExperiment, run_memory


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def device(config):
    return config.device()


@pytest.fixture(scope="session")
def s2a(device):
    return device.ensemble("s2a")


@pytest.fixture(scope="session")
def disc(s2a):
    return discretize_ensemble(s2a.coupling, s2a.gamma_star, 2001, 20.0)


@pytest.fixture(scope="session")
def pi_cal(device, disc):
    return calibrate_pi_pulse(device, disc, 40e-9)


@pytest.fixture(scope="session")
def tau_scan(device, disc, pi_cal):
    """Phase-cycled two-pulse echoes at the three reference delays, with
    wall-clock timing per run."""
    results = {}
    for tau in (0.4e-6, 1.0e-6, 2.0e-6):
        t0 = time.perf_counter()
        res = simulate_hahn_echo(device, disc, tau, pi_amplitude=pi_cal.amplitude)
        results[tau] = (res, time.perf_counter() - t0)
    return results


@pytest.fixture(scope="session")
def memory_pair(device, disc, pi_cal):
    """Default 16-pulse storage run plus the same run at half write amplitude."""
    exp = MemoryExperiment()
    full = run_memory(device, disc, exp, pi_amplitude=pi_cal.amplitude)
    import dataclasses

    half = run_memory(
        device, disc, dataclasses.replace(exp, amplitude_rel=exp.amplitude_rel / 2),
        pi_amplitude=pi_cal.amplitude,
    )
    return exp, full, half


@pytest.fixture(scope="session")
def sweep_map(device, config):
    """The full-resolution cw transmission map, with build time."""
    from spinmem.spectroscopy import FieldSweepGrid, field_sweep

    grid = FieldSweepGrid(
        np.linspace(0.0, 0.3, 600), np.linspace(3.60e9, 3.85e9, 600)
    )
    t0 = time.perf_counter()
    tmap = field_sweep(device, grid)
    return tmap, time.perf_counter() - t0
