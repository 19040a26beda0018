"""Fundamental constants (CODATA 2018), hard-coded for reproducibility."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "PhysicalConstants",
    "CODATA2018",
    "MU_B",
    "H_PLANCK",
    "HBAR",
    "K_B",
    "MU_B_OVER_H",
    "MU_B_OVER_KB",
    "H_OVER_KB",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """Bohr magneton, Planck and Boltzmann constants plus derived ratios."""

    mu_b: float = 9.2740100783e-24  # J/T
    h: float = 6.62607015e-34       # J*s (exact)
    hbar: float = 1.054571817e-34   # J*s
    k_b: float = 1.380649e-23       # J/K (exact)

    @property
    def mu_b_over_h(self) -> float:
        """Zeeman slope per unit g, Hz/T."""
        return self.mu_b / self.h

    @property
    def mu_b_over_kb(self) -> float:
        """Zeeman temperature per unit g, K/T."""
        return self.mu_b / self.k_b

    @property
    def h_over_kb(self) -> float:
        """Photon temperature scale, K/Hz."""
        return self.h / self.k_b


CODATA2018 = PhysicalConstants()

MU_B = CODATA2018.mu_b
H_PLANCK = CODATA2018.h
HBAR = CODATA2018.hbar
K_B = CODATA2018.k_b
MU_B_OVER_H = CODATA2018.mu_b_over_h
MU_B_OVER_KB = CODATA2018.mu_b_over_kb
H_OVER_KB = CODATA2018.h_over_kb
