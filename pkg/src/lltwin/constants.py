"""Physical constants and Rb-87 line data.

SI units throughout; the vacuum subsystem converts at its boundary
(Torr / liters). Values are CODATA plus standard Rb-87 line data and
are immutable after import.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import scipy.constants as _sc

# unit conversions used by config loading and geometry
INCH = 0.0254            # m, exact
TORR = 101325.0 / 760.0  # Pa


@dataclass(frozen=True)
class Constants:
    kB: float = _sc.k                             # J/K
    mu0: float = _sc.mu_0                         # T*m/A
    c: float = _sc.c                              # m/s
    h: float = _sc.h                              # J*s
    m_Rb87: float = 86.909180520 * _sc.atomic_mass   # kg
    Gamma_D2: float = 2.0 * math.pi * 6.0666e6    # rad/s, D2 natural linewidth
    lambda_D1: float = 794.978851156e-9           # m, vacuum
    lambda_D2: float = 780.241209686e-9           # m, vacuum
    torr_per_pascal: float = 760.0 / 101325.0

    @property
    def hbar(self) -> float:
        return self.h / (2.0 * math.pi)

    def omega(self, wavelength: float) -> float:
        """Angular frequency (rad/s) of light at the given vacuum wavelength."""
        return 2.0 * math.pi * self.c / wavelength


CONSTANTS = Constants()
