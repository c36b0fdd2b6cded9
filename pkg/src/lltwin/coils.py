"""Anti-Helmholtz MOT coil pair: Biot-Savart fields and gradients.

Each coil is modeled as a stack of filamentary circular loops, coaxial
with z. Per-loop fields come either from the closed-form elliptic-integral
expressions or from midpoint-rule quadrature over the loop; the two must
agree to 0.1% away from the windings.

Sign convention: the lower coil (z < 0) carries +I, the upper coil -I, so
the on-axis field just above center points down (Bz = -|dBz/dz| * z).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ellipe, ellipk

from .constants import CONSTANTS

WIRE_RADIUS = 5e-4  # m, singularity guard around each filament

GAUSS_PER_TESLA = 1e4
G_PER_CM_PER_T_PER_M = 1e2  # 1 T/m = 100 G/cm


class SingularPointError(ValueError):
    """Field evaluation requested on (or inside) a winding filament."""


@dataclass(frozen=True)
class CoilPair:
    """Geometry and drive of the in-vacuum quadrupole coil pair.

    36 turns per coil by default (4 radial layers x 9 axial turns), holders
    spaced by 1 in (half separation 12.7 mm). The mean radius is calibrated,
    not published: 24 mm reproduces the 20 G/cm center gradient at 3 A.
    """

    mean_radius: float = 0.024        # m
    half_separation: float = 0.0127   # m
    layers: int = 4
    turns_per_layer: int = 9
    layer_radial_pitch: float = 1.2e-3  # m
    turn_axial_pitch: float = 1.2e-3    # m
    current: float = 3.0              # A
    anti_helmholtz: bool = True

    def __post_init__(self):
        if self.current < 0:
            raise ValueError("coil current must be >= 0")
        if self.mean_radius <= 0 or self.half_separation <= 0:
            raise ValueError("coil dimensions must be positive")

    @property
    def turns_per_coil(self) -> int:
        return self.layers * self.turns_per_layer

    def loops(self, winding: str = "distributed") -> list[tuple[float, float, float]]:
        """Filament list as (radius, z_center, signed current).

        "distributed" lays the turns out over the radial layers and axial
        pitch, centered on (mean_radius, +/-half_separation); "collapsed"
        stacks all turns at the mean radius and plane.
        """
        out: list[tuple[float, float, float]] = []
        lower_sign = 1.0
        upper_sign = -1.0 if self.anti_helmholtz else 1.0
        if winding == "collapsed":
            n = float(self.turns_per_coil)
            return [
                (self.mean_radius, -self.half_separation, lower_sign * n * self.current),
                (self.mean_radius, +self.half_separation, upper_sign * n * self.current),
            ]
        if winding != "distributed":
            raise ValueError(f"unknown winding mode: {winding!r}")
        for side, sign in ((-1.0, lower_sign), (+1.0, upper_sign)):
            for i in range(self.layers):
                r = self.mean_radius + (i - (self.layers - 1) / 2.0) * self.layer_radial_pitch
                for j in range(self.turns_per_layer):
                    dz = (j - (self.turns_per_layer - 1) / 2.0) * self.turn_axial_pitch
                    out.append((r, side * (self.half_separation + dz), sign * self.current))
        return out


def loop_field_elliptic(radius: float, z_center: float, current: float, point) -> np.ndarray:
    """Field (T) of one filamentary loop via complete elliptic integrals."""
    x, y, z = (float(v) for v in point)
    dz = z - z_center
    rho = math.hypot(x, y)
    mu0_i = CONSTANTS.mu0 * current
    if rho < 1e-12:
        bz = mu0_i * radius**2 / (2.0 * (radius**2 + dz**2) ** 1.5)
        return np.array([0.0, 0.0, bz])
    alpha2 = (radius + rho) ** 2 + dz**2
    beta2 = (radius - rho) ** 2 + dz**2
    m = 4.0 * radius * rho / alpha2
    kk = float(ellipk(m))
    ee = float(ellipe(m))
    pref = mu0_i / (2.0 * math.pi * math.sqrt(alpha2))
    bz = pref * ((radius**2 - rho**2 - dz**2) / beta2 * ee + kk)
    brho = pref * (dz / rho) * ((radius**2 + rho**2 + dz**2) / beta2 * ee - kk)
    return np.array([brho * x / rho, brho * y / rho, bz])


def loop_field_segments(
    radius: float, z_center: float, current: float, point, n_segments: int = 1024
) -> np.ndarray:
    """Field (T) of one loop by midpoint Biot-Savart quadrature."""
    theta = 2.0 * math.pi * (np.arange(n_segments) + 0.5) / n_segments
    nodes = np.stack(
        [radius * np.cos(theta), radius * np.sin(theta), np.full_like(theta, z_center)],
        axis=1,
    )
    seg = 2.0 * math.pi * radius / n_segments
    dl = np.stack([-np.sin(theta), np.cos(theta), np.zeros_like(theta)], axis=1) * seg
    r = np.asarray(point, dtype=float)[None, :] - nodes
    r3 = np.linalg.norm(r, axis=1) ** 3
    db = np.cross(dl, r) / r3[:, None]
    return CONSTANTS.mu0 * current / (4.0 * math.pi) * db.sum(axis=0)


def _check_clearance(coils: CoilPair, point, winding: str) -> None:
    x, y, z = (float(v) for v in point)
    rho = math.hypot(x, y)
    for radius, zc, _ in coils.loops(winding):
        if math.hypot(rho - radius, z - zc) <= WIRE_RADIUS:
            raise SingularPointError(
                f"point {tuple(point)} is within {WIRE_RADIUS} m of a winding filament"
            )


def field_at(
    coils: CoilPair,
    point,
    method: str = "elliptic",
    winding: str = "distributed",
    n_segments: int = 1024,
) -> np.ndarray:
    """Total field (T) of the pair at a point, summed over filament loops."""
    _check_clearance(coils, point, winding)
    total = np.zeros(3)
    for radius, zc, cur in coils.loops(winding):
        if cur == 0.0:
            continue
        if method == "elliptic":
            total += loop_field_elliptic(radius, zc, cur, point)
        elif method == "segments":
            total += loop_field_segments(radius, zc, cur, point, n_segments)
        else:
            raise ValueError(f"unknown field method: {method!r}")
    return total


def gradient_at(
    coils: CoilPair,
    point,
    method: str = "elliptic",
    winding: str = "distributed",
    step: float = 1e-5,
) -> np.ndarray:
    """Jacobian dB_i/dx_j (T/m) by central finite differences of field_at."""
    point = np.asarray(point, dtype=float)
    grad = np.zeros((3, 3))
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = step
        bp = field_at(coils, point + dp, method, winding)
        bm = field_at(coils, point - dp, method, winding)
        grad[:, j] = (bp - bm) / (2.0 * step)
    return grad


def axial_gradient_analytic(coils: CoilPair) -> float:
    """|dBz/dz| (T/m) at center for the collapsed anti-Helmholtz pair.

    3*mu0*N*I*R^2*A / (R^2+A^2)^(5/2); exact for single-filament coils at
    +/-A with opposing currents.
    """
    r2 = coils.mean_radius**2
    a = coils.half_separation
    n = coils.turns_per_coil
    return 3.0 * CONSTANTS.mu0 * n * coils.current * r2 * a / (r2 + a**2) ** 2.5


def on_axis_loop_field(radius: float, current: float, z: float) -> float:
    """Analytic on-axis Bz (T) of a single loop centered at the origin."""
    return CONSTANTS.mu0 * current * radius**2 / (2.0 * (radius**2 + z**2) ** 1.5)


def field_table(
    coils: CoilPair, points: np.ndarray, method: str = "elliptic"
) -> np.ndarray:
    """Rows of (x, y, z, Bx, By, Bz) with positions in m and fields in Gauss."""
    rows = np.empty((len(points), 6))
    for i, p in enumerate(points):
        rows[i, :3] = p
        rows[i, 3:] = field_at(coils, p, method) * GAUSS_PER_TESLA
    return rows
