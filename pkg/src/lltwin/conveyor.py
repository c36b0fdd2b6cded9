"""Optical conveyor belt: lattice depth, kinematics, and atom transport.

Two counter-propagating beams at 785 nm form a standing wave; a relative
frequency offset df moves it at v = df*lambda/2. Transport plans are
time-optimal trapezoidal velocity profiles capped by the slip acceleration
a_c = U0*k/m. The Monte Carlo integrates 1-D axial motion

    z'' = -(U(z)*k/m) * sin(2k(z - z_lat(t)))

with velocity Verlet; U(z) carries the w0^2/w(z)^2 beam-divergence factor
(the focus sits at the center of the transport path).

The published operating point is depth kB*38 uK with a 110 kHz axial
frequency; the ab-initio two-line depth is kept as a cross-check with
factor-2 tolerance since it depends on line-strength conventions. A 6 MHz
depth figure sometimes quoted for this setup is recorded here but unused:
it is inconsistent with the 38 uK / 110 kHz pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit, prange

from .constants import CONSTANTS

MAX_DETUNING_HZ = 2e6          # hardware envelope of the AOM offset
LEGACY_DEPTH_HZ = 6e6          # recorded, unused (see module docstring)
MIN_STEPS_PER_PERIOD = 20


class ResonantWavelengthError(ValueError):
    """Lattice wavelength within 0.1 nm of a D line."""


@dataclass(frozen=True)
class GaussianBeam:
    power: float                 # W
    waist: float                 # m at focus
    wavelength: float            # m
    focus_position: float = 0.0  # m along the transport axis

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("beam power must be >= 0")
        if self.waist <= 0 or self.wavelength <= 0:
            raise ValueError("waist and wavelength must be positive")

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    def peak_intensity(self) -> float:
        """Single-beam peak intensity 2P/(pi w0^2), W/m^2."""
        return 2.0 * self.power / (math.pi * self.waist**2)


@dataclass(frozen=True)
class LatticeConfig:
    beam_up: GaussianBeam
    beam_down: GaussianBeam
    detuning_offset: float = 0.0          # Hz, signed
    depth_override: Optional[float] = None  # J; canonical operating depth

    def __post_init__(self):
        if abs(self.detuning_offset) > MAX_DETUNING_HZ:
            raise ValueError(f"detuning offset beyond +/-{MAX_DETUNING_HZ:.0e} Hz envelope")
        if self.beam_up.wavelength != self.beam_down.wavelength:
            raise ValueError("lattice beams must share one wavelength")

    @property
    def wavelength(self) -> float:
        return self.beam_up.wavelength

    def depth_j(self) -> float:
        """Operating depth in J: the override if set, else the two-line value."""
        if self.depth_override is not None:
            return self.depth_override
        return dipole_depth(self).depth_j


@dataclass(frozen=True)
class DipoleDepth:
    depth_j: float     # |U0|, J
    sign: int          # -1 attractive (red), +1 repulsive
    depth_uK: float
    depth_hz: float


def dipole_depth(cfg: LatticeConfig, constants=CONSTANTS) -> DipoleDepth:
    """Two-line alkali dipole depth of the standing wave.

    Single-beam peak light shift from the D1/D2 doublet with 2:1 line
    strengths, times the 4x counter-propagating interference enhancement.
    At 785 nm the D2 term (red detuned) wins over the repulsive D1 term.
    """
    lam = cfg.wavelength
    for d_line in (constants.lambda_D1, constants.lambda_D2):
        if abs(lam - d_line) < 0.1e-9:
            raise ResonantWavelengthError(f"{lam*1e9:.3f} nm is within 0.1 nm of a D line")
    w = constants.omega(lam)
    w1 = constants.omega(constants.lambda_D1)
    w2 = constants.omega(constants.lambda_D2)
    i0 = cfg.beam_up.peak_intensity()
    u_single = (
        math.pi * constants.c**2 * constants.Gamma_D2 / 2.0
        * (2.0 / (w2**3 * (w - w2)) + 1.0 / (w1**3 * (w - w1)))
        * i0
    )
    u_lattice = 4.0 * u_single
    sign = -1 if u_lattice < 0 else 1
    mag = abs(u_lattice)
    return DipoleDepth(
        depth_j=mag,
        sign=sign,
        depth_uK=mag / constants.kB * 1e6,
        depth_hz=mag / constants.h,
    )


def axial_frequency(depth_j: float, wavelength: float, constants=CONSTANTS) -> float:
    """Harmonic axial trap frequency (Hz) of a U0*cos^2(kz) well."""
    if depth_j < 0:
        raise ValueError("depth must be >= 0")
    k = 2.0 * math.pi / wavelength
    return k * math.sqrt(2.0 * depth_j / constants.m_Rb87) / (2.0 * math.pi)


def lattice_velocity(detuning_offset: float, wavelength: float) -> float:
    """Standing-wave speed v = df*lambda/2 (m/s, signed)."""
    return detuning_offset * wavelength / 2.0


def critical_acceleration(depth_j: float, wavelength: float, constants=CONSTANTS) -> float:
    """Maximum acceleration the lattice can impose before atoms slip: U0*k/m."""
    if depth_j <= 0:
        raise ValueError("depth must be > 0")
    k = 2.0 * math.pi / wavelength
    return depth_j * k / constants.m_Rb87


@dataclass(frozen=True)
class TransportPlan:
    """Piecewise-linear velocity profile: breakpoints (t_i, v_i)."""

    distance: float
    v_max: float
    a_max: float
    profile: tuple            # ((t0, v0), (t1, v1), ...)
    duration: float

    def breakpoints(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(times, velocities, positions) at the profile breakpoints."""
        t = np.array([p[0] for p in self.profile])
        v = np.array([p[1] for p in self.profile])
        z = np.zeros_like(t)
        for i in range(1, len(t)):
            z[i] = z[i - 1] + 0.5 * (v[i] + v[i - 1]) * (t[i] - t[i - 1])
        return t, v, z

    def velocity(self, time: float) -> float:
        t, v, _ = self.breakpoints()
        return float(np.interp(time, t, v))

    def position(self, time: float) -> float:
        t, v, z = self.breakpoints()
        if time <= t[0]:
            return float(z[0])
        if time >= t[-1]:
            return float(z[-1])
        i = int(np.searchsorted(t, time, side="right") - 1)
        dt = time - t[i]
        if t[i + 1] > t[i]:
            a = (v[i + 1] - v[i]) / (t[i + 1] - t[i])
        else:
            a = 0.0
        return float(z[i] + v[i] * dt + 0.5 * a * dt**2)

    def validate(self, tol: float = 1e-9) -> None:
        t, v, z = self.breakpoints()
        if np.any(np.diff(t) < 0):
            raise ValueError("profile times must be non-decreasing")
        if np.any(np.abs(v) > self.v_max * (1 + 1e-12)):
            raise ValueError("profile exceeds v_max")
        dt = np.diff(t)
        ok = dt > 0
        accel = np.abs(np.diff(v)[ok] / dt[ok])
        if np.any(accel > self.a_max * (1 + 1e-9)):
            raise ValueError("profile exceeds a_max")
        if abs(z[-1] - self.distance) > tol:
            raise ValueError("profile does not integrate to the plan distance")


def plan_transport(distance: float, v_max: float, a_max: float) -> TransportPlan:
    """Time-optimal trapezoidal (or triangular) velocity profile.

    Trapezoid when distance > v_max^2/a_max, with duration
    D/v_max + v_max/a_max; triangular otherwise.
    """
    if distance <= 0 or v_max <= 0 or a_max <= 0:
        raise ValueError("distance, v_max, a_max must all be positive")
    d_ramp = v_max**2 / a_max
    if distance > d_ramp:
        t_r = v_max / a_max
        t_total = distance / v_max + t_r
        profile = ((0.0, 0.0), (t_r, v_max), (t_total - t_r, v_max), (t_total, 0.0))
        plan = TransportPlan(distance, v_max, a_max, profile, t_total)
    else:
        v_peak = math.sqrt(distance * a_max)
        t_r = v_peak / a_max
        profile = ((0.0, 0.0), (t_r, v_peak), (2.0 * t_r, 0.0))
        plan = TransportPlan(distance, v_max, a_max, profile, 2.0 * t_r)
    plan.validate()
    return plan


def constant_velocity_plan(velocity: float, duration: float) -> TransportPlan:
    """Uniform-velocity profile (used for hold and consistency checks)."""
    profile = ((0.0, velocity), (duration, velocity))
    return TransportPlan(
        distance=velocity * duration,
        v_max=max(abs(velocity), 1e-12),
        a_max=1e-12 if velocity == 0 else 1.0,
        profile=profile,
        duration=duration,
    )


@njit(cache=True, parallel=True, fastmath={"contract", "arcp", "nsz"})
def _integrate_atoms(z, v, zl_arr, dt, two_k, u_over_m, env_scale, focus,
                     monitor_every, mon_z, mon_v, heat_dv, heat_noise):
    """Velocity-Verlet transport kernel.

    zl_arr holds the lattice position at every step time (shared across
    atoms); env_scale = 1/z_R^2, or 0 to disable the beam-divergence depth
    factor. Atoms are advanced in blocks of four to hide the sin() latency
    chain; every atom's arithmetic is an independent stream, so block and
    thread scheduling leave results bitwise identical to sequential order.
    """
    n = z.shape[0]
    n_steps = zl_arr.shape[0] - 1
    half_dt = 0.5 * dt
    n_blocks = (n + 3) // 4
    for b in prange(n_blocks):
        i0 = b * 4
        m = min(4, n - i0)
        zb = np.empty(4)
        vb = np.empty(4)
        ab = np.empty(4)
        for j in range(m):
            zb[j] = z[i0 + j]
            vb[j] = v[i0 + j]
            du = zb[j] - focus
            depth = 1.0 / (1.0 + du * du * env_scale)
            ab[j] = -u_over_m * depth * math.sin(two_k * (zb[j] - zl_arr[0]))
        for step in range(n_steps):
            zl = zl_arr[step + 1]
            for j in range(m):
                vh = vb[j] + half_dt * ab[j]
                zj = zb[j] + dt * vh
                du = zj - focus
                depth = 1.0 / (1.0 + du * du * env_scale)
                a = -u_over_m * depth * math.sin(two_k * (zj - zl))
                vb[j] = vh + half_dt * a
                zb[j] = zj
                ab[j] = a
            if heat_dv > 0.0:
                for j in range(m):
                    vb[j] += heat_dv * heat_noise[i0 + j, step]
            if monitor_every > 0 and (step + 1) % monitor_every == 0:
                m_idx = (step + 1) // monitor_every - 1
                if m_idx < mon_z.shape[1]:
                    for j in range(m):
                        mon_z[i0 + j, m_idx] = zb[j]
                        mon_v[i0 + j, m_idx] = vb[j]
        for j in range(m):
            z[i0 + j] = zb[j]
            v[i0 + j] = vb[j]


def _profile_positions(t_bp, v_bp, z_bp, times):
    """Lattice positions at the given times for piecewise-linear velocity."""
    idx = np.clip(np.searchsorted(t_bp, times, side="right") - 1, 0, len(t_bp) - 2)
    seg = t_bp[idx + 1] - t_bp[idx]
    accel = np.where(seg > 0, (v_bp[idx + 1] - v_bp[idx]) / np.where(seg > 0, seg, 1.0), 0.0)
    tau = times - t_bp[idx]
    z = z_bp[idx] + v_bp[idx] * tau + 0.5 * accel * tau**2
    z = np.where(times >= t_bp[-1], z_bp[-1], z)
    return np.where(times <= t_bp[0], z_bp[0], z)


@dataclass
class TransportResult:
    survival_fraction: float
    mean_energy_gain: float          # J, bound atoms, lattice frame
    final_z: np.ndarray
    final_v: np.ndarray
    energy_initial: np.ndarray       # J per atom, lattice frame
    energy_final: np.ndarray
    bound: np.ndarray                # bool per atom at end of plan
    monitor_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    monitor_lattice_z: np.ndarray = field(default_factory=lambda: np.empty(0))
    monitor_survival: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def max_energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy_final - self.energy_initial)))


def _local_depth(depth_j: float, z: np.ndarray | float, focus: float,
                 rayleigh: float, divergence: bool):
    if not divergence:
        return depth_j * np.ones_like(np.asarray(z, dtype=float))
    return depth_j / (1.0 + ((np.asarray(z, dtype=float) - focus) / rayleigh) ** 2)


def _lattice_frame_energy(z, v, z_lat, v_lat, depth_local, two_k, m):
    """1/2 m dv^2 + U_loc/2 (1 - cos 2k dz), J (well minimum at zero)."""
    dv = v - v_lat
    return 0.5 * m * dv**2 + 0.5 * depth_local * (1.0 - np.cos(two_k * (z - z_lat)))


def simulate_transport(
    cfg: LatticeConfig,
    plan: TransportPlan,
    T_initial: float,
    n_atoms: int,
    seed: int,
    steps_per_period: int = 24,
    include_divergence: bool = True,
    start_position: Optional[float] = None,
    heating_rate: float = 0.0,
    n_monitor: int = 0,
    constants=CONSTANTS,
) -> TransportResult:
    """Monte Carlo of thermal atoms carried by the moving lattice.

    Atoms are sampled from thermal equilibrium in the harmonic expansion of
    the local well at the plan start (co-moving with the initial lattice
    velocity) and integrated symplectically with dt <= 1/(20 f_ax).
    Survival means bound in the co-moving well at the end of the plan.
    Deterministic for a fixed seed; heating_rate (J/s) is a hook for
    phase-noise heating and defaults to off.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    plan.validate()
    m = constants.m_Rb87
    u0 = cfg.depth_j()
    lam = cfg.wavelength
    k = 2.0 * math.pi / lam
    two_k = 2.0 * k
    f_ax_peak = axial_frequency(u0, lam, constants)
    if steps_per_period < MIN_STEPS_PER_PERIOD:
        raise ValueError(
            f"steps_per_period={steps_per_period} coarser than the "
            f"dt <= 1/({MIN_STEPS_PER_PERIOD} f_ax) guard"
        )
    focus = cfg.beam_up.focus_position
    rayleigh = cfg.beam_up.rayleigh_range
    if start_position is None:
        start_position = focus - plan.distance / 2.0

    n_steps = max(1, math.ceil(plan.duration * f_ax_peak * steps_per_period))
    dt = plan.duration / n_steps if plan.duration > 0 else 1.0 / (f_ax_peak * steps_per_period)
    if plan.duration == 0.0:
        n_steps = 0

    t_bp, v_bp, z_rel = plan.breakpoints()
    z_bp = z_rel + start_position

    rng = np.random.default_rng(seed)
    depth_start = float(_local_depth(u0, start_position, focus, rayleigh, include_divergence))
    omega_loc = k * math.sqrt(2.0 * depth_start / m)
    sigma_z = math.sqrt(constants.kB * T_initial / m) / omega_loc
    sigma_v = math.sqrt(constants.kB * T_initial / m)
    z = start_position + rng.normal(0.0, sigma_z, n_atoms)
    v = float(v_bp[0]) + rng.normal(0.0, sigma_v, n_atoms)

    e_init = _lattice_frame_energy(
        z, v, z_bp[0], v_bp[0],
        _local_depth(u0, z, focus, rayleigh, include_divergence), two_k, m,
    )

    monitor_every = 0
    mon_z = np.empty((1, 1))
    mon_v = np.empty((1, 1))
    if n_monitor > 0 and n_steps > 0:
        monitor_every = max(1, n_steps // n_monitor)
        n_mon = n_steps // monitor_every
        mon_z = np.empty((n_atoms, n_mon))
        mon_v = np.empty((n_atoms, n_mon))

    heat_dv = 0.0
    heat_noise = np.zeros((1, 1))
    if heating_rate > 0.0 and n_steps > 0:
        heat_dv = math.sqrt(heating_rate * dt / m)
        heat_noise = rng.standard_normal((n_atoms, n_steps))

    z_k = z.copy()
    v_k = v.copy()
    if n_steps > 0:
        env_scale = 1.0 / rayleigh**2 if include_divergence else 0.0
        zl_arr = _profile_positions(t_bp, v_bp, z_bp, np.arange(n_steps + 1) * dt)
        _integrate_atoms(
            z_k, v_k, zl_arr, dt, two_k, u0 * k / m,
            env_scale, focus, monitor_every,
            mon_z, mon_v, heat_dv, heat_noise,
        )

    z_lat_end = float(z_bp[-1])
    v_lat_end = float(v_bp[-1])
    depth_end = _local_depth(u0, z_k, focus, rayleigh, include_divergence)
    e_final = _lattice_frame_energy(z_k, v_k, z_lat_end, v_lat_end, depth_end, two_k, m)
    bound = e_final < depth_end
    survival = float(np.count_nonzero(bound)) / n_atoms
    gain = float(np.mean(e_final[bound] - e_init[bound])) if bound.any() else float("nan")

    mt = np.empty(0)
    ml = np.empty(0)
    ms = np.empty(0)
    if monitor_every > 0:
        idx = np.arange(1, mon_z.shape[1] + 1) * monitor_every
        mt = idx * dt
        ml = np.array([plan.position(t) + start_position for t in mt])
        vl = np.array([plan.velocity(t) for t in mt])
        ms = np.empty(len(mt))
        for j in range(len(mt)):
            dloc = _local_depth(u0, mon_z[:, j], focus, rayleigh, include_divergence)
            e = _lattice_frame_energy(mon_z[:, j], mon_v[:, j], ml[j], vl[j], dloc, two_k, m)
            ms[j] = np.count_nonzero(e < dloc) / n_atoms

    return TransportResult(
        survival_fraction=survival,
        mean_energy_gain=gain,
        final_z=z_k,
        final_v=v_k,
        energy_initial=e_init,
        energy_final=e_final,
        bound=bound,
        monitor_times=mt,
        monitor_lattice_z=ml,
        monitor_survival=ms,
    )
