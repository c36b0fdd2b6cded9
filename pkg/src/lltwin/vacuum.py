"""Two-chamber vacuum network: outgassing, pumps, conductances, venting.

Units here follow vacuum-engineering convention: Torr, liters, L/s,
Torr*L/s (conversions happen at the module boundary). Per chamber the
integrator advances

    V dP/dt = Q_outgas + sum_paths C (P_other - P) - sum_pumps S_eff max(P - P_base, 0)
    dc/dt   = -c / tau_bake(T),  tau_bake = tau_ref * 2^((110 - T)/dT_double)
    dT/dt   = ramp * tanh((T_set - T)/1 degC)

with an adaptive embedded Runge-Kutta pair (Cash-Karp 4(5)), max step 1 s.
Pressures are integrated in linear space: the embedded pair then preserves
the linear invariant sum(P*V) of closed networks to roundoff, which the
conservation contract requires. Molecular-flow (linear) conductances are
kept at all pressures; venting realism is not a target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

ATMOSPHERE = 760.0        # Torr
PRESSURE_FLOOR = 1e-12    # Torr
GAUGE_MAX = 1e-3          # Torr, ion-gauge validity ceiling
OVER_RANGE = float("inf")  # gauge saturation sentinel

PUMP_OFF = 0
PUMP_STARTING = 1
PUMP_ON = 2
PUMP_TRIPPED = 3

PUMP_STATES = {PUMP_OFF: "off", PUMP_STARTING: "starting",
               PUMP_ON: "on", PUMP_TRIPPED: "tripped"}


class IntegrationError(RuntimeError):
    """Vacuum integration produced a non-finite quantity or stalled."""


class NoEquilibriumError(ValueError):
    """Equilibrium pressure requested with every pump off."""


class PumpStartError(ValueError):
    """Pump start attempted above its maximum start pressure."""


@dataclass
class Chamber:
    name: str
    volume: float             # L
    surface_area: float       # cm^2
    temperature: float = 20.0  # degC
    contamination: float = 0.0  # dimensionless in [0, 1]
    pressure: float = PRESSURE_FLOOR  # Torr

    def __post_init__(self):
        if not 0.0 <= self.contamination <= 1.0:
            raise ValueError("contamination must lie in [0, 1]")
        self.pressure = min(max(self.pressure, PRESSURE_FLOOR), ATMOSPHERE)


@dataclass
class PumpModel:
    name: str
    kind: str                 # "ion" | "turbo"
    chamber: str
    nominal_speed: float      # L/s
    effective_speed: float    # L/s, conductance-limited speed used by the ODE
    base_pressure: float      # Torr
    state: int = PUMP_OFF
    max_start_pressure: float = ATMOSPHERE
    trip_pressure: float = math.inf   # Torr; ion pumps trip above this
    trip_dwell: float = 5.0           # s of continuous overpressure before trip
    spinup: float = 0.0               # s (turbo)
    derate_knee: float = 1e-2         # Torr; turbo speed ~ S/(1 + P/knee)

    def start(self, pressure_at_attach: float) -> None:
        if pressure_at_attach > self.max_start_pressure:
            raise PumpStartError(
                f"{self.name}: {pressure_at_attach:.3e} Torr exceeds start "
                f"limit {self.max_start_pressure:.3e} Torr"
            )
        self.state = PUMP_STARTING if self.spinup > 0 else PUMP_ON

    @property
    def state_name(self) -> str:
        return PUMP_STATES[self.state]


@dataclass
class ConductancePath:
    name: str
    end_a: str                # chamber name or "atmosphere"
    end_b: str
    open_conductance: float   # L/s
    fraction: float = 1.0     # 0 closed .. 1 open (partial allowed)

    def __post_init__(self):
        if self.open_conductance < 0:
            raise ValueError("conductance must be >= 0")

    @property
    def conductance(self) -> float:
        return self.open_conductance * self.fraction


@dataclass
class OutgassingModel:
    q_clean: float            # Torr*L/(s*cm^2)
    q_dirty: float            # Torr*L/(s*cm^2)
    bake_time_const_ref: float  # s, at bake_ref_temp
    temp_doubling: float      # degC per outgassing doubling
    ref_temp: float = 20.0    # degC
    bake_ref_temp: float = 110.0  # degC

    def __post_init__(self):
        if not (self.q_dirty > self.q_clean > 0):
            raise ValueError("need q_dirty > q_clean > 0")
        if self.bake_time_const_ref <= 0 or self.temp_doubling <= 0:
            raise ValueError("time constants must be positive")

    def tau_bake(self, temperature: float) -> float:
        return self.bake_time_const_ref * 2.0 ** (
            (self.bake_ref_temp - temperature) / self.temp_doubling
        )


def outgassing_load(ch: Chamber, model: OutgassingModel) -> float:
    """Total chamber outgassing, Torr*L/s."""
    q = model.q_clean + ch.contamination * (model.q_dirty - model.q_clean)
    return ch.surface_area * q * 2.0 ** ((ch.temperature - model.ref_temp) / model.temp_doubling)


# Cash-Karp embedded 4(5) coefficients
_CK_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0,
     44275.0 / 110592.0, 253.0 / 4096.0],
])
_CK_B5 = np.array([37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0])
_CK_B4 = np.array([2825.0 / 27648.0, 0.0, 18575.0 / 48384.0, 13525.0 / 55296.0,
                   277.0 / 14336.0, 1.0 / 4.0])


@njit(cache=True)
def _rhs(y, dy, n, vol, area, q_clean, q_dirty, t_double, t_ref,
         tau_ref, bake_ref, path_a, path_b, path_c, pump_ch, pump_s,
         pump_base, pump_turbo, knee, t_set, ramp, pinned, atm):
    for i in range(n):
        p = y[i]
        c = y[n + i]
        temp = y[2 * n + i]
        q = area[i] * (q_clean + c * (q_dirty - q_clean)) * 2.0 ** ((temp - t_ref) / t_double)
        dy[i] = q / vol[i]
        dy[n + i] = -c / (tau_ref * 2.0 ** ((bake_ref - temp) / t_double))
        dy[2 * n + i] = ramp * math.tanh((t_set[i] - temp) / 1.0)
    for j in range(path_a.shape[0]):
        ca = path_c[j]
        if ca <= 0.0:
            continue
        ia = path_a[j]
        ib = path_b[j]
        pa = atm if ia < 0 else y[ia]
        pb = atm if ib < 0 else y[ib]
        flow = ca * (pa - pb)  # Torr*L/s toward end_b
        if ia >= 0:
            dy[ia] -= flow / vol[ia]
        if ib >= 0:
            dy[ib] += flow / vol[ib]
    for j in range(pump_ch.shape[0]):
        s = pump_s[j]
        if s <= 0.0:
            continue
        i = pump_ch[j]
        p = y[i]
        if pump_turbo[j] == 1:
            s = s / (1.0 + p / knee)
        dp = p - pump_base[j]
        if dp > 0.0:
            dy[i] -= s * dp / vol[i]
    for i in range(n):
        if pinned[i] == 1:
            dy[i] = 0.0


@njit(cache=True)
def _integrate(y, t0, t1, n, vol, area, q_clean, q_dirty, t_double, t_ref,
               tau_ref, bake_ref, path_a, path_b, path_c, pump_ch, pump_s,
               pump_base, pump_turbo, knee, t_set, ramp, pinned, atm,
               floor, max_step, rtol, a_tab, b5, b4):
    nvar = y.shape[0]
    k = np.empty((6, nvar))
    ytmp = np.empty(nvar)
    dy = np.empty(nvar)
    t = t0
    h = min(max_step, t1 - t0)
    steps = 0
    while t < t1 - 1e-12 * max(1.0, t1):
        if h > t1 - t:
            h = t1 - t
        _rhs(y, k[0], n, vol, area, q_clean, q_dirty, t_double, t_ref,
             tau_ref, bake_ref, path_a, path_b, path_c, pump_ch, pump_s,
             pump_base, pump_turbo, knee, t_set, ramp, pinned, atm)
        for s in range(1, 6):
            for m in range(nvar):
                acc = 0.0
                for q in range(s):
                    acc += a_tab[s, q] * k[q, m]
                ytmp[m] = y[m] + h * acc
            _rhs(ytmp, k[s], n, vol, area, q_clean, q_dirty, t_double, t_ref,
                 tau_ref, bake_ref, path_a, path_b, path_c, pump_ch, pump_s,
                 pump_base, pump_turbo, knee, t_set, ramp, pinned, atm)
        err = 0.0
        for m in range(nvar):
            y5 = 0.0
            y4 = 0.0
            for s in range(6):
                y5 += b5[s] * k[s, m]
                y4 += b4[s] * k[s, m]
            ytmp[m] = y[m] + h * y5
            if m < n:
                atol = 1e-16
            elif m < 2 * n:
                atol = 1e-14
            else:
                atol = 1e-10
            w = atol + rtol * max(abs(y[m]), abs(ytmp[m]))
            e = h * (y5 - y4) / w
            err += e * e
        err = math.sqrt(err / nvar)
        if err <= 1.0 or h <= 1e-9:
            t += h
            for m in range(nvar):
                y[m] = ytmp[m]
            for i in range(n):
                if pinned[i] == 1:
                    y[i] = atm
                elif y[i] < floor:
                    y[i] = floor
                elif y[i] > atm:
                    y[i] = atm
                if y[n + i] < 0.0:
                    y[n + i] = 0.0
            steps += 1
        if err > 1e-300:
            fac = 0.9 * err ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
            h *= fac
        else:
            h *= 5.0
        if h > max_step:
            h = max_step
        if steps > 20_000_000:
            return -1
    return steps


@dataclass
class VacuumNetwork:
    chambers: dict
    pumps: dict
    paths: dict
    outgassing: OutgassingModel
    heater_ramp: float = 20.0 / 3600.0  # degC/s
    heater_setpoints: dict = field(default_factory=dict)
    pinned: set = field(default_factory=set)  # chambers held at atmosphere
    max_step: float = 1.0
    rtol: float = 1e-10
    ambient: float = 20.0

    def __post_init__(self):
        self._order = list(self.chambers)
        for name in self._order:
            self.heater_setpoints.setdefault(name, self.ambient)
        self._index = {name: i for i, name in enumerate(self._order)}

    def chamber_index(self, name: str) -> int:
        return self._index[name]

    def _pack(self):
        n = len(self._order)
        y = np.empty(3 * n)
        vol = np.empty(n)
        area = np.empty(n)
        t_set = np.empty(n)
        pinned = np.zeros(n, dtype=np.int8)
        for i, name in enumerate(self._order):
            ch = self.chambers[name]
            y[i] = ch.pressure
            y[n + i] = ch.contamination
            y[2 * n + i] = ch.temperature
            vol[i] = ch.volume
            area[i] = ch.surface_area
            t_set[i] = self.heater_setpoints[name]
            if name in self.pinned:
                pinned[i] = 1
                y[i] = ATMOSPHERE
        live_paths = [p for p in self.paths.values() if p.conductance > 0.0]
        path_a = np.array(
            [-1 if p.end_a == "atmosphere" else self._index[p.end_a] for p in live_paths],
            dtype=np.int64,
        ) if live_paths else np.empty(0, dtype=np.int64)
        path_b = np.array(
            [-1 if p.end_b == "atmosphere" else self._index[p.end_b] for p in live_paths],
            dtype=np.int64,
        ) if live_paths else np.empty(0, dtype=np.int64)
        path_c = np.array([p.conductance for p in live_paths]) if live_paths else np.empty(0)
        live_pumps = [p for p in self.pumps.values() if p.state == PUMP_ON]
        pump_ch = np.array(
            [self._index[p.chamber] for p in live_pumps], dtype=np.int64
        ) if live_pumps else np.empty(0, dtype=np.int64)
        pump_s = np.array([p.effective_speed for p in live_pumps]) if live_pumps else np.empty(0)
        pump_base = np.array([p.base_pressure for p in live_pumps]) if live_pumps else np.empty(0)
        pump_turbo = np.array(
            [1 if p.kind == "turbo" else 0 for p in live_pumps], dtype=np.int8
        ) if live_pumps else np.empty(0, dtype=np.int8)
        knee = live_pumps[0].derate_knee if live_pumps else 1e-2
        for p in live_pumps:
            if p.kind == "turbo":
                knee = p.derate_knee
        return (y, vol, area, t_set, pinned, path_a, path_b, path_c,
                pump_ch, pump_s, pump_base, pump_turbo, knee)

    def step(self, dt: float) -> "VacuumNetwork":
        """Advance the coupled pressure/contamination/temperature ODEs by dt."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        (y, vol, area, t_set, pinned, path_a, path_b, path_c,
         pump_ch, pump_s, pump_base, pump_turbo, knee) = self._pack()
        og = self.outgassing
        status = _integrate(
            y, 0.0, dt, len(self._order), vol, area, og.q_clean, og.q_dirty,
            og.temp_doubling, og.ref_temp, og.bake_time_const_ref, og.bake_ref_temp,
            path_a, path_b, path_c, pump_ch, pump_s, pump_base, pump_turbo,
            knee, t_set, self.heater_ramp, pinned, ATMOSPHERE, PRESSURE_FLOOR,
            self.max_step, self.rtol, _CK_A, _CK_B5, _CK_B4,
        )
        if status < 0:
            raise IntegrationError("step budget exhausted (stiff or stalled network)")
        n = len(self._order)
        for i, name in enumerate(self._order):
            ch = self.chambers[name]
            for label, value in (("pressure", y[i]), ("contamination", y[n + i]),
                                 ("temperature", y[2 * n + i])):
                if not math.isfinite(value):
                    raise IntegrationError(f"non-finite {label} for chamber {name!r}")
            ch.pressure = float(y[i])
            ch.contamination = float(y[n + i])
            ch.temperature = float(y[2 * n + i])
        return self

    def total_gas(self) -> float:
        """sum(P*V) over chambers, Torr*L (conserved when closed and passive)."""
        return sum(c.pressure * c.volume for c in self.chambers.values())


def equilibrium_pressure(ch: Chamber, pumps, load: float) -> float:
    """Steady pressure of a single chamber: balance of load against pumping.

    P* = (Q + sum S_i P_base_i) / sum S_i, which reduces to P_base + Q/S
    for one pump. Raises NoEquilibriumError when every pump is off.
    """
    live = [p for p in pumps if p.state == PUMP_ON and p.effective_speed > 0]
    if not live:
        raise NoEquilibriumError(f"no pump running on chamber {ch.name!r}")
    s_total = sum(p.effective_speed for p in live)
    weighted_base = sum(p.effective_speed * p.base_pressure for p in live)
    return (load + weighted_base) / s_total


def gauge_read(ch: Chamber, rng=None, noise: bool = True) -> float:
    """Ion-gauge reading: lognormal 3% noise below 1e-3 Torr, else over-range.

    Pass a seeded numpy Generator for a deterministic sequence; the caller
    owns the stream.
    """
    if ch.pressure > GAUGE_MAX:
        return OVER_RANGE
    if not noise:
        return ch.pressure
    if rng is None:
        rng = np.random.default_rng()
    return ch.pressure * math.exp(0.03 * rng.standard_normal())
