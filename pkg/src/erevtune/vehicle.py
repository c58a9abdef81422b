"""Powertrain and battery simulation.

Road-load power at the battery terminals follows

    P_b = A*v + B*v^3 + C*a*v - D

with A = c_rr*m*g/eta_btw, B = 0.5*c_d*A_f*rho/eta_btw, C = m/eta_btw and
D = P_e*eta_etw/eta_btw while the generator runs (D = 0 otherwise). The pack
is an equivalent circuit with open-circuit voltage V_oc (piecewise linear in
SOC) behind a constant internal resistance, so the terminal power balance
P_b = V_oc*I - R0*I^2 gives the discharge current in closed form and the SOC
rate follows from coulomb counting. Road grade and wind are neglected; the
generator has no transient model (it contributes a constant electrical power
and a constant fuel rate while on). Stops with the generator running charge
the pack at a fixed rate instead.

Simulation steps the SOC explicitly at 1 s. The inner loop is compiled with
numba when available; a pure-Python fallback with identical semantics is
used otherwise (and for arbitrary user controllers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ems import (
    AlwaysOffController,
    EmsConfig,
    EngineController,
    ReplayController,
    ThermostatController,
)
from .errors import PowerLimitError, TripValidationError
from .preprocess import TripProfile
from .trips import METERS_PER_MILE

try:  # pragma: no cover - exercised implicitly by every simulation
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of one vehicle. Immutable; override via replace()."""

    m: float = 6800.0            # total mass, kg
    g: float = 9.81              # N/kg
    c_rr: float = 0.008          # rolling resistance coefficient
    c_d: float = 0.6             # aerodynamic drag coefficient
    a_f: float = 7.0             # frontal area, m^2
    rho: float = 1.2             # air density, kg/m^3
    eta_btw: float = 0.85        # battery-to-wheel efficiency
    eta_etw: float = 0.80        # engine-to-wheel efficiency
    p_e: float = 11_000.0        # generator electrical power, W
    q_ah: float = 145.45         # pack capacity, Ah
    r0: float = 0.08             # internal resistance, ohm
    voc_breakpoints: tuple[tuple[float, float], ...] = (
        (0.0, 330.0),
        (20.0, 360.0),
        (100.0, 398.0),
    )
    c_c: float = 0.0049107       # stationary charge rate, percent/s
    c_f: float = 0.00125         # fuel rate while generator runs, L/s
    usable_kwh: float = 56.0     # usable pack energy, kWh

    def __post_init__(self):
        for name in ("m", "g", "c_rr", "c_d", "a_f", "rho", "p_e", "q_ah",
                     "r0", "c_c", "c_f", "usable_kwh"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("eta_btw", "eta_etw"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        socs = [p[0] for p in self.voc_breakpoints]
        volts = [p[1] for p in self.voc_breakpoints]
        if len(socs) < 2 or any(b <= a for a, b in zip(socs, socs[1:])):
            raise ValueError("voc_breakpoints must be strictly increasing in SOC")
        if any(not 300.0 <= v <= 400.0 for v in volts):
            raise ValueError("open-circuit voltage must stay within 300-400 V")

    @property
    def q_coulomb(self) -> float:
        return self.q_ah * 3600.0

    def voc_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        socs = np.array([p[0] for p in self.voc_breakpoints])
        volts = np.array([p[1] for p in self.voc_breakpoints])
        return socs, volts


@dataclass(frozen=True)
class LumpedCoeffs:
    """Road-load constants folded together; d is the generator-on value."""

    a: float
    b: float
    c: float
    d: float


def lump(p: VehicleParams) -> LumpedCoeffs:
    return LumpedCoeffs(
        a=p.c_rr * p.m * p.g / p.eta_btw,
        b=0.5 * p.c_d * p.a_f * p.rho / p.eta_btw,
        c=p.m / p.eta_btw,
        d=p.p_e * p.eta_etw / p.eta_btw,
    )


def open_circuit_voltage(s: float, p: VehicleParams) -> float:
    socs, volts = p.voc_arrays()
    return float(np.interp(s, socs, volts))


def battery_power(v: float, a: float, engine_on: bool, lumped: LumpedCoeffs) -> float:
    """Battery terminal power demand, W. Negative means the pack is charging."""
    if v < 0:
        raise ValueError("speed cannot be negative")
    return lumped.a * v + lumped.b * v**3 + lumped.c * a * v - (lumped.d if engine_on else 0.0)


def soc_derivative(s: float, p_b: float, p: VehicleParams) -> float:
    """SOC rate in percent/s for a battery power demand ``p_b``.

    The discharge current solves P_b = V_oc*I - R0*I^2; a negative
    discriminant means the pack cannot deliver the demanded power.
    """
    voc = open_circuit_voltage(s, p)
    disc = voc * voc - 4.0 * p.r0 * p_b
    if disc < 0:
        raise PowerLimitError(
            f"battery power demand {p_b:.0f} W exceeds deliverable "
            f"{voc * voc / (4 * p.r0):.0f} W at soc {s:.1f}%"
        )
    current = (voc - math.sqrt(disc)) / (2.0 * p.r0)
    return -(current / p.q_coulomb) * 100.0


def step_soc(
    s: float,
    v: float,
    a: float,
    engine_on: bool,
    p: VehicleParams,
    dt: float = 1.0,
    lumped: LumpedCoeffs | None = None,
) -> float:
    """One explicit Euler step of the SOC, percent.

    A stopped vehicle with the generator running charges at the fixed rate
    c_c; otherwise the equivalent-circuit rate applies. The result is clamped
    to [0, 100].
    """
    if not 0.0 <= s <= 100.0:
        raise ValueError("soc must be within [0, 100]")
    if v == 0.0 and engine_on:
        s_next = s + p.c_c * dt
    else:
        lumped = lumped or lump(p)
        s_next = s + soc_derivative(s, battery_power(v, a, engine_on, lumped), p) * dt
    return min(100.0, max(0.0, s_next))


def step_fuel(f: float, engine_on: bool, dt: float, p: VehicleParams) -> float:
    """Cumulative fuel after one step, liters."""
    if f < 0:
        raise ValueError("fuel cannot be negative")
    return f + (p.c_f * dt if engine_on else 0.0)


@dataclass(frozen=True)
class SimResult:
    """Outcome of one trip simulation at fixed step."""

    soc: np.ndarray              # percent, one entry per profile sample
    engine_on: np.ndarray        # bool, decision at each sample
    fuel_l: np.ndarray           # cumulative liters
    min_soc: float
    final_soc: float
    electric_energy_kwh: float   # grid energy drawn, from net SOC depletion
    clamp_events: int = 0

    @property
    def fuel_total_l(self) -> float:
        return float(self.fuel_l[-1]) if len(self.fuel_l) else 0.0

    @property
    def engine_seconds(self) -> float:
        return float(np.count_nonzero(self.engine_on[:-1]))


# Controller codes for the compiled kernel.
_MODE_OFF = 0
_MODE_THERMOSTAT = 1
_MODE_REPLAY = 2


def _interp_scalar(x, xs, ys):
    """Piecewise-linear lookup with flat extrapolation (numba-friendly)."""
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    for k in range(1, n):
        if x < xs[k]:
            w = (x - xs[k - 1]) / (xs[k] - xs[k - 1])
            return ys[k - 1] + w * (ys[k] - ys[k - 1])
    return ys[n - 1]


def _kernel(v, a, d_mi, dt, soc0, la, lb, lc, ld, voc_s, voc_v, r0, q_c,
            c_c, c_f, mode, replay, l_set, soc_tev, cap, hyst):
    n = v.shape[0]
    soc = np.empty(n)
    fuel = np.empty(n)
    engine = np.zeros(n, dtype=np.bool_)
    soc[0] = soc0
    fuel[0] = 0.0
    clamps = 0
    prev_on = False
    for i in range(n):
        s = soc[i]
        if mode == _MODE_THERMOSTAT:
            ref = 100.0 * (1.0 - (1.0 - soc_tev / 100.0) * d_mi[i] / l_set)
            if ref > cap:
                ref = cap
            elif ref < 0.0:
                ref = 0.0
            if s < ref:
                on = True
            elif s >= ref + hyst:
                on = False
            else:
                on = prev_on
        elif mode == _MODE_REPLAY:
            on = bool(replay[i])
        else:
            on = False
        engine[i] = on
        prev_on = on

        if i == n - 1:
            break
        if v[i] == 0.0 and on:
            s_next = s + c_c * dt
        else:
            p_b = la * v[i] + lb * v[i] ** 3 + lc * a[i] * v[i]
            if on:
                p_b -= ld
            voc = _interp_scalar(s, voc_s, voc_v)
            disc = voc * voc - 4.0 * r0 * p_b
            if disc < 0.0:
                return soc, engine, fuel, clamps, i
            current = (voc - math.sqrt(disc)) / (2.0 * r0)
            s_next = s - (current / q_c) * 100.0 * dt
        if s_next > 100.0:
            s_next = 100.0
            clamps += 1
        elif s_next < 0.0:
            s_next = 0.0
            clamps += 1
        soc[i + 1] = s_next
        fuel[i + 1] = fuel[i] + (c_f * dt if on else 0.0)
    return soc, engine, fuel, clamps, -1


def _kernel_thermostat_multi(v, a, d_mi, dt, soc0, la, lb, lc, ld, voc_s, voc_v,
                             r0, q_c, c_c, c_f, lsets, soc_tev, cap, hyst):
    """Min-SOC and fuel for many setpoints in one pass (grid scans)."""
    n = v.shape[0]
    m = lsets.shape[0]
    min_soc = np.empty(m)
    fuel = np.zeros(m)
    fail = np.full(m, -1, dtype=np.int64)
    for j in range(m):
        l_set = lsets[j]
        s = soc0
        lowest = soc0
        prev_on = False
        f = 0.0
        for i in range(n):
            ref = 100.0 * (1.0 - (1.0 - soc_tev / 100.0) * d_mi[i] / l_set)
            if ref > cap:
                ref = cap
            elif ref < 0.0:
                ref = 0.0
            if s < ref:
                on = True
            elif s >= ref + hyst:
                on = False
            else:
                on = prev_on
            prev_on = on
            if i == n - 1:
                break
            if v[i] == 0.0 and on:
                s_next = s + c_c * dt
            else:
                p_b = la * v[i] + lb * v[i] ** 3 + lc * a[i] * v[i]
                if on:
                    p_b -= ld
                voc = _interp_scalar(s, voc_s, voc_v)
                disc = voc * voc - 4.0 * r0 * p_b
                if disc < 0.0:
                    fail[j] = i
                    break
                current = (voc - math.sqrt(disc)) / (2.0 * r0)
                s_next = s - (current / q_c) * 100.0 * dt
            if s_next > 100.0:
                s_next = 100.0
            elif s_next < 0.0:
                s_next = 0.0
            s = s_next
            if s < lowest:
                lowest = s
            if on:
                f += c_f * dt
        min_soc[j] = lowest
        fuel[j] = f
    return min_soc, fuel, fail


if _HAVE_NUMBA:
    _interp_scalar = njit(cache=True)(_interp_scalar)
    _kernel = njit(cache=True)(_kernel)
    _kernel_thermostat_multi = njit(cache=True)(_kernel_thermostat_multi)


def thermostat_grid_scan(
    profile: TripProfile,
    p: VehicleParams,
    lsets: np.ndarray,
    initial_soc: float,
    ems: EmsConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimum SOC and total fuel for each setpoint candidate.

    Brute-force companion to the bisection search: one full simulation per
    grid point, vectorized through the compiled kernel. Raises on the first
    grid point whose power demand exceeds the pack limit.
    """
    voc_s, voc_v = p.voc_arrays()
    lumped = lump(p)
    lsets = np.ascontiguousarray(lsets, dtype=np.float64)
    min_soc, fuel, fail = _kernel_thermostat_multi(
        np.ascontiguousarray(profile.v, dtype=np.float64),
        np.ascontiguousarray(_acceleration(profile.v, profile.dt)),
        np.ascontiguousarray(profile.d / METERS_PER_MILE),
        profile.dt,
        float(initial_soc),
        lumped.a, lumped.b, lumped.c, lumped.d,
        voc_s, voc_v, p.r0, p.q_coulomb, p.c_c, p.c_f,
        lsets, ems.soc_tev, ems.soc_ref_cap, ems.hysteresis,
    )
    bad = np.nonzero(fail >= 0)[0]
    if len(bad):
        raise PowerLimitError(
            f"battery power limit exceeded at t={fail[bad[0]] * profile.dt:.0f} s "
            f"(l_set={lsets[bad[0]]:.1f} mi)",
            step=int(fail[bad[0]]),
        )
    return min_soc, fuel


def _acceleration(v: np.ndarray, dt: float) -> np.ndarray:
    """Forward-difference acceleration; zero at the last sample."""
    a = np.zeros_like(v)
    if len(v) > 1:
        a[:-1] = np.diff(v) / dt
    return a


def _simulate_generic(
    profile: TripProfile,
    controller: EngineController,
    initial_soc: float,
    p: VehicleParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Reference Python loop for arbitrary controllers."""
    n = profile.n_steps
    v = profile.v
    a = _acceleration(v, profile.dt)
    d_mi = profile.d / METERS_PER_MILE
    lumped = lump(p)
    soc = np.empty(n)
    fuel = np.empty(n)
    engine = np.zeros(n, dtype=bool)
    soc[0] = initial_soc
    fuel[0] = 0.0
    clamps = 0
    prev_on = False
    controller.reset()
    for i in range(n):
        on = controller.decide(float(d_mi[i]), float(soc[i]), float(v[i]), prev_on)
        engine[i] = on
        prev_on = on
        if i == n - 1:
            break
        if v[i] == 0.0 and on:
            raw = soc[i] + p.c_c * profile.dt
        else:
            p_b = battery_power(float(v[i]), float(a[i]), on, lumped)
            try:
                raw = soc[i] + soc_derivative(float(soc[i]), p_b, p) * profile.dt
            except PowerLimitError as exc:
                raise PowerLimitError(str(exc), step=i) from None
        s_next = min(100.0, max(0.0, raw))
        if s_next != raw:
            clamps += 1
        soc[i + 1] = s_next
        fuel[i + 1] = step_fuel(fuel[i], on, profile.dt, p)
    return soc, engine, fuel, clamps


def simulate_trip(
    profile: TripProfile,
    controller: EngineController,
    initial_soc: float,
    p: VehicleParams,
) -> SimResult:
    """Step the powertrain over a reconstructed profile at the profile's dt.

    The controller is queried for the engine state at every sample;
    acceleration is the forward difference of velocity. Raises
    :class:`PowerLimitError` (with the failing step) if the pack cannot
    deliver the demanded power.
    """
    if not 0.0 <= initial_soc <= 100.0:
        raise ValueError("initial soc must be within [0, 100]")
    if profile.n_steps == 0:
        raise TripValidationError("cannot simulate an empty profile")

    fast_mode = None
    replay = np.zeros(0, dtype=np.bool_)
    l_set = soc_tev = cap = hyst = 0.0
    if isinstance(controller, AlwaysOffController):
        fast_mode = _MODE_OFF
    elif isinstance(controller, ThermostatController):
        fast_mode = _MODE_THERMOSTAT
        cfg = controller.cfg
        l_set, soc_tev, cap, hyst = cfg.l_set, cfg.soc_tev, cfg.soc_ref_cap, cfg.hysteresis
    elif isinstance(controller, ReplayController):
        if len(controller.trace) < profile.n_steps:
            raise TripValidationError(
                "replay trace shorter than profile "
                f"({len(controller.trace)} < {profile.n_steps})"
            )
        fast_mode = _MODE_REPLAY
        replay = np.ascontiguousarray(controller.trace[: profile.n_steps])

    if fast_mode is not None:
        voc_s, voc_v = p.voc_arrays()
        lumped = lump(p)
        soc, engine, fuel, clamps, fail = _kernel(
            np.ascontiguousarray(profile.v, dtype=np.float64),
            np.ascontiguousarray(_acceleration(profile.v, profile.dt)),
            np.ascontiguousarray(profile.d / METERS_PER_MILE),
            profile.dt,
            float(initial_soc),
            lumped.a, lumped.b, lumped.c, lumped.d,
            voc_s, voc_v, p.r0, p.q_coulomb, p.c_c, p.c_f,
            fast_mode, replay, l_set, soc_tev, cap, hyst,
        )
        if fail >= 0:
            raise PowerLimitError(
                f"battery power limit exceeded at t={fail * profile.dt:.0f} s",
                step=int(fail),
            )
    else:
        soc, engine, fuel, clamps = _simulate_generic(
            profile, controller, initial_soc, p
        )

    depletion = max(0.0, float(soc[0] - soc[-1]))
    return SimResult(
        soc=soc,
        engine_on=engine,
        fuel_l=fuel,
        min_soc=float(soc.min()),
        final_soc=float(soc[-1]),
        electric_energy_kwh=depletion / 100.0 * p.usable_kwh,
        clamp_events=int(clamps),
    )


def soc_mean_relative_error(sim_soc: np.ndarray, recorded_soc: np.ndarray) -> float:
    """Mean of |simulated - recorded| / recorded over samples with recorded > 0."""
    sim = np.asarray(sim_soc, dtype=float)
    rec = np.asarray(recorded_soc, dtype=float)
    if sim.shape != rec.shape:
        raise ValueError("soc traces have different lengths")
    ok = np.isfinite(rec) & (rec > 0)
    if not ok.any():
        raise ValueError("recorded soc trace has no usable samples")
    return float(np.mean(np.abs(sim[ok] - rec[ok]) / rec[ok]))


def calibrate_params(
    profiles: Sequence[TripProfile],
    base: VehicleParams,
    mass_grid: Sequence[float] | None = None,
    eta_btw_grid: Sequence[float] | None = None,
) -> VehicleParams:
    """One-time fit of mass and drivetrain efficiency against recorded SOC.

    Each profile must carry recorded SOC and engine traces; the recorded
    engine trace is replayed and the simulated SOC compared to the recorded
    one. Returns the parameter set minimizing the mean relative SOC error
    over the given trips.
    """
    usable = [
        pr for pr in profiles
        if pr.soc_recorded is not None and pr.engine_on_recorded is not None
    ]
    if not usable:
        raise ValueError("calibration needs recorded SOC and engine traces")
    mass_grid = list(mass_grid if mass_grid is not None
                     else np.linspace(0.85, 1.2, 8) * base.m)
    eta_btw_grid = list(eta_btw_grid if eta_btw_grid is not None
                        else np.linspace(0.78, 0.92, 8))

    best: tuple[float, VehicleParams] | None = None
    for m in mass_grid:
        for eta in eta_btw_grid:
            cand = replace(base, m=float(m), eta_btw=float(eta))
            errs = []
            try:
                for pr in usable:
                    res = simulate_trip(
                        pr,
                        ReplayController(pr.engine_on_recorded),
                        float(pr.soc_recorded[0]),
                        cand,
                    )
                    errs.append(soc_mean_relative_error(res.soc, pr.soc_recorded))
            except PowerLimitError:
                continue
            score = float(np.mean(errs))
            if best is None or score < best[0]:
                best = (score, cand)
    if best is None:
        raise PowerLimitError("no candidate parameter set could simulate the trips")
    return best[1]
