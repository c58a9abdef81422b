"""Synthetic delivery-trip generation.

Builds drive-stop-drive velocity profiles (half-cosine ramps, constant
cruise, dwell at each stop) whose per-vehicle trip-distance statistics follow
a configurable spread, then optionally degrades them to raw low-resolution
telemetry: 0.2 Hz sampling, missing cells, stale distance readings, and
zero-velocity dropouts while the odometer advances. Everything is driven by
one seeded generator, so a fixed seed reproduces files byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ems import EmsConfig, ThermostatController
from .preprocess import TripProfile, _cumulative_distance
from .trips import METERS_PER_MILE, RawSample, RawTrip, write_trip_file
from .vehicle import SimResult, VehicleParams, lump, simulate_trip

# Ramp duration scales with cruise speed; this factor keeps peak acceleration
# near 0.7 m/s^2 and curvature low enough that smoothing barely distorts it.
_RAMP_SECONDS_PER_MPS = 2.2


@dataclass(frozen=True)
class ArtifactSpec:
    """Measurement degradation applied when emitting raw telemetry."""

    sample_period_s: float = 5.0
    p_missing_v: float = 0.0015      # isolated blank speed cells
    p_missing_soc: float = 0.01
    # Zero-speed windows while the odometer keeps counting. Reconstruction
    # can only patch samples that stay exactly zero after smoothing, so these
    # model minutes-long link outages rather than single stale readings.
    dropout_rate_per_hour: float = 0.7
    dropout_len_s: tuple[float, float] = (60.0, 180.0)
    latency_rate_per_hour: float = 2.0   # stale distance readings
    latency_len_samples: tuple[int, int] = (2, 4)
    v_decimals: int = 3
    d_decimals: int = 2
    soc_quant_pct: float = 0.0       # 0 disables quantization
    soc_noise_pct: float = 0.0


CLEAN = ArtifactSpec(
    p_missing_v=0.0, p_missing_soc=0.0,
    dropout_rate_per_hour=0.0, latency_rate_per_hour=0.0,
)


@dataclass(frozen=True)
class SyntheticFleetSpec:
    n_vehicles: int = 5
    trips_per_vehicle: int = 10
    mean_distance_mi: tuple[float, float] = (35.0, 65.0)   # per-vehicle mean draw
    std_distance_mi: tuple[float, float] = (3.0, 8.0)      # per-vehicle std draw
    energy_intensity_kwh_mi: tuple[float, float] = (0.55, 0.85)
    seed: int = 0
    artifacts: ArtifactSpec = field(default_factory=lambda: CLEAN)

    def __post_init__(self):
        if self.n_vehicles < 1 or self.trips_per_vehicle < 1:
            raise ValueError("need at least one vehicle and one trip")
        for lo, hi in (self.mean_distance_mi, self.std_distance_mi,
                       self.energy_intensity_kwh_mi):
            if lo <= 0 or hi < lo:
                raise ValueError("ranges must be positive and ordered")


def cruise_speed_for_intensity(intensity_kwh_mi: float, p: VehicleParams) -> float:
    """Cruise speed whose steady road load matches a battery energy intensity."""
    wheel_j_per_m = intensity_kwh_mi * p.eta_btw * 3.6e6 / METERS_PER_MILE
    rolling = p.c_rr * p.m * p.g
    aero_coeff = 0.5 * p.c_d * p.a_f * p.rho
    v2 = (wheel_j_per_m - rolling) / aero_coeff
    if v2 <= 1.0:
        return 1.0
    return math.sqrt(v2)


def _ramp(v_target: float, rising: bool) -> np.ndarray:
    """Half-cosine speed ramp sampled at 1 Hz; starts and ends at rest/cruise."""
    duration = max(8, int(round(_RAMP_SECONDS_PER_MPS * v_target)))
    tau = np.arange(1, duration + 1) / duration
    shape = 0.5 * (1.0 - np.cos(np.pi * tau))
    return v_target * (shape if rising else shape[::-1])


def _segment(v_cruise: float, distance_m: float) -> np.ndarray:
    """One stop-to-stop movement covering approximately ``distance_m``."""
    up = _ramp(v_cruise, rising=True)
    down = _ramp(v_cruise, rising=False)
    ramp_dist = float(up.sum() + down.sum())
    if ramp_dist >= distance_m:
        # Short hop: scale the peak down (ramp distance grows ~ v^2).
        v_peak = max(1.0, v_cruise * math.sqrt(distance_m / ramp_dist))
        up = _ramp(v_peak, rising=True)
        down = _ramp(v_peak, rising=False)
        return np.concatenate([up, down])
    cruise_seconds = max(1, int(round((distance_m - ramp_dist) / v_cruise)))
    return np.concatenate([up, np.full(cruise_seconds, v_cruise), down])


def synth_profile(
    rng: np.random.Generator,
    distance_mi: float,
    intensity_kwh_mi: float,
    p: VehicleParams | None = None,
    vehicle_id: str = "synthetic",
    stop_dwell_s: tuple[float, float] = (30.0, 90.0),
    segment_m: tuple[float, float] = (700.0, 2600.0),
) -> TripProfile:
    """A clean 1 Hz delivery profile of roughly the requested distance."""
    p = p or VehicleParams()
    v_cruise = min(cruise_speed_for_intensity(intensity_kwh_mi, p), 26.0)
    target_m = distance_mi * METERS_PER_MILE

    pieces = [np.zeros(5)]
    covered = 0.0
    while covered < target_m:
        seg_dist = min(float(rng.uniform(*segment_m)), target_m - covered)
        seg_speed = v_cruise * float(rng.uniform(0.9, 1.05))
        seg = _segment(seg_speed, seg_dist)
        pieces.append(seg)
        covered += float(
            _cumulative_distance(np.concatenate([[0.0], seg, [0.0]]), 1.0)[-1]
        )
        pieces.append(np.zeros(int(rng.uniform(*stop_dwell_s))))
    pieces.append(np.zeros(5))
    v = np.concatenate(pieces)
    v[0] = 0.0
    v[-1] = 0.0
    return TripProfile(
        vehicle_id=vehicle_id,
        dt=1.0,
        v=v,
        d=_cumulative_distance(v, 1.0),
    )


def battery_channels(
    profile: TripProfile, sim: SimResult, p: VehicleParams
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal voltage and current traces consistent with a simulation."""
    lumped = lump(p)
    v = profile.v
    a = np.zeros_like(v)
    if len(v) > 1:
        a[:-1] = np.diff(v) / profile.dt
    engine = sim.engine_on.astype(float)
    p_b = lumped.a * v + lumped.b * v**3 + lumped.c * a * v - lumped.d * engine
    stopped_charging = (v == 0.0) & sim.engine_on
    p_b = np.where(stopped_charging, -p.p_e, p_b)
    socs, volts = p.voc_arrays()
    voc = np.interp(sim.soc, socs, volts)
    disc = np.maximum(voc * voc - 4.0 * p.r0 * p_b, 0.0)
    current = (voc - np.sqrt(disc)) / (2.0 * p.r0)
    return voc - current * p.r0, current


def degrade_profile(
    rng: np.random.Generator,
    profile: TripProfile,
    artifacts: ArtifactSpec,
    soc: np.ndarray | None = None,
    engine_on: np.ndarray | None = None,
    v_batt: np.ndarray | None = None,
    i_batt: np.ndarray | None = None,
) -> RawTrip:
    """Emit raw low-rate telemetry with injected measurement defects."""
    dt_out = artifacts.sample_period_s
    n = profile.n_steps
    idx = np.arange(0, n, int(round(dt_out / profile.dt)))
    t = idx.astype(float) * profile.dt
    v = profile.v[idx].copy()
    d = profile.d[idx].copy()

    duration_h = (n * profile.dt) / 3600.0

    # Zero-speed dropouts: the speed channel flatlines, the odometer keeps
    # counting. These are the windows the reconstruction must repair.
    n_drop = rng.poisson(artifacts.dropout_rate_per_hour * duration_h)
    for _ in range(n_drop):
        length = int(rng.uniform(*artifacts.dropout_len_s) / dt_out)
        if len(idx) - length - 2 <= 1:
            continue
        start = int(rng.integers(1, len(idx) - length - 1))
        v[start : start + length] = 0.0

    # Stale distance readings (transmission latency), then a catch-up jump.
    n_lat = rng.poisson(artifacts.latency_rate_per_hour * duration_h)
    for _ in range(n_lat):
        length = int(rng.integers(artifacts.latency_len_samples[0],
                                  artifacts.latency_len_samples[1] + 1))
        if len(idx) - length - 2 <= 1:
            continue
        start = int(rng.integers(1, len(idx) - length - 1))
        d[start : start + length] = d[start - 1]

    v = np.round(v, artifacts.v_decimals)
    d = np.round(d, artifacts.d_decimals)

    missing_v = rng.random(len(idx)) < artifacts.p_missing_v

    soc_out = None
    if soc is not None:
        soc_out = soc[idx].astype(float).copy()
        if artifacts.soc_noise_pct > 0:
            soc_out += rng.normal(0.0, artifacts.soc_noise_pct, len(idx))
        if artifacts.soc_quant_pct > 0:
            q = artifacts.soc_quant_pct
            soc_out = np.round(soc_out / q) * q
        soc_out = np.clip(soc_out, 0.0, 100.0)
    missing_soc = rng.random(len(idx)) < artifacts.p_missing_soc

    samples = []
    for j in range(len(idx)):
        samples.append(
            RawSample(
                t=float(t[j]),
                v=None if missing_v[j] else float(v[j]),
                d=float(d[j]),
                soc=(
                    None
                    if soc_out is None or missing_soc[j]
                    else round(float(soc_out[j]), 3)
                ),
                engine_on=None if engine_on is None else bool(engine_on[idx[j]]),
                v_batt=None if v_batt is None else round(float(v_batt[idx[j]]), 2),
                i_batt=None if i_batt is None else round(float(i_batt[idx[j]]), 2),
            )
        )
    return RawTrip(profile.vehicle_id, tuple(samples), dt_out)


@dataclass(frozen=True)
class GeneratedTrip:
    vehicle_id: str
    trip_index: int
    raw: RawTrip
    truth: TripProfile
    path: Path | None = None


def generate_fleet(
    spec: SyntheticFleetSpec,
    out_dir: str | Path | None = None,
    recording: tuple[VehicleParams, float, float] | None = None,
) -> list[GeneratedTrip]:
    """Generate the whole fleet; optionally write trip files.

    ``recording`` = (params, l_set, initial_soc) simulates the thermostatic
    rule on each truth profile and embeds SOC / engine / battery channels in
    the emitted telemetry.
    """
    rng = np.random.default_rng(spec.seed)
    out: list[GeneratedTrip] = []
    for vi in range(spec.n_vehicles):
        vehicle_id = f"veh-{vi:02d}"
        mean_d = rng.uniform(*spec.mean_distance_mi)
        std_d = rng.uniform(*spec.std_distance_mi)
        base_intensity = rng.uniform(*spec.energy_intensity_kwh_mi)
        for ti in range(spec.trips_per_vehicle):
            distance = max(5.0, rng.normal(mean_d, std_d))
            intensity = base_intensity * rng.uniform(0.95, 1.05)
            truth = synth_profile(rng, distance, intensity, vehicle_id=vehicle_id)
            soc = engine = v_batt = i_batt = None
            if recording is not None:
                params, l_set, soc0 = recording
                sim = simulate_trip(
                    truth, ThermostatController(EmsConfig(l_set=l_set)), soc0, params
                )
                soc, engine = sim.soc, sim.engine_on
                v_batt, i_batt = battery_channels(truth, sim, params)
            raw = degrade_profile(
                rng, truth, spec.artifacts,
                soc=soc, engine_on=engine, v_batt=v_batt, i_batt=i_batt,
            )
            path = None
            if out_dir is not None:
                path = Path(out_dir) / vehicle_id / f"trip_{ti:03d}.csv"
                write_trip_file(raw, path)
            out.append(GeneratedTrip(vehicle_id, ti, raw, truth, path))
    return out
