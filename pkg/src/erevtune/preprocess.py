"""Trip signal reconstruction.

Raw telemetry arrives at roughly 0.2 Hz with missing cells, stale (latency)
readings, and velocity channels that stick at zero while the odometer keeps
advancing. The pipeline rebuilds a physically consistent 1 Hz profile:

1. fill missing values (velocity -> 0, distance -> forward fill),
2. linearly interpolate both channels to 1 Hz,
3. Gaussian-smooth velocity and distance,
4. recover a second velocity estimate from the smoothed distance by central
   differences,
5. replace points where the smoothed velocity is zero but the
   distance-derived velocity is not, scaled by a factor epsilon,
6. tune epsilon until the integrated distance matches the recorded trip
   distance, then accept only if the residual is inside the tolerance.

SOC and engine channels ride along (linear / previous-value hold) but are
never smoothed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import PreprocessError, TripValidationError
from .trips import RawSample, RawTrip

DEFAULT_DT = 1.0


@dataclass(frozen=True)
class PreprocessConfig:
    sigma_distance: float = 3.0      # filter width, samples at 1 Hz
    sigma_velocity: float = 3.0
    distance_tolerance_m: float = 500.0
    max_iterations: int = 50
    epsilon_init: float = 1.0
    epsilon_lo: float = 0.1
    epsilon_hi: float = 10.0
    accel_warn_limit: float = 5.0    # |dv/dt| above this is implausible, m/s^2
    speed_warn_limit: float = 40.0   # m/s

    def __post_init__(self):
        if self.sigma_distance <= 0 or self.sigma_velocity <= 0:
            raise ValueError("filter widths must be positive")
        if self.distance_tolerance_m <= 0:
            raise ValueError("distance tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class TripProfile:
    """A reconstructed 1 Hz trip, ready for simulation."""

    vehicle_id: str
    dt: float
    v: np.ndarray
    d: np.ndarray
    soc_recorded: np.ndarray | None = None
    engine_on_recorded: np.ndarray | None = None
    # reconstruction diagnostics
    epsilon: float = 1.0
    distance_error_m: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise TripValidationError("dt must be positive")
        n = len(self.v)
        if len(self.d) != n:
            raise TripValidationError("velocity and distance lengths differ")
        for name, series in (
            ("soc_recorded", self.soc_recorded),
            ("engine_on_recorded", self.engine_on_recorded),
        ):
            if series is not None and len(series) != n:
                raise TripValidationError(f"{name} length differs from velocity")
        if n and (self.v[0] != 0.0 or self.v[-1] != 0.0):
            raise TripValidationError("profile must start and end at rest")
        if np.any(self.v < 0):
            raise TripValidationError("negative velocity in profile")
        if np.any(np.diff(self.d) < -1e-9):
            raise TripValidationError("distance series must be non-decreasing")

    @property
    def n_steps(self) -> int:
        return len(self.v)

    @property
    def distance_m(self) -> float:
        return float(self.d[-1]) if len(self.d) else 0.0


def fill_missing(trip: RawTrip) -> RawTrip:
    """Zero-fill missing velocity, forward-fill missing distance.

    A missing distance before any recorded value becomes 0. Idempotent.
    """
    samples = []
    prev_d = 0.0
    for s in trip.samples:
        v = 0.0 if s.v is None else s.v
        d = prev_d if s.d is None else s.d
        prev_d = d
        samples.append(RawSample(s.t, v, d, s.soc, s.engine_on, s.v_batt, s.i_batt))
    return RawTrip(trip.vehicle_id, tuple(samples), trip.sample_period)


def _grid(trip: RawTrip, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """1 Hz time grid (relative seconds) and the raw relative timestamps."""
    t_raw = np.array([s.t for s in trip.samples]) - trip.samples[0].t
    n = int(math.floor(t_raw[-1] / dt)) + 1
    return np.arange(n) * dt, t_raw


def interpolate_1hz(trip: RawTrip, dt: float = DEFAULT_DT) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation of the filled velocity/distance channels to 1 Hz."""
    if len(trip.samples) < 2:
        raise TripValidationError("interpolation needs at least 2 samples")
    grid, t_raw = _grid(trip, dt)
    v_raw = np.array([0.0 if s.v is None else s.v for s in trip.samples])
    d_raw = np.array([s.d for s in trip.samples], dtype=float)
    if np.any(np.isnan(d_raw)):
        raise TripValidationError("distance must be filled before interpolation")
    return np.interp(grid, t_raw, v_raw), np.interp(grid, t_raw, d_raw)


def _interp_optional_linear(trip: RawTrip, attr: str, dt: float) -> np.ndarray | None:
    """Linear interpolation of a possibly missing channel; None if never recorded."""
    grid, t_raw = _grid(trip, dt)
    vals = np.array(
        [getattr(s, attr) if getattr(s, attr) is not None else math.nan
         for s in trip.samples],
        dtype=float,
    )
    known = ~np.isnan(vals)
    if not known.any():
        return None
    return np.interp(grid, t_raw[known], vals[known])


def _interp_optional_hold(trip: RawTrip, attr: str, dt: float) -> np.ndarray | None:
    """Previous-value hold of a boolean channel onto the 1 Hz grid."""
    grid, t_raw = _grid(trip, dt)
    pairs = [
        (t, bool(getattr(s, attr)))
        for t, s in zip(t_raw, trip.samples)
        if getattr(s, attr) is not None
    ]
    if not pairs:
        return None
    times = np.array([p[0] for p in pairs])
    vals = np.array([p[1] for p in pairs], dtype=bool)
    idx = np.searchsorted(times, grid, side="right") - 1
    idx = np.clip(idx, 0, len(vals) - 1)  # before first record: hold first value
    return vals[idx]


def gaussian_smooth(series: np.ndarray, sigma: float) -> np.ndarray:
    """Discrete Gaussian convolution, kernel truncated at 4 sigma.

    Kernel weights are normalized to sum to 1 and edges are handled by
    nearest-value extension, so constants pass through unchanged and total
    mass is preserved.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("cannot smooth an empty series")
    radius = int(math.ceil(4.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(series, radius, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def velocity_from_distance(d: np.ndarray, dt: float = DEFAULT_DT) -> np.ndarray:
    """Central-difference velocity; the first and last points are zero."""
    d = np.asarray(d, dtype=float)
    if len(d) < 3:
        raise TripValidationError("need at least 3 distance points")
    v = np.zeros_like(d)
    v[1:-1] = (d[2:] - d[:-2]) / (2.0 * dt)
    return v


def _cumulative_distance(v: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal cumulative distance of a velocity series."""
    if len(v) == 0:
        return np.zeros(0)
    return np.concatenate([[0.0], np.cumsum((v[1:] + v[:-1]) * (0.5 * dt))])


def correct_and_rescale(
    v_smooth: np.ndarray,
    d_smooth: np.ndarray,
    raw_final_distance: float,
    cfg: PreprocessConfig,
    *,
    dt: float = DEFAULT_DT,
    vehicle_id: str = "",
    soc: np.ndarray | None = None,
    engine_on: np.ndarray | None = None,
) -> TripProfile:
    """Patch zero-velocity gaps from the distance channel and rescale.

    Points where the smoothed velocity is exactly zero while the
    distance-derived velocity is not are replaced by ``epsilon`` times the
    distance-derived value. ``epsilon`` is found by bisection so that the
    integrated distance matches ``raw_final_distance``; the result is
    accepted only if the residual is below the configured tolerance.
    """
    v_smooth = np.asarray(v_smooth, dtype=float)
    v_dist = np.maximum(velocity_from_distance(d_smooth, dt), 0.0)
    mask = (v_smooth == 0.0) & (v_dist != 0.0)

    def build(eps: float) -> np.ndarray:
        v = np.maximum(v_smooth, 0.0)
        v[mask] = eps * v_dist[mask]
        v[0] = 0.0
        v[-1] = 0.0
        return v

    def error(eps: float) -> float:
        return float(_cumulative_distance(build(eps), dt)[-1] - raw_final_distance)

    def finish(eps: float, err: float, iters: int) -> TripProfile:
        v = build(eps)
        return TripProfile(
            vehicle_id=vehicle_id,
            dt=dt,
            v=v,
            d=_cumulative_distance(v, dt),
            soc_recorded=soc,
            engine_on_recorded=engine_on,
            epsilon=eps,
            distance_error_m=err,
            iterations=iters,
        )

    err0 = error(cfg.epsilon_init)
    if abs(err0) < cfg.distance_tolerance_m:
        return finish(cfg.epsilon_init, err0, 1)
    if not mask.any():
        raise PreprocessError(
            f"distance mismatch of {err0:.1f} m and no correctable zero-velocity "
            "points",
            best_error_m=err0,
        )

    # The error is monotone in epsilon, so bisect to a tight epsilon and then
    # apply the acceptance tolerance to the residual.
    lo, hi = cfg.epsilon_lo, cfg.epsilon_hi
    f_lo, f_hi = error(lo), error(hi)
    evals = 3
    if f_lo > 0 or f_hi < 0:
        eps, err = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
        if abs(err) < cfg.distance_tolerance_m:
            return finish(eps, err, evals)
        raise PreprocessError(
            f"rescale factor hit bound {eps}; residual {err:.1f} m",
            best_error_m=err,
        )
    while evals < cfg.max_iterations and hi - lo > 1e-4:
        mid = 0.5 * (lo + hi)
        f_mid = error(mid)
        evals += 1
        if f_mid == 0.0:
            lo = hi = mid
            break
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    eps = 0.5 * (lo + hi)
    err = error(eps)
    if abs(err) < cfg.distance_tolerance_m:
        return finish(eps, err, evals)
    raise PreprocessError(
        f"distance rescale did not converge: residual {err:.1f} m after "
        f"{evals} evaluations",
        best_error_m=err,
    )


def preprocess_trip(
    trip: RawTrip,
    cfg: PreprocessConfig | None = None,
    dt: float = DEFAULT_DT,
) -> TripProfile:
    """Run the full reconstruction and return a validated 1 Hz profile."""
    cfg = cfg or PreprocessConfig()

    d_recorded = [s.d for s in trip.samples if s.d is not None]
    if not d_recorded:
        raise TripValidationError(
            f"{trip.vehicle_id}: no distance data; cannot anchor reconstruction"
        )
    raw_final_distance = d_recorded[-1] - d_recorded[0]

    filled = fill_missing(trip)
    v_1hz, d_1hz = interpolate_1hz(filled, dt)
    v_smooth = gaussian_smooth(v_1hz, cfg.sigma_velocity)
    d_smooth = gaussian_smooth(d_1hz, cfg.sigma_distance)

    profile = correct_and_rescale(
        v_smooth,
        d_smooth,
        raw_final_distance,
        cfg,
        dt=dt,
        vehicle_id=trip.vehicle_id,
        soc=_interp_optional_linear(trip, "soc", dt),
        engine_on=_interp_optional_hold(trip, "engine_on", dt),
    )

    accel = np.diff(profile.v) / dt
    if accel.size and np.max(np.abs(accel)) > cfg.accel_warn_limit:
        warnings.warn(
            f"{trip.vehicle_id}: reconstructed acceleration peaks at "
            f"{np.max(np.abs(accel)):.1f} m/s^2",
            stacklevel=2,
        )
    if profile.v.size and profile.v.max() > cfg.speed_warn_limit:
        warnings.warn(
            f"{trip.vehicle_id}: reconstructed speed peaks at "
            f"{profile.v.max():.1f} m/s",
            stacklevel=2,
        )
    return profile


def write_profile_file(profile: TripProfile, path) -> None:
    """Persist a reconstructed profile as a delimited table."""
    from .trips import write_table

    n = profile.n_steps
    cols = {
        "t_s": np.arange(n) * profile.dt,
        "v_mps": profile.v,
        "d_m": profile.d,
    }
    if profile.soc_recorded is not None:
        cols["soc_pct"] = profile.soc_recorded
    if profile.engine_on_recorded is not None:
        cols["engine_on"] = profile.engine_on_recorded.astype(float)
    write_table(path, cols)


def read_profile_file(path, vehicle_id: str | None = None) -> TripProfile:
    """Load a profile written by :func:`write_profile_file`."""
    from pathlib import Path as _Path

    from .trips import read_table

    tab = read_table(path)
    t = tab["t_s"]
    dt = float(t[1] - t[0]) if len(t) > 1 else DEFAULT_DT
    engine = tab.get("engine_on")
    return TripProfile(
        vehicle_id=vehicle_id or _Path(path).stem,
        dt=dt,
        v=tab["v_mps"],
        d=tab["d_m"],
        soc_recorded=tab.get("soc_pct"),
        engine_on_recorded=None if engine is None else engine.astype(bool),
    )
