"""Best-setpoint search and fuel sweeps.

For a recorded trip, the best ``l_set`` is the one whose simulation leaves a
minimum SOC of 10% (within a +/-2% band). The minimum SOC is monotone
non-decreasing in ``l_set`` for the thermostatic rule (a higher setpoint
keeps the reference higher, so the generator runs more), which makes
bisection the natural search. The property is empirical, not a theorem, so
violations detected while bracketing trigger a fallback grid scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ems import AlwaysOffController, EmsConfig, ThermostatController
from .errors import InfeasibleTripError, SearchError
from .preprocess import TripProfile
from .vehicle import SimResult, VehicleParams, simulate_trip


@dataclass(frozen=True)
class LsetSearchConfig:
    lo: float = 5.0              # miles
    hi: float = 300.0            # miles
    soc_target: float = 10.0     # percent
    soc_band: float = 2.0        # accepted |min_soc - target|, percent
    resolution_mi: float = 1.0   # bisection bracket width at termination
    max_evals: int = 40
    initial_soc: float = 100.0   # used when the trip carries no recorded SOC
    ems_soc_tev: float = 10.0
    ems_soc_ref_cap: float = 60.0
    ems_hysteresis: float = 1.0

    def __post_init__(self):
        if self.lo >= self.hi:
            raise ValueError("need lo < hi")
        if self.soc_band <= 0:
            raise ValueError("soc_band must be positive")
        if self.resolution_mi <= 0:
            raise ValueError("resolution_mi must be positive")


@dataclass(frozen=True)
class BestLsetResult:
    l_set: float | None          # None when the generator is not needed
    min_soc: float
    engine_needed: bool
    evaluations: int
    fallback_grid: bool = False

    @property
    def observation(self) -> float | None:
        """The value to feed the estimator; None when the engine was not needed."""
        return self.l_set


def _ems(l_set: float, cfg: LsetSearchConfig) -> EmsConfig:
    return EmsConfig(
        l_set=l_set,
        soc_tev=cfg.ems_soc_tev,
        soc_ref_cap=cfg.ems_soc_ref_cap,
        hysteresis=cfg.ems_hysteresis,
    )


def simulate_with_lset(
    profile: TripProfile,
    p: VehicleParams,
    l_set: float,
    cfg: LsetSearchConfig | None = None,
    initial_soc: float | None = None,
) -> SimResult:
    cfg = cfg or LsetSearchConfig()
    soc0 = initial_soc if initial_soc is not None else _initial_soc(profile, cfg)
    return simulate_trip(profile, ThermostatController(_ems(l_set, cfg)), soc0, p)


def _initial_soc(profile: TripProfile, cfg: LsetSearchConfig) -> float:
    """Recorded start-of-trip SOC when available (depot charging), else default."""
    if profile.soc_recorded is not None and np.isfinite(profile.soc_recorded[0]):
        return float(profile.soc_recorded[0])
    return cfg.initial_soc


def best_lset(
    profile: TripProfile,
    p: VehicleParams,
    cfg: LsetSearchConfig | None = None,
) -> BestLsetResult:
    """Find the setpoint at which the trip's SOC floor reaches the target.

    The floor is non-decreasing in the setpoint, so the answer is the
    crossing of the target (located by bisection down to ``resolution_mi``),
    or the lowest setpoint when the floor already starts at or above the
    target. The returned setpoint is accepted only if its floor lies within
    ``soc_band`` of the target.

    Returns an ``engine_needed=False`` sentinel when the battery alone keeps
    the minimum SOC above the band (no setpoint can pull it down to the
    target). Raises :class:`InfeasibleTripError` when even the most
    supportive setpoint cannot keep the minimum SOC above the band.
    """
    cfg = cfg or LsetSearchConfig()
    soc0 = _initial_soc(profile, cfg)
    evals = 0

    def min_soc_at(l_set: float) -> float:
        nonlocal evals
        evals += 1
        return simulate_with_lset(profile, p, l_set, cfg, soc0).min_soc

    # Battery-only floor: if the pack alone never nears the target, no
    # setpoint is "best" and the trip distance is only a lower bound.
    natural = simulate_trip(profile, AlwaysOffController(), soc0, p)
    evals += 1
    if natural.min_soc > cfg.soc_target + cfg.soc_band:
        return BestLsetResult(
            l_set=None,
            min_soc=natural.min_soc,
            engine_needed=False,
            evaluations=evals,
        )

    lo, hi = cfg.lo, cfg.hi
    f_lo = min_soc_at(lo)
    if f_lo >= cfg.soc_target:
        # The floor sits at or above the target for every setpoint (it is
        # non-decreasing), so the closest approach is the lowest setpoint.
        if f_lo <= cfg.soc_target + cfg.soc_band:
            return BestLsetResult(lo, f_lo, True, evals)
        return BestLsetResult(
            l_set=None,
            min_soc=natural.min_soc,
            engine_needed=False,
            evaluations=evals,
        )
    f_hi = min_soc_at(hi)
    if f_hi <= cfg.soc_target:
        if f_hi >= cfg.soc_target - cfg.soc_band:
            return BestLsetResult(hi, f_hi, True, evals)
        raise InfeasibleTripError(
            f"{profile.vehicle_id}: minimum SOC is {f_hi:.1f}% even at "
            f"l_set={hi:.0f} mi; energy demand exceeds battery plus generator"
        )

    # Bracketed crossing: f_lo < target < f_hi. Bisect the crossing down to
    # the configured setpoint resolution, then accept on band membership.
    while evals < cfg.max_evals and hi - lo > cfg.resolution_mi:
        mid = 0.5 * (lo + hi)
        f_mid = min_soc_at(mid)
        if f_mid == cfg.soc_target:
            return BestLsetResult(mid, f_mid, True, evals)
        if f_mid < cfg.soc_target:
            lo = mid
        else:
            hi = mid
    result = 0.5 * (lo + hi)
    f_result = min_soc_at(result)
    if abs(f_result - cfg.soc_target) <= cfg.soc_band:
        return BestLsetResult(result, f_result, True, evals)
    # The floor jumped across the band (or the curve is not monotone here).
    return _grid_fallback(profile, p, cfg, soc0, evals)


def _grid_fallback(
    profile: TripProfile,
    p: VehicleParams,
    cfg: LsetSearchConfig,
    soc0: float,
    evals: int,
) -> BestLsetResult:
    """1-mile grid scan used when bisection cannot be trusted."""
    grid = np.arange(cfg.lo, cfg.hi + 1e-9, 1.0)
    best: tuple[float, float] | None = None
    for l_set in grid:
        m = simulate_with_lset(profile, p, float(l_set), cfg, soc0).min_soc
        evals += 1
        if best is None or abs(m - cfg.soc_target) < abs(best[1] - cfg.soc_target):
            best = (float(l_set), m)
    assert best is not None
    if abs(best[1] - cfg.soc_target) > cfg.soc_band:
        raise SearchError(
            f"{profile.vehicle_id}: no setpoint lands the minimum SOC within "
            f"{cfg.soc_band}% of {cfg.soc_target}% (closest: {best[1]:.1f}% at "
            f"{best[0]:.0f} mi)"
        )
    return BestLsetResult(best[0], best[1], True, evals, fallback_grid=True)


@dataclass(frozen=True)
class SweepEntry:
    l_set: float
    fuel_l: float | None
    min_soc: float | None
    error: str | None = None


def fuel_vs_lset(
    profile: TripProfile,
    p: VehicleParams,
    lset_values,
    cfg: LsetSearchConfig | None = None,
    initial_soc: float | None = None,
) -> list[SweepEntry]:
    """Simulate the trip once per setpoint; failures are reported per entry."""
    cfg = cfg or LsetSearchConfig()
    soc0 = initial_soc if initial_soc is not None else _initial_soc(profile, cfg)
    out: list[SweepEntry] = []
    for l_set in lset_values:
        try:
            res = simulate_with_lset(profile, p, float(l_set), cfg, soc0)
            out.append(SweepEntry(float(l_set), res.fuel_total_l, res.min_soc))
        except Exception as exc:  # per-entry failure keeps the sweep going
            out.append(SweepEntry(float(l_set), None, None, error=str(exc)))
    return out


def saturation_threshold(profile: TripProfile, cfg: LsetSearchConfig | None = None) -> float:
    """Setpoint above which the reference is pinned at the cap for the whole trip.

    Beyond this value every simulation is identical, so fuel use plateaus.
    """
    cfg = cfg or LsetSearchConfig()
    from .trips import METERS_PER_MILE

    distance_mi = profile.distance_m / METERS_PER_MILE
    frac = 1.0 - cfg.ems_soc_ref_cap / 100.0
    return distance_mi * (1.0 - cfg.ems_soc_tev / 100.0) / frac
