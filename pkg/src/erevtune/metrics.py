"""Fuel accounting and fleet reports.

MPGe treats 33.7 kWh of grid electricity as one gallon of fuel. The electric
term counts only net battery depletion (grid energy); generator energy is
already accounted for through its fuel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ErevTuneError
from .optimize import LsetSearchConfig, SweepEntry, simulate_with_lset
from .preprocess import TripProfile
from .trips import write_table
from .vehicle import SimResult, VehicleParams

KWH_PER_GALLON = 33.7
LITERS_PER_GALLON = 3.785411784


class UndefinedMpgeError(ErevTuneError):
    """MPGe is undefined when no energy of either kind was used."""


def mpge(distance_mi: float, fuel_gal: float, electric_kwh: float) -> float:
    """Miles per gallon equivalent."""
    if distance_mi < 0:
        raise ValueError("distance cannot be negative")
    denom = fuel_gal + electric_kwh / KWH_PER_GALLON
    if denom <= 0:
        raise UndefinedMpgeError(
            f"no energy use to normalize by (fuel {fuel_gal} gal, "
            f"electric {electric_kwh} kWh)"
        )
    return distance_mi / denom


@dataclass(frozen=True)
class TripComparison:
    trip_id: str
    distance_mi: float
    fuel_baseline_l: float
    fuel_bayes_l: float
    mpge_baseline: float
    mpge_bayes: float
    fuel_reduction_pct: float
    min_soc_bayes: float
    vehicle_id: str = ""

    @property
    def mpge_improvement_pct(self) -> float:
        if self.mpge_baseline == 0:
            return 0.0
        return 100.0 * (self.mpge_bayes - self.mpge_baseline) / self.mpge_baseline


def compare_trip(
    profile: TripProfile,
    p: VehicleParams,
    l_set_bayes: float,
    l_set_baseline: float = 100.0,
    cfg: LsetSearchConfig | None = None,
    initial_soc: float | None = None,
    trip_id: str | None = None,
) -> tuple[TripComparison, SimResult, SimResult]:
    """Simulate both setpoints from the same initial SOC and tally the gains."""
    cfg = cfg or LsetSearchConfig()
    from .optimize import _initial_soc

    soc0 = initial_soc if initial_soc is not None else _initial_soc(profile, cfg)
    try:
        base = simulate_with_lset(profile, p, l_set_baseline, cfg, soc0)
    except ErevTuneError as exc:
        raise type(exc)(f"baseline arm (l_set={l_set_baseline}): {exc}") from exc
    try:
        bayes = simulate_with_lset(profile, p, l_set_bayes, cfg, soc0)
    except ErevTuneError as exc:
        raise type(exc)(f"tuned arm (l_set={l_set_bayes}): {exc}") from exc

    from .trips import METERS_PER_MILE

    distance_mi = profile.distance_m / METERS_PER_MILE
    fuel_base_gal = base.fuel_total_l / LITERS_PER_GALLON
    fuel_bayes_gal = bayes.fuel_total_l / LITERS_PER_GALLON
    reduction = (
        100.0 * (base.fuel_total_l - bayes.fuel_total_l) / base.fuel_total_l
        if base.fuel_total_l > 0
        else 0.0
    )
    comparison = TripComparison(
        trip_id=trip_id or profile.vehicle_id,
        distance_mi=distance_mi,
        fuel_baseline_l=base.fuel_total_l,
        fuel_bayes_l=bayes.fuel_total_l,
        mpge_baseline=mpge(distance_mi, fuel_base_gal, base.electric_energy_kwh),
        mpge_bayes=mpge(distance_mi, fuel_bayes_gal, bayes.electric_energy_kwh),
        fuel_reduction_pct=reduction,
        min_soc_bayes=bayes.min_soc,
        vehicle_id=profile.vehicle_id,
    )
    return comparison, base, bayes


@dataclass(frozen=True)
class FleetAggregate:
    n_trips: int
    avg_mpge_improvement_pct: float
    fuel_reduction_pct: float          # fuel-weighted: total vs total
    mean_trip_fuel_reduction_pct: float  # unweighted per-trip mean
    total_fuel_baseline_l: float
    total_fuel_bayes_l: float
    per_vehicle: dict[str, dict[str, float]]


def fleet_report(
    comparisons: Sequence[TripComparison],
    out_dir: str | Path | None = None,
    soc_traces: Mapping[str, tuple[SimResult, SimResult]] | None = None,
    sweeps: Mapping[str, Sequence[SweepEntry]] | None = None,
    prediction_curves: Mapping[str, Sequence[tuple[float, float]]] | None = None,
) -> FleetAggregate:
    """Aggregate trip comparisons and optionally emit plot-ready tables.

    ``soc_traces`` maps trip id to (baseline, tuned) simulations;
    ``prediction_curves`` maps vehicle id to (predicted, observed) pairs per
    trip index. Aggregation reports both the fuel-weighted reduction
    (totals ratio) and the unweighted per-trip mean.
    """
    if not comparisons:
        raise ValueError("fleet_report needs at least one comparison")

    total_base = sum(c.fuel_baseline_l for c in comparisons)
    total_bayes = sum(c.fuel_bayes_l for c in comparisons)
    weighted = 100.0 * (total_base - total_bayes) / total_base if total_base > 0 else 0.0

    per_vehicle: dict[str, dict[str, float]] = {}
    for c in comparisons:
        row = per_vehicle.setdefault(
            c.vehicle_id or c.trip_id,
            {"n_trips": 0, "fuel_baseline_l": 0.0, "fuel_bayes_l": 0.0,
             "mpge_improvement_sum": 0.0, "fuel_reduction_sum": 0.0},
        )
        row["n_trips"] += 1
        row["fuel_baseline_l"] += c.fuel_baseline_l
        row["fuel_bayes_l"] += c.fuel_bayes_l
        row["mpge_improvement_sum"] += c.mpge_improvement_pct
        row["fuel_reduction_sum"] += c.fuel_reduction_pct
    for row in per_vehicle.values():
        n = row.pop("n_trips")
        row["n_trips"] = n
        row["avg_mpge_improvement_pct"] = row.pop("mpge_improvement_sum") / n
        row["avg_fuel_reduction_pct"] = row.pop("fuel_reduction_sum") / n
        base, tuned = row["fuel_baseline_l"], row["fuel_bayes_l"]
        row["weighted_fuel_reduction_pct"] = (
            100.0 * (base - tuned) / base if base > 0 else 0.0
        )

    aggregate = FleetAggregate(
        n_trips=len(comparisons),
        avg_mpge_improvement_pct=float(
            np.mean([c.mpge_improvement_pct for c in comparisons])
        ),
        fuel_reduction_pct=weighted,
        mean_trip_fuel_reduction_pct=float(
            np.mean([c.fuel_reduction_pct for c in comparisons])
        ),
        total_fuel_baseline_l=total_base,
        total_fuel_bayes_l=total_bayes,
        per_vehicle=per_vehicle,
    )

    if out_dir is not None:
        out = Path(out_dir)
        write_table(
            out / "trip_comparisons.csv",
            {
                "trip_id": [c.trip_id for c in comparisons],
                "vehicle_id": [c.vehicle_id for c in comparisons],
                "distance_mi": [c.distance_mi for c in comparisons],
                "fuel_baseline_l": [c.fuel_baseline_l for c in comparisons],
                "fuel_bayes_l": [c.fuel_bayes_l for c in comparisons],
                "mpge_baseline": [c.mpge_baseline for c in comparisons],
                "mpge_bayes": [c.mpge_bayes for c in comparisons],
                "fuel_reduction_pct": [c.fuel_reduction_pct for c in comparisons],
                "min_soc_bayes": [c.min_soc_bayes for c in comparisons],
            },
        )
        for trip_id, (base, tuned) in (soc_traces or {}).items():
            write_soc_trace(out / f"soc_trace_{trip_id}.csv", base, tuned)
            write_engine_trace(out / f"engine_trace_{trip_id}.csv", base, tuned)
        for trip_id, entries in (sweeps or {}).items():
            write_fuel_sweep(out / f"fuel_sweep_{trip_id}.csv", entries)
        for vid, pairs in (prediction_curves or {}).items():
            write_prediction_curve(out / f"predictions_{vid}.csv", pairs)
    return aggregate


def write_soc_trace(path: str | Path, baseline: SimResult, tuned: SimResult) -> Path:
    n = min(len(baseline.soc), len(tuned.soc))
    return write_table(
        path,
        {
            "t_s": np.arange(n, dtype=float),
            "soc_baseline_pct": baseline.soc[:n],
            "soc_tuned_pct": tuned.soc[:n],
        },
    )


def write_engine_trace(path: str | Path, baseline: SimResult, tuned: SimResult) -> Path:
    n = min(len(baseline.engine_on), len(tuned.engine_on))
    return write_table(
        path,
        {
            "t_s": np.arange(n, dtype=float),
            "engine_baseline": baseline.engine_on[:n].astype(float),
            "engine_tuned": tuned.engine_on[:n].astype(float),
        },
    )


def write_fuel_sweep(path: str | Path, entries: Sequence[SweepEntry]) -> Path:
    return write_table(
        path,
        {
            "l_set_mi": [e.l_set for e in entries],
            "fuel_l": [e.fuel_l for e in entries],
            "min_soc_pct": [e.min_soc for e in entries],
        },
    )


def write_prediction_curve(
    path: str | Path, pairs: Sequence[tuple[float, float]]
) -> Path:
    return write_table(
        path,
        {
            "trip_index": [float(i) for i in range(len(pairs))],
            "predicted_mi": [p for p, _ in pairs],
            "observed_best_mi": [o for _, o in pairs],
        },
    )
