"""Command-line front end.

Commands wire the pipeline end to end: ingest -> preprocess -> simulate /
optimize -> posterior update -> predict -> report. Exit codes: 0 success,
1 validation problem, 2 simulation infeasibility, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bayes
from .config import GlobalConfig, load_config
from .errors import ErevTuneError, PreprocessError
from .fleetgen import CLEAN, ArtifactSpec, SyntheticFleetSpec, generate_fleet
from .metrics import (
    FleetAggregate,
    TripComparison,
    compare_trip,
    fleet_report,
    write_engine_trace,
    write_fuel_sweep,
    write_soc_trace,
)
from .optimize import best_lset, fuel_vs_lset
from .preprocess import (
    TripProfile,
    preprocess_trip,
    read_profile_file,
    write_profile_file,
)
from .store import PosteriorStore
from .trips import METERS_PER_MILE, parse_trip_file
from .vehicle import VehicleParams


# ---------------------------------------------------------------------------
# Pipeline helpers (importable; the subcommands are thin wrappers)
# ---------------------------------------------------------------------------

def load_profile(path: Path, cfg: GlobalConfig, is_profile: bool,
                 vehicle_id: str | None = None) -> TripProfile:
    if is_profile:
        return read_profile_file(path, vehicle_id)
    raw = parse_trip_file(path, cfg.columns or None, vehicle_id=vehicle_id)
    return preprocess_trip(raw, cfg.preprocess)


@dataclass(frozen=True)
class ObserveOutcome:
    vehicle_id: str
    observation: float
    lower_bound: bool          # True when the trip only bounds the setpoint
    min_soc: float
    n_trips: int
    prediction: float          # next-trip setpoint after the update


def observe_profile(
    profile: TripProfile,
    vehicle_id: str,
    store: PosteriorStore,
    params: VehicleParams,
    cfg: GlobalConfig,
) -> ObserveOutcome:
    """Extract the trip's best setpoint, fold it into the vehicle posterior.

    Trips the battery could cover alone carry no best setpoint; their
    distance is recorded instead (a lower bound on the true value) so the
    posterior is not biased upward by silently skipping easy trips.
    """
    result = best_lset(profile, params, cfg.search)
    if result.engine_needed:
        observation = float(result.l_set)
        lower_bound = False
    else:
        observation = profile.distance_m / METERS_PER_MILE
        lower_bound = True
    with store.lock(vehicle_id):
        state = store.load(vehicle_id)
        new_state = bayes.update(state, observation)
        bound_count = store.lower_bound_trips(vehicle_id) + (1 if lower_bound else 0)
        store.save(new_state, lower_bound_trips=bound_count)
    return ObserveOutcome(
        vehicle_id=vehicle_id,
        observation=observation,
        lower_bound=lower_bound,
        min_soc=result.min_soc,
        n_trips=new_state.n_trips,
        prediction=bayes.predict_lset(new_state, cfg.confidence),
    )


@dataclass(frozen=True)
class FleetRunResult:
    aggregate: FleetAggregate
    comparisons: list[TripComparison]
    prediction_curves: dict[str, list[tuple[float, float]]]


def run_fleet_report(
    trips_by_vehicle: dict[str, list[Path]],
    cfg: GlobalConfig,
    out_dir: Path | None = None,
    is_profile: bool = False,
) -> FleetRunResult:
    """Replay every vehicle chronologically and compare tuned vs baseline.

    Stateless: each vehicle starts from the configured prior, predictions are
    made before each trip is seen, and the posterior advances in memory only.
    """
    comparisons: list[TripComparison] = []
    curves: dict[str, list[tuple[float, float]]] = {}
    for vehicle_id, paths in sorted(trips_by_vehicle.items()):
        state = bayes.init_state(cfg.prior, vehicle_id)
        params = cfg.vehicle_params(vehicle_id)
        curve: list[tuple[float, float]] = []
        for i, path in enumerate(sorted(paths)):
            profile = load_profile(path, cfg, is_profile, vehicle_id=vehicle_id)
            prediction = bayes.predict_lset(state, cfg.confidence)
            comparison, _, _ = compare_trip(
                profile, params, l_set_bayes=prediction,
                l_set_baseline=cfg.baseline_l_set, cfg=cfg.search,
                trip_id=f"{vehicle_id}/{i:03d}",
            )
            comparisons.append(comparison)
            result = best_lset(profile, params, cfg.search)
            observation = (
                float(result.l_set) if result.engine_needed
                else profile.distance_m / METERS_PER_MILE
            )
            curve.append((prediction, observation))
            state = bayes.update(state, observation)
        curves[vehicle_id] = curve
    aggregate = fleet_report(comparisons, out_dir=out_dir, prediction_curves=curves)
    return FleetRunResult(aggregate, comparisons, curves)


def discover_vehicle_trips(trip_dir: Path) -> dict[str, list[Path]]:
    """``trip_dir/<vehicle>/*.csv`` -> mapping; flat directories become one vehicle."""
    trip_dir = Path(trip_dir)
    out: dict[str, list[Path]] = {}
    subdirs = [d for d in trip_dir.iterdir() if d.is_dir()]
    if subdirs:
        for d in sorted(subdirs):
            files = sorted(d.glob("*.csv"))
            if files:
                out[d.name] = files
    else:
        files = sorted(trip_dir.glob("*.csv"))
        if files:
            out[trip_dir.name] = files
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_preprocess(args, cfg: GlobalConfig) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else cfg.report_dir / "profiles"
    failures = 0
    for path in map(Path, args.trips):
        raw = parse_trip_file(path, cfg.columns or None)
        try:
            profile = preprocess_trip(raw, cfg.preprocess)
        except PreprocessError as exc:
            failures += 1
            best = "" if exc.best_error_m is None else f" (best {exc.best_error_m:.0f} m)"
            print(f"{path.name}: FAILED {exc}{best}")
            continue
        write_profile_file(profile, out_dir / f"{path.stem}.profile.csv")
        print(
            f"{path.name}: ok  error={profile.distance_error_m:+.1f} m  "
            f"iterations={profile.iterations}  epsilon={profile.epsilon:.4f}"
        )
    if failures and not args.keep_failed:
        print(f"{failures} trip(s) failed the distance criterion", file=sys.stderr)
        return 1
    return 0


def _cmd_run_trip(args, cfg: GlobalConfig) -> int:
    path = Path(args.trip)
    vehicle_id = args.vehicle_id or path.stem
    profile = load_profile(path, cfg, args.profile, vehicle_id=vehicle_id)
    params = cfg.vehicle_params(vehicle_id)
    if args.lset is not None:
        l_set = args.lset
    else:
        store = PosteriorStore(cfg.posterior_dir, cfg.prior)
        l_set = bayes.predict_lset(store.load(vehicle_id), cfg.confidence)
        print(f"setpoint from posterior: {l_set:.1f} mi")
    comparison, base, tuned = compare_trip(
        profile, params, l_set_bayes=l_set,
        l_set_baseline=cfg.baseline_l_set, cfg=cfg.search,
    )
    print(f"trip {comparison.trip_id}: {comparison.distance_mi:.1f} mi")
    print(f"  baseline l_set={cfg.baseline_l_set:.0f}: "
          f"fuel {comparison.fuel_baseline_l:.2f} L, MPGe {comparison.mpge_baseline:.1f}")
    print(f"  tuned    l_set={l_set:.1f}: "
          f"fuel {comparison.fuel_bayes_l:.2f} L, MPGe {comparison.mpge_bayes:.1f}")
    print(f"  fuel reduction {comparison.fuel_reduction_pct:.1f}%, "
          f"min SOC {comparison.min_soc_bayes:.1f}%")
    out = Path(args.out_dir) if args.out_dir else cfg.report_dir
    write_soc_trace(out / f"soc_trace_{vehicle_id}.csv", base, tuned)
    write_engine_trace(out / f"engine_trace_{vehicle_id}.csv", base, tuned)
    return 0


def _cmd_best_lset(args, cfg: GlobalConfig) -> int:
    path = Path(args.trip)
    profile = load_profile(path, cfg, args.profile)
    params = cfg.vehicle_params(profile.vehicle_id)
    result = best_lset(profile, params, cfg.search)
    if result.engine_needed:
        print(f"best l_set: {result.l_set:.2f} mi (min SOC {result.min_soc:.2f}%, "
              f"{result.evaluations} simulations"
              + (", grid fallback" if result.fallback_grid else "") + ")")
    else:
        print(f"engine not needed: battery-only minimum SOC {result.min_soc:.2f}%")
    return 0


def _cmd_sweep(args, cfg: GlobalConfig) -> int:
    path = Path(args.trip)
    profile = load_profile(path, cfg, args.profile)
    params = cfg.vehicle_params(profile.vehicle_id)
    if args.lsets:
        values = [float(x) for x in args.lsets.split(",")]
    else:
        lo, hi, step = args.range
        values = list(np.arange(lo, hi + 1e-9, step))
    entries = fuel_vs_lset(profile, params, values, cfg.search)
    for e in entries:
        if e.error:
            print(f"l_set {e.l_set:7.1f}: ERROR {e.error}")
        else:
            print(f"l_set {e.l_set:7.1f}: fuel {e.fuel_l:7.3f} L   "
                  f"min SOC {e.min_soc:5.1f}%")
    out = Path(args.out_dir) if args.out_dir else cfg.report_dir
    write_fuel_sweep(out / f"fuel_sweep_{path.stem}.csv", entries)
    return 0


def _cmd_observe(args, cfg: GlobalConfig) -> int:
    path = Path(args.trip)
    profile = load_profile(path, cfg, args.profile, vehicle_id=args.vehicle)
    params = cfg.vehicle_params(args.vehicle)
    store = PosteriorStore(cfg.posterior_dir, cfg.prior)
    outcome = observe_profile(profile, args.vehicle, store, params, cfg)
    kind = "distance lower bound" if outcome.lower_bound else "best setpoint"
    print(f"{args.vehicle}: observed {kind} {outcome.observation:.2f} mi "
          f"(trip min SOC {outcome.min_soc:.1f}%)")
    print(f"  trips seen: {outcome.n_trips}")
    print(f"  next-trip setpoint: {outcome.prediction:.2f} mi")
    return 0


def _cmd_predict(args, cfg: GlobalConfig) -> int:
    store = PosteriorStore(cfg.posterior_dir, cfg.prior)
    state = store.load(args.vehicle)
    prediction = bayes.predict_lset(state, cfg.confidence)
    print(f"{args.vehicle}: predicted setpoint {prediction:.2f} mi "
          f"(from {state.n_trips} trips)")
    return 0


def _cmd_fit_prior(args, cfg: GlobalConfig) -> int:
    from .trips import read_table

    tab = read_table(Path(args.history))
    if "vehicle_id" not in tab or "best_lset" not in tab:
        raise ErevTuneError("history file needs vehicle_id and best_lset columns")
    histories: dict[str, list[float]] = {}
    for vid, val in zip(tab["vehicle_id"], tab["best_lset"]):
        histories.setdefault(str(vid), []).append(float(val))
    result = bayes.fit_prior(histories, baseline=args.baseline)
    spec = result.spec
    print(f"fitted prior (mean gap {result.mean_gap:.2f} mi, "
          f"{result.n_feasible} feasible grid points):")
    print(f"  mu0: {spec.mu0}")
    print(f"  n_mu0: {spec.n_mu0}")
    print(f"  lambda0: {spec.lambda0}")
    print(f"  n_lambda0: {spec.n_lambda0}")
    print(f"  initial prediction: {result.initial_prediction:.1f} mi")
    return 0


def _cmd_gen_fleet(args, cfg: GlobalConfig) -> int:
    artifacts = ArtifactSpec() if args.degrade else CLEAN
    spec = SyntheticFleetSpec(
        n_vehicles=args.vehicles,
        trips_per_vehicle=args.trips,
        mean_distance_mi=tuple(args.mean_range),
        std_distance_mi=tuple(args.std_range),
        energy_intensity_kwh_mi=tuple(args.intensity_range),
        seed=args.seed,
        artifacts=artifacts,
    )
    recording = None
    if args.record is not None:
        recording = (cfg.vehicle, args.record[0], args.record[1])
    generated = generate_fleet(spec, out_dir=args.out_dir, recording=recording)
    print(f"wrote {len(generated)} trips for {spec.n_vehicles} vehicles "
          f"under {args.out_dir}")
    return 0


def _cmd_report(args, cfg: GlobalConfig) -> int:
    trips = discover_vehicle_trips(Path(args.trip_dir))
    if not trips:
        raise ErevTuneError(f"no trip files found under {args.trip_dir}")
    out_dir = Path(args.out_dir) if args.out_dir else cfg.report_dir
    agg = run_fleet_report(trips, cfg, out_dir=out_dir, is_profile=args.profile).aggregate
    print(f"fleet report over {agg.n_trips} trips, {len(agg.per_vehicle)} vehicles")
    print(f"  fuel: baseline {agg.total_fuel_baseline_l:.1f} L -> "
          f"tuned {agg.total_fuel_bayes_l:.1f} L "
          f"({agg.fuel_reduction_pct:.1f}% weighted reduction)")
    print(f"  mean per-trip fuel reduction: {agg.mean_trip_fuel_reduction_pct:.1f}%")
    print(f"  mean MPGe improvement: {agg.avg_mpge_improvement_pct:.1f}%")
    for vid, row in sorted(agg.per_vehicle.items()):
        print(f"  {vid}: {row['n_trips']:.0f} trips, "
              f"fuel reduction {row['weighted_fuel_reduction_pct']:.1f}%, "
              f"MPGe +{row['avg_mpge_improvement_pct']:.1f}%")
    print(f"  plot data written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erevtune",
        description="Tune the thermostatic range-extender setpoint from trip data.",
    )
    parser.add_argument("-c", "--config", help="path to the YAML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="reconstruct 1 Hz profiles from raw trips")
    p.add_argument("trips", nargs="+")
    p.add_argument("--out-dir")
    p.add_argument("--keep-failed", action="store_true",
                   help="exit 0 even if some trips fail the distance criterion")
    p.set_defaults(fn=_cmd_preprocess)

    p = sub.add_parser("run-trip", help="simulate one trip, tuned vs baseline")
    p.add_argument("trip")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lset", type=float, help="setpoint in miles")
    group.add_argument("--from-posterior", action="store_true")
    p.add_argument("--vehicle-id")
    p.add_argument("--profile", action="store_true",
                   help="input is an already reconstructed profile file")
    p.add_argument("--out-dir")
    p.set_defaults(fn=_cmd_run_trip)

    p = sub.add_parser("best-lset", help="find the trip's best setpoint")
    p.add_argument("trip")
    p.add_argument("--profile", action="store_true")
    p.set_defaults(fn=_cmd_best_lset)

    p = sub.add_parser("sweep", help="fuel use across a range of setpoints")
    p.add_argument("trip")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lsets", help="comma-separated setpoints, miles")
    group.add_argument("--range", nargs=3, type=float,
                       metavar=("LO", "HI", "STEP"))
    p.add_argument("--profile", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("observe", help="fold a finished trip into the posterior")
    p.add_argument("vehicle")
    p.add_argument("trip")
    p.add_argument("--profile", action="store_true")
    p.set_defaults(fn=_cmd_observe)

    p = sub.add_parser("predict", help="next-trip setpoint for a vehicle")
    p.add_argument("vehicle")
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("fit-prior", help="design prior parameters from fleet history")
    p.add_argument("history", help="CSV with vehicle_id and best_lset columns")
    p.add_argument("--baseline", type=float, default=100.0)
    p.set_defaults(fn=_cmd_fit_prior)

    p = sub.add_parser("gen-fleet", help="generate synthetic delivery trips")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--vehicles", type=int, default=5)
    p.add_argument("--trips", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean-range", nargs=2, type=float, default=[35.0, 65.0])
    p.add_argument("--std-range", nargs=2, type=float, default=[3.0, 8.0])
    p.add_argument("--intensity-range", nargs=2, type=float, default=[0.55, 0.85])
    p.add_argument("--degrade", action="store_true",
                   help="inject telemetry artifacts (0.2 Hz, dropouts, latency)")
    p.add_argument("--record", nargs=2, type=float, metavar=("LSET", "SOC0"),
                   help="embed recorded SOC/engine channels from a simulation")
    p.set_defaults(fn=_cmd_gen_fleet)

    p = sub.add_parser("report", help="fleet-wide tuned-vs-baseline report")
    p.add_argument("trip_dir")
    p.add_argument("--out-dir")
    p.add_argument("--profile", action="store_true")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.fn(args, cfg)
    except ErevTuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
