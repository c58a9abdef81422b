"""Trip-data driven tuning of a thermostatic range-extender setpoint.

The package reconstructs low-rate delivery-vehicle telemetry into clean
1 Hz profiles, replays them through a simplified powertrain model to find
the setpoint that lands the minimum state of charge on target, tracks each
vehicle's best setpoint with a conjugate online estimator, and predicts a
conservative setpoint for the next trip.
"""

from .bayes import (
    PosteriorState,
    PriorSpec,
    StudentT,
    batch_posterior,
    fit_prior,
    init_state,
    predict_lset,
    predictive,
    t_cdf,
    update,
)
from .config import GlobalConfig, load_config
from .ems import EmsConfig, ThermostatController, soc_ref, thermostat_decide
from .errors import ErevTuneError
from .fleetgen import ArtifactSpec, SyntheticFleetSpec, generate_fleet, synth_profile
from .metrics import TripComparison, compare_trip, fleet_report, mpge
from .optimize import BestLsetResult, LsetSearchConfig, best_lset, fuel_vs_lset
from .preprocess import PreprocessConfig, TripProfile, preprocess_trip
from .store import PosteriorStore
from .trips import RawSample, RawTrip, parse_trip_file, trip_summary, write_trip_file
from .vehicle import SimResult, VehicleParams, calibrate_params, simulate_trip

__version__ = "0.1.0"

__all__ = [
    "ArtifactSpec",
    "BestLsetResult",
    "EmsConfig",
    "ErevTuneError",
    "GlobalConfig",
    "LsetSearchConfig",
    "PosteriorState",
    "PosteriorStore",
    "PreprocessConfig",
    "PriorSpec",
    "RawSample",
    "RawTrip",
    "SimResult",
    "StudentT",
    "SyntheticFleetSpec",
    "ThermostatController",
    "TripComparison",
    "TripProfile",
    "VehicleParams",
    "batch_posterior",
    "best_lset",
    "calibrate_params",
    "compare_trip",
    "fit_prior",
    "fleet_report",
    "fuel_vs_lset",
    "generate_fleet",
    "init_state",
    "load_config",
    "mpge",
    "parse_trip_file",
    "predict_lset",
    "predictive",
    "preprocess_trip",
    "simulate_trip",
    "soc_ref",
    "synth_profile",
    "t_cdf",
    "thermostat_decide",
    "trip_summary",
    "update",
    "write_trip_file",
]
