from pathlib import Path

import numpy as np
import pytest

from erevtune.fleetgen import synth_profile
from erevtune.preprocess import preprocess_trip
from erevtune.trips import parse_trip_file
from erevtune.vehicle import VehicleParams

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "sample_trips"


@pytest.fixture(scope="session")
def params() -> VehicleParams:
    return VehicleParams()


@pytest.fixture(scope="session")
def sample_trip_paths() -> list[Path]:
    paths = sorted(DATA_DIR.glob("trip_*.csv"))
    assert len(paths) == 8, "bundled sample trips missing; run tools/make_sample_trips.py"
    return paths


@pytest.fixture(scope="session")
def sample_trips(sample_trip_paths):
    return [parse_trip_file(p) for p in sample_trip_paths]


@pytest.fixture(scope="session")
def sample_profiles(sample_trips):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [preprocess_trip(t) for t in sample_trips]


@pytest.fixture(scope="session")
def heavy_profile(params):
    """A long, energy-hungry trip whose best setpoint is well defined."""
    rng = np.random.default_rng(2024)
    return synth_profile(rng, 80.0, 0.8, params, vehicle_id="heavy")


@pytest.fixture(scope="session")
def light_profile(params):
    """A short trip the battery covers alone."""
    rng = np.random.default_rng(2025)
    return synth_profile(rng, 18.0, 0.6, params, vehicle_id="light")
