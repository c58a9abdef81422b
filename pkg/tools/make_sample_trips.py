#!/usr/bin/env python3
"""Regenerate the bundled sample trips under data/sample_trips/.

Eight delivery trips of one van, recorded by simulating a reference vehicle
(whose parameters intentionally differ from the library defaults) under the
production setpoint, then degraded to raw 0.2 Hz telemetry: missing cells,
stale odometer readings, zero-speed dropouts, and quantized/noisy SOC.
The test suite calibrates against these files blind; keep the reference
parameters out of the package.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from erevtune.ems import EmsConfig, ThermostatController
from erevtune.fleetgen import ArtifactSpec, battery_channels, degrade_profile, synth_profile
from erevtune.trips import write_trip_file
from erevtune.vehicle import VehicleParams, simulate_trip

OUT_DIR = Path(__file__).resolve().parent.parent / "data" / "sample_trips"

# Reference vehicle: heavier and slightly more efficient than the defaults.
TRUE_PARAMS = VehicleParams(m=7300.0, eta_btw=0.875)

PRODUCTION_L_SET = 100.0

ARTIFACTS = ArtifactSpec(
    sample_period_s=5.0,
    p_missing_v=0.001,
    p_missing_soc=0.01,
    dropout_rate_per_hour=0.5,
    dropout_len_s=(60.0, 150.0),
    latency_rate_per_hour=2.0,
    soc_quant_pct=0.5,
    soc_noise_pct=0.2,
)

TRIPS = [
    # (seed, distance_mi, intensity_kwh_mi, initial_soc)
    (101, 28.0, 0.62, 97.0),
    (102, 35.0, 0.70, 100.0),
    (103, 42.0, 0.75, 98.5),
    (104, 31.0, 0.66, 96.0),
    (105, 49.0, 0.72, 100.0),
    (106, 38.0, 0.80, 99.0),
    (107, 55.0, 0.68, 100.0),
    (108, 45.0, 0.78, 97.5),
]


def main() -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    controller = ThermostatController(EmsConfig(l_set=PRODUCTION_L_SET))
    for i, (seed, dist, intensity, soc0) in enumerate(TRIPS, start=1):
        rng = np.random.default_rng(seed)
        truth = synth_profile(rng, dist, intensity, TRUE_PARAMS,
                              vehicle_id="sample-van-1")
        sim = simulate_trip(truth, controller, soc0, TRUE_PARAMS)
        v_batt, i_batt = battery_channels(truth, sim, TRUE_PARAMS)
        raw = degrade_profile(
            rng, truth, ARTIFACTS,
            soc=sim.soc, engine_on=sim.engine_on, v_batt=v_batt, i_batt=i_batt,
        )
        path = OUT_DIR / f"trip_{i:02d}.csv"
        write_trip_file(raw, path)
        print(f"{path.name}: {dist:.0f} mi, {truth.n_steps} s, "
              f"engine on {sim.engine_seconds:.0f} s, "
              f"SOC {soc0:.0f} -> {sim.final_soc:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
