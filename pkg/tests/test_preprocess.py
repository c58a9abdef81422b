import math
import warnings

import numpy as np
import pytest

from erevtune.errors import PreprocessError, TripValidationError
from erevtune.preprocess import (
    PreprocessConfig,
    TripProfile,
    correct_and_rescale,
    fill_missing,
    gaussian_smooth,
    interpolate_1hz,
    preprocess_trip,
    read_profile_file,
    velocity_from_distance,
    write_profile_file,
)
from erevtune.trips import RawSample, RawTrip


def make_trip(t, v, d, period=5.0, **extra):
    samples = tuple(
        RawSample(ti, vi, di, extra.get("soc", [None] * len(t))[i],
                  extra.get("engine", [None] * len(t))[i])
        for i, (ti, vi, di) in enumerate(zip(t, v, d))
    )
    return RawTrip("test", samples, period)


class TestFillMissing:
    def test_velocity_zero_filled(self):
        trip = make_trip([0, 5, 10], [1.0, None, 2.0], [0.0, 5.0, 15.0])
        filled = fill_missing(trip)
        assert [s.v for s in filled.samples] == [1.0, 0.0, 2.0]

    def test_distance_forward_filled(self):
        trip = make_trip([0, 5, 10], [0.0, 0.0, 0.0], [10.0, None, None])
        filled = fill_missing(trip)
        assert [s.d for s in filled.samples] == [10.0, 10.0, 10.0]

    def test_leading_missing_distance_becomes_zero(self):
        trip = make_trip([0, 5], [0.0, 1.0], [None, 12.0])
        assert fill_missing(trip).samples[0].d == 0.0

    def test_no_missing_is_identity(self):
        trip = make_trip([0, 5, 10], [0.0, 1.0, 2.0], [0.0, 5.0, 12.0])
        assert fill_missing(trip) == trip

    def test_idempotent(self):
        trip = make_trip([0, 5, 10], [1.0, None, 2.0], [0.0, None, 15.0])
        once = fill_missing(trip)
        assert fill_missing(once) == once


class TestInterpolate:
    def test_linear_ramp(self):
        trip = make_trip([0, 5], [0.0, 5.0], [0.0, 12.5])
        v, d = interpolate_1hz(trip)
        assert v.tolist() == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]

    def test_constant_distance(self):
        trip = make_trip([0, 5, 10], [0.0, 0.0, 0.0], [100.0, 100.0, 100.0])
        _, d = interpolate_1hz(trip)
        assert np.all(d == 100.0)

    def test_midpoint_between_samples(self):
        trip = make_trip([0, 5, 10], [0.0, 10.0, 0.0], [0.0, 25.0, 50.0])
        v, _ = interpolate_1hz(trip)
        # hand interpolation: descending leg, 2/5 of the way from 10 to 0
        assert v[7] == pytest.approx(10.0 + (0.0 - 10.0) * 2.0 / 5.0)

    def test_output_length(self):
        trip = make_trip([0, 5, 9.6], [0.0, 1.0, 0.0], [0.0, 3.0, 6.0])
        v, _ = interpolate_1hz(trip)
        assert len(v) == math.floor(9.6) + 1


class TestGaussianSmooth:
    def test_constant_preserved(self):
        out = gaussian_smooth(np.full(50, 7.25), sigma=3.0)
        np.testing.assert_allclose(out, 7.25, atol=1e-12)

    def test_impulse_mass_preserved(self):
        series = np.zeros(101)
        series[50] = 1.0
        out = gaussian_smooth(series, sigma=3.0)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(11)
        series = rng.uniform(0, 20, 200)
        sigma = 3.0
        out = gaussian_smooth(series, sigma)
        # brute-force O(n*k) convolution with the same edge rule
        radius = int(math.ceil(4 * sigma))
        weights = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
        weights /= weights.sum()
        expected = np.empty_like(series)
        for i in range(len(series)):
            acc = 0.0
            for k, w in zip(range(-radius, radius + 1), weights):
                j = min(max(i + k, 0), len(series) - 1)
                acc += w * series[j]
            expected[i] = acc
        np.testing.assert_allclose(out, expected, atol=1e-9)

    def test_step_becomes_monotone_transition(self):
        series = np.concatenate([np.zeros(60), np.full(60, 10.0)])
        out = gaussian_smooth(series, sigma=3.0)
        assert np.all(np.diff(out) >= -1e-12)
        assert out[0] == pytest.approx(0.0, abs=1e-9)
        assert out[-1] == pytest.approx(10.0, abs=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 5, 150)
        y = rng.uniform(0, 5, 150)
        lhs = gaussian_smooth(2.5 * x + 0.5 * y, 3.0)
        rhs = 2.5 * gaussian_smooth(x, 3.0) + 0.5 * gaussian_smooth(y, 3.0)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            gaussian_smooth(np.array([]), 3.0)


class TestVelocityFromDistance:
    def test_linear_distance(self):
        v = velocity_from_distance(np.array([0.0, 1.0, 2.0, 3.0]), dt=1.0)
        assert v.tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_constant_distance(self):
        v = velocity_from_distance(np.full(10, 42.0), dt=1.0)
        assert np.all(v == 0.0)

    def test_exact_for_quadratic(self):
        t = np.arange(20, dtype=float)
        v = velocity_from_distance(t**2, dt=1.0)
        np.testing.assert_allclose(v[1:-1], 2 * t[1:-1], atol=1e-9)

    def test_needs_three_points(self):
        with pytest.raises(TripValidationError):
            velocity_from_distance(np.array([0.0, 1.0]), dt=1.0)


class TestCorrectAndRescale:
    def test_already_consistent_single_iteration(self):
        v = np.concatenate([[0.0], np.full(98, 10.0), [0.0]])
        d = np.cumsum(np.concatenate([[0.0], (v[1:] + v[:-1]) / 2]))
        profile = correct_and_rescale(v, d, raw_final_distance=980.0,
                                      cfg=PreprocessConfig())
        assert profile.epsilon == 1.0
        assert profile.iterations == 1

    def test_scales_zeroed_window_to_match_distance(self):
        # 1000 s at 10 m/s with a 120 s sensor dropout; the smoothed distance
        # still carries the motion, so the corrected profile must land within
        # tolerance of the true 10 km.
        n = 1000
        v_true = np.full(n, 10.0)
        v_true[0] = v_true[-1] = 0.0
        d_true = np.cumsum(np.concatenate([[0.0], (v_true[1:] + v_true[:-1]) / 2]))
        v_meas = v_true.copy()
        v_meas[400:520] = 0.0
        cfg = PreprocessConfig()
        v_s = gaussian_smooth(v_meas, cfg.sigma_velocity)
        d_s = gaussian_smooth(d_true, cfg.sigma_distance)
        profile = correct_and_rescale(v_s, d_s, d_true[-1], cfg)
        assert abs(profile.distance_m - d_true[-1]) < cfg.distance_tolerance_m

    def test_epsilon_matches_closed_form_root(self):
        # Synthetic case built so the affine error has its root at 2.0: the
        # fixed part integrates to 8800 m, the correctable window to 600 m,
        # against a true distance of 10 km.
        n = 1100
        v_smooth = np.full(n, 8.0)
        v_smooth[0] = v_smooth[-1] = 0.0
        window = slice(500, 600)
        v_smooth[window] = 0.0
        fixed = np.trapezoid(v_smooth)
        d_for_window = np.cumsum(v_smooth)
        d_for_window[window] = d_for_window[499] + 6.0 * np.arange(1, 101)
        d_for_window[600:] += d_for_window[599] - d_for_window[600] + 8.0
        window_mass = 6.0 * 100
        true_distance = fixed + 2.0 * window_mass
        cfg = PreprocessConfig()
        profile = correct_and_rescale(
            v_smooth, np.asarray(d_for_window, dtype=float), true_distance, cfg
        )
        # scalar-root oracle on the affine error function
        expected_eps = (true_distance - fixed) / window_mass
        assert 1.5 <= profile.epsilon <= 2.5
        assert profile.epsilon == pytest.approx(expected_eps, abs=5e-3)

    def test_unfixable_mismatch_raises_with_best_error(self):
        v = np.concatenate([[0.0], np.full(98, 10.0), [0.0]])
        d = np.cumsum(np.concatenate([[0.0], (v[1:] + v[:-1]) / 2]))
        with pytest.raises(PreprocessError) as err:
            correct_and_rescale(v, d, raw_final_distance=5000.0,
                                cfg=PreprocessConfig())
        assert err.value.best_error_m is not None
        assert err.value.best_error_m == pytest.approx(980.0 - 5000.0, abs=1.0)


class TestPreprocessTrip:
    def test_clean_synthetic_trip_roundtrips(self, params):
        from erevtune.fleetgen import synth_profile

        rng = np.random.default_rng(3)
        truth = synth_profile(rng, 12.0, 0.65, params, vehicle_id="clean")
        t = np.arange(truth.n_steps, dtype=float)
        trip = RawTrip(
            "clean",
            tuple(
                RawSample(t=float(ti), v=float(vi), d=float(di))
                for ti, vi, di in zip(t, truth.v, truth.d)
            ),
            1.0,
        )
        profile = preprocess_trip(trip)
        n = min(profile.n_steps, truth.n_steps)
        assert np.max(np.abs(profile.v[:n] - truth.v[:n])) < 0.5
        assert abs(profile.distance_m - truth.distance_m) < 500.0
        # a clean trip needs no rescaling and keeps plausible dynamics
        assert profile.epsilon == 1.0
        assert np.max(np.abs(np.diff(profile.v))) <= 5.0

    def test_sample_trips_meet_distance_criterion(self, sample_trips):
        for trip in sample_trips:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                profile = preprocess_trip(trip)
            raw_d = [s.d for s in trip.samples if s.d is not None]
            raw_final = raw_d[-1] - raw_d[0]
            assert abs(profile.distance_m - raw_final) < 500.0
            assert np.all(profile.v >= 0)
            assert profile.v[0] == 0.0 and profile.v[-1] == 0.0
            assert np.all(np.diff(profile.d) >= -1e-9)

    def test_parked_vehicle(self):
        trip = make_trip([0, 5, 10, 15], [0.0] * 4, [0.0] * 4)
        profile = preprocess_trip(trip)
        assert np.all(profile.v == 0.0)
        assert profile.epsilon == 1.0
        assert profile.iterations == 1

    def test_recorded_channels_ride_along(self):
        trip = make_trip(
            [0, 5, 10], [0.0, 2.0, 0.0], [0.0, 5.0, 10.0],
            soc=[90.0, None, 88.0], engine=[False, None, True],
        )
        profile = preprocess_trip(trip)
        assert profile.soc_recorded is not None
        assert profile.soc_recorded[0] == 90.0
        assert profile.soc_recorded[5] == pytest.approx(89.0)
        assert profile.engine_on_recorded is not None
        # previous-value hold across the missing middle sample
        assert not profile.engine_on_recorded[7]
        assert profile.engine_on_recorded[10]

    def test_missing_distance_channel_rejected(self):
        trip = make_trip([0, 5], [0.0, 1.0], [None, None])
        with pytest.raises(TripValidationError):
            preprocess_trip(trip)


class TestProfileIO:
    def test_roundtrip(self, tmp_path, sample_profiles):
        profile = sample_profiles[0]
        path = tmp_path / "p.csv"
        write_profile_file(profile, path)
        again = read_profile_file(path, vehicle_id=profile.vehicle_id)
        np.testing.assert_allclose(again.v, profile.v)
        np.testing.assert_allclose(again.d, profile.d)
        np.testing.assert_allclose(again.soc_recorded, profile.soc_recorded)
        assert np.array_equal(again.engine_on_recorded,
                              profile.engine_on_recorded)


class TestProfileInvariants:
    def test_nonzero_boundary_rejected(self):
        with pytest.raises(TripValidationError):
            TripProfile("x", 1.0, np.array([1.0, 0.0]), np.array([0.0, 0.5]))

    def test_negative_velocity_rejected(self):
        with pytest.raises(TripValidationError):
            TripProfile("x", 1.0, np.array([0.0, -1.0, 0.0]),
                        np.array([0.0, 0.0, 0.0]))

    def test_decreasing_distance_rejected(self):
        with pytest.raises(TripValidationError):
            TripProfile("x", 1.0, np.array([0.0, 1.0, 0.0]),
                        np.array([0.0, 1.0, 0.5]))
