import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from erevtune.bayes import (
    PriorInfeasibleError,
    PriorSpec,
    StudentT,
    batch_posterior,
    check_prior_feasible,
    fit_prior,
    init_state,
    predict_lset,
    predictive,
    t_cdf,
    update,
)

PRIOR = PriorSpec()  # mu0 74, 5 pseudo samples; precision 0.01 from 50


class TestPriorMapping:
    def test_interpretable_to_natural_parameters(self):
        assert PRIOR.kappa0 == 5.0
        assert PRIOR.a0 == 25.0
        assert PRIOR.b0 == 2500.0

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorSpec(mu0=-1.0)


class TestInitState:
    def test_matches_prior(self):
        state = init_state(PRIOR, "van")
        assert (state.mu, state.kappa, state.a, state.b) == (74.0, 5.0, 25.0, 2500.0)
        assert state.n_trips == 0

    def test_fresh_state_predictive_is_prior_predictive(self):
        dist = predictive(init_state(PRIOR, "van"))
        assert (dist.dof, dist.loc, dist.scale2) == (50.0, 74.0, 120.0)

    def test_two_vehicles_identical_but_for_id(self):
        a = init_state(PRIOR, "a")
        b = init_state(PRIOR, "b")
        assert (a.mu, a.kappa, a.a, a.b) == (b.mu, b.kappa, b.a, b.b)
        assert a.vehicle_id != b.vehicle_id


class TestUpdate:
    def test_observation_at_the_mean_leaves_mu_and_b(self):
        state = update(init_state(PRIOR, "v"), 74.0)
        assert state.mu == 74.0
        assert state.b == 2500.0
        assert state.kappa == 6.0
        assert state.a == 25.5
        assert state.n_trips == 1

    def test_low_observation_hand_arithmetic(self):
        state = update(init_state(PRIOR, "v"), 40.0)
        assert state.mu == pytest.approx((5 * 74 + 40) / 6)
        assert state.b == pytest.approx(2500 + (5 / 12) * (40 - 74) ** 2)
        assert state.b == pytest.approx(2981.6667, abs=1e-3)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            update(init_state(PRIOR, "v"), 0.0)

    def test_pseudo_count_bookkeeping(self):
        state = init_state(PRIOR, "v")
        for i, x in enumerate([50.0, 80.0, 64.0], start=1):
            state = update(state, x)
            assert state.kappa == PRIOR.kappa0 + i
            assert 2 * state.a == 2 * PRIOR.a0 + i

    def test_sequence_equals_batch(self):
        obs = [60.0, 80.0, 45.5, 91.0, 72.25]
        seq = init_state(PRIOR, "v")
        for x in obs:
            seq = update(seq, x)
        batch = batch_posterior(PRIOR, obs, "v")
        for field in ("mu", "kappa", "a", "b"):
            assert getattr(seq, field) == pytest.approx(
                getattr(batch, field), rel=1e-9
            )

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(1.0, 300.0), min_size=1, max_size=30))
    def test_exchangeable(self, obs):
        fwd = init_state(PRIOR, "v")
        rev = init_state(PRIOR, "v")
        for x in obs:
            fwd = update(fwd, x)
        for x in reversed(obs):
            rev = update(rev, x)
        for field in ("mu", "kappa", "a", "b"):
            assert getattr(fwd, field) == pytest.approx(
                getattr(rev, field), rel=1e-9
            )


class TestBatchPosterior:
    def test_empty_equals_init(self):
        assert batch_posterior(PRIOR, [], "v") == init_state(PRIOR, "v")

    def test_constant_observations_at_prior_mean(self):
        state = batch_posterior(PRIOR, [74.0] * 10, "v")
        assert state.mu == 74.0
        assert state.b == 2500.0

    def test_two_observations(self):
        state = batch_posterior(PRIOR, [60.0, 80.0], "v")
        assert state.mu == pytest.approx((5 * 74 + 2 * 70) / 7)
        seq = update(update(init_state(PRIOR, "v"), 60.0), 80.0)
        assert state.b == pytest.approx(seq.b, rel=1e-12)


class TestPredictive:
    def test_prior_predictive_parameters(self):
        dist = predictive(init_state(PRIOR, "v"))
        assert dist.dof == 50.0
        assert dist.loc == 74.0
        assert dist.scale2 == pytest.approx(2500 * 6 / (25 * 5))

    def test_location_converges_to_sample_mean(self):
        rng = np.random.default_rng(100)
        data = rng.normal(52.0, 8.0, size=10_000)
        data = np.clip(data, 1.0, None)
        state = batch_posterior(PRIOR, data.tolist(), "v")
        assert predictive(state).loc == pytest.approx(float(data.mean()), abs=0.5)

    def test_scale_always_positive(self):
        state = batch_posterior(PRIOR, [74.0] * 500, "v")
        assert predictive(state).scale2 > 0


def _t_pdf(z, dof):
    c = special.gamma((dof + 1) / 2) / (
        math.sqrt(dof * math.pi) * special.gamma(dof / 2)
    )
    return c * (1 + z * z / dof) ** (-(dof + 1) / 2)


class TestTCdf:
    def test_median(self):
        dist = StudentT(dof=50.0, loc=74.0, scale2=120.0)
        assert t_cdf(74.0, dist) == pytest.approx(0.5, abs=1e-12)

    def test_limits(self):
        dist = StudentT(dof=10.0, loc=0.0, scale2=1.0)
        assert t_cdf(1e9, dist) == pytest.approx(1.0, abs=1e-9)
        assert t_cdf(-1e9, dist) == pytest.approx(0.0, abs=1e-9)

    def test_t_table_value(self):
        # two-sided 95% critical value of t with 50 degrees of freedom
        dist = StudentT(dof=50.0, loc=0.0, scale2=1.0)
        assert t_cdf(2.009, dist) == pytest.approx(0.975, abs=5e-4)

    def test_against_density_quadrature(self):
        dist = StudentT(dof=13.0, loc=3.0, scale2=4.0)
        for x in (-2.0, 1.0, 3.0, 5.5, 11.0):
            z = (x - dist.loc) / dist.scale
            expected, _ = integrate.quad(_t_pdf, -np.inf, z, args=(dist.dof,))
            assert t_cdf(x, dist) == pytest.approx(expected, abs=1e-8)

    def test_vectorized(self):
        dist = StudentT(dof=20.0, loc=0.0, scale2=1.0)
        xs = np.array([-1.0, 0.0, 1.0])
        out = t_cdf(xs, dist)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(0.5)


class TestPredictLset:
    def test_initial_prediction_near_hundred_miles(self):
        pred = predict_lset(init_state(PRIOR, "v"), 0.99)
        assert 95.0 <= pred <= 105.0
        # cross-check against the closed-form quantile composition
        dist = predictive(init_state(PRIOR, "v"))
        from scipy import stats

        expected = dist.loc + stats.t.ppf(0.99, dist.dof) * dist.scale
        assert pred == pytest.approx(expected, abs=1e-3)

    def test_median_confidence_returns_location(self):
        pred = predict_lset(init_state(PRIOR, "v"), 0.5)
        assert pred == pytest.approx(74.0, abs=1e-6)

    def test_one_low_trip_still_predicts_conservatively(self):
        state = update(init_state(PRIOR, "v"), 40.0)
        pred = predict_lset(state, 0.99)
        assert 93.0 <= pred <= 99.0

    def test_strictly_increasing_in_confidence(self):
        state = update(init_state(PRIOR, "v"), 60.0)
        preds = [predict_lset(state, c) for c in (0.5, 0.8, 0.95, 0.99, 0.999)]
        assert all(b > a for a, b in zip(preds, preds[1:]))

    def test_cdf_of_prediction_recovers_confidence(self):
        state = update(update(init_state(PRIOR, "v"), 55.0), 88.0)
        dist = predictive(state)
        for c in (0.9, 0.99):
            assert t_cdf(predict_lset(state, c), dist) == pytest.approx(c, abs=1e-6)

    def test_confidence_bounds_validated(self):
        with pytest.raises(ValueError):
            predict_lset(init_state(PRIOR, "v"), 1.0)


class TestRobustness:
    def test_posterior_mean_shifts_less_than_sample_mean(self):
        rng = np.random.default_rng(9)
        obs = rng.normal(70.0, 6.0, size=20).clip(min=1.0).tolist()
        state = batch_posterior(PRIOR, obs, "v")
        outlier = 5.0
        shifted = update(state, outlier)
        mean_shift = abs(
            np.mean(obs + [outlier]) - np.mean(obs)
        )
        posterior_shift = abs(shifted.mu - state.mu)
        assert posterior_shift < mean_shift


def make_fleet(rng, n_vehicles=20, n_trips=30, mu_range=(35, 70), sd_range=(4, 7)):
    fleet = {}
    for i in range(n_vehicles):
        mu = rng.uniform(*mu_range)
        sd = rng.uniform(*sd_range)
        fleet[f"veh-{i:02d}"] = rng.normal(mu, sd, n_trips).clip(min=5.0).tolist()
    return fleet


class TestFitPrior:
    def test_degenerate_single_vehicle(self):
        result = fit_prior({"only": [74.0] * 10}, baseline=100.0)
        ok, miss = check_prior_feasible(result.spec, {"only": [74.0] * 10})
        assert ok
        assert abs(result.initial_prediction - 100.0) <= 5.0

    def test_synthetic_fleet_constraints_hold(self):
        rng = np.random.default_rng(77)
        fleet = make_fleet(rng)
        result = fit_prior(fleet)
        ok, miss_rate = check_prior_feasible(result.spec, fleet)
        assert ok, f"fitted prior missed {miss_rate:.2%} of trips"
        assert result.mean_gap > 0

    def test_default_prior_feasible_on_fleet(self):
        rng = np.random.default_rng(78)
        fleet = make_fleet(rng)
        ok, miss_rate = check_prior_feasible(PriorSpec(), fleet)
        assert ok, f"default prior missed {miss_rate:.2%}"

    def test_fitted_gap_not_worse_than_default(self):
        rng = np.random.default_rng(79)
        fleet = make_fleet(rng, n_vehicles=8, n_trips=20)
        result = fit_prior(fleet)
        # mean gap of the default spec, replayed the same way
        total_gap = 0.0
        n = 0
        for vid, history in fleet.items():
            state = init_state(PriorSpec(), vid)
            for x in history:
                total_gap += predict_lset(state, 0.99) - x
                n += 1
                state = update(state, x)
        assert result.mean_gap <= total_gap / n + 1e-9

    def test_infeasible_fleet_reports_vehicles(self):
        fleet = {"good": [60.0, 65.0], "wild": [60.0, 400.0]}
        with pytest.raises(PriorInfeasibleError) as err:
            fit_prior(fleet)
        assert "wild" in err.value.violating_vehicles

    def test_empty_fleet_rejected(self):
        with pytest.raises(ValueError):
            fit_prior({})
