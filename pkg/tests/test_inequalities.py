"""Data-side statistics: residuals, interpolation, visibilities, verdicts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lhvbell.inequalities import (
    RateSeries,
    TwoChannelRates,
    VERDICT_CONSISTENT,
    VERDICT_INCONCLUSIVE,
    VERDICT_VIOLATES,
    analyze,
    bootstrap_sigma_delta_min,
    complete_symmetric,
    correlation_e,
    delta_exp,
    delta_min,
    delta_min_from_fourier,
    delta_min_from_moments,
    fourier_b,
    nonideal_bound,
    s_param,
    sigma_delta_min,
    v_a_from_channels,
    v_fit,
    visibilities,
)
from lhvbell.optimal_model import (
    OptimalModelParams,
    delta_series,
    deviation_d,
    predict_rates,
    v_max,
)
from lhvbell.periodic_math import PERIOD


def cosine_rates(n=16, v=0.9, mean=1.0, extra=None):
    phis = PERIOD * np.arange(1, n + 1) / n
    vals = mean * (1 + v * np.cos(2 * phis))
    if extra is not None:
        vals = vals + extra(phis)
    return RateSeries(vals)


class TestDeltaExp:
    def test_exact_cosine_scores_zero(self):
        assert delta_exp(cosine_rates(), 0.9) == pytest.approx(0.0, abs=1e-14)

    def test_wrong_visibility_leaves_cosine_residual(self):
        # oracle: sqrt(mean of (0.9 cos 2phi)^2) = 0.9/sqrt(2)
        assert delta_exp(cosine_rates(), 0.0) == pytest.approx(0.9 / math.sqrt(2), abs=1e-12)

    def test_model_rates_reach_the_bound(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        assert delta_exp(rates, v_fit(rates)) >= deviation_d(0.2, 0.98) - 1e-12

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError, match="empty data"):
            RateSeries(np.zeros(8))


class TestVFit:
    def test_recovers_visibility(self):
        assert v_fit(cosine_rates(v=0.7)) == pytest.approx(0.7, abs=1e-12)

    def test_higher_harmonics_are_orthogonal(self):
        rates = cosine_rates(v=0.7, extra=lambda p: 0.1 * np.cos(4 * p))
        assert v_fit(rates) == pytest.approx(0.7, abs=1e-12)

    def test_flat_rates_fit_zero(self):
        assert v_fit(RateSeries(np.full(8, 3.0))) == pytest.approx(0.0, abs=1e-15)

    def test_minimizes_delta_exp(self, rng):
        rates = RateSeries(rng.random(16) + 0.2)
        best = v_fit(rates)
        base = delta_exp(rates, best)
        scan = np.linspace(best - 0.3, best + 0.3, 6001)  # 1e-4 grid
        assert all(delta_exp(rates, v) >= base - 1e-12 for v in scan)


class TestDeltaMin:
    def test_cosine_data_scores_zero(self):
        assert delta_min(cosine_rates()) == pytest.approx(0.0, abs=1e-14)

    def test_equals_fitted_residual(self, rng):
        rates = RateSeries(rng.random(12) + 0.1)
        assert delta_min(rates) == delta_exp(rates, v_fit(rates))

    def test_moment_form_identity(self, rng):
        for _ in range(50):
            rates = RateSeries(rng.random(10) + 0.05)
            assert delta_min(rates) == pytest.approx(
                delta_min_from_moments(rates), abs=1e-12
            )

    @staticmethod
    def _symmetric(rng, n):
        # measured curves obey R(phi) = R(pi - phi); the cosine
        # interpolation identities hold on that class
        r = rng.random(n) + 0.1
        r[: n - 1] = 0.5 * (r[: n - 1] + r[: n - 1][::-1])
        return RateSeries(r)

    def test_fourier_form_identity(self, rng):
        for n in (4, 8, 16):
            rates = self._symmetric(rng, n)
            assert delta_min(rates) == pytest.approx(
                delta_min_from_fourier(rates), abs=1e-12
            )

    @given(st.floats(0.01, 1e6))
    @settings(max_examples=40, deadline=None)
    def test_scale_invariance(self, c):
        rates = cosine_rates(v=0.5, extra=lambda p: 0.07 * np.cos(6 * p))
        assert delta_min(rates.scaled(c)) == pytest.approx(delta_min(rates), abs=1e-12)

    def test_four_angle_ratio_identity(self, rng):
        # with the three measured rates R(0), R(pi/4), R(pi/2) completed by
        # symmetry, the statistic collapses to the simple count ratio
        # |R(0) + R(pi/2) - 2 R(pi/4)| / (R(0) + R(pi/2) + 2 R(pi/4))
        for _ in range(100):
            r0, r45, r90 = rng.random(3) + 0.01
            rates = RateSeries([r45, r90, r45, r0])  # pi/4, pi/2, 3pi/4, pi(=0)
            ratio = (r0 + r90 - 2 * r45) / (r0 + r90 + 2 * r45)
            assert delta_min(rates) == pytest.approx(abs(ratio), abs=1e-12)

    def test_model_rates_near_reported_bound(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=32)
        got = delta_min(rates)
        assert got == pytest.approx(deviation_d(0.2, 0.98, "series"), rel=0.01)
        assert got == pytest.approx(8.1e-4, rel=0.25)


class TestFourierB:
    def test_single_harmonic(self):
        b = fourier_b(cosine_rates(v=0.9))
        assert b[0] == pytest.approx(0.9, abs=1e-12)
        assert np.max(np.abs(b[1:])) < 1e-12

    def test_first_coefficient_is_fitted_visibility(self, rng):
        rates = RateSeries(rng.random(16) + 0.1)
        assert fourier_b(rates)[0] == pytest.approx(v_fit(rates), abs=1e-12)

    def test_interpolation_reproduces_data(self, rng):
        rates = TestDeltaMin._symmetric(rng, 12)
        b = fourier_b(rates)
        phis = rates.angles
        recon = np.ones_like(phis)
        for k, bk in enumerate(b, start=1):
            recon = recon + bk * np.cos(2 * k * phis)
        assert np.allclose(recon * rates.rates.mean(), rates.rates, atol=1e-10)

    def test_ideal_quantum_rates_have_no_second_harmonic(self):
        b = fourier_b(cosine_rates(n=4, v=0.9))
        assert abs(b[-1]) < 1e-12

    def test_model_rates_alternate_in_sign(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        b = fourier_b(predict_rates(params, n_angles=16))
        for k in range(2, 6):
            assert np.sign(b[k - 1]) == (-1) ** k
        assert b[1] > 0

    def test_odd_angle_count_rejected(self):
        with pytest.raises(ValueError, match="even n"):
            fourier_b(RateSeries(np.ones(7) + np.cos(2 * PERIOD * np.arange(1, 8) / 7)))


class TestVisibilities:
    def test_ideal_cosine(self):
        vis = visibilities(cosine_rates(n=16, v=0.95))
        assert vis.v_a == pytest.approx(0.95, abs=1e-12)
        assert vis.v_b == pytest.approx(0.95, abs=1e-12)

    def test_rational_identities_in_b(self):
        # with sixteen angles both estimators are exact rational functions
        # of the interpolation coefficients
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        b = fourier_b(rates)
        vis = visibilities(rates)
        v_a_b = (b[0] + b[2] + b[4] + b[6]) / (1 + b[1] + b[3] + b[5] + b[7])
        v_b_b = (b[0] - b[2] - b[4] + b[6]) / (1 - b[3] + b[7])
        assert vis.v_a == pytest.approx(v_a_b, abs=1e-12)
        assert vis.v_b == pytest.approx(v_b_b, abs=1e-12)

    def test_model_estimator_gap(self):
        # the deviating model splits the two visibility estimators by
        # roughly b2 - 2 b3 + 2 b4, and v_b - v_fit tracks -b3
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        b = fourier_b(rates)
        vis = visibilities(rates)
        gap = vis.v_b - vis.v_a
        # the three-term combination sets scale and sign; the neglected
        # higher harmonics add ~25% here
        assert 1.0 < gap / (b[1] - 2 * b[2] + 2 * b[3]) < 1.6
        assert gap > 0
        # v_b - v tracks -b3 (exact expression adds -b5 + b7 and the b1*b4
        # cross terms, all comparable at these parameters)
        exact = (b[0] - b[2] - b[4] + b[6]) / (1 - b[3] + b[7]) - b[0]
        assert (vis.v_b - v_fit(rates)) == pytest.approx(exact, abs=1e-12)
        # -b3 sets the sign and order of magnitude (the neighbouring
        # harmonics roughly double it at these parameters)
        assert 1.0 < (vis.v_b - v_fit(rates)) / (-b[2]) < 3.0
        assert vis.v_b > v_fit(rates)

    def test_implied_scale_factor_is_order_unity(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        vis = visibilities(rates)
        scale = (20 * math.sqrt(2) / (3 * PERIOD)) * (0.98 - v_max(0.2)) ** 1.5
        k = (vis.v_b - vis.v_a) / scale
        assert 0.1 < k < 10

    def test_missing_angles(self):
        with pytest.raises(ValueError, match="missing angles"):
            visibilities(cosine_rates(n=6))

    def test_degenerate_rates(self):
        r = np.ones(8)
        r[3] = r[7] = 0.0  # kills R(pi/2) and R(0)
        with pytest.raises(ValueError, match="degenerate"):
            visibilities(RateSeries(r))


class TestTwoChannel:
    @staticmethod
    def model_channels(eta=0.2, v=0.98, n=16):
        return predict_rates(OptimalModelParams.solve(eta, v), n_angles=n,
                             two_channel=True)

    def test_ideal_correlation(self):
        phis = PERIOD * np.arange(1, 17) / 16
        pp = RateSeries(1 + np.cos(2 * phis))
        pm = RateSeries(1 - np.cos(2 * phis))
        tc = TwoChannelRates(pp=pp, pm=pm, mp=pm, mm=pp)
        assert correlation_e(tc, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert s_param(tc) == pytest.approx(2 * math.sqrt(2), abs=1e-12)

    def test_s_equals_curve_visibility_link(self):
        tc = self.model_channels()
        vb = visibilities(tc.pp).v_b
        assert s_param(tc) == pytest.approx(2 * math.sqrt(2) * vb, abs=1e-10)

    def test_correlation_matches_exact_model_expression(self):
        eta, v = 0.2, 0.98
        params = OptimalModelParams.solve(eta, v)
        tc = self.model_channels(eta, v)
        for phi in tc.angles:
            d0 = delta_series(phi, eta, params.eps)
            d1 = delta_series(phi + PERIOD / 2, eta, params.eps)
            want = (v * math.cos(2 * phi) + (d0 - d1) / 2) / (1 + (d0 + d1) / 2)
            assert correlation_e(tc, phi) == pytest.approx(want, abs=1e-12)

    def test_correlation_near_first_order_form(self):
        # the quarter-turn-shifted deviation form is the first-order
        # approximation; its error is bounded by the even-harmonic content
        eta, v = 0.2, 0.98
        params = OptimalModelParams.solve(eta, v)
        tc = self.model_channels(eta, v)
        phis = tc.angles
        peak = np.max(np.abs(delta_series(np.linspace(0, PERIOD, 512), eta, params.eps)))
        for phi in phis:
            approx = v * math.cos(2 * phi) - delta_series(phi + PERIOD / 2, eta, params.eps)
            assert abs(correlation_e(tc, phi) - approx) <= 2.2 * peak

    def test_gap_from_ideal_s_tracks_visibility_split(self):
        # the model's pi/8-combination visibility sits slightly above the
        # fitted one (the third-harmonic deficit has a negative sign), so S
        # lands above 2*sqrt(2)*v by exactly that split
        tc = self.model_channels()
        vb = visibilities(tc.pp).v_b
        assert s_param(tc) - 2 * math.sqrt(2) * 0.98 == pytest.approx(
            2 * math.sqrt(2) * (vb - 0.98), abs=1e-10
        )
        assert vb > 0.98
        assert s_param(tc) < 2 * math.sqrt(2)

    def test_contrast_recovered_from_correlations(self):
        tc = self.model_channels()
        assert v_a_from_channels(tc) == pytest.approx(
            visibilities(tc.pp).v_a, abs=1e-12
        )

    def test_scale_invariance(self):
        tc = self.model_channels()
        scaled = TwoChannelRates(pp=tc.pp.scaled(7.5), pm=tc.pm.scaled(7.5),
                                 mp=tc.mp.scaled(7.5), mm=tc.mm.scaled(7.5))
        assert s_param(scaled) == pytest.approx(s_param(tc), abs=1e-12)


class TestNonidealBound:
    def test_reported_experiment_violates(self):
        res = nonideal_bound(0.214, 0.214, 0.982, 0.970)
        assert res.violated
        assert res.bound == pytest.approx(0.96480, abs=1e-4)

    def test_vanishing_efficiency_never_violates(self):
        res = nonideal_bound(1e-6, 1e-6, 0.99, 0.98)
        assert res.bound == pytest.approx(1.0, abs=1e-6)
        assert not res.violated

    def test_small_eta_form_matches_threshold_expansion(self):
        # for equal small efficiencies the approximation reduces to the
        # threshold visibility's own expansion 1 - pi^2 eta^2 / 12
        for eta in (0.05, 0.1):
            res = nonideal_bound(eta, eta, 0.97, 0.97)
            assert res.bound_small_eta == pytest.approx(
                1 - PERIOD**2 * eta**2 / 12, abs=1e-12
            )
            assert res.bound == pytest.approx(res.bound_small_eta, abs=2e-3)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            nonideal_bound(1.2, 0.2, 0.9, 0.8)
        with pytest.raises(ValueError):
            nonideal_bound(0.2, 0.2, 0.8, 0.9)


class TestSymmetryCompletion:
    def test_fills_mirrors(self):
        n = 8
        rates = cosine_rates(n=n, v=0.6, extra=lambda p: 0.05 * np.cos(4 * p))
        half_j = [1, 2, 3, 4, 8]  # j covering each mirror pair; 8 is phi = pi
        angles = [j * PERIOD / n for j in half_j]
        vals = [rates.rates[j - 1] for j in half_j]
        completed = complete_symmetric(angles, vals, n)
        assert np.allclose(completed.rates, rates.rates, atol=1e-12)

    def test_idempotent(self, rng):
        n = 10
        sym = rng.random(n) + 0.1
        sym[:n - 1] = 0.5 * (sym[:n - 1] + sym[:n - 1][::-1])  # enforce mirror symmetry
        full = complete_symmetric(PERIOD * np.arange(1, n + 1) / n, sym, n)
        again = complete_symmetric(full.angles, full.rates, n)
        assert np.array_equal(full.rates, again.rates)

    def test_zero_angle_counts_as_pi(self):
        n = 4
        completed = complete_symmetric([0.0, PERIOD / 4, PERIOD / 2], [3.0, 2.0, 1.0], n)
        assert completed.rates[3] == 3.0  # j = n holds the phi = 0/pi rate
        assert completed.rates[2] == 2.0  # mirror of j=1

    def test_missing_mirror_rejected(self):
        with pytest.raises(ValueError, match="no rate supplied"):
            complete_symmetric([PERIOD / 8], [1.0], 8)

    def test_off_grid_angle_rejected(self):
        with pytest.raises(ValueError, match="not on the"):
            complete_symmetric([0.1], [1.0], 8)


class TestAnalyze:
    def test_quantum_like_data_without_power(self):
        # fitted visibility below threshold: bound is zero, test has no power
        report = analyze(cosine_rates(n=16, v=0.9), eta=0.2)
        assert report.verdict == VERDICT_CONSISTENT
        assert report.d_bound == 0.0
        assert any("no power" in w for w in report.warnings)

    def test_quantum_data_violates_on_point_values(self):
        report = analyze(cosine_rates(n=16, v=0.98), eta=0.2)
        assert report.delta_min < 1e-10
        assert report.d_bound > 0
        assert report.verdict == VERDICT_VIOLATES
        assert any("point values" in w for w in report.warnings)

    def test_model_data_is_consistent(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        report = analyze(predict_rates(params, n_angles=16), eta=0.2)
        assert report.verdict == VERDICT_CONSISTENT
        assert report.delta_min >= report.d_bound

    def test_counts_give_uncertainty_band(self, rng):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        counts = rng.poisson(rates.rates * 1e9 / rates.rates.mean())
        report = analyze(RateSeries.from_counts(counts), eta=0.2)
        assert report.sigma_delta_min is not None and report.sigma_delta_min > 0
        assert report.verdict in (
            VERDICT_CONSISTENT, VERDICT_INCONCLUSIVE, VERDICT_VIOLATES
        )

    def test_bootstrap_matches_propagation_in_scale(self, rng):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        counts = rng.poisson(rates.rates * 3e8 / rates.rates.mean())
        series = RateSeries.from_counts(counts)
        prop = sigma_delta_min(series)
        boot = bootstrap_sigma_delta_min(series, reps=200, seed=5)
        assert boot == pytest.approx(prop, rel=0.5)

    def test_bootstrap_deterministic(self, rng):
        counts = rng.poisson(np.full(16, 1e5))
        series = RateSeries.from_counts(counts)
        assert bootstrap_sigma_delta_min(series, 50, seed=9) == (
            bootstrap_sigma_delta_min(series, 50, seed=9)
        )

    def test_accidental_subtraction(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        lifted = RateSeries(rates.rates + 0.005)
        report = analyze(lifted, eta=0.2, accidental_rate=0.005)
        clean = analyze(rates, eta=0.2)
        assert report.delta_min == pytest.approx(clean.delta_min, abs=1e-12)

    def test_two_channel_report(self):
        tc = predict_rates(OptimalModelParams.solve(0.2, 0.98), n_angles=16,
                           two_channel=True)
        report = analyze(tc, eta=0.2)
        assert report.s_param == pytest.approx(
            2 * math.sqrt(2) * report.v_b, abs=1e-12
        )
        assert report.verdict == VERDICT_CONSISTENT

    def test_v_override(self):
        params = OptimalModelParams.solve(0.2, 0.98)
        rates = predict_rates(params, n_angles=16)
        report = analyze(rates, eta=0.2, v_override=0.99)
        assert report.v_used == 0.99
        assert report.d_bound == pytest.approx(deviation_d(0.2, 0.99), abs=1e-15)

    def test_report_serializes(self):
        report = analyze(cosine_rates(n=16, v=0.9), eta=0.2)
        payload = report.to_json()
        assert '"verdict"' in payload and '"delta_min"' in payload
