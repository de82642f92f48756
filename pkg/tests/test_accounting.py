import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privfed import accounting as acc


def valid_params(rng, sigma_range=(1e-4, 1.0)):
    """Random PrivacyParams satisfying the divisibility structure."""
    gamma = int(rng.integers(1, 65))
    batches = int(rng.integers(1, 13))  # m/gamma
    m = gamma * batches
    tau = batches * int(rng.integers(1, 9))
    n = int(rng.integers(1, 33))
    r = int(rng.integers(1, n + 1))
    return acc.PrivacyParams(
        clip_norm=float(rng.uniform(0.1, 5.0)),
        batch_size=gamma,
        local_dataset_size=m,
        local_period=tau,
        devices_per_round=r,
        total_devices=n,
        noise_std=float(rng.uniform(*sigma_range)),
        failure_prob=float(rng.uniform(1e-6, 1e-2)),
        stepsize=float(rng.uniform(1e-3, 1.0)),
    )


class TestSensitivities:
    def test_gradient_sensitivity_values(self):
        assert acc.gradient_sensitivity(1, 1) == 2
        assert acc.gradient_sensitivity(1, 32) == 0.0625
        assert acc.gradient_sensitivity(0.5, 4) == 0.25

    @pytest.mark.parametrize("g, gamma", [(0, 1), (-1, 4), (1, 0)])
    def test_gradient_sensitivity_rejects(self, g, gamma):
        with pytest.raises(ValueError):
            acc.gradient_sensitivity(g, gamma)

    def test_local_model_sensitivity_values(self):
        assert acc.local_model_sensitivity(1, 1, 1, 2) == 1
        assert acc.local_model_sensitivity(0.1, 10, 1, 32) == pytest.approx(0.0625)
        assert acc.local_model_sensitivity(0.01, 5, 2, 10) == pytest.approx(0.02)

    def test_local_model_sensitivity_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            acc.local_model_sensitivity(0, 1, 1, 1)
        with pytest.raises(ValueError):
            acc.local_model_sensitivity(1, 0, 1, 1)


class TestGaussianRho:
    def test_values(self):
        assert acc.gaussian_rho(1, 1).rho == 0.5
        assert acc.gaussian_rho(0, 1).rho == 0
        assert acc.gaussian_rho(0.5, 0.1).rho == pytest.approx(12.5)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            acc.gaussian_rho(1, 0)
        with pytest.raises(ValueError):
            acc.gaussian_rho(1, -1)


class TestCompose:
    def test_values(self):
        assert acc.compose([acc.ZcdpBudget(0.5), acc.ZcdpBudget(0.5)]).rho == 1.0
        assert acc.compose([]).rho == 0.0
        budgets = [acc.ZcdpBudget(x) for x in (0.1, 0.2, 0.3)]
        assert acc.compose(budgets).rho == pytest.approx(0.6)

    def test_singleton_identity(self):
        assert acc.compose([acc.ZcdpBudget(0.37)]).rho == 0.37

    @given(st.lists(st.floats(0, 100), max_size=6), st.lists(st.floats(0, 100), max_size=6))
    def test_associative_commutative(self, xs, ys):
        a = [acc.ZcdpBudget(x) for x in xs]
        b = [acc.ZcdpBudget(y) for y in ys]
        left = acc.compose([acc.compose(a), acc.compose(b)]).rho
        right = acc.compose(a + b).rho
        flipped = acc.compose(b + a).rho
        assert left == pytest.approx(right)
        assert right == pytest.approx(flipped)


class TestRoundRho:
    def test_spec_point(self):
        # tau=10, G=1, r=10, m=2440, gamma=40, sigma^2=1e-4
        value = acc.round_rho_closed_form(1, 40, 2440, 10, 10, 1e-2)
        assert value == pytest.approx(0.20491803278688525, rel=1e-12)

    def test_linear_in_inverse_r(self):
        base = acc.round_rho_closed_form(1, 40, 2440, 10, 10, 1e-2)
        single = acc.round_rho_closed_form(1, 40, 2440, 10, 1, 1e-2)
        assert single == pytest.approx(10 * base, rel=1e-12)

    def test_full_batch_single_device_reduction(self):
        # m = gamma = 1, tau = m/gamma = 1, r = 1, sigma = 1 -> rho = 2
        p = acc.PrivacyParams(
            clip_norm=1, batch_size=1, local_dataset_size=1, local_period=1,
            devices_per_round=1, total_devices=1, noise_std=1,
        )
        assert acc.round_rho_per_device(p).rho == pytest.approx(2.0, rel=1e-12)

    def test_chain_matches_closed_form(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            p = valid_params(rng)
            chained = acc.round_rho_per_device(p).rho
            closed = acc.round_rho_closed_form(
                p.clip_norm, p.batch_size, p.local_dataset_size,
                p.local_period, p.devices_per_round, p.noise_std,
            )
            assert abs(chained - closed) <= 1e-12 * closed

    def test_rejects_zero_sigma(self):
        p = acc.PrivacyParams(
            clip_norm=1, batch_size=2, local_dataset_size=4, local_period=2,
            devices_per_round=1, total_devices=2, noise_std=0.0,
        )
        with pytest.raises(ValueError):
            acc.round_rho_per_device(p)

    def test_params_reject_uneven_epoch(self):
        # tau not a multiple of m/gamma
        with pytest.raises(ValueError):
            acc.PrivacyParams(
                clip_norm=1, batch_size=40, local_dataset_size=2440,
                local_period=10, devices_per_round=10, total_devices=16,
                noise_std=0.01,
            )

    def test_params_reject_uneven_batches(self):
        with pytest.raises(ValueError):
            acc.PrivacyParams(
                clip_norm=1, batch_size=3, local_dataset_size=10,
                local_period=5, devices_per_round=1, total_devices=2,
            )


class TestZcdpToDp:
    def test_values(self):
        assert acc.zcdp_to_dp(acc.ZcdpBudget(0), 1e-4).epsilon == 0
        eps = acc.zcdp_to_dp(acc.ZcdpBudget(0.5), 1e-4).epsilon
        assert eps == pytest.approx(4.791932052578694, rel=1e-12)
        # inverse consistency with the calibration example
        eps10 = acc.zcdp_to_dp(acc.ZcdpBudget(1.8173897078857040), 1e-4).epsilon
        assert eps10 == pytest.approx(10.0, abs=1e-9)
        assert acc.zcdp_to_dp(acc.ZcdpBudget(1.8174), 1e-4).epsilon == pytest.approx(
            10.000, abs=1e-3
        )

    def test_rejects_bad_delta(self):
        for delta in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                acc.zcdp_to_dp(acc.ZcdpBudget(1), delta)

    @given(
        st.floats(1e-6, 50), st.floats(1e-6, 50),
        st.floats(1e-9, 0.5), st.floats(1e-9, 0.5),
    )
    @settings(max_examples=60)
    def test_monotone(self, rho1, rho2, d1, d2):
        # strict inequality is only observable for well-separated inputs
        lo_rho, hi_rho = sorted((rho1, rho2))
        lo_d, hi_d = sorted((d1, d2))
        if hi_rho > lo_rho * (1 + 1e-9):
            assert (
                acc.zcdp_to_dp(acc.ZcdpBudget(lo_rho), lo_d).epsilon
                < acc.zcdp_to_dp(acc.ZcdpBudget(hi_rho), lo_d).epsilon
            )
        if hi_d > lo_d * (1 + 1e-9):
            assert (
                acc.zcdp_to_dp(acc.ZcdpBudget(hi_rho), hi_d).epsilon
                < acc.zcdp_to_dp(acc.ZcdpBudget(hi_rho), lo_d).epsilon
            )


class TestTotalEpsilon:
    def _params(self):
        return acc.PrivacyParams(
            clip_norm=1, batch_size=244, local_dataset_size=2440,
            local_period=10, devices_per_round=10, total_devices=16,
            noise_std=0.01,
        )

    def test_single_round_matches_conversion(self):
        p = self._params()
        direct = acc.total_epsilon(p, 1).epsilon
        via = acc.zcdp_to_dp(acc.round_rho_per_device(p), p.failure_prob).epsilon
        assert direct == pytest.approx(via, rel=1e-15)

    def test_round_count_doubles_rho(self):
        p = self._params()
        rho = acc.round_rho_per_device(p).rho
        e2 = acc.total_epsilon(p, 2).epsilon
        assert e2 == pytest.approx(
            acc.zcdp_to_dp(acc.ZcdpBudget(2 * rho), p.failure_prob).epsilon
        )

    def test_worked_example(self):
        # tau=10, G=1, r=10, m=2440, gamma=40, sigma^2=1e-4, delta=1e-4, C=13
        rho = 13 * acc.round_rho_closed_form(1, 40, 2440, 10, 10, 1e-2)
        assert rho == pytest.approx(2.663934426229508, rel=1e-12)
        eps = acc.zcdp_to_dp(acc.ZcdpBudget(rho), 1e-4).epsilon
        assert eps == pytest.approx(12.570647865952865, rel=1e-12)
        assert eps == pytest.approx(12.569, abs=5e-3)

    def test_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            p = valid_params(rng)
            c = float(rng.uniform(1, 20))
            base = acc.total_epsilon(p, c).epsilon
            assert acc.total_epsilon(p, c * 1.5).epsilon > base
            assert acc.total_epsilon(p.with_noise(p.noise_std * 2), c).epsilon < base
            bigger_r = acc.PrivacyParams(
                clip_norm=p.clip_norm, batch_size=p.batch_size,
                local_dataset_size=p.local_dataset_size, local_period=p.local_period,
                devices_per_round=p.total_devices, total_devices=p.total_devices,
                noise_std=p.noise_std, failure_prob=p.failure_prob,
                stepsize=p.stepsize,
            )
            if bigger_r.devices_per_round > p.devices_per_round:
                assert acc.total_epsilon(bigger_r, c).epsilon < base
            doubled_tau = acc.PrivacyParams(
                clip_norm=p.clip_norm, batch_size=p.batch_size,
                local_dataset_size=p.local_dataset_size,
                local_period=2 * p.local_period,
                devices_per_round=p.devices_per_round, total_devices=p.total_devices,
                noise_std=p.noise_std, failure_prob=p.failure_prob,
                stepsize=p.stepsize,
            )
            assert acc.total_epsilon(doubled_tau, c).epsilon > base
            bigger_g = acc.PrivacyParams(
                clip_norm=2 * p.clip_norm, batch_size=p.batch_size,
                local_dataset_size=p.local_dataset_size, local_period=p.local_period,
                devices_per_round=p.devices_per_round, total_devices=p.total_devices,
                noise_std=p.noise_std, failure_prob=p.failure_prob,
                stepsize=p.stepsize,
            )
            assert acc.total_epsilon(bigger_g, c).epsilon > base


class TestExpectedParticipation:
    def test_values(self):
        assert acc.expected_participation(20, 10, 16) == 12.5
        assert acc.expected_participation(37, 16, 16) == 37
        assert acc.expected_participation(0, 1, 16) == 0

    def test_rejects_r_above_n(self):
        with pytest.raises(ValueError):
            acc.expected_participation(10, 17, 16)


class TestCalibrateSigma:
    def _params(self):
        return acc.PrivacyParams(
            clip_norm=1, batch_size=244, local_dataset_size=2440,
            local_period=10, devices_per_round=10, total_devices=16,
        )

    def test_inverse_rho_example(self):
        assert acc.inverse_rho(10, 1e-4) == pytest.approx(
            1.8173897078857040, rel=1e-12
        )

    def test_round_trip_from_epsilon(self):
        p = self._params()
        for eps in (0.5, 1, 4, 10):
            sigma = acc.calibrate_sigma(eps, 1e-4, 12.5, p)
            back = acc.total_epsilon(p.with_noise(sigma), 12.5).epsilon
            assert abs(back - eps) <= 1e-9 * eps

    def test_round_trip_from_sigma(self):
        p = self._params().with_noise(0.037)
        eps = acc.total_epsilon(p, 8).epsilon
        sigma = acc.calibrate_sigma(eps, p.failure_prob, 8, p)
        assert abs(sigma - 0.037) <= 1e-9 * 0.037

    def test_doubling_rounds_scales_sqrt2(self):
        p = self._params()
        s1 = acc.calibrate_sigma(5, 1e-4, 10, p)
        s2 = acc.calibrate_sigma(5, 1e-4, 20, p)
        assert s2 == pytest.approx(math.sqrt(2) * s1, rel=1e-12)

    def test_unamplified_is_sqrt_r_larger(self):
        p = self._params()
        amplified = acc.calibrate_sigma(5, 1e-4, 10, p, amplification=True)
        plain = acc.calibrate_sigma(5, 1e-4, 10, p, amplification=False)
        assert plain == pytest.approx(math.sqrt(10) * amplified, rel=1e-12)

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            acc.calibrate_sigma(0, 1e-4, 10, self._params())


class TestDpsgd:
    def test_matches_conversion_identity(self):
        got = acc.dpsgd_epsilon(1.5, 16, 40, 0.05, 1e-4, 12)
        rho = 2 * 12 * 1.5**2 / (16 * 40**2 * 0.05**2)
        assert got.epsilon == pytest.approx(
            acc.zcdp_to_dp(acc.ZcdpBudget(rho), 1e-4).epsilon, rel=1e-15
        )

    def test_unit_example(self):
        eps = acc.dpsgd_epsilon(1, 1, 1, 1, 1e-4, 1).epsilon
        assert eps == pytest.approx(10.583864105157389, rel=1e-12)
        assert eps == pytest.approx(10.585, abs=2e-3)

    def test_vanishes_with_large_sigma(self):
        assert acc.dpsgd_epsilon(1, 16, 40, 1e9, 1e-4, 20).epsilon < 1e-6

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            acc.dpsgd_epsilon(1, 16, 0, 1, 1e-4, 1)

    def test_calibration_round_trip(self):
        sigma = acc.dpsgd_calibrate_sigma(10, 1e-4, 12.5, 1, 16, 40)
        back = acc.dpsgd_epsilon(1, 16, 40, sigma, 1e-4, 12.5).epsilon
        assert back == pytest.approx(10, rel=1e-9)


class TestTypes:
    def test_budget_rejects_negative(self):
        with pytest.raises(ValueError):
            acc.ZcdpBudget(-0.1)

    def test_guarantee_bounds(self):
        with pytest.raises(ValueError):
            acc.DpGuarantee(-1, 0.5)
        with pytest.raises(ValueError):
            acc.DpGuarantee(1, 0)
        assert acc.DpGuarantee(math.inf, 0.5).epsilon == math.inf

    def test_params_positivity(self):
        with pytest.raises(ValueError):
            acc.PrivacyParams(
                clip_norm=1, batch_size=2, local_dataset_size=4, local_period=2,
                devices_per_round=3, total_devices=2,
            )
        with pytest.raises(ValueError):
            acc.PrivacyParams(
                clip_norm=1, batch_size=2, local_dataset_size=4, local_period=2,
                devices_per_round=1, total_devices=2, failure_prob=1.0,
            )
