"""Diffusion engine: schedules, forward sampling, DDIM inversion/reverse,
denoising loss, and conditioning inversion against the Gaussian oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowdist import (
    ConditioningVector,
    GaussianOraclePredictor,
    InvalidArgumentError,
    InversionConfig,
    LatentState,
    NoiseSchedule,
    NumericFailureError,
    RngStream,
    build_schedule,
    ddim_invert,
    ddim_reverse_chain,
    dpm_loss,
    forward_sample,
    invert_conditioning,
    strided_timesteps,
)

E0 = ConditioningVector([0.0])


class _ZeroPredictor:
    def predict(self, z, e, t):
        return np.zeros_like(z)


class _EchoPredictor:
    """Returns the exact noise recorded by the dpm_loss observer hook."""

    def __init__(self):
        self.last_eps = None

    def observe(self, t, eps):
        self.last_eps = eps

    def predict(self, z, e, t):
        return self.last_eps


class TestBuildSchedule:
    def test_linear_beta_single_step(self):
        s = build_schedule("linear-beta", 1)
        np.testing.assert_allclose(s.alpha_bar, [1.0, 1.0 - 1e-4], rtol=0, atol=0)

    def test_linear_beta_thousand_steps_terminal_value(self):
        s = build_schedule("linear-beta", 1000)
        # Frozen expected value 4.04e-5 from the beta ramp product.
        assert abs(s.alpha_bar[1000] / 4.0e-5 - 1.0) < 0.20

    def test_T_zero_rejected(self):
        with pytest.raises(InvalidArgumentError):
            build_schedule("linear-beta", 0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidArgumentError):
            build_schedule("sigmoid", 10)

    @given(
        kind=st.sampled_from(["linear-beta", "cosine"]),
        T=st.integers(min_value=1, max_value=500),
    )
    @settings(max_examples=40, deadline=None)
    def test_monotone_decreasing_in_unit_interval(self, kind, T):
        s = build_schedule(kind, T)
        ab = s.alpha_bar
        assert ab[0] == 1.0
        assert np.all(np.diff(ab) < 0)
        assert np.all(ab > 0) and np.all(ab <= 1)


class TestStridedTimesteps:
    def test_endpoints_and_stride(self):
        taus = strided_timesteps(1000, 250)
        assert taus[0] == 0 and taus[-1] == 1000
        assert np.all(np.diff(taus) > 0)
        assert len(taus) == 251

    def test_full_resolution(self):
        np.testing.assert_array_equal(strided_timesteps(5, 5), np.arange(6))

    def test_bad_counts_rejected(self):
        with pytest.raises(InvalidArgumentError):
            strided_timesteps(10, 0)
        with pytest.raises(InvalidArgumentError):
            strided_timesteps(10, 11)


class TestForwardSample:
    def test_t_zero_is_identity(self):
        s = build_schedule("linear-beta", 10)
        z0 = LatentState.from_vector([1.0, -2.0, 3.0])
        out = forward_sample(z0, 0, s, RngStream(0, 0))
        np.testing.assert_array_equal(out.data, z0.data)
        assert out.timestep_tag == 0

    def test_marginal_variance_at_quarter_alpha(self):
        s = NoiseSchedule(np.array([1.0, 0.25]))
        z0 = LatentState(np.zeros(1000), (1000,))
        draws = np.concatenate(
            [forward_sample(z0, 1, s, RngStream(9, k)).data for k in range(100)]
        )
        assert draws.size == 10**5
        assert abs(draws.var() - 0.75) < 0.01

    def test_pure_noise_limit_uncorrelated_with_z0(self):
        s = NoiseSchedule(np.array([1.0, 1e-8]))
        rng = RngStream(4, 0)
        z0 = LatentState(rng.normal(10**5), (10**5,))
        out = forward_sample(z0, 1, s, RngStream(5, 0))
        corr = np.corrcoef(z0.data, out.data)[0, 1]
        assert abs(corr) < 0.02

    def test_t_out_of_range_rejected(self):
        s = build_schedule("linear-beta", 10)
        z0 = LatentState.from_vector([0.0])
        with pytest.raises(InvalidArgumentError):
            forward_sample(z0, 11, s, RngStream(0, 0))


class TestDdimInvert:
    def test_t_target_zero_returns_z0(self):
        s = build_schedule("linear-beta", 10)
        z0 = LatentState.from_vector([1.0, 2.0])
        out = ddim_invert(z0, E0, s, _ZeroPredictor(), 0)
        np.testing.assert_array_equal(out.data, z0.data)
        assert out.timestep_tag == 0

    def test_zero_predictor_single_step_is_pure_rescale(self):
        s = NoiseSchedule(np.array([1.0, 0.64]))
        z0 = LatentState.from_vector([2.0])
        out = ddim_invert(z0, E0, s, _ZeroPredictor(), 1)
        # With eps_hat = 0 the inverse update is z * sqrt(ab_1 / ab_0).
        assert out.data[0] == pytest.approx(2.0 * math.sqrt(0.64), abs=1e-12)

    def test_roundtrip_recovers_z0(self):
        s = build_schedule("linear-beta", 250)
        rng = RngStream(21, 0)
        mu = rng.normal(256)
        z0 = LatentState(mu + 0.3 * rng.normal(256), (256,))
        p = GaussianOraclePredictor(mu=mu, sigma2=0.5, schedule=s)
        z_t = ddim_invert(z0, E0, s, p, 250)
        back = ddim_reverse_chain(z_t, E0, s, p)
        assert np.max(np.abs(back.data - z0.data)) < 1e-6

    def test_roundtrip_with_strided_timesteps(self):
        s = build_schedule("linear-beta", 1000)
        taus = strided_timesteps(1000, 100)
        rng = RngStream(22, 0)
        mu = rng.normal(64)
        z0 = LatentState(mu + 0.2 * rng.normal(64), (64,))
        p = GaussianOraclePredictor(mu=mu, sigma2=0.25, schedule=s)
        z_t = ddim_invert(z0, E0, s, p, int(taus[-1]), timesteps=taus)
        back = ddim_reverse_chain(z_t, E0, s, p, timesteps=taus)
        assert np.max(np.abs(back.data - z0.data)) < 1e-6

    def test_consumes_no_randomness(self):
        s = build_schedule("linear-beta", 50)
        mu = np.zeros(16)
        p = GaussianOraclePredictor(mu=mu, sigma2=1.0, schedule=s)
        z0 = LatentState(np.linspace(-1, 1, 16), (16,))
        a = ddim_invert(z0, E0, s, p, 50)
        b = ddim_invert(z0, E0, s, p, 50)
        np.testing.assert_array_equal(a.data, b.data)

    def test_non_finite_predictor_reported_with_timestep(self):
        class Bad:
            def predict(self, z, e, t):
                return np.full_like(z, np.nan)

        s = build_schedule("linear-beta", 3)
        z0 = LatentState.from_vector([1.0])
        with pytest.raises(NumericFailureError, match="timestep"):
            ddim_invert(z0, E0, s, Bad(), 1)


class TestDdimReverseChain:
    def test_sigma2_zero_collapses_to_mu(self):
        s = build_schedule("linear-beta", 100)
        mu = np.linspace(-2.0, 2.0, 32)
        p = GaussianOraclePredictor(mu=mu, sigma2=0.0, schedule=s)
        rng = RngStream(8, 0)
        z_t = LatentState(rng.normal(32), (32,), timestep_tag=100)
        out = ddim_reverse_chain(z_t, E0, s, p)
        assert np.max(np.abs(out.data - mu)) < 1e-9

    def test_single_step_exact_noise_recovers_z0(self):
        s = NoiseSchedule(np.array([1.0, 0.9999]))
        rng = RngStream(13, 0)
        z0 = LatentState(rng.normal(64), (64,))
        echo = _EchoPredictor()
        eps = RngStream(14, 0).normal(64)
        echo.last_eps = eps
        ab = s.alpha_bar[1]
        z1 = z0.with_data(
            math.sqrt(ab) * z0.data + math.sqrt(1 - ab) * eps, timestep_tag=1
        )
        out = ddim_reverse_chain(z1, E0, s, echo)
        assert np.max(np.abs(out.data - z0.data)) < 1e-12

    def test_marginal_distribution_from_pure_noise(self):
        # 10^4 chains batched as one tiled latent at dim=8.
        dim, chains = 8, 10**4
        s = build_schedule("linear-beta", 1000)
        taus = strided_timesteps(1000, 250)
        mu_cell = np.full(dim, 0.7)
        mu = np.tile(mu_cell, chains)
        p = GaussianOraclePredictor(mu=mu, sigma2=1.0, schedule=s)
        z_T = LatentState(
            RngStream(77, 0).normal(dim * chains), (dim * chains,), timestep_tag=1000
        )
        out = ddim_reverse_chain(z_T, E0, s, p, timesteps=taus)
        samples = out.data.reshape(chains, dim)
        assert abs(samples.mean() - 0.7) < 0.02
        assert abs(samples.var() - 1.0) < 0.03

    def test_scale_coherence_along_chain(self):
        # ||z_t||^2 tracks ab_t*||z0||^2 + (1-ab_t)*dim in expectation.
        dim, chains = 8, 10**4
        s = build_schedule("linear-beta", 1000)
        taus = strided_timesteps(1000, 50)
        mu = np.zeros(dim * chains)
        p = GaussianOraclePredictor(mu=mu, sigma2=1.0, schedule=s)
        z = RngStream(31, 0).normal(dim * chains)
        for j in range(len(taus) - 1, len(taus) - 6, -1):
            t, t_prev = int(taus[j]), int(taus[j - 1])
            eps_hat = p.predict(z, E0, t)
            ab_t, ab_prev = s.alpha_bar[t], s.alpha_bar[t_prev]
            x0_hat = (z - math.sqrt(1 - ab_t) * eps_hat) / math.sqrt(ab_t)
            z = math.sqrt(ab_prev) * x0_hat + math.sqrt(1 - ab_prev) * eps_hat
            expected = ab_prev * 0.0 + 1.0 * dim  # mu=0, sigma2=1 keeps unit marginal
            got = np.mean(np.sum(z.reshape(chains, dim) ** 2, axis=1))
            assert abs(got / expected - 1.0) < 0.05

    def test_requires_timestep_tag(self):
        s = build_schedule("linear-beta", 10)
        z = LatentState.from_vector([1.0])
        with pytest.raises(InvalidArgumentError):
            ddim_reverse_chain(z, E0, s, _ZeroPredictor())


class TestDpmLoss:
    def test_echo_predictor_gives_zero_loss(self):
        s = build_schedule("linear-beta", 50)
        echo = _EchoPredictor()
        z0 = LatentState(np.linspace(0, 1, 8), (8,))
        loss = dpm_loss(z0, E0, s, echo, RngStream(1, 0), 64, noise_observer=echo.observe)
        assert loss == 0.0

    def test_zero_predictor_loss_approximates_dim(self):
        s = NoiseSchedule(np.array([1.0, 1e-8]))
        z0 = LatentState(np.zeros(4), (4,))
        loss = dpm_loss(z0, E0, s, _ZeroPredictor(), RngStream(2, 0), 10**5)
        assert abs(loss / 4.0 - 1.0) < 0.02

    def test_bias_excess_loss_is_quadratic(self):
        # z0 = mu with sigma2 = 0 makes the base prediction exact, so the
        # excess loss equals ||e - e*||^2 identically.
        s = build_schedule("linear-beta", 100)
        mu = np.linspace(-1, 1, 16)
        e_star = ConditioningVector([0.5, -0.25])
        p = GaussianOraclePredictor(mu=mu, sigma2=0.0, bias_target=e_star, schedule=s)
        z0 = LatentState(mu, (16,))
        e = ConditioningVector([1.1, 0.75])
        loss_e = dpm_loss(z0, e, s, p, RngStream(3, 0), 200)
        loss_star = dpm_loss(z0, e_star, s, p, RngStream(3, 0), 200)
        expected = float(np.sum((e.data - e_star.data) ** 2))
        assert abs((loss_e - loss_star) / expected - 1.0) < 0.02

    def test_nonnegative(self):
        s = build_schedule("linear-beta", 20)
        p = GaussianOraclePredictor(mu=np.zeros(4), sigma2=1.0, schedule=s)
        z0 = LatentState(np.ones(4), (4,))
        assert dpm_loss(z0, E0, s, p, RngStream(5, 0), 32) >= 0.0


class TestInvertConditioning:
    def _setup(self):
        s = build_schedule("linear-beta", 100)
        mu = np.linspace(-1, 1, 8)
        e_star = ConditioningVector([0.5])
        p = GaussianOraclePredictor(mu=mu, sigma2=0.0, bias_target=e_star, schedule=s)
        z0 = LatentState(mu, (8,))
        return s, p, z0, e_star

    def test_zero_steps_returns_init(self):
        s, p, z0, _ = self._setup()
        e_init = ConditioningVector([0.0])
        cfg = InversionConfig(steps=0, learning_rate=0.1, loss_samples=4)
        out = invert_conditioning(z0, e_init, cfg, s, p, RngStream(0, 9))
        np.testing.assert_array_equal(out.data, e_init.data)

    def test_converges_to_planted_target(self):
        s, p, z0, e_star = self._setup()
        cfg = InversionConfig(steps=200, learning_rate=0.1, loss_samples=4)
        out = invert_conditioning(
            z0, ConditioningVector([0.0]), cfg, s, p, RngStream(0, 9)
        )
        assert abs(out.data[0] - e_star.data[0]) < 1e-3

    def test_validation_trace_non_increasing(self):
        s, p, z0, _ = self._setup()
        cfg = InversionConfig(steps=50, learning_rate=0.01, loss_samples=4)
        trace = []
        invert_conditioning(
            z0, ConditioningVector([0.0]), cfg, s, p, RngStream(0, 9), loss_trace=trace
        )
        assert len(trace) == 51
        diffs = np.diff(trace)
        assert np.all(diffs <= 1e-12)
