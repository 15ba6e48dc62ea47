import itertools
import math

import numpy as np
import pytest

from horizon_lab import chain
from horizon_lab.errors import InvalidInputError


def stream_from_pattern(pattern, budget):
    """Build a stream where 't'=trap, 'f'=policy-forward, 'b'=policy-backward.

    Works for configs with sticky_p = noise = 0.5: u < 0.5 fires the trap,
    v < 0.5 flips the policy action.
    """
    stream = np.full((budget, 2), 0.75)
    for i, symbol in enumerate(pattern):
        if symbol == "t":
            stream[i, 0] = 0.25
        elif symbol == "b":
            stream[i, 1] = 0.25
    return stream


class TestEpisodeBasics:
    def test_deterministic_forward_march(self):
        cfg = chain.ChainConfig(length=7, policy_noise=0.0, sticky_p=0.0)
        result = chain.run_chain_episode(cfg, seed=1, record_positions=True)
        assert result.success
        assert result.steps_taken == 7
        assert result.backward_steps == 0
        assert result.positions == tuple(range(8))

    def test_reflecting_floor_never_negative(self):
        cfg = chain.ChainConfig(length=30, policy_noise=0.9, sticky_p=0.3, max_steps=200)
        for seed in range(10):
            result = chain.run_chain_episode(cfg, seed, record_positions=True)
            assert min(result.positions) >= 0

    def test_mean_hitting_time_matches_linear_solve(self):
        # pure reflecting random walk: fundamental-matrix oracle
        oracle = chain.expected_hitting_time(5, policy_noise=0.5)
        cfg = chain.ChainConfig(
            length=5, policy_noise=0.5, sticky_p=0.0, max_steps=5000, trials=20_000, seed=3
        )
        success, steps, _ = chain.run_batch_on_streams(cfg, chain.batch_streams(cfg))
        assert success.all()
        mean = steps.mean()
        se = steps.std(ddof=1) / math.sqrt(len(steps))
        assert abs(mean - oracle) <= 4 * se

    def test_oscillation_trap_at_full_stickiness(self):
        # alternates forever: reaches 1 but never 2
        for noise in (0.0, 0.3, 0.8):
            cfg = chain.ChainConfig(length=2, policy_noise=noise, sticky_p=1.0, max_steps=40)
            result = chain.run_chain_episode(cfg, seed=9, record_positions=True)
            assert not result.success
            assert max(result.positions) == 1
            assert chain.exact_success_probability(cfg) == 0.0
        one = chain.ChainConfig(length=1, policy_noise=0.5, sticky_p=1.0, max_steps=40)
        assert chain.exact_success_probability(one) == 1.0

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            chain.ChainConfig(length=0)
        with pytest.raises(InvalidInputError):
            chain.ChainConfig(length=3, policy_noise=1.5)
        with pytest.raises(InvalidInputError):
            chain.ChainConfig(length=3, reset_period=0)


class TestVectorizedAgreement:
    def test_batch_matches_single_episode_runner(self):
        cfg = chain.ChainConfig(
            length=6, policy_noise=0.3, sticky_p=0.4, reset_period=4, max_steps=60, trials=64, seed=5
        )
        streams = chain.batch_streams(cfg)
        success, steps, backward = chain.run_batch_on_streams(cfg, streams)
        for i in range(cfg.trials):
            single = chain.run_on_stream(cfg, streams[i])
            assert single.success == bool(success[i])
            assert single.steps_taken == int(steps[i])
            assert single.backward_steps == int(backward[i])


class TestExactOracle:
    @pytest.mark.parametrize("length,noise,sticky,period", [
        (2, 0.1, 0.0, None),
        (4, 0.3, 0.2, None),
        (6, 0.5, 0.5, 3),
        (5, 0.6, 0.3, 2),
    ])
    def test_monte_carlo_within_ci_of_dp(self, length, noise, sticky, period):
        cfg = chain.ChainConfig(
            length=length,
            policy_noise=noise,
            sticky_p=sticky,
            reset_period=period,
            max_steps=40,
            trials=10_000,
            seed=17,
        )
        exact = chain.exact_success_probability(cfg)
        rate = chain.success_rate(cfg)
        assert rate.ci_low <= exact <= rate.ci_high

    def test_degenerate_noiseless_rate_one(self):
        cfg = chain.ChainConfig(length=4, trials=50, seed=1)
        assert chain.success_rate(cfg).rate == 1.0
        assert chain.exact_success_probability(cfg) == 1.0


class TestResets:
    def test_reset_improves_success_at_matched_seeds(self):
        cfg = chain.ChainConfig(
            length=12, policy_noise=0.3, sticky_p=0.2, max_steps=36, trials=4000, seed=23
        )
        base, reset = chain.paired_success_rates(cfg, reset_period=5)
        assert reset.rate >= base.rate
        assert reset.rate > base.rate  # healthy margin in this regime

    def test_exhaustive_reset_dominance_small_cases(self):
        # clearing the sticky memory never converts a success into a failure
        budget = 7
        for length in (2, 3, 4):
            for pattern in itertools.product("tfb", repeat=budget):
                stream = stream_from_pattern(pattern, budget)
                base = chain.ChainConfig(
                    length=length, policy_noise=0.5, sticky_p=0.5, max_steps=budget
                )
                reset = chain.ChainConfig(
                    length=length, policy_noise=0.5, sticky_p=0.5, max_steps=budget, reset_period=3
                )
                base_result = chain.run_on_stream(base, stream)
                reset_result = chain.run_on_stream(reset, stream)
                assert not (base_result.success and not reset_result.success)

    def test_dp_confirms_reset_dominance(self):
        for sticky in (0.1, 0.2, 0.4):
            cfg = chain.ChainConfig(
                length=10, policy_noise=0.35, sticky_p=sticky, max_steps=30
            )
            base = chain.exact_success_probability(cfg)
            withk = chain.exact_success_probability(
                chain.ChainConfig(
                    length=10, policy_noise=0.35, sticky_p=sticky, max_steps=30, reset_period=5
                )
            )
            assert withk > base


class TestCollapseProfile:
    def test_flat_profile_without_disturbances(self):
        cfg = chain.ChainConfig(length=2, trials=200, seed=2)
        profile = chain.collapse_profile(cfg, [2, 6, 10])
        assert all(rate.rate == 1.0 for _L, rate in profile)

    def test_non_increasing_in_length_at_matched_seeds(self):
        # fixed budget: identical streams make success pathwise monotone in L
        cfg = chain.ChainConfig(
            length=2, policy_noise=0.45, sticky_p=0.3, max_steps=120, trials=3000, seed=29
        )
        profile = chain.collapse_profile(cfg, [4, 8, 12, 16, 20])
        rates = [rate.rate for _L, rate in profile]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_exponential_regime_log_linear(self):
        # backward-biased policy: log success from the DP oracle is near-linear in L
        lengths = list(range(4, 13))
        values = []
        for L in lengths:
            cfg = chain.ChainConfig(
                length=L, policy_noise=0.65, sticky_p=0.2, max_steps=50 * L
            )
            values.append(chain.exact_success_probability(cfg))
        logs = np.log(values)
        slope, intercept = np.polyfit(lengths, logs, 1)
        pred = slope * np.array(lengths) + intercept
        ss_res = float(((logs - pred) ** 2).sum())
        ss_tot = float(((logs - logs.mean()) ** 2).sum())
        assert slope < 0
        assert 1 - ss_res / ss_tot >= 0.9

    def test_reset_profile_decays_slower(self):
        lengths = [6, 10, 14]
        base_cfg = chain.ChainConfig(
            length=6, policy_noise=0.4, sticky_p=0.3, max_steps=60, trials=4000, seed=31
        )
        reset_cfg = chain.ChainConfig(
            length=6, policy_noise=0.4, sticky_p=0.3, max_steps=60, trials=4000, seed=31,
            reset_period=5,
        )
        base_rates = [r.rate for _, r in chain.collapse_profile(base_cfg, lengths)]
        reset_rates = [r.rate for _, r in chain.collapse_profile(reset_cfg, lengths)]
        assert all(r >= b for r, b in zip(reset_rates, base_rates))


class TestWilson:
    def test_interval_contains_point_estimate(self):
        lo, hi = chain.wilson_interval(40, 100)
        assert lo < 0.4 < hi

    def test_extremes_clamped(self):
        lo, hi = chain.wilson_interval(0, 50)
        assert lo == 0.0 and hi < 0.3
        lo, hi = chain.wilson_interval(50, 50)
        assert lo > 0.7 and hi == 1.0


class TestFiniteProcessBridge:
    def test_transition_rows_stochastic(self):
        proc = chain.to_finite_process(chain.ChainConfig(length=3, policy_noise=0.2, sticky_p=0.5))
        np.testing.assert_allclose(proc.transition.sum(axis=1), 1.0, atol=1e-12)
        assert proc.observation == tuple(x for x in range(4) for _ in range(2))
