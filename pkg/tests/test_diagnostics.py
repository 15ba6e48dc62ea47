import math

import numpy as np
import pytest

from horizon_lab import chain, diagnostics as dg
from horizon_lab.errors import (
    InvalidInputError,
    ResourceLimitError,
    UndefinedIndicatorError,
)
from horizon_lab.seeding import derive_rng


def bisect_boundary(gamma, rho0, tau, b, lo=0.0, hi=1e4):
    """Independent root-find of 1 - (1 - rho0 e^{-gamma l})^b = tau."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        survival = 1.0 - (1.0 - rho0 * math.exp(-gamma * mid)) ** b
        if survival > tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestGammaT:
    def test_no_decay_is_zero(self):
        assert dg.gamma_t(0.8, 0.8, 5) == 0.0

    def test_analytic_inversion(self):
        for t in (1, 7, 30):
            assert dg.gamma_t(1.0, math.exp(-0.1 * t), t) == pytest.approx(0.1, abs=1e-12)

    def test_constant_on_exact_exponential(self):
        rho0, gamma = 0.9, 0.23
        values = [dg.gamma_t(rho0, rho0 * math.exp(-gamma * t), t) for t in range(1, 40)]
        np.testing.assert_allclose(values, gamma, rtol=1e-12)

    def test_saturated_advantage_raises(self):
        with pytest.raises(UndefinedIndicatorError):
            dg.gamma_t(1.0, 0.0, 3)

    def test_preconditions(self):
        with pytest.raises(InvalidInputError):
            dg.gamma_t(0.0, 0.5, 3)
        with pytest.raises(InvalidInputError):
            dg.gamma_t(1.0, 0.5, 0)


class TestRT:
    def test_zero_at_reset(self):
        assert dg.r_t(12, 12, 50.0) == 0.0

    def test_alert_level_value(self):
        assert dg.r_t(40, 0, 50.0) == 0.8

    def test_bounded_by_period_over_l_star(self):
        K, l_star = 7, 35.0
        for t in range(1, 100):
            last = (t // K) * K if t >= K else 0
            assert dg.r_t(t, last, l_star) <= K / l_star + 1e-12

    def test_invalid_l_star(self):
        with pytest.raises(InvalidInputError):
            dg.r_t(3, 0, 0.0)


class TestDeltaH:
    @staticmethod
    def markov_three_state():
        transition = np.array(
            [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.25, 0.25, 0.5]]
        )
        return dg.FiniteProcess(
            initial=np.array([0.4, 0.3, 0.3]),
            transition=transition,
            observation=(0, 1, 2),
        )

    def test_identity_compression_zero(self):
        proc = self.markov_three_state()
        for t in (1, 2, 3):
            assert dg.delta_h_t(proc, dg.identity_compressor, t) == pytest.approx(0.0, abs=1e-12)

    def test_markov_last_state_zero(self):
        proc = self.markov_three_state()
        for t in (1, 2, 3, 4):
            value = dg.delta_h_t(proc, dg.last_k_compressor(1), t)
            assert value == pytest.approx(0.0, abs=1e-12)

    def test_sticky_register_loss_positive(self):
        cfg = chain.ChainConfig(length=3, policy_noise=0.2, sticky_p=0.5)
        proc = chain.to_finite_process(cfg)
        value = dg.delta_h_t(proc, dg.last_k_compressor(1), 3)
        assert value > 1e-3

    def test_non_negative_for_deterministic_compressors(self):
        cfg = chain.ChainConfig(length=2, policy_noise=0.3, sticky_p=0.4)
        proc = chain.to_finite_process(cfg)
        for compressor in (
            dg.identity_compressor,
            dg.last_k_compressor(1),
            dg.last_k_compressor(2),
            dg.phase_suffix_compressor(2),
        ):
            for t in (1, 2, 3, 4):
                assert dg.delta_h_t(proc, compressor, t) >= -1e-12

    def test_phase_suffix_compressor_keys(self):
        compress = dg.phase_suffix_compressor(3)
        assert compress((1, 2, 3, 4)) == (3, 4)
        assert compress((1, 2)) == (0, 1, 2)

    def test_support_guard(self):
        proc = self.markov_three_state()
        with pytest.raises(ResourceLimitError):
            proc.history_table(5, max_support=100)

    def test_longer_truncation_never_worse(self):
        cfg = chain.ChainConfig(length=3, policy_noise=0.25, sticky_p=0.5)
        proc = chain.to_finite_process(cfg)
        coarse = dg.delta_h_t(proc, dg.last_k_compressor(1), 4)
        fine = dg.delta_h_t(proc, dg.last_k_compressor(3), 4)
        assert fine <= coarse + 1e-12


class TestCriticalRegion:
    @staticmethod
    def frame(t, gamma=0.01, dh=0.0, r=0.1):
        return dg.DiagnosticsFrame(t=t, gamma_t=gamma, delta_h_t=dh, r_t=r)

    @staticmethod
    def policy():
        return dg.ThresholdPolicy(gamma_threshold=0.15, delta_h_threshold=0.5, r_threshold=0.8)

    def test_all_below_no_critical(self):
        frames = dg.critical_region([self.frame(t) for t in range(1, 6)], self.policy())
        assert not any(f.critical for f in frames)

    def test_single_indicator_not_critical(self):
        frames = dg.critical_region([self.frame(1, gamma=0.5)], self.policy())
        assert frames[0].gamma_flag and not frames[0].critical

    def test_two_indicators_critical_from_onset(self):
        raw = [self.frame(t) for t in range(1, 30)] + [
            self.frame(t, gamma=0.5, r=0.9) for t in range(30, 35)
        ]
        frames = dg.critical_region(raw, self.policy())
        critical_ts = [f.t for f in frames if f.critical]
        assert critical_ts == list(range(30, 35))

    def test_monotone_in_thresholds(self):
        raw = [self.frame(t, gamma=0.2, dh=0.3, r=0.5) for t in range(1, 10)]
        loose = dg.critical_region(raw, self.policy())
        tight = dg.critical_region(
            raw, dg.ThresholdPolicy(gamma_threshold=0.1, delta_h_threshold=0.2, r_threshold=0.4)
        )
        for weak, strong in zip(loose, tight):
            assert not weak.critical or strong.critical

    def test_nan_indicators_never_flag(self):
        frames = dg.critical_region(
            [dg.DiagnosticsFrame(t=1, gamma_t=math.nan, delta_h_t=math.nan, r_t=0.9)],
            self.policy(),
        )
        assert frames[0].r_flag and not frames[0].critical

    def test_frame_invariant_enforced(self):
        with pytest.raises(InvalidInputError):
            dg.DiagnosticsFrame(
                t=1, gamma_t=0.1, delta_h_t=0.1, r_t=0.1,
                gamma_flag=True, r_flag=True, critical=False,
            )

    def test_saturated_gamma_counts_as_exceeded(self):
        frames = dg.critical_region(
            [dg.DiagnosticsFrame(t=4, gamma_t=math.inf, delta_h_t=math.nan, r_t=0.95)],
            self.policy(),
        )
        assert frames[0].critical

    def test_frames_from_trace_assembly(self):
        ts = np.arange(0, 6)
        rho = np.array([1.0, 0.9, 0.8, 0.0, 0.6, 0.5])
        frames = dg.frames_from_trace(ts, rho, l_star=10.0, reset_period=2)
        assert [f.t for f in frames] == [1, 2, 3, 4, 5]
        assert math.isinf(frames[2].gamma_t)  # saturated at rho = 0
        assert frames[1].r_t == 0.0  # reset at t = 2
        assert frames[2].r_t == pytest.approx(0.1)


class TestCrossModuleConsistency:
    def test_gamma_t_tracks_fitted_decay_on_ar_chain(self):
        # stationary-spread initial conditions keep the trace geometric from
        # the start, so the running estimate matches the fitted rate
        from horizon_lab import kernel_dynamics as kd

        kernel = kd.GaussianARKernel(0.9, 1.0)
        spread = math.sqrt(1.0 / (1.0 - 0.9**2))
        mc = kd.simulate_ar_chain(
            kernel, ((1.0, spread), (-1.0, spread)), horizon=40, trials=100_000, seed=5
        )
        fit = kd.fit_exponential_decay(mc, tau=0.05)
        assert fit.gamma == pytest.approx(-math.log(0.9), rel=0.05)
        for t in range(5, fit.window[1] + 1):
            running = dg.gamma_t(fit.rho0, float(mc.rho[t]), t)
            assert abs(running - fit.gamma) <= 0.10 * fit.gamma


class TestBranchingSurvival:
    def test_single_branch_identity(self):
        for rho in (0.0, 0.25, 1.0):
            assert dg.branching_survival(rho, 1) == rho

    def test_two_branch_value(self):
        assert dg.branching_survival(0.5, 2) == pytest.approx(0.75, abs=1e-15)

    def test_ten_branch_value_against_monte_carlo(self):
        formula = dg.branching_survival(0.1, 10)
        assert formula == pytest.approx(1 - 0.9**10, abs=1e-15)
        rng = derive_rng("branching-oracle", 0.1, 10)
        n = 200_000
        survived = (rng.random((n, 10)) < 0.1).any(axis=1)
        phat = survived.mean()
        se = math.sqrt(phat * (1 - phat) / n)
        assert abs(formula - phat) <= 2.576 * se

    def test_monotone_in_rho_and_b(self):
        rhos = np.linspace(0.01, 0.99, 20)
        values = [dg.branching_survival(r, 3) for r in rhos]
        assert all(a <= b for a, b in zip(values, values[1:]))
        by_b = [dg.branching_survival(0.2, b) for b in range(1, 30)]
        assert all(a <= b for a, b in zip(by_b, by_b[1:]))


class TestPhaseBoundary:
    def test_single_branch_reduces_to_critical_length(self):
        gamma, rho0, tau = 0.05, 1.0, 0.2
        value = dg.phase_boundary_length(gamma, rho0, tau, 1)
        assert value == math.log(rho0 / tau) / gamma

    def test_matches_bisection_oracle(self):
        for b in (1, 2, 10, 100):
            closed = dg.phase_boundary_length(0.08, 0.9, 0.15, b)
            assert closed == pytest.approx(bisect_boundary(0.08, 0.9, 0.15, b), abs=1e-8)

    def test_strictly_increasing_and_concave_in_log_b(self):
        curve = dg.phase_boundary(0.05, 1.0, 0.2, range(1, 200))
        values = [v for _b, v in curve]
        assert all(a < b for a, b in zip(values, values[1:]))
        gaps = np.diff(values)
        assert all(g2 <= g1 + 1e-12 for g1, g2 in zip(gaps, gaps[1:]))

    def test_logarithmic_growth(self):
        bs = [2**k for k in range(0, 11)]
        curve = dict(dg.phase_boundary(0.05, 1.0, 0.2, bs))
        # doubling b adds about ln(2)/gamma for large b
        increments = [curve[2 * b] - curve[b] for b in bs[5:-1]]
        for inc in increments:
            assert inc == pytest.approx(math.log(2) / 0.05, rel=0.02)

    def test_preconditions(self):
        with pytest.raises(InvalidInputError):
            dg.phase_boundary_length(0.0, 1.0, 0.2, 1)
        with pytest.raises(InvalidInputError):
            dg.phase_boundary_length(0.1, 0.5, 0.6, 1)
