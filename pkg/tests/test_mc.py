"""Simulation layer: exact checks where paths are deterministic, frozen-seed
three-sigma gates against the closed-form layer everywhere else.

The bounded-variation engine is exact (jump epochs are the only upward
crossing opportunities and coupons integrate in closed form per segment), so
its comparisons carry no discretisation slack; the grid engine's bridge
correction leaves O(dt) bias, kept far below the statistical bands used here.
"""

import math
import warnings

import numpy as np
import pytest

from levybond import (
    ConfigError,
    DomainError,
    ExponentialJumps,
    IMMEDIATE_STOP,
    LevyModel,
    MomentConditionError,
    NoJumps,
    TabulatedDensity,
    TruncationWarning,
    bounded_variation_model,
    exp_growth_rate,
    laplace_exponent,
)
from levybond.mc import (
    PathSample,
    PayoffEstimate,
    SimConfig,
    estimate_game_value,
    estimate_game_values,
    first_passage_up,
    mc_eligible,
    payoff,
    saddle_check,
    sample_path,
    sup_exponential_moment,
    two_sided_exit,
    upcrossing_discount_profile,
    wiener_hopf_check,
)
from levybond.scale import scale_evaluator, w
from levybond.solver import GameParams, Regime, classify, exit_expectation, value

CANON = LevyModel(0.0, 2.0)
B05 = LevyModel(0.0, 0.5)
BV2 = bounded_variation_model(2.0, ExponentialJumps(1.0, 2.0))
EXPJM = LevyModel(0.1, 0.3, ExponentialJumps(1.0, 2.0))
DRIFT = bounded_variation_model(0.2, NoJumps())   # X_t = -0.2 t exactly

with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # deliberate sub-grid mass drop
    _g = np.linspace(0.004, 8.0, 401)
    TAB = LevyModel(0.1, 0.3, TabulatedDensity(tuple(_g), tuple(2.0 * np.exp(-2.0 * _g)), 2.0))


def gp(q, alpha=1.0, beta=1.0, K=2.0):
    return GameParams(alpha, beta, q, K)


def zscore(est: PayoffEstimate, target: float) -> float:
    return (est.mean - target) / est.stderr


class TestSimConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            SimConfig(n_paths=0, horizon=1.0, dt=1e-3, seed=1)
        with pytest.raises(ConfigError):
            SimConfig(n_paths=10, horizon=-1.0, dt=1e-3, seed=1)
        with pytest.raises(ConfigError):
            SimConfig(n_paths=10, horizon=1.0, dt=0.0, seed=1)
        with pytest.raises(ConfigError):
            SimConfig(n_paths=10, horizon=0.5, dt=1.0, seed=1)  # dt > T

    def test_eligibility(self):
        assert mc_eligible(CANON)
        assert mc_eligible(BV2)
        # a driftless-Gaussian-free model with enormous jump activity cannot
        # be simulated event by event in reasonable time
        grid = np.linspace(1e-3, 1.0, 200)
        dense = TabulatedDensity(tuple(grid), tuple(np.full(200, 3e6)), 5.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            heavy = bounded_variation_model(8e6, dense)
        assert not mc_eligible(heavy)


class TestSamplePath:
    def test_deterministic_per_seed_and_index(self):
        cfg = SimConfig(n_paths=4, horizon=2.0, dt=1e-3, seed=77)
        p1 = sample_path(EXPJM, cfg, 3)
        p2 = sample_path(EXPJM, cfg, 3)
        assert np.array_equal(p1.times, p2.times)
        assert np.array_equal(p1.values, p2.values)
        assert np.array_equal(p1.jump_sizes, p2.jump_sizes)
        p3 = sample_path(EXPJM, cfg, 4)
        assert not np.array_equal(p1.values, p3.values)

    def test_no_jumps_means_no_jumps(self):
        cfg = SimConfig(n_paths=1, horizon=2.0, dt=1e-3, seed=5)
        path = sample_path(CANON, cfg, 0)
        assert len(path.jump_times) == 0
        assert not path.is_jump.any()

    def test_jump_count_matches_poisson_rate(self):
        # rate-1 jumps over ten units of time: mean count 10, sd sqrt(10)
        cfg = SimConfig(n_paths=1, horizon=10.0, dt=1e-2, seed=21)
        counts = [len(sample_path(EXPJM, cfg, k).jump_times) for k in range(400)]
        assert abs(np.mean(counts) - 10.0) <= 3.0 * math.sqrt(10.0 / 400.0)

    def test_jumps_are_strictly_positive(self):
        cfg = SimConfig(n_paths=1, horizon=6.0, dt=1e-2, seed=8)
        for model in (EXPJM, TAB, BV2):
            sizes = np.concatenate([sample_path(model, cfg, k).jump_sizes
                                    for k in range(40)])
            assert len(sizes) > 0
            assert sizes.min() > 0.0

    def test_running_sup_and_grid_shape(self):
        cfg = SimConfig(n_paths=1, horizon=1.0, dt=1e-2, seed=3)
        path = sample_path(EXPJM, cfg, 1, x0=0.3)
        assert path.x0 == 0.3
        assert path.times[-1] == pytest.approx(1.0)
        assert np.all(np.diff(path.times) > 0.0)
        sup = np.maximum.accumulate(np.concatenate([[0.3], path.values]))[1:]
        assert np.array_equal(path.running_sup, sup)

    @pytest.mark.parametrize("model,n", [(CANON, 1500), (TAB, 1200)])
    def test_one_step_laplace_transform(self, model, n):
        # E[e^(-X_1)] = e^(psi(1)); the grid values are exact in law at nodes
        cfg = SimConfig(n_paths=1, horizon=1.0, dt=2e-3, seed=13)
        ends = np.array([sample_path(model, cfg, k).values[-1] for k in range(n)])
        sample = np.exp(-ends)
        target = math.exp(laplace_exponent(model, 1.0))
        stderr = sample.std(ddof=1) / math.sqrt(n)
        assert abs(sample.mean() - target) <= 3.0 * stderr

    def test_invalid_config_rejected_before_sampling(self):
        with pytest.raises(ConfigError):
            SimConfig(n_paths=1, horizon=0.0, dt=1e-3, seed=1)


class TestFirstPassage:
    def test_continuous_crossing_has_zero_overshoot(self):
        cfg = SimConfig(n_paths=1, horizon=4.0, dt=1e-3, seed=2)
        for k in range(30):
            path = sample_path(CANON, cfg, k)
            t, pos = first_passage_up(path, 0.4)
            if math.isfinite(t):
                assert pos == 0.4

    def test_start_above_level(self):
        cfg = SimConfig(n_paths=1, horizon=1.0, dt=1e-3, seed=2)
        path = sample_path(CANON, cfg, 0, x0=1.0)
        assert first_passage_up(path, 0.5) == (0.0, 1.0)

    def test_start_at_level_with_gaussian_part_is_immediate(self):
        cfg = SimConfig(n_paths=1, horizon=1.0, dt=1e-3, seed=6)
        for k in range(20):
            path = sample_path(CANON, cfg, k)
            t, _ = first_passage_up(path, 0.0)
            assert t <= cfg.dt

    def test_no_crossing_is_infinite(self):
        cfg = SimConfig(n_paths=1, horizon=0.5, dt=1e-3, seed=2)
        path = sample_path(CANON, cfg, 0)
        t, pos = first_passage_up(path, 50.0)
        assert math.isinf(t) and math.isnan(pos)

    def test_transform_matches_closed_form(self):
        # E[e^(-q tau(y))] at q=1, y=1 for the Gaussian canonical model
        cfg = SimConfig(n_paths=1, horizon=8.0, dt=4e-3, seed=17)
        n = 1500
        vals = np.zeros(n)
        for k in range(n):
            t, _ = first_passage_up(sample_path(CANON, cfg, k), 1.0)
            vals[k] = math.exp(-t) if math.isfinite(t) else 0.0
        target = exit_expectation(CANON, 1.0, 1.0)
        stderr = vals.std(ddof=1) / math.sqrt(n)
        assert abs(vals.mean() - target) <= 3.0 * stderr


class TestPayoff:
    def test_immediate_call_pays_cap_or_share(self):
        cfg = SimConfig(n_paths=1, horizon=1.0, dt=1e-3, seed=4)
        above = sample_path(CANON, cfg, 0, x0=1.0)
        assert payoff(above, gp(3.0), 0.2, IMMEDIATE_STOP) == math.exp(1.0)
        below = sample_path(CANON, cfg, 1, x0=0.0)
        assert payoff(below, gp(3.0), 0.2, IMMEDIATE_STOP) == 2.0

    def test_unstopped_drift_path_recovers_perpetual_coupons(self):
        # X_t = -0.2t: never crosses an upper level, coupons integrate in
        # closed form and the tail completion makes the total exact:
        # alpha/q + beta e^(x0)/(q - psi(-1))
        cfg = SimConfig(n_paths=1, horizon=30.0, dt=1e-2, seed=4)
        path = sample_path(DRIFT, cfg, 0)
        got = payoff(path, gp(0.5), 1.0, 2.0)
        expected = 1.0 / 0.5 + math.exp(0.0) / (0.5 - exp_growth_rate(DRIFT))
        assert got == pytest.approx(expected, abs=1e-10)

    def test_simultaneous_threshold_settles_at_cap_branch(self):
        # equal thresholds: the call side wins ties, so a jump landing above
        # pays max(K, share) at the passage time found independently
        cfg = SimConfig(n_paths=1, horizon=25.0, dt=1e-2, seed=14)
        p = gp(0.8)
        lvl = 0.4
        checked = 0
        for k in range(60):
            path = sample_path(BV2, cfg, k)
            t, pos = first_passage_up(path, lvl)
            if not math.isfinite(t):
                continue
            got = payoff(path, p, lvl, lvl)
            coupons = got - math.exp(-p.q * t) * max(p.K, math.exp(pos))
            assert coupons >= -1e-12
            # overshoot strictly above the level: bounded variation crossing
            # happens by a jump
            assert pos > lvl
            checked += 1
        assert checked >= 10


class TestEstimates:
    def test_immediate_call_regime_is_exact(self):
        sol = classify(B05, gp(0.3))
        assert sol.regime is Regime.R1
        cfg = SimConfig(n_paths=3000, horizon=5.0, dt=1e-2, seed=30)
        est = estimate_game_value(B05, gp(0.3), 0.0, sol.tau_level,
                                  sol.sigma_level, cfg)
        assert est.mean == 2.0 and est.stderr == 0.0 and est.n == 3000

    def test_start_beyond_holder_threshold_is_exact(self):
        sol = classify(B05, gp(2.5))
        assert sol.regime is Regime.R2
        x = sol.tau_level + 0.4
        cfg = SimConfig(n_paths=1000, horizon=5.0, dt=1e-2, seed=31)
        est = estimate_game_value(B05, gp(2.5), x, sol.tau_level,
                                  sol.sigma_level, cfg)
        assert est.mean == pytest.approx(math.exp(x), rel=1e-15)
        assert est.stderr == 0.0

    def test_bitwise_reproducibility(self):
        cfg = SimConfig(n_paths=4000, horizon=6.0, dt=2e-3, seed=99)
        sol = classify(CANON, gp(3.0))
        a = estimate_game_value(CANON, gp(3.0), -0.5, sol.tau_level,
                                sol.sigma_level, cfg)
        b = estimate_game_value(CANON, gp(3.0), -0.5, sol.tau_level,
                                sol.sigma_level, cfg)
        assert a.mean == b.mean and a.stderr == b.stderr
        other = SimConfig(n_paths=4000, horizon=6.0, dt=2e-3, seed=100)
        c = estimate_game_value(CANON, gp(3.0), -0.5, sol.tau_level,
                                sol.sigma_level, other)
        assert c.mean != a.mean

    def test_discount_condition_gate(self):
        cfg = SimConfig(n_paths=100, horizon=2.0, dt=1e-2, seed=1)
        with pytest.raises(MomentConditionError):
            estimate_game_value(CANON, gp(0.9), 0.0, 0.5, 0.7, cfg)

    def test_ineligible_model_rejected(self):
        grid = np.linspace(1e-3, 1.0, 200)
        dense = TabulatedDensity(tuple(grid), tuple(np.full(200, 3e6)), 5.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            heavy = bounded_variation_model(8e6, dense)
        q = exp_growth_rate(heavy) + 1.0
        cfg = SimConfig(n_paths=100, horizon=2.0, dt=1e-2, seed=1)
        with pytest.raises(DomainError):
            estimate_game_value(heavy, gp(q), 0.0, 0.5, 0.7, cfg)

    def test_short_horizon_warns_about_truncation(self):
        # q barely above the share's growth rate: the coupon tail decays so
        # slowly that a short run cannot represent the perpetual stream
        cfg = SimConfig(n_paths=500, horizon=6.0, dt=1e-2, seed=7)
        with pytest.warns(TruncationWarning):
            estimate_game_value(CANON, gp(1.1), -0.5, 0.7, 0.7, cfg)


class TestValueAgreement:
    """Each regime of the small-volatility Gaussian family against its
    analytic value at three interior starts (shared-path sweeps)."""

    def test_immediate_call_regime(self):
        sol = classify(B05, gp(0.3))
        cfg = SimConfig(n_paths=2000, horizon=5.0, dt=1e-2, seed=40)
        for x in (-0.5, 0.0, 1.0):
            est = estimate_game_value(B05, gp(0.3), x, sol.tau_level,
                                      sol.sigma_level, cfg)
            # averaging n identical payoffs only rounds at the last ulp
            assert est.mean == pytest.approx(max(2.0, math.exp(x)), rel=1e-15)
            assert est.stderr <= 1e-15

    def test_conversion_regime(self):
        p = gp(2.5)
        sol = classify(B05, p)
        assert sol.regime is Regime.R2
        xs = [sol.tau_level - 1.0, sol.tau_level - 0.5, sol.tau_level - 0.1]
        cfg = SimConfig(n_paths=20_000, horizon=8.0, dt=2e-3, seed=41)
        ests = estimate_game_values(B05, p, xs, sol.tau_level,
                                    sol.sigma_level, cfg)
        for x, est in zip(xs, ests):
            assert abs(zscore(est, value(B05, p, sol, x))) <= 3.0, x

    def test_simultaneous_regime(self):
        p = gp(1.5)
        sol = classify(B05, p)
        assert sol.regime is Regime.R3
        log_k = math.log(2.0)
        xs = [log_k - 1.2, log_k - 0.5, log_k - 0.1]
        cfg = SimConfig(n_paths=20_000, horizon=12.0, dt=2e-3, seed=42)
        ests = estimate_game_values(B05, p, xs, sol.tau_level,
                                    sol.sigma_level, cfg)
        for x, est in zip(xs, ests):
            assert abs(zscore(est, value(B05, p, sol, x))) <= 3.0, x

    def test_call_boundary_regime(self):
        p = gp(0.75)
        sol = classify(B05, p)
        assert sol.regime is Regime.R4
        xs = [sol.c_star - 1.0, sol.c_star - 0.5, sol.c_star - 0.1]
        cfg = SimConfig(n_paths=20_000, horizon=20.0, dt=2e-3, seed=43)
        ests = estimate_game_values(B05, p, xs, sol.tau_level,
                                    sol.sigma_level, cfg)
        for x, est in zip(xs, ests):
            assert abs(zscore(est, value(B05, p, sol, x))) <= 3.0, x

    def test_call_boundary_regime_with_jumps_exact_engine(self):
        # bounded variation: the event engine has no discretisation error,
        # making this the sharpest independent check of the jump-model value
        p = gp(0.8)
        sol = classify(BV2, p)
        assert sol.regime is Regime.R4
        xs = [sol.c_star - 1.0, sol.c_star - 0.3]
        cfg = SimConfig(n_paths=30_000, horizon=40.0, dt=1e-3, seed=44)
        ests = estimate_game_values(BV2, p, xs, sol.tau_level,
                                    sol.sigma_level, cfg)
        for x, est in zip(xs, ests):
            assert abs(zscore(est, value(BV2, p, sol, x))) <= 3.0, x


class TestUpcrossingProfile:
    def test_gaussian_exit_identity(self):
        # E[e^(-q tau(y))] = e^(-y) for the canonical Gaussian model at q=1
        cfg = SimConfig(n_paths=20_000, horizon=10.0, dt=2e-3, seed=50)
        levels = [0.5, 1.0, 2.0]
        ests = upcrossing_discount_profile(CANON, 1.0, levels, cfg)
        for y, est in zip(levels, ests):
            assert abs(zscore(est, exit_expectation(CANON, 1.0, y))) <= 3.0, y

    def test_bounded_variation_exit_identity_including_start(self):
        # at level zero the crossing waits for the first clearing jump and
        # the transform drops to 1 - q/(Phi d); the event engine is exact
        cfg = SimConfig(n_paths=40_000, horizon=25.0, dt=1e-3, seed=51)
        levels = [0.0, 0.7, 1.5]
        ests = upcrossing_discount_profile(BV2, 0.8, levels, cfg)
        for y, est in zip(levels, ests):
            assert abs(zscore(est, exit_expectation(BV2, 0.8, y))) <= 3.0, y


class TestTwoSidedExit:
    @pytest.mark.parametrize("model,p,down,up,n,dt,T", [
        (CANON, 1.0, 0.6, 0.8, 20_000, 2e-3, 6.0),
        (BV2, 0.9, 0.8, 0.7, 40_000, 1e-3, 25.0),
    ])
    def test_scale_ratio_identity(self, model, p, down, up, n, dt, T):
        cfg = SimConfig(n_paths=n, horizon=T, dt=dt, seed=52)
        est = two_sided_exit(model, p, down, up, cfg)
        ev = scale_evaluator(model, p)
        target = w(ev, up) / w(ev, down + up)
        assert abs(zscore(est, target)) <= 3.0


class TestWienerHopf:
    def test_closed_form_canonical_value(self):
        # Phi(4)=2 and psi(-1)=1 collapse the factor to exactly 2
        assert sup_exponential_moment(CANON, 4.0) == pytest.approx(2.0, rel=1e-12)

    def test_limit_of_instant_killing(self):
        assert sup_exponential_moment(CANON, 1e8) == pytest.approx(1.0, abs=2e-4)

    def test_requires_discount_above_growth(self):
        with pytest.raises(MomentConditionError):
            sup_exponential_moment(CANON, 1.0)

    def test_gaussian_estimate(self):
        cfg = SimConfig(n_paths=15_000, horizon=4.0, dt=1e-3, seed=53)
        est = wiener_hopf_check(CANON, 4.0, cfg)
        assert abs(zscore(est, 2.0)) <= 3.0

    def test_jump_model_estimate(self):
        cfg = SimConfig(n_paths=15_000, horizon=6.0, dt=1e-3, seed=54)
        est = wiener_hopf_check(EXPJM, 3.0, cfg)
        assert abs(zscore(est, sup_exponential_moment(EXPJM, 3.0))) <= 3.0


class TestSaddle:
    def test_zero_delta_is_an_identity(self):
        sol = classify(B05, gp(2.5))
        cfg = SimConfig(n_paths=2000, horizon=6.0, dt=5e-3, seed=60)
        report = saddle_check(B05, gp(2.5), sol, delta=0.0, config=cfg)
        assert report.all_pass()
        for comp in report.comparisons:
            assert comp.gap == 0.0 and comp.gap_stderr == 0.0

    def test_conversion_regime_equilibrium(self):
        sol = classify(B05, gp(2.5))
        cfg = SimConfig(n_paths=10_000, horizon=8.0, dt=2e-3, seed=61)
        report = saddle_check(B05, gp(2.5), sol, delta=0.1, config=cfg)
        assert report.all_pass(), [(c.label, c.verdict, c.gap)
                                   for c in report.comparisons]

    def test_call_boundary_equilibrium_exact_engine(self):
        sol = classify(BV2, gp(0.8))
        cfg = SimConfig(n_paths=40_000, horizon=40.0, dt=1e-3, seed=62)
        report = saddle_check(BV2, gp(0.8), sol, delta=0.1, config=cfg)
        assert report.all_pass(), [(c.label, c.verdict, c.gap)
                                   for c in report.comparisons]

    def test_immediate_call_degenerates_to_identity(self):
        sol = classify(B05, gp(0.3))
        cfg = SimConfig(n_paths=500, horizon=4.0, dt=1e-2, seed=63)
        report = saddle_check(B05, gp(0.3), sol, delta=0.1, config=cfg)
        assert report.all_pass()
        assert all(c.gap == 0.0 for c in report.comparisons)

    def test_argument_validation(self):
        sol = classify(B05, gp(2.5))
        cfg = SimConfig(n_paths=100, horizon=4.0, dt=1e-2, seed=1)
        with pytest.raises(DomainError):
            saddle_check(B05, gp(2.5), sol, delta=-0.1, config=cfg)
        with pytest.raises(ConfigError):
            saddle_check(B05, gp(2.5), sol, delta=0.1, config=None)
