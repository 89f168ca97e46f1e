import math

import numpy as np
import pytest

from exp3mle import (
    BanditSpec,
    ConstantRate,
    DegenerateInput,
    DomainError,
    EmptyInput,
    ExperimentConfig,
    OptimizerConfig,
    PolynomialRate,
    RateBounds,
    derive_seed,
    estimation_error_bound,
    prediction_error,
    prediction_error_bound,
    quantile,
    rate_regression,
    run_experiment,
    simulate,
    spearman_test,
    squared_gap_lower_margin,
)

SPEC2 = BanditSpec(losses=(0.8, 0.0))
SPEC4 = BanditSpec(losses=(0.8, 0.6, 0.4, 0.2))
BOX = RateBounds(lower=0.1, upper=0.8)


class TestQuantile:
    def test_median_odd(self):
        assert quantile([1, 2, 3, 4, 5], 0.5) == 3.0

    def test_boundaries(self):
        assert quantile([3, 1, 2], 0.0) == 1.0
        assert quantile([3, 1, 2], 1.0) == 3.0

    def test_type7_interpolation(self):
        assert quantile([10, 20], 0.95) == pytest.approx(19.5, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            quantile([], 0.5)


class TestSpearman:
    def test_perfect_discordance_exact_p(self):
        rho, p = spearman_test([1, 2, 3, 4], [4, 3, 2, 1], "decreasing")
        assert rho == pytest.approx(-1.0, abs=1e-12)
        assert p == pytest.approx(1.0 / 24.0, abs=1e-12)

    def test_perfect_concordance(self):
        rho, _ = spearman_test([1, 2, 3, 4, 5], [2, 4, 6, 8, 10], "increasing")
        assert rho == pytest.approx(1.0, abs=1e-12)

    def test_ties_midrank(self):
        rho, _ = spearman_test([1, 2, 2, 3], [1, 2, 2, 3], "increasing")
        assert rho == pytest.approx(1.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            spearman_test([1, 1, 1, 1], [1, 2, 3, 4])

    def test_length_validation(self):
        with pytest.raises(DomainError):
            spearman_test([1, 2], [2, 1])

    def test_null_calibration(self):
        # two-sided rejection rate at the 5% level stays near 5% under the null
        rng = np.random.default_rng(7)
        m = 20  # exercises the t-approximation branch
        rejections = 0
        trials = 1000
        for _ in range(trials):
            x = rng.random(m)
            y = rng.random(m)
            _, p = spearman_test(x, y, "two-sided")
            rejections += p < 0.05
        assert 0.02 <= rejections / trials <= 0.08

    def test_exact_branch_null_calibration(self):
        rng = np.random.default_rng(11)
        m = 7
        rejections = 0
        trials = 400
        for _ in range(trials):
            x = rng.random(m)
            y = rng.random(m)
            _, p = spearman_test(x, y, "two-sided")
            rejections += p < 0.05
        assert 0.01 <= rejections / trials <= 0.10


class TestRateRegression:
    def test_exact_recovery(self):
        ns = np.array([500.0, 1000, 2000, 4000, 8000])
        coef, r2 = rate_regression(ns, 3.0 * ns**-0.25, -0.25)
        assert coef == pytest.approx(3.0, rel=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_recovery_under_noise(self):
        rng = np.random.default_rng(3)
        ns = np.geomspace(500, 30000, 12)
        truth = 2.5 * ns**-0.25
        values = truth * (1.0 + 0.01 * rng.standard_normal(ns.size))
        coef, r2 = rate_regression(ns, values, -0.25)
        assert abs(coef - 2.5) / 2.5 < 0.05
        assert r2 > 0.9

    def test_intercept_free_goodness_convention(self):
        # hand-computed: x = (1, 2), values = (1, 3) => coef 1.4,
        # residuals (-0.4, 0.2), R^2 = 1 - 0.2/10
        coef, r2 = rate_regression([1.0, 4.0], [1.0, 3.0], 0.5)
        assert coef == pytest.approx(1.4, rel=1e-12)
        assert r2 == pytest.approx(1.0 - 0.2 / 10.0, rel=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            rate_regression([5, 5, 5], [1, 2, 3], -0.25)


class TestPredictionError:
    def test_zero_at_equal_rates(self):
        t = simulate(SPEC2, PolynomialRate(0.3, 0.5), 500, seed=1)
        assert prediction_error(t, t.rate, t.rate, 100) == 0.0

    def test_bounded_by_simplex_diameter(self):
        t = simulate(SPEC4, PolynomialRate(0.3, 0.5), 500, seed=2)
        value = prediction_error(t, t.rate, 2.0 * t.rate, 40)
        assert 0.0 <= value <= 2.0

    def test_propagates_replay_collapse(self):
        from exp3mle import ReplayCollapse

        t = simulate(SPEC4, PolynomialRate(0.3, 0.5), 500, seed=2)
        with pytest.raises(ReplayCollapse):
            prediction_error(t, t.rate, 60.0, 400)

    def test_bound_arithmetic(self):
        assert prediction_error_bound(0.0, 100, 0.01) == pytest.approx(1089.0, abs=1e-9)

    def test_bound_monotone_in_upsilon(self):
        values = [prediction_error_bound(3.0, u, 0.01) for u in (10, 100, 1000, 100000)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < values[0] / 10


class TestSquaredGapLowerMargin:
    def test_zero_at_equal_rates(self):
        t = simulate(SPEC2, PolynomialRate(0.3, 0.5), 400, seed=3)
        margin = squared_gap_lower_margin(t, t.rate, t.rate, 0.8, 0.01, 60)
        assert margin == 0.0

    def test_no_top_arm_pulls_reduces_to_lhs(self):
        arms = np.full(30, 2, dtype=np.int64)
        path = np.full((30, 2), 0.5)
        from exp3mle import Trajectory

        t = Trajectory(spec=SPEC2, schedule=ConstantRate(0.3), n=30, seed=0,
                       arms=arms, true_path=path)
        margin = squared_gap_lower_margin(t, 0.01, 0.02, 0.8, 0.01, 30)
        assert margin >= 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_nonnegative_on_sampled_rate_pairs(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = 2000
        t = simulate(SPEC2, PolynomialRate(0.3, 0.5), n, seed=seed)
        scale = n**0.5 * 0.8
        d0, e0 = rng.uniform(0.1, 0.8, size=2)
        upsilon = 60
        margin = squared_gap_lower_margin(t, d0 / scale, e0 / scale, 0.8, 0.01, upsilon)
        assert margin >= 0.0

    def test_rejects_wrong_spec(self):
        t = simulate(SPEC4, PolynomialRate(0.3, 0.5), 100, seed=4)
        with pytest.raises(DomainError):
            squared_gap_lower_margin(t, 0.01, 0.02, 0.8, 0.01, 10)


class TestEstimationErrorBound:
    def test_deterministic_part_arithmetic(self):
        # at 120 steps the fluctuation term still dominates: flagged vacuous
        bound = estimation_error_bound(3.0, 120, 0.8, 0.01, 0.8)
        assert bound.vacuous
        assert bound.value is None

    def test_a_n_b_n_values(self):
        upsilon = 120
        a_n = upsilon * (upsilon - 1) * (2 * upsilon - 1) / 96.0
        assert a_n == pytest.approx(35551.25, abs=1e-9)
        assert a_n / upsilon**2 == pytest.approx(2.46883680555, rel=1e-9)

    def test_quarter_power_decay(self):
        # log-log slope of the formula itself approaches -1/4
        u1, u2 = 10**6, 10**8
        b1 = estimation_error_bound(3.0, u1, 0.8, 0.01, 0.8).value
        b2 = estimation_error_bound(3.0, u2, 0.8, 0.01, 0.8).value
        slope = math.log(b2 / b1) / math.log(u2 / u1)
        assert slope == pytest.approx(-0.25, abs=0.02)

    def test_nonvacuous_region(self):
        bound = estimation_error_bound(3.0, 100000, 0.8, 0.01, 0.8)
        assert not bound.vacuous
        assert bound.value > 0.0


class TestSeedDerivation:
    def test_stability(self):
        assert derive_seed(1, 500, 0) == derive_seed(1, 500, 0)

    def test_distinctness(self):
        seeds = {derive_seed(1, n, rep, s) for n in (500, 501) for rep in range(50) for s in (0, 1)}
        assert len(seeds) == 200

    def test_extension_does_not_perturb(self):
        before = [derive_seed(9, 500, rep) for rep in range(10)]
        after = [derive_seed(9, 500, rep) for rep in range(20)][:10]
        assert before == after


class TestRunExperiment:
    def make_config(self, **overrides):
        base = dict(
            name="t", mode="constant", spec=SPEC2, theta=BOX,
            n_values=(200, 400), replications=3, eta=0.3, base_seed=5,
            optimizer=OptimizerConfig(max_iterations=20),
        )
        base.update(overrides)
        return ExperimentConfig(**base)

    def test_record_count_and_order(self):
        report = run_experiment(self.make_config())
        assert len(report.records) == 6
        assert [(r.n, r.rep) for r in report.records] == [
            (200, 0), (200, 1), (200, 2), (400, 0), (400, 1), (400, 2)]

    def test_csv_determinism_across_jobs(self):
        a = run_experiment(self.make_config())
        b = run_experiment(self.make_config(), jobs=2)
        assert a.to_csv() == b.to_csv()

    def test_csv_schema(self):
        report = run_experiment(self.make_config())
        header = report.to_csv().splitlines()[0]
        assert header == "n,rep,seed,eta_true,eta_hat,rel_error,pred_error,upsilon,collapsed"

    def test_single_cell_flags_insufficient_trend(self):
        report = run_experiment(self.make_config(n_values=(200,), replications=1))
        assert len(report.records) == 1
        assert report.aggregates["spearman"]["rel_error"] == {"insufficient": True}

    def test_decreasing_mode_records(self):
        config = self.make_config(
            mode="decreasing", eta=None, eta0=0.3, alpha=0.5, epsilon=1e-7,
            n_values=(300, 600), replications=2,
        )
        report = run_experiment(config)
        for r in report.records:
            assert not r.collapsed
            assert r.upsilon >= 1
            assert r.pred_error is not None and r.pred_error >= 0.0
            assert r.rel_error is not None

    def test_upsilon_mode_aggregates(self):
        config = self.make_config(
            mode="upsilon", eta=None, eta0=0.3, alpha=0.5,
            epsilons=(1e-2, 1e-15), spec=SPEC4, n_values=(300, 600), replications=3,
        )
        report = run_experiment(config)
        assert report.aggregates["floor_violations"] == 0
        means = report.aggregates["upsilon_means"]
        assert set(means) == {"0.01", "1e-15"}
        assert means["0.01"]["600"] > means["0.01"]["300"]

    def test_config_validation(self):
        with pytest.raises(DomainError):
            self.make_config(n_values=(400, 200))
        with pytest.raises(DomainError):
            self.make_config(mode="constant", eta=None)
