import math

import numpy as np
import pytest
import statistics

from mvrating.core import Dataset, FeatureSpec, Game, PriorSpec
from mvrating.likelihood import LikelihoodModel
from mvrating.optimizer import FitConfig
from mvrating.simulate import generate, make_truth
from mvrating.uncertainty import (bootstrap_fit, pivotal_interval, replicate_rng, resample, resample_counts,
                                  sigma_interval)

BT, PRI, CFG = LikelihoodModel(), PriorSpec(), FitConfig()


class TestResample:
    def test_single_game(self):
        ds = Dataset.from_games([Game("a", "b", 1.0, multiplicity=7)])
        out = resample(ds, np.random.default_rng(0))
        assert out.games == (Game("a", "b", 1.0, multiplicity=7),)
        assert out.models == ds.models

    def test_deterministic(self):
        ds = generate(make_truth(4, tasks=(), seed=0), 100, seed=0)
        assert resample(ds, replicate_rng(5, 2)) == resample(ds, replicate_rng(5, 2))
        assert resample(ds, replicate_rng(5, 2)) != resample(ds, replicate_rng(5, 3))

    def test_size_preserved(self):
        ds = generate(make_truth(4, tasks=(), seed=0), 100, seed=0)
        assert resample(ds, np.random.default_rng(1)).total_games == ds.total_games

    def test_inclusion_counts(self):
        counts = np.ones(100)
        rng = np.random.default_rng(9)
        reps = 10_000
        total = np.zeros(100)
        for _ in range(reps):
            total += resample_counts(counts, rng)
        mean = total / reps
        # each count is Binomial(100, 1/100): mean 1, variance 0.99
        sd_of_mean = math.sqrt(100 * 0.01 * 0.99 / reps)
        assert np.all(np.abs(mean - 1.0) < 3 * sd_of_mean)

    def test_empty(self):
        with pytest.raises(ValueError):
            resample(Dataset.from_games([], models=("a", "b")), np.random.default_rng(0))


class TestBootstrap:
    def test_reproducible(self):
        ds = generate(make_truth(3, tasks=(), seed=1), 300, seed=1)
        a = bootstrap_fit(ds, (), BT, PRI, CFG, 2, seed=4)
        b = bootstrap_fit(ds, (), BT, PRI, CFG, 2, seed=4)
        np.testing.assert_array_equal(a.base, b.base)
        assert a.base.shape == (2, 3)

    def test_zero_variance(self):
        ds = Dataset.from_games([Game("a", "b", 0.5, multiplicity=40)])
        s = bootstrap_fit(ds, (), BT, PRI, CFG, 5, seed=0)
        assert np.all(s.base == s.base[0])

    def test_parallel_matches_serial(self):
        ds = generate(make_truth(3, tasks=(), alpha={"length": 50.0}, seed=2), 400, seed=2)
        f = (FeatureSpec.builtin("length"),)
        a = bootstrap_fit(ds, f, BT, PRI, CFG, 4, seed=7)
        b = bootstrap_fit(ds, f, BT, PRI, CFG, 4, seed=7, jobs=2)
        np.testing.assert_array_equal(a.base, b.base)
        np.testing.assert_array_equal(a.influence, b.influence)

    def test_needs_two(self):
        ds = Dataset.from_games([Game("a", "b", 0.5)])
        with pytest.raises(ValueError):
            bootstrap_fit(ds, (), BT, PRI, CFG, 1, seed=0)

    def test_width_shrinks_with_data(self):
        truth = make_truth(4, tasks=(), seed=3)
        widths = []
        for n in (1000, 10_000):
            ds = generate(truth, n, seed=5)
            s = bootstrap_fit(ds, (), BT, PRI, CFG, 30, seed=1)
            widths.append(np.mean(np.std(s.base, axis=0)))
        assert widths[1] < widths[0]


class TestPivotal:
    def test_worked_example(self):
        # linear quantiles at 25% / 75% of these four samples are exactly 990 / 1015
        samples = [990.0, 990.0, 1015.0, 1015.0]
        assert np.quantile(samples, [0.25, 0.75]).tolist() == [990.0, 1015.0]
        assert pivotal_interval(1000.0, samples, confidence=0.5) == (985.0, 1010.0)

    def test_matches_formula(self):
        s = np.random.default_rng(0).normal(1000, 20, 500)
        lo_q, hi_q = np.quantile(s, [0.025, 0.975])
        assert pivotal_interval(1003.0, s) == pytest.approx((2006 - hi_q, 2006 - lo_q), abs=1e-12)

    def test_literal_offsets(self):
        lo, hi = pivotal_interval(1000.0, [990.0, 990.0, 1015.0, 1015.0], confidence=0.5, literal=True)
        assert (lo, hi) == (-15.0, 10.0)

    def test_degenerate(self):
        assert pivotal_interval(1000.0, [1000.0] * 10) == (1000.0, 1000.0)

    def test_symmetric(self):
        s = 1000 + np.concatenate([np.arange(1, 51), -np.arange(1, 51)]).astype(float)
        lo, hi = pivotal_interval(1000.0, s)
        assert 1000 - lo == pytest.approx(hi - 1000, abs=1e-9)
        assert lo <= 1000 <= hi

    def test_bad_confidence(self):
        with pytest.raises(ValueError):
            pivotal_interval(0.0, [1.0, 2.0], confidence=1.0)


class TestSigma:
    def test_two_samples(self):
        lo, hi = sigma_interval([999.0, 1001.0], 2.0)
        assert lo == pytest.approx(1000 - 2 * math.sqrt(2), abs=1e-12)
        assert hi == pytest.approx(1000 + 2 * math.sqrt(2), abs=1e-12)

    def test_k_zero(self):
        assert sigma_interval([1.0, 2.0, 6.0], 0.0) == (3.0, 3.0)

    def test_against_statistics_module(self):
        s = np.random.default_rng(3).normal(0, 7, 1000)
        mean, sd = statistics.fmean(s), statistics.stdev(s)
        lo, hi = sigma_interval(s, 2.0)
        assert lo == pytest.approx(mean - 2 * sd, abs=1e-9)
        assert hi == pytest.approx(mean + 2 * sd, abs=1e-9)

    def test_too_few(self):
        with pytest.raises(ValueError):
            sigma_interval([1.0], 2.0)
