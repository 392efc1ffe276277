import math

import numpy as np
import pytest
from scipy import stats

from mvrating.core import RatingParameters
from mvrating.likelihood import LikelihoodModel
from mvrating.optimizer import fit_univariate
from mvrating.simulate import (EfficiencyConfig, GroundTruth, equivalence_experiment, games_to_target, generate,
                               make_truth, model_comparison_experiment, rmse, sample_efficiency_experiment,
                               sample_game)


def flat_truth(base, draw_rate=0.0):
    models = tuple(f"m{i}" for i in range(len(base)))
    return GroundTruth(RatingParameters(models, (), base, [], np.zeros((len(base), 0))), draw_rate=draw_rate)


def win_rate_of_first_model(ds, model):
    wins = [g.weight if g.model_a == model else 1 - g.weight for g in ds.games]
    return np.mean(wins), len(wins)


class TestSampling:
    def test_equal_truth(self):
        ds = generate(flat_truth([1000.0, 1000.0]), 10_000, seed=0)
        rate = np.mean([g.weight for g in ds.games])
        assert abs(rate - 0.5) < 3 * math.sqrt(0.25 / 10_000)

    def test_decade(self):
        ds = generate(flat_truth([1400.0, 1000.0]), 10_000, seed=1)
        rate, n = win_rate_of_first_model(ds, "m0")
        p = 10 / 11
        assert abs(rate - p) < 3 * math.sqrt(p * (1 - p) / n)

    def test_draw_rate(self):
        ds = generate(flat_truth([1000.0, 1000.0], draw_rate=0.2), 10_000, seed=2)
        frac = np.mean([g.weight == 0.5 for g in ds.games])
        assert abs(frac - 0.2) < 3 * math.sqrt(0.16 / 10_000)

    def test_deterministic(self):
        truth = make_truth(5, alpha={"length": 50.0}, seed=0)
        assert generate(truth, 500, seed=3) == generate(truth, 500, seed=3)
        assert generate(truth, 500, seed=3) != generate(truth, 500, seed=4)
        rng1, rng2 = np.random.default_rng(8), np.random.default_rng(8)
        assert sample_game(truth, rng1) == sample_game(truth, rng2)

    def test_registries_complete(self):
        truth = make_truth(6, tasks=("code", "math"), task_share=0.3, alpha={"length": 1.0}, seed=0)
        ds = generate(truth, 5, seed=0)
        assert ds.models == truth.models
        assert set(ds.tasks) == {"code", "math"}
        assert ds.features == ("length",)

    def test_pairing_uniform(self):
        truth = make_truth(5, tasks=(), seed=0)
        ds = generate(truth, 20_000, seed=5)
        counts = {}
        for g in ds.games:
            counts[(g.model_a, g.model_b)] = counts.get((g.model_a, g.model_b), 0) + 1
        assert len(counts) == 20
        p = 1 / 20
        for c in counts.values():
            assert abs(c / 20_000 - p) < 3 * math.sqrt(p * (1 - p) / 20_000)
        assert stats.chisquare(list(counts.values())).pvalue > 1e-3

    def test_invalid_truth(self):
        with pytest.raises(ValueError):
            make_truth(3, tasks=("a", "b"), task_share=0.6)
        with pytest.raises(ValueError):
            flat_truth([1.0, 2.0], draw_rate=1.0)


def test_rmse_consistency():
    truth = make_truth(6, tasks=(), seed=2)
    errs = []
    for n in (1000, 100_000):
        res = fit_univariate(generate(truth, n, seed=7))
        errs.append(rmse(res.params.base, truth.params.base))
    assert errs[1] < errs[0]


def test_equivalence_shrinks():
    truth = make_truth(6, draw_rate=0.1, seed=1)
    rows = equivalence_experiment(truth, [500, 20_000], seed=2)
    assert rows[1]["discrepancy"] < rows[0]["discrepancy"]
    assert all(r["converged"] for r in rows)


def test_equivalence_flat_priors_coincide():
    from mvrating.core import PriorSpec
    truth = make_truth(5, draw_rate=0.1, seed=1)
    rows = equivalence_experiment(truth, [2000], seed=2, priors=PriorSpec(sigma_model_specific=math.inf))
    assert rows[0]["discrepancy"] < 1e-4


def test_games_to_target():
    assert games_to_target([100, 1000], [0.7, 0.6], 0.65) == pytest.approx(math.sqrt(100 * 1000))
    assert games_to_target([100, 1000], [0.6, 0.5], 0.65) == 100.0
    assert games_to_target([100, 1000], [0.7, 0.69], 0.65) is None


def test_efficiency_prior_at_truth_dominates():
    cfg = EfficiencyConfig(n_models=8, heldout_games=5000, budgets=(100, 300, 1000), target_budget=300, repeats=1,
                           prior_center="truth")
    curves = sample_efficiency_experiment(cfg, seed=0, variants=("cold-start", "prior-informed"))
    assert curves["prior-informed"].games_to_target <= curves["cold-start"].games_to_target
    assert curves["cold-start"].reduction == 0.0


def test_efficiency_budget_zero_is_prior():
    cfg = EfficiencyConfig(n_models=4, aux_games=2000, heldout_games=2000, budgets=(0, 200), target_budget=200,
                           repeats=1)
    curves = sample_efficiency_experiment(cfg, seed=1, variants=("cold-start", "prior-informed"))
    # equal prior means predict 0.5 for every game
    assert curves["cold-start"].heldout_loss[0] == pytest.approx(math.log(2), rel=1e-12)
    assert curves["prior-informed"].heldout_loss[0] < math.log(2)
    assert curves["cold-start"].budgets == [0, 200]


def test_model_comparison_structure():
    truth = make_truth(5, tasks=(), draw_rate=0.1, seed=0)
    ds = generate(truth, 8000, seed=1)
    liks = [LikelihoodModel(), LikelihoodModel("davidson", 0.0), LikelihoodModel("rao_kupper", 1.3)]
    rows = model_comparison_experiment(ds, [200, 800, 3000], seed=2, likelihoods=liks, heldout=4000)
    by = {}
    for r in rows:
        by.setdefault(r["likelihood"], []).append(r["heldout_loss"])
    curves = list(by.values())
    assert curves[0] == curves[1]
    assert by[list(by)[0]][-1] < by[list(by)[0]][0]
