"""Synthetic arenas drawn from known parameters, and the experiments run on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bridge import BenchmarkResults, accuracies_to_games, default_grid, heldout_loss, select_w, w_candidates
from .core import BUILTIN_FEATURES, Dataset, Design, FeatureSpec, Game, PriorSpec, RatingParameters, anchor
from .likelihood import LikelihoodModel, win_probability
from .optimizer import FitConfig, fit, fit_univariate
from .uncertainty import bootstrap_fit, pivotal_interval

UNTAGGED = ""


@dataclass(frozen=True)
class GroundTruth:
    """True parameters plus the distributions games are drawn from.

    ``feature_ranges`` gives a uniform range per continuous feature column,
    drawn independently for each side. ``task_mix`` maps a tag (``""`` for an
    untagged game) to its probability; each game carries at most one tag.
    """

    params: RatingParameters
    feature_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    task_mix: Mapping[str, float] = field(default_factory=lambda: {UNTAGGED: 1.0})
    draw_rate: float = 0.0
    scale: float = 400.0

    def __post_init__(self):
        total = sum(self.task_mix.values())
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"task probabilities sum to {total}, not 1")
        if not 0 <= self.draw_rate < 1:
            raise ValueError("draw_rate must lie in [0, 1)")
        for spec in self.params.features:
            if spec.source != "task" and spec.name != "position" and spec.name not in self.feature_ranges:
                raise ValueError(f"no value range for feature {spec.name!r}")

    @property
    def models(self) -> tuple[str, ...]:
        return self.params.models

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(t for t in self.task_mix if t)


def make_truth(n_models: int = 10, base_sd: float = 100.0, task_sd: float = 50.0, tasks: Sequence[str] = ("task",),
               task_share: float = 0.5, alpha: Mapping[str, float] | None = None,
               feature_ranges: Mapping[str, tuple[float, float]] | None = None, draw_rate: float = 0.0,
               seed: int = 0, anchor_value: float = 1000.0) -> GroundTruth:
    """Random ground truth: base ratings ~ N(anchor, base_sd), task offsets ~ N(0, task_sd).

    ``alpha`` maps shared feature names to true weights; ``position`` is the
    builtin side feature, any other name is a column drawn from
    ``feature_ranges`` (default uniform on [1, 4]).
    """
    rng = np.random.default_rng(seed)
    models = tuple(f"m{i:02d}" for i in range(n_models))
    alpha = dict(alpha or {})
    shared = [FeatureSpec.builtin(n) if n in BUILTIN_FEATURES else FeatureSpec.column(n) for n in alpha]
    specific = [FeatureSpec.task(t) for t in tasks]
    base = anchor_value + base_sd * rng.standard_normal(n_models)
    beta = task_sd * rng.standard_normal((n_models, len(specific)))
    params = RatingParameters(models, tuple(shared + specific), base, np.array(list(alpha.values())), beta)
    ranges = {n: (1.0, 4.0) for n in alpha if n != "position"}
    ranges.update(feature_ranges or {})
    mix = {UNTAGGED: 1.0 - task_share * len(tasks)} if tasks else {UNTAGGED: 1.0}
    for t in tasks:
        mix[t] = task_share
    mix = {t: p for t, p in mix.items() if p > 0}
    return GroundTruth(params, ranges, mix, draw_rate)


def _sample(truth: GroundTruth, rng: np.random.Generator, n: int) -> list[Game]:
    k = len(truth.models)
    first = rng.integers(0, k, size=n)
    second = (first + rng.integers(1, k, size=n)) % k
    tags = list(truth.task_mix)
    tag_idx = rng.choice(len(tags), size=n, p=[truth.task_mix[t] for t in tags])
    names = sorted(truth.feature_ranges)
    values = {}
    for name in names:
        lo, hi = truth.feature_ranges[name]
        values[name] = rng.uniform(lo, hi, size=(n, 2))
    u_draw = rng.random(n)
    u_win = rng.random(n)

    games = []
    for i in range(n):
        tag = tags[tag_idx[i]]
        feats = {name: (values[name][i, 0], values[name][i, 1]) for name in names}
        games.append(Game(truth.models[first[i]], truth.models[second[i]], 0.5,
                          frozenset([tag]) if tag else frozenset(), feats))
    ds = Dataset.from_games(games, models=truth.models, tasks=truth.tasks, features=names)
    p = truth.params
    design = Design.build(ds, p.features, models=p.models)
    delta = design.diff(p.base, p.alpha, p.beta)
    p_win = win_probability(LikelihoodModel(scale=truth.scale), delta, np.zeros_like(delta))
    weight = np.where(u_draw < truth.draw_rate, 0.5, (u_win < p_win).astype(float))
    return [Game(g.model_a, g.model_b, float(wt), g.tags, g.features) for g, wt in zip(games, weight)]


def sample_game(truth: GroundTruth, rng: np.random.Generator) -> Game:
    """One game: uniform model pair in random order, a task tag, feature values and an outcome."""
    return _sample(truth, rng, 1)[0]


def generate(truth: GroundTruth, n: int, seed: int) -> Dataset:
    """``n`` i.i.d. games; the registries list every model, task and feature of the truth."""
    games = _sample(truth, np.random.default_rng(seed), n) if n else []
    return Dataset.from_games(games, models=truth.models, tasks=truth.tasks, features=sorted(truth.feature_ranges))


def centered(x: np.ndarray) -> np.ndarray:
    return x - x.mean()


def rmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """RMSE after removing each vector's mean (ratings are only defined up to a shift)."""
    return float(np.sqrt(np.mean((centered(estimate) - centered(truth)) ** 2)))


# --- equivalence of joint and separate task fits ---------------------------------

def equivalence_experiment(truth: GroundTruth, sizes: Sequence[int], seed: int, task: str = "task",
                           priors: PriorSpec = PriorSpec(sigma_model_specific=50.0),
                           config: FitConfig = FitConfig()) -> list[dict]:
    """Joint fit with a task modifier vs. a separate fit on the task's games.

    Uses nested prefixes of one game stream. Both task rating vectors are
    aligned by subtracting model 0's rating; the discrepancy is the largest
    absolute difference over models.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be increasing")
    stream = generate(truth, sizes[-1], seed)
    spec = FeatureSpec.task(task)
    rows = []
    for n in sizes:
        ds = stream.with_games(stream.games[:n])
        task_only = ds.filter(lambda g: task in g.tags)
        separate = fit_univariate(task_only, priors=PriorSpec(anchor_value=priors.anchor_value), config=config)
        joint = fit(ds, [spec], priors=priors, config=config)
        r_sep = separate.params.base
        r_joint = joint.params.base + joint.params.beta[:, 0]
        gap = (r_sep - r_sep[0]) - (r_joint - r_joint[0])
        rows.append({"size": n, "task_games": task_only.total_games,
                     "discrepancy": float(np.max(np.abs(gap))),
                     "converged": separate.converged and joint.converged})
    return rows


# --- likelihood comparison ------------------------------------------------------

def default_likelihoods() -> list[LikelihoodModel]:
    return [LikelihoodModel("bradley_terry"), LikelihoodModel("rao_kupper", theta=1.2),
            LikelihoodModel("davidson", theta=0.5), LikelihoodModel("accuracy_based")]


def model_comparison_experiment(dataset: Dataset, train_sizes: Sequence[int], seed: int,
                                likelihoods: Sequence[LikelihoodModel] | None = None, heldout: int | None = None,
                                priors: PriorSpec = PriorSpec(), config: FitConfig = FitConfig()) -> list[dict]:
    """Held-out draw-collapsed log loss for each likelihood and training size.

    Games (expanded by multiplicity) are shuffled once; the held-out split is
    the tail of that order and is shared by every likelihood and size.
    """
    likelihoods = list(likelihoods or default_likelihoods())
    games = [g.with_multiplicity(1) for g in dataset.games for _ in range(g.multiplicity)]
    order = np.random.default_rng(seed).permutation(len(games))
    games = [games[i] for i in order]
    heldout = heldout or max(len(games) - max(train_sizes), 0)
    if max(train_sizes) + heldout > len(games) or heldout <= 0:
        raise ValueError("dataset too small for the largest training size plus a held-out split")
    test = dataset.with_games(games[len(games) - heldout:])
    rows = []
    for lik in likelihoods:
        for n in train_sizes:
            train = dataset.with_games(games[:n])
            res = fit_univariate(train, lik, priors, config)
            rows.append({"likelihood": lik.label(), "train_size": n,
                         "heldout_loss": heldout_loss(lik, res.params.models, res.params.base, test),
                         "converged": res.converged})
    return rows


# --- sample efficiency -----------------------------------------------------------

VARIANTS = ("cold-start", "prior-informed", "benchmark-augmented")


@dataclass(frozen=True)
class EfficiencyConfig:
    n_models: int = 20
    base_sd: float = 100.0
    task_sd: float = 50.0
    aux_games: int = 100_000
    heldout_games: int = 50_000
    budgets: tuple[int, ...] = (100, 200, 500, 1000, 2000, 5000)
    target_budget: int = 500
    repeats: int = 3
    draw_rate: float = 0.1
    sigma_task: float = 50.0
    cold_sigma_base: float = 200.0
    n_questions: int = 1000
    accuracy_per_400: float = 0.5
    accuracy_noise: float = 0.02
    prior_center: str = "fit"
    w_grid: tuple[float, ...] = tuple(default_grid())


@dataclass
class EfficiencyCurve:
    variant: str
    budgets: list[int]
    heldout_loss: list[float]
    rmse: list[float]
    games_to_target: float | None = None
    reduction: float | None = None

    def rows(self) -> list[dict]:
        return [{"variant": self.variant, "budget": b, "heldout_loss": l, "rmse": r,
                 "games_to_target": self.games_to_target}
                for b, l, r in zip(self.budgets, self.heldout_loss, self.rmse)]


def games_to_target(budgets: Sequence[int], losses: Sequence[float], target: float) -> float | None:
    """Smallest budget reaching ``target``, interpolated linearly in log-budget.

    None when no budget reaches the target. When the first budget already
    reaches it, that budget is returned (no extrapolation).
    """
    for i, (b, loss) in enumerate(zip(budgets, losses)):
        if loss <= target:
            if i == 0 or b <= 0 or budgets[i - 1] <= 0:
                return float(b)
            b0, l0 = budgets[i - 1], losses[i - 1]
            frac = (l0 - target) / (l0 - loss)
            return float(math.exp(math.log(b0) + frac * (math.log(b) - math.log(b0))))
    return None


def _task_ratings(res, task) -> np.ndarray:
    return res.params.base + res.params.beta[:, 0] if res.params.beta.size else res.params.base


def sample_efficiency_experiment(config: EfficiencyConfig = EfficiencyConfig(), seed: int = 0,
                                 variants: Sequence[str] = VARIANTS, fit_config: FitConfig = FitConfig()
                                 ) -> dict[str, EfficiencyCurve]:
    """Held-out loss and rating error of each variant as the new-task budget grows.

    A new task is added to an arena whose existing task already has
    ``aux_games`` games. ``cold-start`` fits the new task's games alone under
    a wide base prior. ``prior-informed`` fits them with the base prior
    centred on the existing task's ratings (``prior_center="fit"``) or on the
    true new-task ratings (``"truth"``), prior scale ``sigma_task``.
    ``benchmark-augmented`` fits benchmark-derived games jointly with the
    task's games, the task entering as a per-model modifier with prior scale
    ``sigma_task`` and the win-rate scale W tuned on the budget's training
    games. The target loss is cold-start's loss at ``target_budget``.
    """
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    if config.prior_center not in ("fit", "truth"):
        raise ValueError("prior_center must be 'fit' or 'truth'")
    task = "new"
    truth = make_truth(config.n_models, config.base_sd, config.task_sd, tasks=(task,), task_share=1.0,
                       draw_rate=config.draw_rate, seed=seed)
    true_task = truth.params.base + truth.params.beta[:, 0]
    models = truth.models
    lik = LikelihoodModel(scale=truth.scale)
    spec = FeatureSpec.task(task)
    heldout = generate(truth, config.heldout_games, seed=[seed, 1])

    center = None
    if "prior-informed" in variants:
        if config.prior_center == "truth":
            center = true_task - true_task.mean() + PriorSpec().anchor_value
        else:
            aux_truth = GroundTruth(truth.params, {}, {UNTAGGED: 1.0}, config.draw_rate)
            aux = generate(aux_truth, config.aux_games, seed=[seed, 2])
            center = fit_univariate(aux, lik, PriorSpec(), fit_config).params.base
    prior_priors = PriorSpec(sigma_base=config.sigma_task, base_center=center)

    bench_rng = np.random.default_rng([seed, 3])
    acc = 0.5 + config.accuracy_per_400 * (truth.params.base - truth.params.base.mean()) / 400.0
    acc = np.clip(acc + config.accuracy_noise * bench_rng.standard_normal(len(models)), 0.0, 1.0)
    bench = BenchmarkResults(models, accuracies=acc, n_questions=config.n_questions)
    cold_priors = PriorSpec(sigma_base=config.cold_sigma_base)
    # large W clamps many pairs to certain wins; the weak base prior keeps those fits finite
    candidates = (w_candidates(bench, config.w_grid, lik, cold_priors, fit_config)
                  if "benchmark-augmented" in variants else None)

    joint_priors = PriorSpec(sigma_model_specific=config.sigma_task)
    budgets = list(config.budgets)
    if config.target_budget not in budgets:
        budgets = sorted(set(budgets) | {config.target_budget})
    losses = {v: np.zeros((config.repeats, len(budgets))) for v in variants}
    errors = {v: np.zeros((config.repeats, len(budgets))) for v in variants}

    for rep in range(config.repeats):
        stream = generate(truth, max(budgets), seed=[seed, 100 + rep])
        for bi, budget in enumerate(budgets):
            train = stream.with_games(stream.games[:budget])
            for v in variants:
                if v == "cold-start":
                    # no games: the prior mean is the whole estimate
                    ratings = (fit_univariate(train, lik, cold_priors, fit_config).params.base if budget
                               else cold_priors.base_centers(len(models)))
                elif v == "prior-informed":
                    ratings = (fit_univariate(train, lik, prior_priors, fit_config).params.base if budget
                               else prior_priors.base_centers(len(models)))
                else:
                    W = select_w(candidates, train, models, lik)[0] if budget else 1.0
                    res = fit(accuracies_to_games(bench, W).merge(train), [spec], lik, joint_priors, fit_config)
                    ratings = _task_ratings(res, task)
                losses[v][rep, bi] = heldout_loss(lik, models, ratings, heldout)
                errors[v][rep, bi] = rmse(ratings, true_task)

    curves = {v: EfficiencyCurve(v, budgets, [float(x) for x in losses[v].mean(axis=0)],
                                 [float(x) for x in errors[v].mean(axis=0)])
              for v in variants}
    if "cold-start" in curves:
        cold = curves["cold-start"]
        target = cold.heldout_loss[budgets.index(config.target_budget)]
        for c in curves.values():
            c.games_to_target = games_to_target(budgets, c.heldout_loss, target)
        base_games = cold.games_to_target
        for c in curves.values():
            if c.games_to_target is not None and base_games:
                c.reduction = 1.0 - c.games_to_target / base_games
    return curves


# --- coverage of bootstrap intervals ---------------------------------------------

def coverage_study(truth: GroundTruth, n_games: int, replications: int, n_bootstrap: int, seed: int,
                   confidence: float = 0.95, config: FitConfig = FitConfig()) -> np.ndarray:
    """Fraction of replications whose pivotal interval covers each model's true anchored base rating."""
    lik = LikelihoodModel(scale=truth.scale)
    priors = PriorSpec()
    true_base = anchor(truth.params, priors.anchor_value).base
    hits = np.zeros(len(truth.models))
    for rep in range(replications):
        ds = generate(truth, n_games, seed=[seed, rep])
        full = fit(ds, (), lik, priors, config)
        boot = bootstrap_fit(ds, (), lik, priors, config, n_bootstrap, seed=seed * 100_003 + rep, full_fit=full)
        for m in range(len(truth.models)):
            lo, hi = pivotal_interval(full.params.base[m], boot.base[:, m], confidence)
            hits[m] += lo <= true_base[m] <= hi
    return hits / replications
