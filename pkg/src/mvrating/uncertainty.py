"""Nonparametric bootstrap over games and interval construction."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Dataset, Design, FeatureSpec, PriorSpec
from .likelihood import LikelihoodModel
from .optimizer import FitConfig, FitResult, fit_design

log = logging.getLogger(__name__)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """RNG stream of bootstrap replicate ``index``: seeded by the pair (seed, index)."""
    return np.random.default_rng([int(seed), int(index)])


def resample_counts(counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``sum(counts)`` games with replacement; return how often each row was drawn."""
    counts = np.asarray(counts, dtype=float)
    total = int(round(counts.sum()))
    return rng.multinomial(total, counts / counts.sum())


def resample(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Bootstrap resample of the games (counting multiplicity); registries are kept."""
    if len(dataset) == 0:
        raise ValueError("cannot resample an empty dataset")
    drawn = resample_counts([g.multiplicity for g in dataset.games], rng)
    return dataset.with_games(g.with_multiplicity(int(c)) for g, c in zip(dataset.games, drawn) if c)


@dataclass(frozen=True)
class BootstrapSamples:
    """Refitted quantities, one row per successful replicate."""

    n: int
    seed: int
    models: tuple[str, ...]
    features: tuple[FeatureSpec, ...]
    base: np.ndarray        # (n, k)
    alpha: np.ndarray       # (n, d)
    beta: np.ndarray        # (n, k, d')
    influence: np.ndarray   # (n, d)
    failed: int = 0

    def task_ratings(self, task: str) -> np.ndarray:
        """(n, k) samples of base + beta for a task indicator."""
        specific = [f for f in self.features if f.kind == "model_specific"]
        for j, f in enumerate(specific):
            if f.source == "task" and f.tag == task:
                return self.base + self.beta[:, :, j]
        raise KeyError(task)


def _one_replicate(args):
    design, gaps, models, features, likelihood, priors, config, warm, seed, i = args
    counts = resample_counts(design.n, replicate_rng(seed, i))
    res = fit_design(design.with_counts(counts).merged(), models, features, likelihood, priors, config, warm)
    mean_gap = counts @ gaps / counts.sum() if gaps.size else np.zeros(0)
    return res, mean_gap


def bootstrap_fit(dataset: Dataset, feature_specs: Sequence[FeatureSpec], likelihood: LikelihoodModel,
                  priors: PriorSpec, config: FitConfig, n: int, seed: int,
                  full_fit: FitResult | None = None, jobs: int = 1) -> BootstrapSamples:
    """Refit on ``n`` resampled datasets; replicates warm-start from the full-data fit."""
    if n < 2:
        raise ValueError("need at least two bootstrap replicates")
    features = tuple(feature_specs)
    models = dataset.models
    design = Design.build(dataset, features)
    if full_fit is None:
        full_fit = fit_design(design.merged(), models, features, likelihood, priors, config)
    warm = full_fit.params
    gaps = np.abs(design.Fa - design.Fb)
    tasks = [(design, gaps, models, features, likelihood, priors, config, warm, seed, i) for i in range(n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_replicate, tasks))
    else:
        results = [_one_replicate(t) for t in tasks]

    kept = [(r, g) for r, g in results if r.converged]
    failed = n - len(kept)
    if failed:
        log.warning("%d of %d bootstrap replicates did not converge and were dropped", failed, n)
    k, d = len(models), len(warm.alpha)
    d2 = warm.beta.shape[1]
    n_kept = len(kept)
    base = np.array([r.params.base for r, _ in kept]).reshape(n_kept, k)
    alpha = np.array([r.params.alpha for r, _ in kept]).reshape(n_kept, d)
    beta = np.array([r.params.beta for r, _ in kept]).reshape(n_kept, k, d2)
    infl = alpha * np.array([g for _, g in kept]).reshape(n_kept, d)
    return BootstrapSamples(len(kept), seed, models, features, base, alpha, beta, infl, failed)


def pivotal_interval(estimate: float, samples, confidence: float = 0.95, literal: bool = False
                     ) -> tuple[float, float]:
    """Basic (pivotal) bootstrap interval ``[2*est - q_hi, 2*est - q_lo]``.

    ``literal=True`` returns the offsets ``[est - q_hi, est - q_lo]`` instead,
    i.e. the interval written relative to zero rather than to the estimate.
    Quantiles interpolate linearly between order statistics.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no bootstrap samples")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if np.ptp(samples) == 0:
        return (0.0, 0.0) if literal else (float(estimate), float(estimate))
    tail = (1.0 - confidence) / 2.0
    q_lo, q_hi = np.quantile(samples, [tail, 1.0 - tail], method="linear")
    shift = estimate if literal else 2.0 * estimate
    return float(shift - q_hi), float(shift - q_lo)


def sigma_interval(samples, k: float = 2.0) -> tuple[float, float]:
    """Mean plus/minus ``k`` sample standard deviations."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("need at least two samples")
    mean = float(samples.mean())
    sd = float(samples.std(ddof=1))
    return mean - k * sd, mean + k * sd
