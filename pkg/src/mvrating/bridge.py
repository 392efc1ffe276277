"""Accuracy benchmarks reinterpreted as preference games.

A question is a game between every pair of models: answering correctly while
the opponent does not is a win, equal correctness is a draw. Aggregated
accuracies can instead be turned into one fractional game per pair whose
expected score is rescaled by a factor ``W`` tuned against human data.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import Dataset, Design, Game, PriorSpec
from .likelihood import LikelihoodModel, pointwise
from .optimizer import FitConfig, fit_univariate


class BenchmarkError(ValueError):
    pass


def default_grid(points: int = 20, low: float = 0.25, high: float = 16.0) -> list[float]:
    return [float(x) for x in np.geomspace(low, high, points)]


@dataclass(frozen=True)
class BenchmarkResults:
    """Per-question correctness (questions x models) or per-model accuracies."""

    models: tuple[str, ...]
    correct: np.ndarray | None = None
    accuracies: np.ndarray | None = None
    n_questions: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if len(self.models) < 2:
            raise BenchmarkError("a benchmark needs at least two models")
        if (self.correct is None) == (self.accuracies is None):
            raise BenchmarkError("give exactly one of a correctness matrix or accuracies")
        if self.correct is not None:
            m = np.asarray(self.correct)
            if m.ndim != 2 or m.shape[1] != len(self.models):
                raise BenchmarkError("correctness matrix must be questions x models")
            if not np.isin(m, (0, 1)).all():
                raise BenchmarkError("correctness entries must be boolean")
            object.__setattr__(self, "correct", m.astype(bool))
            object.__setattr__(self, "n_questions", m.shape[0])
        else:
            acc = np.asarray(self.accuracies, dtype=float)
            if acc.shape != (len(self.models),) or np.any((acc < 0) | (acc > 1)):
                raise BenchmarkError("accuracies must be one value in [0, 1] per model")
            if not self.n_questions or self.n_questions < 1:
                raise BenchmarkError("aggregate results need a positive question count")
            object.__setattr__(self, "accuracies", acc)

    def accuracy(self) -> np.ndarray:
        if self.accuracies is not None:
            return self.accuracies
        return self.correct.mean(axis=0)

    @classmethod
    def from_accuracies(cls, accuracies: Mapping[str, float], n_questions: int) -> "BenchmarkResults":
        return cls(tuple(accuracies), accuracies=np.array(list(accuracies.values()), dtype=float),
                   n_questions=n_questions)


def matrix_to_games(bench: BenchmarkResults) -> Dataset:
    """Wins, losses and draws for every unordered pair, aggregated by multiplicity."""
    if bench.correct is None:
        raise BenchmarkError("matrix_to_games needs per-question results")
    C = bench.correct
    games = []
    for i, j in itertools.combinations(range(len(bench.models)), 2):
        ci, cj = C[:, i], C[:, j]
        for weight, count in ((1.0, np.sum(ci & ~cj)), (0.0, np.sum(~ci & cj)), (0.5, np.sum(ci == cj))):
            if count:
                games.append(Game(bench.models[i], bench.models[j], weight, multiplicity=int(count)))
    return Dataset.from_games(games, models=bench.models)


def rescaled_win_rate(acc_i: float, acc_j: float, W: float) -> float:
    """Expected score of i against j: min(1, W/2 * (1 + acc_i - acc_j))."""
    if not W > 0:
        raise BenchmarkError("W must be positive")
    return min(1.0, 0.5 * W * (1.0 + acc_i - acc_j))


def symmetric_win_rate(acc_i: float, acc_j: float, W: float) -> float:
    """Expected score of i against j: clip(1/2 + W/2 * (acc_i - acc_j), 0, 1).

    Averaging the two orientations of ``rescaled_win_rate`` gives exactly this
    wherever neither orientation clamps. Unlike the one-sided form it scores
    equal accuracies as 0.5 for every W and keeps weight(i, j) = 1 - weight(j, i).
    """
    if not W > 0:
        raise BenchmarkError("W must be positive")
    return min(1.0, max(0.0, 0.5 + 0.5 * W * (acc_i - acc_j)))


def accuracies_to_games(bench: BenchmarkResults, W: float = 1.0, symmetric: bool = True) -> Dataset:
    """One fractional game per model pair, weighted by the question count."""
    acc = bench.accuracy()
    rate = symmetric_win_rate if symmetric else rescaled_win_rate
    games = [Game(bench.models[i], bench.models[j], rate(acc[i], acc[j], W), multiplicity=bench.n_questions)
             for i, j in itertools.combinations(range(len(bench.models)), 2)]
    return Dataset.from_games(games, models=bench.models)


def heldout_loss(likelihood: LikelihoodModel, models: Sequence[str], base: np.ndarray, dataset: Dataset) -> float:
    """Mean data loss of base-only ratings on the games whose models are all rated."""
    index = {m: i for i, m in enumerate(models)}
    games = [g for g in dataset.games if g.model_a in index and g.model_b in index]
    if not games:
        raise BenchmarkError("no games between rated models")
    design = Design.build(Dataset.from_games(games, models=models), ())
    delta = base[design.a] - base[design.b]
    (loss,) = pointwise(likelihood, delta, design.w)
    return float(np.dot(design.n, loss) / design.n.sum())


def tune_w(bench: BenchmarkResults, human_train: Dataset, likelihood: LikelihoodModel = LikelihoodModel(),
           priors: PriorSpec = PriorSpec(), config: FitConfig = FitConfig(),
           grid: Sequence[float] | None = None, symmetric: bool = True) -> tuple[float, list[float]]:
    """Pick the W whose benchmark-only ratings best predict the human training games.

    Returns the best W (smallest on ties) and the loss for every grid point.
    """
    grid = sorted(default_grid() if grid is None else grid)
    if not grid:
        raise BenchmarkError("empty W grid")
    shared = set(bench.models) & (set(g.model_a for g in human_train.games) | set(g.model_b for g in human_train.games))
    if len(shared) < 2:
        raise BenchmarkError("benchmark and human data share fewer than two models")
    candidates = w_candidates(bench, grid, likelihood, priors, config, symmetric)
    return select_w(candidates, human_train, bench.models, likelihood)


def w_candidates(bench: BenchmarkResults, grid: Sequence[float], likelihood: LikelihoodModel = LikelihoodModel(),
                 priors: PriorSpec = PriorSpec(), config: FitConfig = FitConfig(), symmetric: bool = True
                 ) -> list[tuple[float, np.ndarray]]:
    """Benchmark-only base ratings for each W in the grid (ascending)."""
    out = []
    for W in sorted(grid):
        res = fit_univariate(accuracies_to_games(bench, W, symmetric), likelihood, priors, config)
        out.append((float(W), res.params.base))
    return out


def select_w(candidates: Sequence[tuple[float, np.ndarray]], human_train: Dataset, models: Sequence[str],
             likelihood: LikelihoodModel = LikelihoodModel()) -> tuple[float, list[float]]:
    """Argmin over candidates of the loss on ``human_train``; ties go to the smaller W."""
    losses = [heldout_loss(likelihood, models, base, human_train) for _, base in candidates]
    best = int(np.argmin(losses))
    return candidates[best][0], losses


def read_benchmark_csv(path: str | Path) -> BenchmarkResults:
    """Parse ``model,question_id,correct`` or ``model,accuracy,n_questions`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        rows = list(reader)
    if {"model", "question_id", "correct"} <= cols:
        models = list(dict.fromkeys(r["model"] for r in rows))
        questions = list(dict.fromkeys(r["question_id"] for r in rows))
        qi = {q: i for i, q in enumerate(questions)}
        mi = {m: i for i, m in enumerate(models)}
        C = np.zeros((len(questions), len(models)), dtype=bool)
        seen = np.zeros_like(C)
        for line, r in enumerate(rows, start=2):
            val = r["correct"].strip().lower()
            if val not in ("0", "1", "true", "false"):
                raise BenchmarkError(f"line {line}: correct must be 0/1/true/false, got {r['correct']!r}")
            C[qi[r["question_id"]], mi[r["model"]]] = val in ("1", "true")
            seen[qi[r["question_id"]], mi[r["model"]]] = True
        if not seen.all():
            raise BenchmarkError("every model needs a result for every question")
        return BenchmarkResults(tuple(models), correct=C)
    if {"model", "accuracy", "n_questions"} <= cols:
        counts = {int(r["n_questions"]) for r in rows}
        if len(counts) != 1:
            raise BenchmarkError("aggregate rows must share one question count")
        return BenchmarkResults(tuple(r["model"] for r in rows),
                                accuracies=np.array([float(r["accuracy"]) for r in rows]),
                                n_questions=counts.pop())
    raise BenchmarkError(f"unrecognised benchmark columns: {sorted(cols)}")
