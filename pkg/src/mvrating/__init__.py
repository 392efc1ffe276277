"""Multivariate MAP ratings from pairwise preference games."""

from .core import (FIRST, SECOND, Dataset, FeatureSpec, Game, PriorSpec, RatingParameters, anchor, game_rating,
                   task_rating, task_ratings)
from .likelihood import LikelihoodModel, game_loss, gradient, hessian_block, total_loss, win_probability
from .optimizer import FitConfig, FitResult, converged, fit, fit_univariate
from .features import bias_report, influence
from .uncertainty import bootstrap_fit, pivotal_interval, resample, sigma_interval
from .bridge import BenchmarkResults, accuracies_to_games, matrix_to_games, rescaled_win_rate, tune_w
from .gameio import parse_games, write_games
from .report import LeaderboardDoc, build_leaderboard, render_leaderboard

__version__ = "0.1.0"

__all__ = [
    "FIRST", "SECOND", "Dataset", "FeatureSpec", "Game", "PriorSpec", "RatingParameters", "anchor", "game_rating",
    "task_rating", "task_ratings", "LikelihoodModel", "game_loss", "gradient", "hessian_block", "total_loss",
    "win_probability", "FitConfig", "FitResult", "converged", "fit", "fit_univariate", "bias_report", "influence",
    "bootstrap_fit", "pivotal_interval", "resample", "sigma_interval", "BenchmarkResults", "accuracies_to_games",
    "matrix_to_games", "rescaled_win_rate", "tune_w", "parse_games", "write_games", "LeaderboardDoc",
    "build_leaderboard", "render_leaderboard",
]
