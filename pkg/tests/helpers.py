"""Shared builders for tests."""

import numpy as np

from mvrating.core import Dataset, FeatureSpec, Game, RatingParameters

MODELS = ("a", "b", "c", "d")
FEATURES = (FeatureSpec.column("length"), FeatureSpec.builtin("position"), FeatureSpec.task("code"))


def games(pairs_weights, **kw):
    return Dataset.from_games([Game(a, b, w, **kw) for a, b, w in pairs_weights])


def random_instance(rng, n_games=50, models=MODELS, features=FEATURES, spread=150.0):
    """Random (params, dataset) with a column feature, position and a task indicator."""
    out = []
    k = len(models)
    for _ in range(n_games):
        i = rng.integers(k)
        j = (i + rng.integers(1, k)) % k
        w = rng.choice([0.0, 0.5, 1.0, rng.random()])
        tags = frozenset(["code"]) if rng.random() < 0.5 else frozenset()
        feats = {"length": tuple(rng.uniform(1, 4, 2))}
        out.append(Game(models[i], models[j], w, tags, feats, multiplicity=int(rng.integers(1, 4))))
    ds = Dataset.from_games(out, models=models, tasks=("code",), features=("length",))
    d = sum(f.kind == "shared" for f in features)
    params = RatingParameters(models, features, 1000 + spread * rng.standard_normal(k),
                              60 * rng.standard_normal(d), 40 * rng.standard_normal((k, len(features) - d)))
    return params, ds


def fd_gradient(f, x, h=1e-4):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-10):
    """Elementwise relative error, ignoring entries where both sides are below ``floor``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(np.abs(a), np.abs(b))
    mask = scale > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a - b)[mask] / scale[mask]))
