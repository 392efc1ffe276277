"""Games, datasets, features and the linear rating parameterization.

A model's rating in a game is

    rating = base[m] + sum_j alpha[j] * f_j(game, side) + sum_j beta[m, j] * g_j(game, side)

where ``f`` are shared features (judge biases such as answer length) and ``g``
are model-specific features (usually task indicators). ``side`` is 0 when the
model is listed first in the game and 1 when it is listed second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

FIRST = 0
SECOND = 1

BUILTIN_FEATURES = ("length", "position", "repetitiveness", "readability")


class RegistryError(KeyError):
    """Unknown model, task or feature name."""


class FeatureMissingError(KeyError):
    """A game lacks a feature column while strict lookup is requested."""


@dataclass(frozen=True)
class Game:
    """One pairwise comparison.

    ``weight`` is the score of ``model_a``: 1 for a win, 0 for a loss, 0.5 for
    a draw, anything in between for a fractional (expected) result.
    ``features`` maps a feature name to the pair ``(value_a, value_b)``.
    """

    model_a: str
    model_b: str
    weight: float
    tags: frozenset[str] = frozenset()
    features: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    multiplicity: int = 1

    def __post_init__(self):
        if not self.model_a or not self.model_b:
            raise ValueError("model ids must be non-empty")
        if self.model_a == self.model_b:
            raise ValueError(f"a model cannot play itself: {self.model_a!r}")
        w = float(self.weight)
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"outcome weight must lie in [0, 1], got {self.weight}")
        if int(self.multiplicity) != self.multiplicity or self.multiplicity < 1:
            raise ValueError(f"multiplicity must be a positive integer, got {self.multiplicity}")
        feats = {}
        for name, pair in dict(self.features).items():
            va, vb = pair
            feats[str(name)] = (float(va), float(vb))
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "multiplicity", int(self.multiplicity))
        object.__setattr__(self, "tags", frozenset(self.tags))
        object.__setattr__(self, "features", MappingProxyType(feats))

    def model(self, side: int) -> str:
        return self.model_a if side == FIRST else self.model_b

    def side_of(self, model: str) -> int:
        if model == self.model_a:
            return FIRST
        if model == self.model_b:
            return SECOND
        raise RegistryError(model)

    def with_multiplicity(self, multiplicity: int) -> "Game":
        return replace(self, multiplicity=multiplicity)


def _unique(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


@dataclass(frozen=True)
class Dataset:
    """Ordered games plus the registries of models, tasks and feature columns."""

    games: tuple[Game, ...]
    models: tuple[str, ...]
    tasks: tuple[str, ...] = ()
    features: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "games", tuple(self.games))
        for reg in ("models", "tasks", "features"):
            values = tuple(getattr(self, reg))
            if len(set(values)) != len(values):
                raise ValueError(f"duplicate entries in {reg} registry")
            object.__setattr__(self, reg, values)
        models, tasks, feats = set(self.models), set(self.tasks), set(self.features)
        for i, g in enumerate(self.games):
            for m in (g.model_a, g.model_b):
                if m not in models:
                    raise RegistryError(f"game {i}: model {m!r} not in registry")
            if not g.tags <= tasks:
                raise RegistryError(f"game {i}: tags {sorted(g.tags - tasks)} not in registry")
            if not set(g.features) <= feats:
                raise RegistryError(f"game {i}: features {sorted(set(g.features) - feats)} not in registry")

    @classmethod
    def from_games(
        cls,
        games: Iterable[Game],
        models: Sequence[str] | None = None,
        tasks: Sequence[str] | None = None,
        features: Sequence[str] | None = None,
    ) -> "Dataset":
        """Build a dataset, extending any given registries in first-appearance order."""
        games = tuple(games)
        model_reg = list(models or ())
        model_reg += [m for g in games for m in (g.model_a, g.model_b)]
        task_reg = list(tasks or ())
        task_reg += [t for g in games for t in sorted(g.tags)]
        feat_reg = list(features or ())
        feat_reg += [f for g in games for f in g.features]
        return cls(games, _unique(model_reg), _unique(task_reg), _unique(feat_reg))

    def __len__(self) -> int:
        return len(self.games)

    @property
    def total_games(self) -> int:
        """Game count including multiplicities."""
        return sum(g.multiplicity for g in self.games)

    def model_index(self, model: str) -> int:
        try:
            return self.models.index(model)
        except ValueError:
            raise RegistryError(f"unknown model {model!r}") from None

    def with_games(self, games: Iterable[Game]) -> "Dataset":
        """Same registries, different games."""
        return Dataset(tuple(games), self.models, self.tasks, self.features)

    def filter(self, predicate) -> "Dataset":
        return self.with_games(g for g in self.games if predicate(g))

    def merge(self, other: "Dataset") -> "Dataset":
        return Dataset.from_games(
            self.games + other.games,
            models=self.models + other.models,
            tasks=self.tasks + other.tasks,
            features=self.features + other.features,
        )


@dataclass(frozen=True)
class FeatureSpec:
    """How one feature is evaluated and which weight it feeds.

    kind:   ``"shared"`` features get one weight for all models (alpha),
            ``"model_specific"`` features get one weight per model (beta).
    source: ``"builtin"``  one of length/position/repetitiveness/readability;
                           position is computed from the side, the text-based
                           ones are read from the game's feature columns where
                           ingestion stored them.
            ``"column"``   precomputed value pair stored on the game.
            ``"task"``     1.0 if the game carries ``tag`` else 0.0.
    """

    name: str
    kind: str = "shared"
    source: str = "column"
    tag: str | None = None

    def __post_init__(self):
        if self.kind not in ("shared", "model_specific"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.source not in ("builtin", "column", "task"):
            raise ValueError(f"unknown feature source {self.source!r}")
        if self.source == "task" and not self.tag:
            object.__setattr__(self, "tag", self.name)
        if self.source == "builtin" and self.name not in BUILTIN_FEATURES:
            raise ValueError(f"unknown builtin feature {self.name!r}")

    @classmethod
    def task(cls, tag: str, kind: str = "model_specific") -> "FeatureSpec":
        return cls(name=tag, kind=kind, source="task", tag=tag)

    @classmethod
    def builtin(cls, name: str, kind: str = "shared") -> "FeatureSpec":
        return cls(name=name, kind=kind, source="builtin")

    @classmethod
    def column(cls, name: str, kind: str = "shared") -> "FeatureSpec":
        return cls(name=name, kind=kind, source="column")

    def value(self, game: Game, side: int, strict: bool = False) -> float:
        if self.source == "task":
            return 1.0 if self.tag in game.tags else 0.0
        if self.source == "builtin" and self.name == "position":
            return 1.0 if side == SECOND else 0.0
        pair = game.features.get(self.name)
        if pair is None:
            if strict:
                raise FeatureMissingError(self.name)
            return 0.0
        return pair[side]


@dataclass(frozen=True)
class RatingParameters:
    """Base ratings, shared weights alpha and per-model weights beta.

    ``features`` lists every feature spec; ``alpha`` follows the order of the
    shared ones and the columns of ``beta`` that of the model-specific ones.
    """

    models: tuple[str, ...]
    features: tuple[FeatureSpec, ...]
    base: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "features", tuple(self.features))
        k, d, d2 = len(self.models), len(self.shared), len(self.specific)
        base = np.array(self.base, dtype=float).reshape(k)
        alpha = np.array(self.alpha, dtype=float).reshape(d)
        beta = np.array(self.beta, dtype=float).reshape(k, d2)
        for arr in (base, alpha, beta):
            if not np.all(np.isfinite(arr)):
                raise ValueError("rating parameters must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def shared(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.kind == "shared")

    @property
    def specific(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.kind == "model_specific")

    @classmethod
    def initial(cls, models: Sequence[str], features: Sequence[FeatureSpec] = (),
                anchor_value: float = 1000.0) -> "RatingParameters":
        """Prior means: every base rating at the anchor, all weights zero."""
        features = tuple(features)
        k = len(models)
        d = sum(f.kind == "shared" for f in features)
        return cls(tuple(models), features, np.full(k, float(anchor_value)),
                   np.zeros(d), np.zeros((k, len(features) - d)))

    def model_index(self, model: str) -> int:
        try:
            return self.models.index(model)
        except ValueError:
            raise RegistryError(f"unknown model {model!r}") from None

    def vector(self) -> np.ndarray:
        """Flat view ordered (base, alpha, beta row-major)."""
        return np.concatenate([self.base, self.alpha, self.beta.ravel()])

    def from_vector(self, x: np.ndarray) -> "RatingParameters":
        k, d = len(self.models), len(self.alpha)
        return replace(self, base=x[:k], alpha=x[k:k + d], beta=x[k + d:].reshape(self.beta.shape))

    def __add__(self, other: "RatingParameters") -> "RatingParameters":
        return self.from_vector(self.vector() + other.vector())

    def __mul__(self, scalar: float) -> "RatingParameters":
        return self.from_vector(self.vector() * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class PriorSpec:
    """Gaussian prior scales, in rating points.

    ``sigma_shared`` and ``sigma_model_specific`` accept a scalar (used for
    every feature), a sequence in feature order, or a mapping by feature name.
    ``math.inf`` means a flat prior. ``sigma_base=None`` gives a flat prior on
    base ratings, which are then anchored after fitting. A finite
    ``sigma_base`` centres the base prior at ``base_center`` (a scalar or one
    value per model; defaults to ``anchor_value``).
    """

    sigma_shared: float | Sequence[float] | Mapping[str, float] = 100.0
    sigma_model_specific: float | Sequence[float] | Mapping[str, float] = 50.0
    sigma_base: float | None = None
    anchor_value: float = 1000.0
    base_center: float | Sequence[float] | None = None

    def __post_init__(self):
        if self.sigma_base is not None:
            _check_sigma(self.sigma_base)

    @property
    def flat_base(self) -> bool:
        return self.sigma_base is None or math.isinf(self.sigma_base)

    def shared_sigmas(self, specs: Sequence[FeatureSpec]) -> np.ndarray:
        return _resolve_sigmas(self.sigma_shared, [f for f in specs if f.kind == "shared"])

    def specific_sigmas(self, specs: Sequence[FeatureSpec]) -> np.ndarray:
        return _resolve_sigmas(self.sigma_model_specific, [f for f in specs if f.kind == "model_specific"])

    def base_centers(self, k: int) -> np.ndarray:
        if self.base_center is None:
            return np.full(k, float(self.anchor_value))
        return np.broadcast_to(np.asarray(self.base_center, dtype=float), (k,)).copy()


class PriorConfigError(ValueError):
    pass


def _check_sigma(s: float) -> float:
    s = float(s)
    if not s > 0:
        raise PriorConfigError(f"prior scale must be positive, got {s}")
    return s


def _resolve_sigmas(spec, features: Sequence[FeatureSpec]) -> np.ndarray:
    if isinstance(spec, Mapping):
        values = [spec.get(f.name, math.inf) for f in features]
    elif np.ndim(spec) == 0:
        values = [spec] * len(features)
    else:
        values = list(spec)
        if len(values) != len(features):
            raise PriorConfigError(f"expected {len(features)} prior scales, got {len(values)}")
    return np.array([_check_sigma(v) for v in values], dtype=float)


def game_rating(params: RatingParameters, game: Game, side: int) -> float:
    """Rating of the model playing ``side`` in ``game``."""
    m = params.model_index(game.model(side))
    r = params.base[m]
    for a, spec in zip(params.alpha, params.shared):
        r += a * spec.value(game, side)
    for b, spec in zip(params.beta[m], params.specific):
        r += b * spec.value(game, side)
    return float(r)


def task_rating(params: RatingParameters, model: str, task: str) -> float:
    """Base rating plus the model's modifier for ``task``."""
    m = params.model_index(model)
    for j, spec in enumerate(params.specific):
        if spec.source == "task" and spec.tag == task:
            return float(params.base[m] + params.beta[m, j])
    raise RegistryError(f"task {task!r} has no model-specific indicator feature")


def task_ratings(params: RatingParameters, task: str) -> np.ndarray:
    return np.array([task_rating(params, m, task) for m in params.models])


def anchor(params: RatingParameters, anchor_value: float = 1000.0) -> RatingParameters:
    """Shift all base ratings so their mean is ``anchor_value``."""
    base = params.base + (anchor_value - params.base.mean())
    return replace(params, base=base)


@dataclass(frozen=True)
class Design:
    """Array form of a dataset under a set of feature specs.

    One row per game. ``F*`` hold shared feature values, ``G*`` model-specific
    ones, ``a``/``b`` the model indices of the first and second side.
    """

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    n: np.ndarray
    Fa: np.ndarray
    Fb: np.ndarray
    Ga: np.ndarray
    Gb: np.ndarray
    k: int

    @classmethod
    def build(cls, dataset: Dataset, features: Sequence[FeatureSpec], models: Sequence[str] | None = None,
              strict: bool = False) -> "Design":
        models = tuple(models) if models is not None else dataset.models
        index = {m: i for i, m in enumerate(models)}
        shared = [f for f in features if f.kind == "shared"]
        specific = [f for f in features if f.kind == "model_specific"]
        rows = len(dataset.games)
        a = np.empty(rows, dtype=np.intp)
        b = np.empty(rows, dtype=np.intp)
        w = np.empty(rows)
        n = np.empty(rows)
        Fa, Fb = np.zeros((rows, len(shared))), np.zeros((rows, len(shared)))
        Ga, Gb = np.zeros((rows, len(specific))), np.zeros((rows, len(specific)))
        for i, g in enumerate(dataset.games):
            try:
                a[i], b[i] = index[g.model_a], index[g.model_b]
            except KeyError as exc:
                raise RegistryError(f"unknown model {exc.args[0]!r}") from None
            w[i], n[i] = g.weight, g.multiplicity
            for j, f in enumerate(shared):
                Fa[i, j] = f.value(g, FIRST, strict)
                Fb[i, j] = f.value(g, SECOND, strict)
            for j, f in enumerate(specific):
                Ga[i, j] = f.value(g, FIRST, strict)
                Gb[i, j] = f.value(g, SECOND, strict)
        return cls(a, b, w, n, Fa, Fb, Ga, Gb, len(models))

    def __len__(self) -> int:
        return len(self.a)

    @property
    def dF(self) -> np.ndarray:
        return self.Fa - self.Fb

    def diff(self, base: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """Rating of side a minus rating of side b, per row."""
        d = base[self.a] - base[self.b]
        if alpha.size:
            d = d + self.dF @ alpha
        if beta.size:
            d = d + np.einsum("ij,ij->i", self.Ga, beta[self.a]) - np.einsum("ij,ij->i", self.Gb, beta[self.b])
        return d

    def with_counts(self, n: np.ndarray) -> "Design":
        """Same rows with new multiplicities; rows with zero count are dropped."""
        keep = n > 0
        return Design(self.a[keep], self.b[keep], self.w[keep], n[keep].astype(float),
                      self.Fa[keep], self.Fb[keep], self.Ga[keep], self.Gb[keep], self.k)

    def merged(self) -> "Design":
        """Collapse rows that differ only in outcome into one weighted row.

        The per-game loss is affine in the outcome weight, so a group of rows
        with equal models and features is equivalent to a single row holding
        the total count and the count-weighted mean outcome. Rows come back in
        a canonical sorted order, which makes fits independent of game order.
        """
        if len(self) == 0:
            return self
        keys = np.column_stack([self.a, self.b, self.Fa, self.Fb, self.Ga, self.Gb])
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        n = np.bincount(inverse, weights=self.n, minlength=len(uniq))
        nw = np.bincount(inverse, weights=self.n * self.w, minlength=len(uniq))
        w = np.clip(nw / n, 0.0, 1.0)
        return Design(self.a[first], self.b[first], w, n, self.Fa[first], self.Fb[first],
                      self.Ga[first], self.Gb[first], self.k)
