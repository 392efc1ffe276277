"""Answer-text bias features and the influence statistic.

Each extractor is scaled so that realistic answers land in roughly [0, 5]:
length is log10 of the character count, repetitiveness is five times the
fraction of repeated words, readability is Flesch reading ease / 100 clamped
to [0, 1].
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import FIRST, SECOND, Dataset, FeatureMissingError, FeatureSpec, Game

_SENTENCE_SPLIT = re.compile(r"[.!?]+")
_VOWEL_GROUP = re.compile(r"[aeiouy]+")
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")


def words(text: str) -> list[str]:
    """Case-folded whitespace tokens with punctuation stripped from the edges."""
    out = []
    for token in text.split():
        token = _EDGE_PUNCT.sub("", token.casefold())
        if token:
            out.append(token)
    return out


def syllables(word: str) -> int:
    """Vowel-group count, minus a trailing silent e, at least 1."""
    word = word.casefold()
    count = len(_VOWEL_GROUP.findall(word))
    if word.endswith("e") and not word.endswith("le") and count > 1:
        count -= 1
    return max(1, count)


def sentence_count(text: str) -> int:
    return sum(1 for part in _SENTENCE_SPLIT.split(text) if words(part))


def flesch_reading_ease(text: str) -> float:
    ws = words(text)
    n_sent = sentence_count(text)
    if not ws or not n_sent:
        return 0.0
    n_syl = sum(syllables(w) for w in ws)
    return 206.835 - 1.015 * len(ws) / n_sent - 84.6 * n_syl / len(ws)


def length_feature(answer: str) -> float:
    n = len(answer)
    return math.log10(n) if n else 0.0


def position_feature(game: Game | None, side: int) -> float:
    return 1.0 if side == SECOND else 0.0


def repetitiveness_feature(answer: str) -> float:
    ws = words(answer)
    if not ws:
        return 0.0
    return 5.0 * (len(ws) - len(set(ws))) / len(ws)


def readability_feature(answer: str) -> float:
    return min(1.0, max(0.0, flesch_reading_ease(answer) / 100.0))


TEXT_EXTRACTORS = {
    "length": length_feature,
    "repetitiveness": repetitiveness_feature,
    "readability": readability_feature,
}


def extract_text_features(answer_a: str, answer_b: str, names: Sequence[str] | None = None
                          ) -> dict[str, tuple[float, float]]:
    """Value pairs of the text-based builtin features for both answers."""
    names = TEXT_EXTRACTORS if names is None else names
    return {n: (TEXT_EXTRACTORS[n](answer_a), TEXT_EXTRACTORS[n](answer_b)) for n in names}


def precomputed_feature(game: Game, column: str, side: int, strict: bool = True) -> float:
    pair = game.features.get(column)
    if pair is None:
        if strict:
            raise FeatureMissingError(column)
        return 0.0
    return pair[side]


def feature_gaps(dataset: Dataset, spec: FeatureSpec) -> tuple[np.ndarray, np.ndarray]:
    """|f(g, first) - f(g, second)| per game, and the game multiplicities."""
    gaps = np.array([abs(spec.value(g, FIRST) - spec.value(g, SECOND)) for g in dataset.games])
    counts = np.array([g.multiplicity for g in dataset.games], dtype=float)
    return gaps, counts


def mean_gap(dataset: Dataset, spec: FeatureSpec | str) -> float:
    if isinstance(spec, str):
        spec = FeatureSpec.builtin(spec) if spec == "position" else FeatureSpec.column(spec)
    if len(dataset) == 0:
        raise ValueError("influence is undefined on an empty dataset")
    gaps, counts = feature_gaps(dataset, spec)
    return float(np.dot(gaps, counts) / counts.sum())


def influence(dataset: Dataset, feature: FeatureSpec | str, alpha: float) -> float:
    """Average rating impact of a bias: alpha times the mean absolute feature gap."""
    return float(alpha) * mean_gap(dataset, feature)


@dataclass(frozen=True)
class BiasEntry:
    name: str
    coefficient: float
    influence: float
    coefficient_pivotal: tuple[float, float]
    influence_pivotal: tuple[float, float]
    coefficient_sigma: tuple[float, float]
    influence_sigma: tuple[float, float]


@dataclass(frozen=True)
class BiasReport:
    entries: tuple[BiasEntry, ...]
    confidence: float = 0.95

    def __getitem__(self, name: str) -> BiasEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def as_dict(self) -> Mapping[str, dict]:
        return {e.name: {
            "coefficient": e.coefficient,
            "influence": e.influence,
            "coefficient_pivotal": list(e.coefficient_pivotal),
            "influence_pivotal": list(e.influence_pivotal),
            "coefficient_2sigma": list(e.coefficient_sigma),
            "influence_2sigma": list(e.influence_sigma),
        } for e in self.entries}


def bias_report(fit_result, dataset: Dataset, samples, confidence: float = 0.95, k_sigma: float = 2.0
                ) -> BiasReport:
    """Coefficient, influence and bootstrap intervals for every shared feature, in registry order."""
    from .uncertainty import pivotal_interval, sigma_interval

    params = fit_result.params
    entries = []
    for j, spec in enumerate(params.shared):
        coef = float(params.alpha[j])
        infl = influence(dataset, spec, coef)
        a_samples = samples.alpha[:, j]
        i_samples = samples.influence[:, j]
        entries.append(BiasEntry(
            spec.name, coef, infl,
            pivotal_interval(coef, a_samples, confidence),
            pivotal_interval(infl, i_samples, confidence),
            sigma_interval(a_samples, k_sigma),
            sigma_interval(i_samples, k_sigma),
        ))
    return BiasReport(tuple(entries), confidence)
