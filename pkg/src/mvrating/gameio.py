"""Game records as newline-delimited JSON."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .core import Dataset, Game
from .features import extract_text_features

log = logging.getLogger(__name__)

KNOWN_KEYS = frozenset({"model_a", "model_b", "winner", "weight_a", "tags", "answer_a", "answer_b",
                        "features", "count"})
WINNERS = {"model_a": 1.0, "model_b": 0.0, "tie": 0.5}


class GameFileError(ValueError):
    """Some lines of a game file could not be parsed; ``rejected`` lists (line number, reason)."""

    def __init__(self, path, rejected: list[tuple[int, str]]):
        self.path = str(path)
        self.rejected = rejected
        shown = "; ".join(f"line {n}: {why}" for n, why in rejected[:10])
        more = f" (and {len(rejected) - 10} more)" if len(rejected) > 10 else ""
        super().__init__(f"{self.path}: {len(rejected)} rejected line(s): {shown}{more}")


@dataclass
class ParseReport:
    dataset: Dataset
    rejected: list[tuple[int, str]] = field(default_factory=list)
    unknown_keys: set[str] = field(default_factory=set)


def _number(x, what: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"{what} must be a number")
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{what} must be finite")
    return x


def parse_record(obj) -> Game:
    """One JSON object to a Game; raises ValueError describing the first problem."""
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    for key in ("model_a", "model_b"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise ValueError(f"{key} must be a non-empty string")
    has_winner, has_weight = "winner" in obj, "weight_a" in obj
    if has_winner and has_weight:
        raise ValueError("both winner and weight_a given")
    if not (has_winner or has_weight):
        raise ValueError("neither winner nor weight_a given")
    if has_winner:
        if obj["winner"] not in WINNERS:
            raise ValueError(f"winner must be one of {sorted(WINNERS)}")
        weight = WINNERS[obj["winner"]]
    else:
        weight = _number(obj["weight_a"], "weight_a")
        if not 0 <= weight <= 1:
            raise ValueError("weight_a must lie in [0, 1]")

    tags = obj.get("tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) and t for t in tags):
        raise ValueError("tags must be an array of non-empty strings")

    features: dict[str, tuple[float, float]] = {}
    if ("answer_a" in obj) != ("answer_b" in obj):
        raise ValueError("answer_a and answer_b must be given together")
    if "answer_a" in obj:
        if not (isinstance(obj["answer_a"], str) and isinstance(obj["answer_b"], str)):
            raise ValueError("answers must be strings")
        features.update(extract_text_features(obj["answer_a"], obj["answer_b"]))
    raw = obj.get("features", {})
    if not isinstance(raw, dict):
        raise ValueError("features must be an object")
    for name, pair in raw.items():
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValueError(f"feature {name!r} must be a [value_a, value_b] pair")
        features[name] = (_number(pair[0], f"feature {name!r}"), _number(pair[1], f"feature {name!r}"))

    count = obj.get("count", 1)
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ValueError("count must be a positive integer")
    return Game(obj["model_a"], obj["model_b"], weight, frozenset(tags), features, count)


def read_games(lines: Iterable[str], source: str = "<games>") -> ParseReport:
    """Parse every line, collecting rejected lines instead of stopping at the first."""
    games, rejected, unknown = [], [], set()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            game = parse_record(obj)
        except (ValueError, TypeError) as exc:
            rejected.append((number, str(exc)))
            continue
        extra = set(obj) - KNOWN_KEYS
        if extra - unknown:
            log.warning("%s line %d: ignoring unknown keys %s", source, number, sorted(extra - unknown))
        unknown |= extra
        games.append(game)
    return ParseReport(Dataset.from_games(games), rejected, unknown)


def parse_games(path: str | Path) -> Dataset:
    """Read a game file; any bad line rejects the whole file with its line number."""
    with open(path, encoding="utf-8") as fh:
        report = read_games(fh, str(path))
    if report.rejected:
        raise GameFileError(path, report.rejected)
    return report.dataset


def game_record(game: Game) -> dict:
    """Inverse of ``parse_record`` (answers are not kept, their extracted features are)."""
    rec: dict = {"model_a": game.model_a, "model_b": game.model_b}
    outcome = {v: k for k, v in WINNERS.items()}.get(game.weight)
    if outcome is not None:
        rec["winner"] = outcome
    else:
        rec["weight_a"] = game.weight
    if game.tags:
        rec["tags"] = sorted(game.tags)
    if game.features:
        rec["features"] = {k: list(v) for k, v in game.features.items()}
    if game.multiplicity != 1:
        rec["count"] = game.multiplicity
    return rec


def format_games(dataset: Dataset) -> str:
    return "".join(json.dumps(game_record(g), ensure_ascii=False) + "\n" for g in dataset.games)


def write_games(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(format_games(dataset), encoding="utf-8")
