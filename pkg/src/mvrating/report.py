"""Leaderboard documents: construction, markdown rendering, JSON round-trip."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .core import Dataset
from .features import influence
from .gameio import format_games
from .optimizer import FitResult
from .uncertainty import BootstrapSamples, pivotal_interval

Interval = tuple[float, float] | None


@dataclass(frozen=True)
class ModelRow:
    model: str
    base: float
    base_interval: Interval
    tasks: dict[str, float] = field(default_factory=dict)
    task_intervals: dict[str, Interval] = field(default_factory=dict)


@dataclass(frozen=True)
class BiasRow:
    name: str
    coefficient: float
    influence: float
    coefficient_interval: Interval
    influence_interval: Interval


@dataclass(frozen=True)
class LeaderboardDoc:
    rows: tuple[ModelRow, ...]
    biases: tuple[BiasRow, ...]
    tasks: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LeaderboardDoc":
        d = json.loads(text)

        def iv(x):
            return None if x is None else (float(x[0]), float(x[1]))

        rows = tuple(ModelRow(r["model"], r["base"], iv(r["base_interval"]), dict(r["tasks"]),
                              {t: iv(v) for t, v in r["task_intervals"].items()}) for r in d["rows"])
        biases = tuple(BiasRow(b["name"], b["coefficient"], b["influence"], iv(b["coefficient_interval"]),
                               iv(b["influence_interval"])) for b in d["biases"])
        return cls(rows, biases, tuple(d["tasks"]), d["metadata"])


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def dataset_digest(dataset: Dataset) -> str:
    return digest(format_games(dataset))


def config_digest(config: dict) -> str:
    return digest(json.dumps(config, sort_keys=True, default=str))


def build_leaderboard(fit: FitResult, dataset: Dataset, samples: BootstrapSamples | None = None,
                      confidence: float = 0.95, metadata: dict | None = None) -> LeaderboardDoc:
    """Task ratings are base + beta of each task indicator; intervals are pivotal when samples are given."""
    p = fit.params
    task_cols = [(j, f.tag) for j, f in enumerate(p.specific) if f.source == "task"]
    tasks = tuple(t for _, t in task_cols)

    def interval(est, draws):
        return None if samples is None or samples.n == 0 else pivotal_interval(est, draws, confidence)

    rows = []
    for m, model in enumerate(p.models):
        base = float(p.base[m])
        task_vals, task_ivs = {}, {}
        for j, tag in task_cols:
            task_vals[tag] = base + float(p.beta[m, j])
            task_ivs[tag] = interval(task_vals[tag], samples.base[:, m] + samples.beta[:, m, j]
                                     if samples is not None else None)
        rows.append(ModelRow(model, base, interval(base, samples.base[:, m] if samples is not None else None),
                             task_vals, task_ivs))
    rows.sort(key=lambda r: (-r.base, r.model))

    biases = []
    for j, spec in enumerate(p.shared):
        coef = float(p.alpha[j])
        infl = influence(dataset, spec, coef)
        biases.append(BiasRow(spec.name, coef, infl,
                              interval(coef, samples.alpha[:, j] if samples is not None else None),
                              interval(infl, samples.influence[:, j] if samples is not None else None)))

    meta = {"dataset_digest": dataset_digest(dataset), "converged": fit.converged,
            "iterations": fit.iterations_used, "confidence": confidence if samples is not None else None,
            "bootstrap_replicates": samples.n if samples is not None else 0,
            "bootstrap_failed": samples.failed if samples is not None else 0}
    meta.update(metadata or {})
    return LeaderboardDoc(tuple(rows), tuple(biases), tasks, meta)


def _cell(value: float, iv: Interval, digits: int) -> str:
    text = f"{value:.{digits}f}"
    if iv is None:
        return text
    return f"{text} +{iv[1] - value:.{digits}f}/-{value - iv[0]:.{digits}f}"


def render_markdown(doc: LeaderboardDoc, digits: int = 1) -> str:
    head = ["Rank", "Model", "Base"] + [f"Task: {t}" for t in doc.tasks]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for rank, r in enumerate(doc.rows, start=1):
        cells = [str(rank), r.model, _cell(r.base, r.base_interval, digits)]
        cells += [_cell(r.tasks[t], r.task_intervals.get(t), digits) for t in doc.tasks]
        lines.append("| " + " | ".join(cells) + " |")
    if doc.biases:
        lines += ["", "| Bias | Coefficient | Influence |", "|---|---|---|"]
        for b in doc.biases:
            lines.append(f"| {b.name} | {_cell(b.coefficient, b.coefficient_interval, digits)} | "
                         f"{_cell(b.influence, b.influence_interval, digits)} |")
    lines += ["", "Intervals are +upper/-lower offsets from the estimate."]
    meta = ", ".join(f"{k}={doc.metadata[k]}" for k in sorted(doc.metadata))
    lines.append(f"<!-- {meta} -->")
    return "\n".join(lines) + "\n"


def render_leaderboard(doc: LeaderboardDoc, format: str = "markdown") -> str:
    if format == "markdown":
        return render_markdown(doc)
    if format in ("json", "machine-readable"):
        return doc.to_json()
    raise ValueError(f"unknown format {format!r}")
