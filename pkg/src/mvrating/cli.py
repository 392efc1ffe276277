"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 data error, 3 a fit did not
converge (outputs are still written and flagged).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from .bridge import BenchmarkError, accuracies_to_games, default_grid, matrix_to_games, read_benchmark_csv, tune_w
from .core import BUILTIN_FEATURES, FeatureMissingError, FeatureSpec, PriorConfigError, PriorSpec, RegistryError
from .features import bias_report
from .gameio import GameFileError, format_games, parse_games
from .likelihood import KINDS, LikelihoodError, LikelihoodModel
from .optimizer import FitConfig, FitError, fit
from .report import build_leaderboard, config_digest, render_leaderboard
from .simulate import (EfficiencyConfig, default_likelihoods, equivalence_experiment, generate, make_truth,
                       model_comparison_experiment, sample_efficiency_experiment)
from .uncertainty import bootstrap_fit

log = logging.getLogger("mvrating")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3
DATA_ERRORS = (GameFileError, BenchmarkError, RegistryError, FeatureMissingError, FitError, PriorConfigError,
               LikelihoodError, FileNotFoundError, IsADirectoryError, yaml.YAMLError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- configuration -----------------------------------------------------------

def parse_feature(item) -> FeatureSpec:
    """``length`` / ``position`` / ... builtin, ``task:<tag>``, ``column:<name>``, or a mapping of fields."""
    if isinstance(item, dict):
        return FeatureSpec(**item)
    item = str(item)
    if item.startswith("task:"):
        return FeatureSpec.task(item[5:])
    if item.startswith("column:"):
        return FeatureSpec.column(item[7:])
    if item in BUILTIN_FEATURES:
        return FeatureSpec.builtin(item)
    return FeatureSpec.column(item)


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a mapping")
    allowed = {"likelihood", "priors", "fit", "features", "truth", "experiment"}
    unknown = set(data) - allowed
    if unknown:
        raise UsageError(f"{path}: unknown config sections {sorted(unknown)}")
    return data


def _section(cfg: dict, name: str, cls) -> dict:
    sec = cfg.get(name) or {}
    names = {f.name for f in fields(cls)}
    bad = set(sec) - names
    if bad:
        raise UsageError(f"config section {name!r}: unknown keys {sorted(bad)}")
    return dict(sec)


class Settings:
    """Resolved settings: CLI flag over config file over built-in default."""

    def __init__(self, args, cfg: dict):
        lik = _section(cfg, "likelihood", LikelihoodModel)
        for key, flag in (("kind", args.likelihood), ("theta", args.theta), ("scale", args.scale)):
            if flag is not None:
                lik[key] = flag
        self.likelihood = LikelihoodModel(**lik)

        pri = _section(cfg, "priors", PriorSpec)
        for key, flag in (("anchor_value", args.anchor), ("sigma_base", args.sigma_base),
                          ("sigma_shared", args.sigma_shared), ("sigma_model_specific", args.sigma_specific)):
            if flag is not None:
                pri[key] = flag
        for key in ("sigma_shared", "sigma_model_specific", "sigma_base"):
            if isinstance(pri.get(key), str):
                pri[key] = float(pri[key])
        self.priors = PriorSpec(**pri)

        self.fit = FitConfig(**_section(cfg, "fit", FitConfig))
        feats = args.features.split(",") if args.features else cfg.get("features", [])
        self.features = tuple(parse_feature(f) for f in feats if f)
        self.jobs = args.jobs or 1

    def as_dict(self) -> dict:
        return {"likelihood": asdict(self.likelihood), "priors": asdict(self.priors), "fit": asdict(self.fit),
                "features": [asdict(f) for f in self.features]}


# --- output helpers --------------------------------------------------------------

def emit(text: str, path: str | None) -> None:
    if path and path != "-":
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                         for k in columns})
    return buf.getvalue()


def params_json(params) -> dict:
    return {"models": list(params.models), "features": [asdict(f) for f in params.features],
            "base": params.base.tolist(), "alpha": params.alpha.tolist(), "beta": params.beta.tolist()}


def _status(result) -> int:
    if not result.converged:
        print(f"warning: fit did not converge in {result.iterations_used} iterations "
              f"(max gradient {result.max_gradient:.3g})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


# --- subcommands -------------------------------------------------------------------

def cmd_fit(args, s: Settings) -> int:
    ds = parse_games(args.games)
    res = fit(ds, s.features, s.likelihood, s.priors, s.fit)
    doc = build_leaderboard(res, ds, metadata={"config_digest": config_digest(s.as_dict())})
    emit(render_leaderboard(doc, args.format), args.out)
    if args.params_out:
        emit(dump_json({**params_json(res.params), "converged": res.converged}), args.params_out)
    return _status(res)


def _bootstrap(args, s: Settings):
    ds = parse_games(args.games)
    res = fit(ds, s.features, s.likelihood, s.priors, s.fit)
    samples = bootstrap_fit(ds, s.features, s.likelihood, s.priors, s.fit, args.replicates, args.seed,
                            full_fit=res, jobs=s.jobs)
    if samples.n < 2:
        raise FitError("fewer than two bootstrap replicates converged")
    return ds, res, samples


def cmd_bootstrap(args, s: Settings) -> int:
    ds, res, samples = _bootstrap(args, s)
    meta = {"config_digest": config_digest(s.as_dict()), "seed": args.seed}
    doc = build_leaderboard(res, ds, samples, args.confidence, meta)
    emit(render_leaderboard(doc, args.format), args.out)
    return _status(res)


def cmd_bias_report(args, s: Settings) -> int:
    if not any(f.kind == "shared" for f in s.features):
        raise UsageError("bias-report needs at least one shared feature (--features)")
    ds, res, samples = _bootstrap(args, s)
    report = bias_report(res, ds, samples, args.confidence)
    emit(dump_json({"confidence": args.confidence, "seed": args.seed, "replicates": samples.n,
                    "converged": res.converged, "biases": report.as_dict()}), args.out)
    return _status(res)


def cmd_convert_benchmark(args, s: Settings) -> int:
    bench = read_benchmark_csv(args.benchmark)
    if args.w is not None:
        games = accuracies_to_games(bench, args.w, symmetric=not args.literal)
    elif bench.correct is not None:
        games = matrix_to_games(bench)
    else:
        games = accuracies_to_games(bench, 1.0, symmetric=not args.literal)
    emit(format_games(games), args.out)
    return EXIT_OK


def cmd_tune_w(args, s: Settings) -> int:
    bench = read_benchmark_csv(args.benchmark)
    human = parse_games(args.games)
    grid = [float(x) for x in args.grid.split(",")] if args.grid else default_grid()
    best, losses = tune_w(bench, human, s.likelihood, s.priors, s.fit, grid, symmetric=not args.literal)
    emit(dump_json({"w": best, "grid": sorted(grid), "losses": losses}), args.out)
    return EXIT_OK


def _truth(args, cfg: dict):
    spec = dict(cfg.get("truth") or {})
    if args.models is not None:
        spec["n_models"] = args.models
    if args.alpha:
        alpha = {}
        for item in args.alpha:
            name, _, value = item.partition("=")
            if not value:
                raise UsageError(f"--alpha expects name=value, got {item!r}")
            alpha[name] = float(value)
        spec["alpha"] = alpha
    if args.tasks is not None:
        spec["tasks"] = [t for t in args.tasks.split(",") if t]
    if args.draw_rate is not None:
        spec["draw_rate"] = args.draw_rate
    spec.setdefault("seed", args.seed)
    if "feature_ranges" in spec:
        spec["feature_ranges"] = {k: tuple(v) for k, v in spec["feature_ranges"].items()}
    try:
        return make_truth(**spec)
    except TypeError as exc:
        raise UsageError(f"bad truth config: {exc}") from None


def cmd_simulate(args, s: Settings, cfg: dict) -> int:
    truth = _truth(args, cfg)
    emit(format_games(generate(truth, args.games, args.seed)), args.out)
    if args.truth_out:
        emit(dump_json(params_json(truth.params)), args.truth_out)
    return EXIT_OK


def cmd_experiment(args, s: Settings, cfg: dict) -> int:
    exp = dict(cfg.get("experiment") or {})
    if args.which == "efficiency":
        if args.sizes:
            exp["budgets"] = tuple(int(x) for x in args.sizes.split(","))
        if args.repeats is not None:
            exp["repeats"] = args.repeats
        if "budgets" in exp:
            exp["budgets"] = tuple(exp["budgets"])
        try:
            config = EfficiencyConfig(**exp)
        except TypeError as exc:
            raise UsageError(f"bad experiment config: {exc}") from None
        curves = sample_efficiency_experiment(config, args.seed, fit_config=s.fit)
        rows = [r for c in curves.values() for r in c.rows()]
        emit(write_csv(rows, ["variant", "budget", "heldout_loss", "rmse", "games_to_target"]), args.out)
        for c in curves.values():
            if c.reduction is not None:
                print(f"{c.variant}: games-to-target reduction {c.reduction:.1%}", file=sys.stderr)
        return EXIT_OK
    if args.which == "equivalence":
        truth = _truth(args, cfg)
        sizes = [int(x) for x in (args.sizes or "1000,10000,100000").split(",")]
        rows = equivalence_experiment(truth, sizes, args.seed, task=truth.tasks[0], config=s.fit)
        emit(write_csv(rows, ["size", "task_games", "discrepancy", "converged"]), args.out)
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED
    # compare-likelihoods
    sizes = [int(x) for x in (args.sizes or "100,300,1000,3000").split(",")]
    if args.games_file:
        ds = parse_games(args.games_file)
    else:
        truth = _truth(args, cfg)
        ds = generate(truth, max(sizes) + args.heldout, args.seed)
    liks = default_likelihoods() + [LikelihoodModel("davidson", theta=0.0)]
    rows = model_comparison_experiment(ds, sizes, args.seed, liks, heldout=args.heldout, config=s.fit)
    out = [{"variant": r["likelihood"], "budget": r["train_size"], "heldout_loss": r["heldout_loss"]} for r in rows]
    emit(write_csv(out, ["variant", "budget", "heldout_loss", "rmse", "games_to_target"]), args.out)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="YAML or JSON file with likelihood/priors/fit/features/truth/experiment sections")
    g.add_argument("--likelihood", choices=KINDS)
    g.add_argument("--theta", type=float, help="draw parameter of rao_kupper/davidson")
    g.add_argument("--scale", type=float, help="rating points per factor-10 in odds (default 400)")
    g.add_argument("--anchor", type=float, help="mean base rating after fitting (default 1000)")
    g.add_argument("--sigma-base", type=float, help="prior scale of base ratings (default flat)")
    g.add_argument("--sigma-shared", type=float, help="prior scale of shared bias weights")
    g.add_argument("--sigma-specific", type=float, help="prior scale of per-model weights")
    g.add_argument("--features", help="comma list: length,position,repetitiveness,readability,task:<tag>,column:<name>")
    g.add_argument("--jobs", type=int, help="worker processes for bootstrap replicates")
    g.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mvrating", description="Multivariate ratings from pairwise preference games.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def games_cmd(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("games", help="game records, one JSON object per line")
        sp.add_argument("-o", "--out", help="output file (default stdout)")
        return sp

    sp = games_cmd("fit", "fit ratings and print a leaderboard")
    sp.add_argument("--format", choices=("markdown", "json"), default="markdown")
    sp.add_argument("--params-out", help="also write fitted parameters as JSON")

    for name, help_ in (("bootstrap", "leaderboard with bootstrap intervals"),
                        ("bias-report", "bias coefficients and influences with intervals")):
        sp = games_cmd(name, help_)
        sp.add_argument("--replicates", type=int, default=100)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--confidence", type=float, default=0.95)
        if name == "bootstrap":
            sp.add_argument("--format", choices=("markdown", "json"), default="markdown")

    sp = sub.add_parser("convert-benchmark", parents=[common], help="benchmark CSV to game records")
    sp.add_argument("benchmark")
    sp.add_argument("--w", type=float, help="win-rate scale; converts accuracies to one fractional game per pair")
    sp.add_argument("--literal", action="store_true", help="use the one-sided min(1, W/2 (1 + dacc)) rate")
    sp.add_argument("-o", "--out")

    sp = sub.add_parser("tune-w", parents=[common], help="choose W against human games")
    sp.add_argument("benchmark")
    sp.add_argument("games")
    sp.add_argument("--grid", help="comma list of W candidates")
    sp.add_argument("--literal", action="store_true")
    sp.add_argument("-o", "--out")

    def truth_flags(sp):
        sp.add_argument("--models", type=int, help="number of models")
        sp.add_argument("--alpha", action="append", metavar="NAME=VALUE", help="true shared weight (repeatable)")
        sp.add_argument("--tasks", help="comma list of task tags")
        sp.add_argument("--draw-rate", type=float)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-o", "--out")

    sp = sub.add_parser("simulate", parents=[common], help="synthetic games from a ground truth")
    truth_flags(sp)
    sp.add_argument("--games", type=int, default=10_000)
    sp.add_argument("--truth-out", help="write the true parameters as JSON")

    sp = sub.add_parser("experiment", parents=[common], help="run a synthetic study and write a CSV table")
    sp.add_argument("which", choices=("efficiency", "equivalence", "compare-likelihoods"))
    truth_flags(sp)
    sp.add_argument("--sizes", help="comma list of budgets / game counts / training sizes")
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--heldout", type=int, default=5000, help="held-out games (compare-likelihoods)")
    sp.add_argument("--games-file", help="compare likelihoods on these games instead of synthetic ones")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        s = Settings(args, cfg)
        if args.command == "fit":
            return cmd_fit(args, s)
        if args.command == "bootstrap":
            return cmd_bootstrap(args, s)
        if args.command == "bias-report":
            return cmd_bias_report(args, s)
        if args.command == "convert-benchmark":
            return cmd_convert_benchmark(args, s)
        if args.command == "tune-w":
            return cmd_tune_w(args, s)
        if args.command == "simulate":
            return cmd_simulate(args, s, cfg)
        return cmd_experiment(args, s, cfg)
    except UsageError as exc:
        print(f"mvrating: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GameFileError as exc:
        print(f"mvrating: {len(exc.rejected)} rejected line(s) in {exc.path}", file=sys.stderr)
        for number, why in exc.rejected:
            print(f"  line {number}: {why}", file=sys.stderr)
        return EXIT_DATA
    except DATA_ERRORS as exc:
        print(f"mvrating: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TypeError, ValueError) as exc:
        # bad values in a config file or flag combination
        print(f"mvrating: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
