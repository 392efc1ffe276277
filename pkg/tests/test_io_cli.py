import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvrating.cli import main
from mvrating.core import Dataset, FeatureSpec, Game, PriorSpec
from mvrating.gameio import GameFileError, format_games, parse_games, read_games, write_games
from mvrating.likelihood import LikelihoodModel
from mvrating.optimizer import FitConfig, fit
from mvrating.report import LeaderboardDoc, build_leaderboard, render_leaderboard
from mvrating.uncertainty import bootstrap_fit


def write(tmp_path, lines, name="g.jsonl"):
    p = tmp_path / name
    p.write_text("".join(json.dumps(x) + "\n" if not isinstance(x, str) else x + "\n" for x in lines))
    return p


class TestParse:
    def test_tie(self, tmp_path):
        ds = parse_games(write(tmp_path, [{"model_a": "m1", "model_b": "m2", "winner": "tie"}]))
        (g,) = ds.games
        assert (g.model_a, g.model_b, g.weight, g.multiplicity) == ("m1", "m2", 0.5, 1)

    def test_fractional_with_count(self, tmp_path):
        ds = parse_games(write(tmp_path, [{"model_a": "m1", "model_b": "m2", "weight_a": 0.9, "count": 100}]))
        (g,) = ds.games
        assert g.weight == 0.9 and g.multiplicity == 100

    def test_answers_trigger_extractors(self, tmp_path):
        rec = {"model_a": "a", "model_b": "b", "winner": "model_b", "answer_a": "x" * 100, "answer_b": "The cat sat.",
               "tags": ["code"], "features": {"formality": [0.7, 0.2]}}
        (g,) = parse_games(write(tmp_path, [rec])).games
        assert g.weight == 0.0 and g.tags == {"code"}
        assert g.features["length"] == (2.0, pytest.approx(np.log10(12)))
        assert g.features["readability"][1] == 1.0
        assert g.features["formality"] == (0.7, 0.2)

    @pytest.mark.parametrize("bad", [
        {"model_a": "a", "model_b": "b", "winner": "tie", "weight_a": 0.5},
        {"model_a": "a", "model_b": "b"},
        {"model_a": "a", "model_b": "b", "winner": "draw"},
        {"model_a": "a", "model_b": "b", "weight_a": 1.5},
        {"model_a": "a", "model_b": "a", "winner": "tie"},
        {"model_a": "a", "model_b": "b", "winner": "tie", "count": 0},
        {"model_a": "a", "model_b": "b", "winner": "tie", "features": {"x": [1]}},
        "not json",
    ])
    def test_rejected_lines(self, tmp_path, bad):
        good = {"model_a": "a", "model_b": "b", "winner": "tie"}
        with pytest.raises(GameFileError) as exc:
            parse_games(write(tmp_path, [good, bad, good]))
        assert [n for n, _ in exc.value.rejected] == [2]

    def test_unknown_keys_warn(self, tmp_path, caplog):
        ds = parse_games(write(tmp_path, [{"model_a": "a", "model_b": "b", "winner": "tie", "judge": "x"}]))
        assert len(ds) == 1
        assert "judge" in caplog.text

    def test_blank_lines_skipped(self):
        rep = read_games(['{"model_a":"a","model_b":"b","winner":"tie"}', "", "  "])
        assert len(rep.dataset) == 1 and not rep.rejected


game_strategy = st.builds(
    lambda a, b, w, tags, feats, n: Game(f"m{a}", f"m{(a + b) % 5}" if b % 5 else f"m{(a + 1) % 5}", w,
                                         frozenset(tags), feats, n),
    st.integers(0, 4), st.integers(1, 4),
    st.one_of(st.sampled_from([0.0, 0.5, 1.0]), st.floats(0, 1)),
    st.lists(st.sampled_from(["code", "hard", "chinese"]), max_size=2),
    st.dictionaries(st.sampled_from(["length", "formality"]),
                    st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), max_size=2),
    st.integers(1, 50),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(game_strategy, min_size=1, max_size=20))
def test_round_trip(games):
    ds = Dataset.from_games(games)
    again = read_games(format_games(ds).splitlines()).dataset
    assert again == ds
    assert format_games(again) == format_games(ds)


def test_write_then_parse(tmp_path):
    ds = Dataset.from_games([Game("a", "b", 0.25, frozenset(["x"]), {"f": (1.0, 2.0)}, 3)])
    write_games(ds, tmp_path / "o.jsonl")
    assert parse_games(tmp_path / "o.jsonl") == ds


def small_fit(features=(FeatureSpec.task("code"), FeatureSpec.builtin("position")), samples=True):
    rng = np.random.default_rng(0)
    games = []
    for a, b, p in [("x", "y", 0.7), ("y", "z", 0.6)] * 300:
        tags = frozenset(["code"]) if rng.random() < 0.5 else frozenset()
        w = float(rng.random() < p)
        # random sides, so position is not confounded with model identity
        games.append(Game(a, b, w, tags) if rng.random() < 0.5 else Game(b, a, 1 - w, tags))
    ds = Dataset.from_games(games)
    res = fit(ds, features)
    s = bootstrap_fit(ds, features, LikelihoodModel(), PriorSpec(), FitConfig(), 10, 0, res) if samples else None
    return ds, res, s


class TestLeaderboard:
    def test_sorted_and_task_column(self):
        ds, res, s = small_fit()
        doc = build_leaderboard(res, ds, s)
        bases = [r.base for r in doc.rows]
        assert bases == sorted(bases, reverse=True)
        p = res.params
        for r in doc.rows:
            m = p.model_index(r.model)
            assert r.tasks["code"] == p.base[m] + p.beta[m, 0]
            assert r.base_interval is not None and r.task_intervals["code"] is not None
        md = render_leaderboard(doc, "markdown")
        first = next(l for l in md.splitlines() if l.startswith("| 1 |"))
        top = doc.rows[0]
        assert f"| {top.model} | {top.base:.1f} +" in first
        assert f"{top.tasks['code']:.1f}" in first
        assert doc.biases[0].name == "position"

    def test_two_model_sort(self):
        from mvrating.core import RatingParameters
        from mvrating.optimizer import FitResult
        from mvrating.likelihood import LossBreakdown
        p = RatingParameters(("low", "high"), (), [950.0, 1050.0], [], np.zeros((2, 0)))
        res = FitResult(p, LossBreakdown(0, 0, 0), [(0, 0.0), (1, 0.0)], True, 1, 0.0)
        doc = build_leaderboard(res, Dataset.from_games([Game("low", "high", 0.0)]))
        assert doc.rows[0].model == "high"

    def test_json_round_trip(self):
        ds, res, s = small_fit()
        doc = build_leaderboard(res, ds, s, metadata={"seed": 0})
        text = render_leaderboard(doc, "json")
        assert LeaderboardDoc.from_json(text) == doc
        assert LeaderboardDoc.from_json(text).to_json() == text


class TestCli:
    @pytest.fixture
    def symmetric(self, tmp_path):
        return write(tmp_path, [{"model_a": "a", "model_b": "b", "winner": "model_a", "count": 10},
                                {"model_a": "a", "model_b": "b", "winner": "model_b", "count": 10}])

    def test_fit_symmetric(self, symmetric, tmp_path, capsys):
        out = tmp_path / "lb.json"
        assert main(["fit", str(symmetric), "--format", "json", "-o", str(out)]) == 0
        doc = LeaderboardDoc.from_json(out.read_text())
        assert [round(r.base, 6) for r in doc.rows] == [1000.0, 1000.0]

    def test_anchor_flag_and_config_precedence(self, symmetric, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("priors:\n  anchor_value: 1500\n")
        out = tmp_path / "lb.json"
        assert main(["fit", str(symmetric), "--config", str(cfg), "--format", "json", "-o", str(out)]) == 0
        assert LeaderboardDoc.from_json(out.read_text()).rows[0].base == pytest.approx(1500)
        assert main(["fit", str(symmetric), "--config", str(cfg), "--anchor", "1200", "--format", "json",
                     "-o", str(out)]) == 0
        assert LeaderboardDoc.from_json(out.read_text()).rows[0].base == pytest.approx(1200)

    def test_usage_error(self, symmetric):
        with pytest.raises(SystemExit) as exc:
            main(["fit", str(symmetric), "--likelihood", "nonsense"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_bad_config_is_usage_error(self, symmetric, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("priors:\n  sigma_bogus: 1\n")
        assert main(["fit", str(symmetric), "--config", str(cfg)]) == 1

    def test_data_error(self, tmp_path, capsys):
        bad = write(tmp_path, [{"model_a": "a", "model_b": "b", "winner": "tie"}, {"model_a": "a"}, "{"])
        assert main(["fit", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "2 rejected line(s)" in err and "line 2" in err and "line 3" in err
        assert main(["fit", str(tmp_path / "missing.jsonl")]) == 2

    def test_nonconvergence(self, tmp_path, capsys):
        games = write(tmp_path, [{"model_a": "a", "model_b": "b", "winner": "model_a", "count": 20}])
        cfg = tmp_path / "c.yaml"
        cfg.write_text("fit:\n  max_outer_iterations: 20\n")
        out = tmp_path / "lb.json"
        assert main(["fit", str(games), "--config", str(cfg), "--format", "json", "-o", str(out)]) == 3
        assert LeaderboardDoc.from_json(out.read_text()).metadata["converged"] is False

    def test_convert_benchmark(self, tmp_path):
        csv = tmp_path / "b.csv"
        csv.write_text("model,question_id,correct\n" + "".join(f"a,q{i},1\nb,q{i},0\n" for i in range(10)))
        out = tmp_path / "g.jsonl"
        assert main(["convert-benchmark", str(csv), "-o", str(out)]) == 0
        assert json.loads(out.read_text()) == {"model_a": "a", "model_b": "b", "winner": "model_a", "count": 10}
        assert main(["convert-benchmark", str(csv), "--w", "0.5", "-o", str(out)]) == 0
        assert json.loads(out.read_text())["weight_a"] == 0.75

    def test_tune_w(self, tmp_path):
        csv = tmp_path / "b.csv"
        csv.write_text("model,accuracy,n_questions\na,0.8,100\nb,0.5,100\nc,0.3,100\n")
        human = tmp_path / "h.jsonl"
        main(["convert-benchmark", str(csv), "--w", "2.0", "-o", str(human)])
        out = tmp_path / "w.json"
        assert main(["tune-w", str(csv), str(human), "--grid", "0.5,1,2,4", "-o", str(out)]) == 0
        assert json.loads(out.read_text())["w"] == 2.0

    def test_pipeline_recovers_alpha(self, tmp_path):
        games, truth, report = tmp_path / "g.jsonl", tmp_path / "t.json", tmp_path / "r.json"
        assert main(["simulate", "--models", "6", "--tasks", "", "--alpha", "length=130", "--games", "20000",
                     "--seed", "3", "-o", str(games), "--truth-out", str(truth)]) == 0
        assert main(["bias-report", str(games), "--features", "length", "--replicates", "40", "--seed", "1",
                     "-o", str(report)]) == 0
        lo, hi = json.loads(report.read_text())["biases"]["length"]["coefficient_pivotal"]
        assert lo <= 130.0 <= hi

    def test_byte_identical(self, tmp_path):
        games = tmp_path / "g.jsonl"
        main(["simulate", "--models", "4", "--alpha", "position=20", "--games", "3000", "--seed", "1",
              "-o", str(games)])
        outs = []
        for i, jobs in enumerate(("1", "2")):
            out = tmp_path / f"b{i}.json"
            assert main(["bootstrap", str(games), "--features", "position,task:task", "--replicates", "8",
                         "--seed", "5", "--format", "json", "--jobs", jobs, "-o", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        again = tmp_path / "g2.jsonl"
        main(["simulate", "--models", "4", "--alpha", "position=20", "--games", "3000", "--seed", "1",
              "-o", str(again)])
        assert again.read_bytes() == games.read_bytes()

    def test_experiment_csv(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["experiment", "compare-likelihoods", "--models", "4", "--tasks", "", "--draw-rate", "0.1",
                     "--sizes", "100,400", "--heldout", "1000", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "variant,budget,heldout_loss,rmse,games_to_target"
        assert len(lines) == 1 + 2 * 5
        out2 = tmp_path / "q.csv"
        assert main(["experiment", "equivalence", "--models", "4", "--sizes", "500,5000", "-o", str(out2)]) == 0
        assert out2.read_text().splitlines()[0] == "size,task_games,discrepancy,converged"
