import json
import sys

import numpy as np
import pytest

from misinfo.cli import main


def run_cli(monkeypatch, capsys, *args):
    monkeypatch.setattr(sys, "argv", ["misinfo"] + [str(a) for a in args])
    code = main()
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def text_data(tmp_path_factory):
    """A small synthetic text corpus written through the CLI itself."""
    out = tmp_path_factory.mktemp("cli") / "text"
    argv = sys.argv
    sys.argv = ["misinfo", "synth", "text", "--count", "200", "--dim", "6",
                "--seed", "0", "--out", str(out)]
    try:
        assert main() == 0
    finally:
        sys.argv = argv
    return out


@pytest.fixture(scope="module")
def graph_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "graphs"
    argv = sys.argv
    sys.argv = ["misinfo", "synth", "graphs", "--per-class", "10", "--min-nodes", "5",
                "--max-nodes", "10", "--seed", "1", "--out", str(out)]
    try:
        assert main() == 0
    finally:
        sys.argv = argv
    return out / "graphs.jsonl"


@pytest.fixture(scope="module")
def text_model(text_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "model"
    argv = sys.argv
    sys.argv = ["misinfo", "train-text", "--run", "run1",
                "--train", str(text_data / "train.tsv"),
                "--dev", str(text_data / "dev.tsv"),
                "--jobs", "1", "--out", str(out)]
    try:
        assert main() == 0
    finally:
        sys.argv = argv
    return out


class TestSynth:
    def test_text_outputs(self, text_data):
        for name in ("train.tsv", "dev.tsv", "test.tsv", "embeddings.txt", "manifest.json"):
            assert (text_data / name).is_file(), name
        manifest = json.loads((text_data / "manifest.json").read_text())
        assert manifest["command"] == "synth text"
        assert manifest["config"]["count"] == 200
        # 80/10/10 split of 200 records
        assert len((text_data / "train.tsv").read_text().splitlines()) == 160
        assert len((text_data / "dev.tsv").read_text().splitlines()) == 20

    def test_graph_outputs(self, graph_data):
        lines = graph_data.read_text().splitlines()
        assert len(lines) == 30
        assert all(json.loads(line)["label"] for line in lines)


class TestTrainText:
    def test_run_preset_writes_model_dir(self, text_model):
        expected = {"model.json", "report.json", "summary.txt", "manifest.json"}
        names = {p.name for p in text_model.iterdir()}
        assert expected <= names
        assert {f"member_{i}.json" for i in range(4)} <= names
        assert {f"vocab_{i}.json" for i in range(4)} <= names
        envelope = json.loads((text_model / "model.json").read_text())
        assert envelope["task"] == "ternary"
        assert envelope["config"]["rule"] == "vote"
        report = json.loads((text_model / "report.json").read_text())
        assert report["task"] == "ternary"
        assert 0.0 <= report["macro_f1"] <= 1.0

    def test_run_conflicts_with_task_flag(self, text_data, tmp_path, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "train-text", "--run", "run1", "--task", "binary",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--out", tmp_path / "m",
        )
        assert code == 1
        assert "--run" in err and "--task" in err
        assert not (tmp_path / "m").exists()

    def test_existing_out_needs_force(self, text_data, text_model, monkeypatch, capsys):
        args = ["train-text", "--run", "run1",
                "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
                "--jobs", "1", "--out", text_model]
        code, _, err = run_cli(monkeypatch, capsys, *args)
        assert code == 1
        assert "--force" in err
        code, _, _ = run_cli(monkeypatch, capsys, *args, "--force")
        assert code == 0

    def test_embed_lr_requires_embeddings(self, text_data, tmp_path, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "train-text", "--run", "run3",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--out", tmp_path / "m",
        )
        assert code == 1
        assert "--embeddings" in err

    def test_embed_lr_end_to_end(self, text_data, tmp_path, monkeypatch, capsys):
        code, out, _ = run_cli(
            monkeypatch, capsys, "train-text", "--run", "run6",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--embeddings", text_data / "embeddings.txt",
            "--epochs", "10", "--jobs", "1", "--out", tmp_path / "m",
        )
        assert code == 0
        envelope = json.loads((tmp_path / "m" / "model.json").read_text())
        assert envelope["task"] == "binary"
        assert envelope["config"]["base"] == "embed-lr"

    def test_invalid_hyperparameter_fails_before_output(self, text_data, tmp_path,
                                                        monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "train-text", "--alpha", "0",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--out", tmp_path / "m",
        )
        assert code == 1
        assert "alpha" in err
        assert not (tmp_path / "m").exists()
        assert not list(tmp_path.glob(".*tmp*"))

    def test_config_file_precedence(self, text_data, tmp_path, monkeypatch, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"min_df": 3, "alpha": 0.5}))
        code, _, _ = run_cli(
            monkeypatch, capsys, "train-text",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--config", config, "--alpha", "2.0", "--jobs", "1",
            "--out", tmp_path / "m",
        )
        assert code == 0
        manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
        assert manifest["config"]["min_df"] == 3  # from the file
        assert manifest["config"]["alpha"] == 2.0  # flag wins over the file
        assert manifest["config"]["n_members"] == 4  # untouched default

    def test_unknown_config_key_rejected(self, text_data, tmp_path, monkeypatch, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bogus": 1}))
        code, _, err = run_cli(
            monkeypatch, capsys, "train-text",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--config", config, "--out", tmp_path / "m",
        )
        assert code == 1
        assert "bogus" in err

    def test_jobs_must_be_positive(self, text_data, tmp_path, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "train-text", "--jobs", "0",
            "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
            "--out", tmp_path / "m",
        )
        assert code == 1
        assert "--jobs" in err


class TestPredictEvaluate:
    def test_predict_writes_tsv(self, text_model, text_data, tmp_path, monkeypatch, capsys):
        out = tmp_path / "preds"
        code, msg, _ = run_cli(
            monkeypatch, capsys, "predict", "--model", text_model,
            "--input", text_data / "dev.tsv", "--out", out,
        )
        assert code == 0
        lines = (out / "predictions.tsv").read_text().splitlines()
        assert len(lines) == 20
        for line in lines:
            parts = line.split("\t")
            assert len(parts) == 5
            assert parts[1] in ("5g_corona_conspiracy", "other_conspiracy", "non_conspiracy")
            probs = [float(x) for x in parts[2:]]
            assert abs(sum(probs) - 1.0) < 1e-6

    def test_predict_task_mismatch(self, text_model, text_data, tmp_path, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "predict", "--model", text_model,
            "--input", text_data / "dev.tsv", "--task", "binary",
            "--out", tmp_path / "p",
        )
        assert code == 1
        assert "binary" in err and "ternary" in err

    def test_evaluate_round_trip(self, text_model, text_data, tmp_path, monkeypatch, capsys):
        preds = tmp_path / "preds"
        assert run_cli(
            monkeypatch, capsys, "predict", "--model", text_model,
            "--input", text_data / "dev.tsv", "--out", preds,
        )[0] == 0
        out = tmp_path / "eval"
        code, table, _ = run_cli(
            monkeypatch, capsys, "evaluate",
            "--predictions", preds / "predictions.tsv",
            "--truth", text_data / "dev.tsv", "--name", "devrun", "--out", out,
        )
        assert code == 0
        assert "devrun" in table
        report = json.loads((out / "report.json").read_text())
        assert report["task"] == "ternary"
        assert report["num_samples"] == 20

    def test_evaluate_id_mismatch_lists_ids(self, text_model, text_data, tmp_path,
                                            monkeypatch, capsys):
        preds = tmp_path / "preds"
        assert run_cli(
            monkeypatch, capsys, "predict", "--model", text_model,
            "--input", text_data / "dev.tsv", "--out", preds,
        )[0] == 0
        code, _, err = run_cli(
            monkeypatch, capsys, "evaluate",
            "--predictions", preds / "predictions.tsv",
            "--truth", text_data / "test.tsv", "--out", tmp_path / "e",
        )
        assert code == 2
        assert "id mismatch" in err
        assert "missing from predictions" in err

    def test_evaluate_rejects_malformed_predictions(self, text_data, tmp_path,
                                                    monkeypatch, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("t1\tnon_conspiracy\t0.5\n")
        code, _, err = run_cli(
            monkeypatch, capsys, "evaluate", "--predictions", bad,
            "--truth", text_data / "dev.tsv", "--out", tmp_path / "e",
        )
        assert code == 2
        assert "expected id, label" in err

    def test_evaluate_infers_binary_from_width(self, tmp_path, monkeypatch, capsys):
        truth = tmp_path / "truth.tsv"
        truth.write_text(
            "a\t5g_corona_conspiracy\tfive g towers\n"
            "b\tnon_conspiracy\tstay home\n"
        )
        preds = tmp_path / "preds.tsv"
        preds.write_text(
            "a\t5g_corona_conspiracy\t0.9000000000\t0.1000000000\n"
            "b\trest\t0.2000000000\t0.8000000000\n"
        )
        out = tmp_path / "eval"
        code, _, _ = run_cli(
            monkeypatch, capsys, "evaluate", "--predictions", preds,
            "--truth", truth, "--out", out,
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["task"] == "binary"
        assert report["macro_f1"] == 1.0


class TestTrainGraph:
    def _common(self, graph_data, out):
        return ["--graphs", graph_data, "--num-layers", "2", "--hidden-dim", "8",
                "--degree-cap", "8", "--dropout", "0.0", "--epochs", "2",
                "--batch-size", "16", "--jobs", "1", "--out", out]

    def test_training_outputs(self, graph_data, tmp_path, monkeypatch, capsys):
        out = tmp_path / "gmodel"
        code, msg, _ = run_cli(
            monkeypatch, capsys, "train-graph", *self._common(graph_data, out)
        )
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"model.json", "history.jsonl", "report.json",
                "summary.txt", "manifest.json"} <= names
        history = [json.loads(l) for l in (out / "history.jsonl").read_text().splitlines()]
        assert [h["epoch"] for h in history] == [1, 2]
        assert all(set(h) == {"epoch", "train_loss", "valid_auc"} for h in history)
        assert all(h["valid_auc"] is not None for h in history)
        envelope = json.loads((out / "model.json").read_text())
        assert envelope["kind"] == "gnn"

    def test_grid_search_command(self, graph_data, tmp_path, monkeypatch, capsys):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"hidden_dim": [4, 8]}))
        out = tmp_path / "gs"
        code, msg, _ = run_cli(
            monkeypatch, capsys, "grid-search", "--grid", grid,
            *self._common(graph_data, out),
        )
        assert code == 0
        assert "grid search: best cell" in msg
        report = json.loads((out / "grid_report.json").read_text())
        assert len(report["cells"]) == 2
        assert report["best_index"] in (0, 1)
        assert report["cells"][0]["config"]["hidden_dim"] == 4

    def test_invalid_grid_file(self, graph_data, tmp_path, monkeypatch, capsys):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"hidden_dim": 4}))
        code, _, err = run_cli(
            monkeypatch, capsys, "grid-search", "--grid", grid,
            *self._common(graph_data, tmp_path / "g"),
        )
        assert code == 1
        assert "value lists" in err

    def test_bad_dropout_fails_fast(self, graph_data, tmp_path, monkeypatch, capsys):
        code, _, err = run_cli(
            monkeypatch, capsys, "train-graph", "--graphs", graph_data,
            "--dropout", "1.5", "--out", tmp_path / "g",
        )
        assert code == 1
        assert "dropout" in err

    def test_unlabeled_graphs_rejected(self, tmp_path, monkeypatch, capsys):
        path = tmp_path / "unlabeled.jsonl"
        path.write_text('{"id": "x", "num_nodes": 2, "edges": [[0, 1]]}\n')
        code, _, err = run_cli(
            monkeypatch, capsys, "train-graph", "--graphs", path,
            "--epochs", "1", "--out", tmp_path / "g",
        )
        assert code == 2
        assert "label" in err

    def test_graph_predict_and_evaluate(self, graph_data, tmp_path, monkeypatch, capsys):
        model_dir = tmp_path / "gmodel"
        assert run_cli(
            monkeypatch, capsys, "train-graph", *self._common(graph_data, model_dir)
        )[0] == 0
        preds = tmp_path / "gpreds"
        code, _, _ = run_cli(
            monkeypatch, capsys, "predict", "--model", model_dir,
            "--input", graph_data, "--out", preds,
        )
        assert code == 0
        lines = (preds / "predictions.tsv").read_text().splitlines()
        assert len(lines) == 30
        out = tmp_path / "geval"
        code, _, _ = run_cli(
            monkeypatch, capsys, "evaluate",
            "--predictions", preds / "predictions.tsv",
            "--truth", graph_data, "--out", out,
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["task"] == "ternary"
        assert report["num_samples"] == 30


class TestDeterminism:
    def test_model_bytes_independent_of_jobs(self, text_data, tmp_path, monkeypatch, capsys):
        outs = []
        for jobs in ("1", "2"):
            out = tmp_path / f"jobs{jobs}"
            code, _, _ = run_cli(
                monkeypatch, capsys, "train-text", "--run", "run2",
                "--train", text_data / "train.tsv", "--dev", text_data / "dev.tsv",
                "--jobs", jobs, "--out", out,
            )
            assert code == 0
            outs.append(out)
        for name in ("model.json", "member_0.json", "vocab_0.json", "report.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
