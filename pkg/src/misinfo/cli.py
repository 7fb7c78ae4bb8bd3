"""Command-line surface for the text and structure pipelines.

Subcommands: train-text, train-graph, grid-search, predict, evaluate, and
synth (text | graphs).  Settings resolve as built-in defaults < JSON config
file (--config) < explicit flags; the named run presets run1..run6 fix the
(task, base, fusion) triple of a text ensemble.

Every command writes all artifacts under its --out directory via a staging
directory that is renamed only on success, so a failed run leaves nothing
behind.  Exit codes: 0 success, 1 usage or validation error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import persist
from .corpus import (
    BINARY,
    SplitSpec,
    TERNARY,
    class_tokens,
    default_stopwords,
    load_graphs,
    load_stopwords,
    load_tweets,
    save_graphs,
    save_tweets,
    split_dataset,
    to_class_index,
)
from .ensemble import TextEnsemble, fuse_proba, fuse_sum, fuse_vote
from .errors import ConfigError, DataError, MisinfoError
from .features import load_embeddings, save_embeddings
from .gnn import GraphClassifier, grid_search
from .metrics import evaluate_predictions
from .synth import make_embeddings, make_graph_corpus, make_tweet_corpus

RUN_PRESETS = {
    "run1": {"task": TERNARY, "base": "bow-nb", "rule": "vote"},
    "run2": {"task": TERNARY, "base": "bow-nb", "rule": "sum"},
    "run3": {"task": TERNARY, "base": "embed-lr", "rule": "sum"},
    "run4": {"task": BINARY, "base": "bow-nb", "rule": "vote"},
    "run5": {"task": BINARY, "base": "bow-nb", "rule": "sum"},
    "run6": {"task": BINARY, "base": "embed-lr", "rule": "sum"},
}

TEXT_DEFAULTS = {
    "task": TERNARY,
    "base": "bow-nb",
    "rule": "vote",
    "n_members": 4,
    "alpha": 1.0,
    "min_df": 2,
    "learning_rate": 0.01,
    "epochs": 300,
    "batch_size": 32,
    "l2": 1e-4,
    "seed": 0,
}

GRAPH_DEFAULTS = {
    "num_layers": 4,
    "hidden_dim": 128,
    "neighbor_pool": "max",
    "graph_pool": "mean",
    "dropout": 0.3,
    "learning_rate": 0.01,
    "epochs": 1000,
    "batch_size": 32,
    "degree_cap": 64,
    "train_fraction": 0.8,
    "valid_fraction": 0.1,
    "test_fraction": 0.1,
    "seed": 0,
}

_GRAPH_MODEL_KEYS = (
    "num_layers", "hidden_dim", "neighbor_pool", "graph_pool", "dropout",
    "learning_rate", "epochs", "batch_size", "degree_cap", "seed",
)


def resolve_config(defaults: dict, config_path: str | None, flags: dict) -> dict:
    """Layer a JSON config file and explicit flags over the defaults."""
    merged = dict(defaults)
    if config_path is not None:
        try:
            obj = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        unknown = sorted(set(obj) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        merged.update(obj)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


@contextmanager
def staged_output(out: str, force: bool):
    """Yield a staging directory that replaces ``out`` only on success."""
    out_path = Path(out)
    if out_path.exists():
        if not force:
            raise ConfigError(f"output path {out_path} already exists (pass --force to replace it)")
        if not out_path.is_dir():
            raise ConfigError(f"output path {out_path} exists and is not a directory")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_path.name}.tmp", dir=out_path.parent))
    try:
        yield staging
        os.chmod(staging, 0o755)
        if out_path.exists():
            shutil.rmtree(out_path)
        os.replace(staging, out_path)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def write_manifest(staging: Path, command: str, config: dict, outputs: list[str]) -> None:
    """Record what was produced; timestamps live only under ``meta``."""
    manifest = {
        "command": command,
        "config": config,
        "outputs": sorted(outputs),
        "meta": {"created_utc": datetime.now(timezone.utc).isoformat()},
    }
    (staging / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8"
    )


def _default_jobs(jobs: int | None) -> int:
    if jobs is None:
        return os.cpu_count() or 1
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    return jobs


@click.group(name="misinfo")
def cli() -> None:
    """Misinformation detection: text ensembles and propagation-graph models."""


def main() -> int:
    try:
        cli.main(standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except MisinfoError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 3


@cli.command("train-text")
@click.option("--run", type=click.Choice(sorted(RUN_PRESETS)), default=None,
              help="Named preset fixing task, base model and fusion rule.")
@click.option("--task", type=click.Choice([TERNARY, BINARY]), default=None)
@click.option("--base", type=click.Choice(["bow-nb", "embed-lr"]), default=None)
@click.option("--rule", type=click.Choice(["vote", "sum"]), default=None)
@click.option("--train", "train_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dev", "dev_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", "embeddings_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--stopwords", "stopwords_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--n-members", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--min-df", type=int, default=None)
@click.option("--lr", "learning_rate", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--l2", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Replace --out if it exists.")
def cmd_train_text(run, task, base, rule, train_path, dev_path, embeddings_path,
                   stopwords_path, n_members, alpha, min_df, learning_rate, epochs,
                   batch_size, l2, seed, jobs, config_path, out_path, force):
    """Train a resampling text ensemble and evaluate it on the dev file."""
    flags = {
        "task": task, "base": base, "rule": rule, "n_members": n_members,
        "alpha": alpha, "min_df": min_df, "learning_rate": learning_rate,
        "epochs": epochs, "batch_size": batch_size, "l2": l2, "seed": seed,
    }
    if run is not None:
        conflicting = [k for k in ("task", "base", "rule") if flags[k] is not None]
        if conflicting:
            raise ConfigError(f"--run cannot be combined with --{conflicting[0]}")
        flags.update(RUN_PRESETS[run])
    cfg = resolve_config(TEXT_DEFAULTS, config_path, flags)
    n_jobs = _default_jobs(jobs)

    model = TextEnsemble(n_jobs=n_jobs, **cfg)
    model._validate_params()
    stopwords = (
        load_stopwords(stopwords_path) if stopwords_path else default_stopwords()
    )
    table = load_embeddings(embeddings_path) if embeddings_path else None
    if cfg["base"] == "embed-lr" and table is None:
        raise ConfigError("--embeddings is required when the base model is 'embed-lr'")
    tweets = load_tweets(train_path)
    dev_tweets = load_tweets(dev_path)

    model.fit(tweets, stopwords=stopwords, embeddings=table)
    stack = model._member_probs(dev_tweets, table)
    probs = fuse_proba(stack)
    predicted = fuse_vote(stack) if cfg["rule"] == "vote" else fuse_sum(stack)
    truth = [to_class_index(t.label, cfg["task"]) for t in dev_tweets]
    report = evaluate_predictions(truth, predicted, probs, cfg["task"])

    run_name = run or "-"
    table_text = report.render_table(run_name)
    with staged_output(out_path, force) as staging:
        outputs = persist.save_model(model, staging)
        (staging / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (staging / "summary.txt").write_text(table_text + "\n", encoding="utf-8")
        outputs += ["report.json", "summary.txt"]
        write_manifest(staging, "train-text", cfg, outputs)
    click.echo(table_text)
    click.echo(f"model written to {out_path}")


def _load_labeled_graphs(path: str) -> list:
    graphs = load_graphs(path)
    for g in graphs:
        if g.label is None:
            raise DataError(f"graph {g.id!r} has no label; training needs labeled graphs")
    return graphs


def _train_graph_impl(command, graphs_path, grid_path, cfg, n_jobs, out_path, force):
    model_cfg = {k: cfg[k] for k in _GRAPH_MODEL_KEYS}
    # Validate hyperparameters before touching the data or training anything.
    GraphClassifier(**model_cfg)._validate_params()
    grid = None
    if grid_path is not None:
        try:
            grid = json.loads(Path(grid_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"grid file {grid_path} is not valid JSON: {exc}") from exc
        if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
            raise ConfigError("grid file must map hyperparameter names to value lists")

    graphs = _load_labeled_graphs(graphs_path)
    split = SplitSpec(
        cfg["train_fraction"], cfg["valid_fraction"], cfg["test_fraction"], cfg["seed"]
    )
    train, valid, test = split_dataset(graphs, split)
    y_train = [int(g.label) for g in train]
    y_valid = [int(g.label) for g in valid]
    y_test = [int(g.label) for g in test]

    grid_result = None
    if grid is not None:
        grid_result = grid_search(
            train, y_train, valid, y_valid, grid,
            base_config=model_cfg, seed=cfg["seed"], jobs=n_jobs,
        )
        model = grid_result.model
    else:
        model = GraphClassifier(**model_cfg).fit(train, y_train, valid, y_valid)

    probs = model.predict_proba(test)
    predicted = np.argmax(probs, axis=1)
    report = evaluate_predictions(y_test, predicted, probs, TERNARY)

    table_text = report.render_table("smd")
    with staged_output(out_path, force) as staging:
        outputs = persist.save_model(model, staging)
        with open(staging / "history.jsonl", "w", encoding="utf-8") as fh:
            for entry in model.history_:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        (staging / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (staging / "summary.txt").write_text(table_text + "\n", encoding="utf-8")
        outputs += ["history.jsonl", "report.json", "summary.txt"]
        if grid_result is not None:
            (staging / "grid_report.json").write_text(
                json.dumps(grid_result.to_obj(), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            outputs.append("grid_report.json")
        write_manifest(staging, command, cfg, outputs)
    click.echo(table_text)
    if grid_result is not None:
        click.echo(
            f"grid search: best cell {grid_result.best_index} "
            f"(valid AUC {grid_result.best_valid_auc:.4f})"
        )
    click.echo(f"model written to {out_path}")


def _graph_options(fn):
    options = [
        click.option("--graphs", "graphs_path", required=True,
                     type=click.Path(exists=True, dir_okay=False)),
        click.option("--num-layers", type=int, default=None),
        click.option("--hidden-dim", type=int, default=None),
        click.option("--neighbor-pool", type=click.Choice(["sum", "mean", "max"]),
                     default=None),
        click.option("--graph-pool", type=click.Choice(["sum", "mean", "max"]),
                     default=None),
        click.option("--dropout", type=float, default=None),
        click.option("--lr", "learning_rate", type=float, default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--degree-cap", type=int, default=None),
        click.option("--train-fraction", type=float, default=None),
        click.option("--valid-fraction", type=float, default=None),
        click.option("--test-fraction", type=float, default=None),
        click.option("--seed", type=int, default=None),
        click.option("--jobs", type=int, default=None),
        click.option("--config", "config_path", default=None,
                     type=click.Path(exists=True, dir_okay=False)),
        click.option("--out", "out_path", required=True, type=click.Path()),
        click.option("--force", is_flag=True, help="Replace --out if it exists."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _collect_graph_flags(kwargs: dict) -> dict:
    return {
        "num_layers": kwargs["num_layers"],
        "hidden_dim": kwargs["hidden_dim"],
        "neighbor_pool": kwargs["neighbor_pool"],
        "graph_pool": kwargs["graph_pool"],
        "dropout": kwargs["dropout"],
        "learning_rate": kwargs["learning_rate"],
        "epochs": kwargs["epochs"],
        "batch_size": kwargs["batch_size"],
        "degree_cap": kwargs["degree_cap"],
        "train_fraction": kwargs["train_fraction"],
        "valid_fraction": kwargs["valid_fraction"],
        "test_fraction": kwargs["test_fraction"],
        "seed": kwargs["seed"],
    }


@cli.command("train-graph")
@click.option("--grid", "grid_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Optional hyperparameter grid; the best cell trains the final model.")
@_graph_options
def cmd_train_graph(grid_path, **kwargs):
    """Train a propagation-graph classifier and evaluate it on the test part."""
    cfg = resolve_config(GRAPH_DEFAULTS, kwargs["config_path"], _collect_graph_flags(kwargs))
    _train_graph_impl(
        "train-graph", kwargs["graphs_path"], grid_path, cfg,
        _default_jobs(kwargs["jobs"]), kwargs["out_path"], kwargs["force"],
    )


@cli.command("grid-search")
@click.option("--grid", "grid_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@_graph_options
def cmd_grid_search(grid_path, **kwargs):
    """Grid-search graph hyperparameters, then train with the best cell."""
    cfg = resolve_config(GRAPH_DEFAULTS, kwargs["config_path"], _collect_graph_flags(kwargs))
    _train_graph_impl(
        "grid-search", kwargs["graphs_path"], grid_path, cfg,
        _default_jobs(kwargs["jobs"]), kwargs["out_path"], kwargs["force"],
    )


@cli.command("predict")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--task", type=click.Choice([TERNARY, BINARY]), default=None,
              help="Assert the model's task; mismatch is an error.")
@click.option("--embeddings", "embeddings_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Replace --out if it exists.")
def cmd_predict(model_path, input_path, task, embeddings_path, out_path, force):
    """Write per-record label tokens and class probabilities as a TSV."""
    model, envelope = persist.load_model(model_path)
    model_task = envelope["task"]
    if task is not None and task != model_task:
        raise ConfigError(f"model was trained for task {model_task!r}, not {task!r}")
    tokens = class_tokens(model_task)

    if envelope["kind"] == "ensemble":
        records = load_tweets(input_path)
        table = load_embeddings(embeddings_path) if embeddings_path else None
        if model.base == "embed-lr" and table is None:
            raise ConfigError("--embeddings is required to predict with an 'embed-lr' model")
        stack = model._member_probs(records, table)
        probs = fuse_proba(stack)
        predicted = fuse_vote(stack) if model.rule == "vote" else fuse_sum(stack)
        ids = [t.id for t in records]
    else:
        records = load_graphs(input_path)
        probs = model.predict_proba(records)
        predicted = np.argmax(probs, axis=1)
        ids = [g.id for g in records]

    lines = []
    for i, record_id in enumerate(ids):
        values = "\t".join(f"{p:.10f}" for p in probs[i])
        lines.append(f"{record_id}\t{tokens[predicted[i]]}\t{values}")
    with staged_output(out_path, force) as staging:
        (staging / "predictions.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_manifest(
            staging, "predict",
            {"model": str(model_path), "input": str(input_path), "task": model_task},
            ["predictions.tsv"],
        )
    click.echo(f"{len(ids)} predictions written to {out_path}")


def _load_predictions(path: str):
    ids: list[str] = []
    tokens: list[str] = []
    rows: list[list[float]] = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (4, 5):
                raise DataError(
                    f"{path}:{lineno}: expected id, label and 2 or 3 probabilities"
                )
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataError(f"{path}:{lineno}: inconsistent column count")
            try:
                probs = [float(x) for x in parts[2:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad probability: {exc}") from exc
            if not all(np.isfinite(probs)):
                raise DataError(f"{path}:{lineno}: non-finite probability")
            ids.append(parts[0])
            tokens.append(parts[1])
            rows.append(probs)
    if not ids:
        raise DataError(f"{path}: no prediction rows")
    task = BINARY if width == 4 else TERNARY
    return ids, tokens, np.array(rows), task


def _load_truth_labels(path: str) -> dict:
    """Read id -> ternary label from a tweet TSV or a labeled graph JSONL."""
    with open(path, encoding="utf-8") as fh:
        first = fh.read(1)
    if first == "{":
        graphs = load_graphs(path)
        labels = {}
        for g in graphs:
            if g.label is None:
                raise DataError(f"graph {g.id!r} has no label; cannot evaluate against it")
            labels[g.id] = g.label
        return labels
    return {t.id: t.label for t in load_tweets(path)}


@cli.command("evaluate")
@click.option("--predictions", "predictions_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--name", default="-", help="Run name shown in the summary table.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Replace --out if it exists.")
def cmd_evaluate(predictions_path, truth_path, name, out_path, force):
    """Score a predictions file against ground truth; the task is inferred
    from the number of probability columns."""
    ids, pred_tokens, probs, task = _load_predictions(predictions_path)
    truth_labels = _load_truth_labels(truth_path)

    pred_set = set(ids)
    missing = sorted(i for i in truth_labels if i not in pred_set)[:10]
    extra = sorted(i for i in pred_set if i not in truth_labels)[:10]
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"ids missing from predictions: {missing}")
        if extra:
            parts.append(f"ids missing from truth: {extra}")
        raise DataError("id mismatch; " + "; ".join(parts))

    token_index = {token: i for i, token in enumerate(class_tokens(task))}
    predicted = []
    for record_id, token in zip(ids, pred_tokens):
        if token not in token_index:
            raise DataError(f"prediction for {record_id!r} has unknown label {token!r}")
        predicted.append(token_index[token])
    truth = [to_class_index(truth_labels[i], task) for i in ids]

    report = evaluate_predictions(truth, predicted, probs, task)
    table_text = report.render_table(name)
    with staged_output(out_path, force) as staging:
        (staging / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (staging / "summary.txt").write_text(table_text + "\n", encoding="utf-8")
        write_manifest(
            staging, "evaluate",
            {"predictions": str(predictions_path), "truth": str(truth_path), "task": task},
            ["report.json", "summary.txt"],
        )
    click.echo(table_text)


@cli.group("synth")
def synth_group() -> None:
    """Generate the synthetic corpora used by the end-to-end checks."""


@synth_group.command("text")
@click.option("--count", type=int, default=2000, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True,
              help="Embedding dimension.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Replace --out if it exists.")
def cmd_synth_text(count, dim, seed, out_path, force):
    """Write train/dev/test tweet files plus a covering embedding table."""
    tweets = make_tweet_corpus(count, seed)
    table = make_embeddings(tweets, dim=dim, seed=seed + 1)
    train, dev, test = split_dataset(tweets, SplitSpec(seed=seed))
    with staged_output(out_path, force) as staging:
        save_tweets(staging / "train.tsv", train)
        save_tweets(staging / "dev.tsv", dev)
        save_tweets(staging / "test.tsv", test)
        save_embeddings(staging / "embeddings.txt", table)
        write_manifest(
            staging, "synth text",
            {"count": count, "dim": dim, "seed": seed},
            ["train.tsv", "dev.tsv", "test.tsv", "embeddings.txt"],
        )
    click.echo(
        f"{len(train)}/{len(dev)}/{len(test)} tweets and {count} embeddings "
        f"written to {out_path}"
    )


@synth_group.command("graphs")
@click.option("--per-class", type=int, default=100, show_default=True)
@click.option("--min-nodes", type=int, default=15, show_default=True)
@click.option("--max-nodes", type=int, default=60, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="Replace --out if it exists.")
def cmd_synth_graphs(per_class, min_nodes, max_nodes, seed, out_path, force):
    """Write a labeled propagation-graph corpus as JSONL."""
    graphs = make_graph_corpus(per_class, min_nodes, max_nodes, seed)
    with staged_output(out_path, force) as staging:
        save_graphs(staging / "graphs.jsonl", graphs)
        write_manifest(
            staging, "synth graphs",
            {"per_class": per_class, "min_nodes": min_nodes,
             "max_nodes": max_nodes, "seed": seed},
            ["graphs.jsonl"],
        )
    click.echo(f"{len(graphs)} graphs written to {out_path}")
