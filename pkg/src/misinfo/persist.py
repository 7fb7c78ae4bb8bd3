"""Model directory serialization.

A model directory holds a ``model.json`` envelope; ensembles additionally
store one ``member_<i>.json`` per member and, for bag-of-words members, a
``vocab_<i>.json`` whose SHA-256 is recorded in the envelope.  The hash is
rechecked on load so a model can never silently run against a swapped
vocabulary.  All files are canonical JSON, so saving the same fitted model
twice is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .corpus import num_classes
from .ensemble import TextEnsemble
from .errors import DataError
from .features import Vocabulary
from .gnn import GraphClassifier
from .nn import dumps_params
from .text_models import EmbeddingLogisticRegression, NaiveBayesClassifier

MODEL_FILE = "model.json"
SCHEMA_VERSION = 1


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise DataError(f"missing model file {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def save_model(model: TextEnsemble | GraphClassifier, directory: str | Path) -> list[str]:
    """Write the model files into an existing directory; returns their names."""
    directory = Path(directory)
    written: list[str] = []
    if not hasattr(model, "classes_"):
        raise DataError("cannot serialize an unfitted model")
    if isinstance(model, GraphClassifier):
        envelope = {
            "schema_version": SCHEMA_VERSION,
            "kind": "gnn",
            "task": "ternary",
            "params": model.to_params(),
        }
    elif isinstance(model, TextEnsemble):
        members = []
        for i, (member, vocab) in enumerate(zip(model.members_, model.vocabularies_)):
            member_file = f"member_{i}.json"
            member_obj = {"kind": model.base, "params": member.to_params()}
            (directory / member_file).write_text(dumps_params(member_obj), encoding="utf-8")
            written.append(member_file)
            entry = {"model_file": member_file}
            if vocab is not None:
                vocab_file = f"vocab_{i}.json"
                vocab_text = vocab.to_json()
                (directory / vocab_file).write_text(vocab_text, encoding="utf-8")
                written.append(vocab_file)
                entry["vocabulary_file"] = vocab_file
                entry["vocabulary_sha256"] = _sha256(vocab_text)
            members.append(entry)
        config = model.get_params()
        # Worker count is an execution detail; pinning it keeps model files
        # byte-identical across --jobs settings.
        config["n_jobs"] = 1
        envelope = {
            "schema_version": SCHEMA_VERSION,
            "kind": "ensemble",
            "task": model.task,
            "config": config,
            "stopwords": sorted(model.stopwords_),
            "members": members,
        }
    else:
        raise DataError(f"cannot serialize model of type {type(model).__name__}")
    (directory / MODEL_FILE).write_text(dumps_params(envelope), encoding="utf-8")
    written.append(MODEL_FILE)
    return written


def _load_ensemble(directory: Path, envelope: dict) -> TextEnsemble:
    model = TextEnsemble(**envelope["config"])
    model.stopwords_ = frozenset(envelope["stopwords"])
    model.classes_ = np.arange(num_classes(envelope["task"]))
    model.embeddings_ = None
    model.members_ = []
    model.vocabularies_ = []
    for i, entry in enumerate(envelope["members"]):
        member_obj = _read_json(directory / entry["model_file"])
        if member_obj.get("kind") != model.base:
            raise DataError(
                f"member {i} has kind {member_obj.get('kind')!r}, expected {model.base!r}"
            )
        if model.base == "bow-nb":
            vocab_path = directory / entry["vocabulary_file"]
            if not vocab_path.is_file():
                raise DataError(f"missing vocabulary file {vocab_path}")
            vocab_text = vocab_path.read_text(encoding="utf-8")
            digest = _sha256(vocab_text)
            if digest != entry["vocabulary_sha256"]:
                raise DataError(
                    f"vocabulary hash mismatch for member {i}: the model was built "
                    f"against a different vocabulary than {vocab_path.name}"
                )
            model.vocabularies_.append(Vocabulary.from_json(vocab_text))
            model.members_.append(NaiveBayesClassifier.from_params(member_obj["params"]))
        else:
            model.vocabularies_.append(None)
            model.members_.append(
                EmbeddingLogisticRegression.from_params(member_obj["params"])
            )
    return model


def load_model(directory: str | Path) -> tuple[TextEnsemble | GraphClassifier, dict]:
    """Load a model directory; returns the model and its envelope."""
    directory = Path(directory)
    envelope = _read_json(directory / MODEL_FILE)
    version = envelope.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema version {version!r}")
    kind = envelope.get("kind")
    if kind == "gnn":
        return GraphClassifier.from_params(envelope["params"]), envelope
    if kind == "ensemble":
        return _load_ensemble(directory, envelope), envelope
    raise DataError(f"unknown model kind {kind!r}")
