"""Tweet and propagation-graph datasets: loading, cleaning, splitting.

File formats
------------
Tweets are stored as UTF-8 TSV with three columns and no header::

    id<TAB>label<TAB>text

where label is one of ``5g_corona_conspiracy``, ``other_conspiracy``,
``non_conspiracy``.

Graphs are stored as JSON lines, one object per line::

    {"id": "g1", "num_nodes": 3, "edges": [[0, 1], [1, 2]], "label": "..."}

with ``label`` optional.  Edges are undirected; loaders normalize them by
dropping self-loops and duplicates.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, TypeVar

import numpy as np

from .errors import ConfigError, DataError

TERNARY = "ternary"
BINARY = "binary"
TASKS = (BINARY, TERNARY)


class TernaryLabel(IntEnum):
    """The three conspiracy classes.  Integer codes are stable across persistence."""

    FIVE_G = 0
    OTHER_CONSPIRACY = 1
    NON_CONSPIRACY = 2


LABEL_TOKENS = {
    TernaryLabel.FIVE_G: "5g_corona_conspiracy",
    TernaryLabel.OTHER_CONSPIRACY: "other_conspiracy",
    TernaryLabel.NON_CONSPIRACY: "non_conspiracy",
}
TOKEN_LABELS = {tok: lab for lab, tok in LABEL_TOKENS.items()}

# Binary task: class 0 = 5G conspiracy (positive), class 1 = everything else.
BINARY_POSITIVE = 0
BINARY_REST = 1
BINARY_TOKENS = {BINARY_POSITIVE: LABEL_TOKENS[TernaryLabel.FIVE_G], BINARY_REST: "rest"}


def to_class_index(label: TernaryLabel, task: str) -> int:
    """Map a ternary label to the class index used by the given task."""
    if task == TERNARY:
        return int(label)
    if task == BINARY:
        return BINARY_POSITIVE if label == TernaryLabel.FIVE_G else BINARY_REST
    raise ConfigError(f"unknown task {task!r}")


def num_classes(task: str) -> int:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    return 2 if task == BINARY else 3


def class_tokens(task: str) -> list[str]:
    """Output label tokens, indexed by class, for the given task."""
    if task == BINARY:
        return [BINARY_TOKENS[0], BINARY_TOKENS[1]]
    return [LABEL_TOKENS[TernaryLabel(i)] for i in range(3)]


@dataclass(frozen=True)
class LabeledTweet:
    id: str
    text: str
    label: TernaryLabel


@dataclass(frozen=True)
class TokenDoc:
    """A cleaned, tokenized tweet.  Tokens are lowercase [a-z0-9]+ strings."""

    id: str
    tokens: tuple[str, ...]
    label: TernaryLabel


@dataclass(frozen=True)
class PropagationGraph:
    """Undirected account subgraph for one tweet, normalized on construction.

    Normalization removes self-loops, deduplicates unordered edge pairs and
    sorts them; node indices must lie in [0, num_nodes).  The label is
    optional so the same type can carry unlabeled graphs at predict time.
    """

    id: str
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    label: TernaryLabel | None = None

    @staticmethod
    def build(
        id: str,
        num_nodes: int,
        edges: Iterable[Sequence[int]],
        label: TernaryLabel | None = None,
    ) -> "PropagationGraph":
        if num_nodes < 0:
            raise DataError(f"graph {id!r}: negative num_nodes")
        seen = set()
        for e in edges:
            if len(e) != 2:
                raise DataError(f"graph {id!r}: edge {list(e)!r} is not a pair")
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise DataError(
                    f"graph {id!r}: edge ({u}, {v}) out of range for {num_nodes} nodes"
                )
            if u == v:
                continue
            seen.add((min(u, v), max(u, v)))
        return PropagationGraph(id, num_nodes, tuple(sorted(seen)), label)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


@dataclass(frozen=True)
class SplitSpec:
    """Fractions of a train/valid/test split plus the shuffle seed."""

    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        fracs = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(not 0.0 < f < 1.0 for f in fracs):
            raise ConfigError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fracs}")


_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_NON_ALNUM_RE = re.compile(r"[^a-z0-9\s]")


def clean_text(text: str, stopwords: frozenset[str] | set[str]) -> list[str]:
    """Clean and tokenize raw tweet text.

    Pipeline order is fixed: strip URLs, lowercase, delete every character
    outside [a-z0-9] and whitespace (removes punctuation, emojis and the
    '#'/'@' sigils while keeping hashtag and mention bodies), split on
    whitespace, drop stop words.  Idempotent on its own space-joined output.
    """
    text = _URL_RE.sub(" ", text)
    text = text.lower()
    text = _NON_ALNUM_RE.sub("", text)
    return [tok for tok in text.split() if tok not in stopwords]


def default_stopwords() -> frozenset[str]:
    """The stop-word list shipped with the package."""
    path = resources.files("misinfo").joinpath("stopwords.txt")
    return _parse_stopwords(path.read_text(encoding="utf-8"))


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stop-word file: one word per line, '#' comment lines ignored."""
    return _parse_stopwords(Path(path).read_text(encoding="utf-8"))


def _parse_stopwords(raw: str) -> frozenset[str]:
    words = set()
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        # Normalize entries with the token character rules so the list
        # matches cleaned tokens no matter how the file spells the word.
        word = _NON_ALNUM_RE.sub("", line.lower())
        if word:
            words.add(word)
    return frozenset(words)


def tokenize_tweets(
    tweets: Sequence[LabeledTweet], stopwords: frozenset[str] | set[str]
) -> list[TokenDoc]:
    return [
        TokenDoc(t.id, tuple(clean_text(t.text, stopwords)), t.label) for t in tweets
    ]


def load_tweets(path: str | Path) -> list[LabeledTweet]:
    """Load a tweet TSV file; rejects malformed lines and duplicate ids."""
    tweets: list[LabeledTweet] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t", 2)
            if len(parts) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 tab-separated columns")
            tweet_id, label_token, text = parts
            if not tweet_id:
                raise DataError(f"{path}: line {lineno}: empty id")
            if label_token not in TOKEN_LABELS:
                raise DataError(f"{path}: unknown label {label_token!r} at line {lineno}")
            if not text:
                raise DataError(f"{path}: line {lineno}: empty text")
            if tweet_id in seen_ids:
                raise DataError(f"{path}: duplicate id {tweet_id!r} at line {lineno}")
            seen_ids.add(tweet_id)
            tweets.append(LabeledTweet(tweet_id, text, TOKEN_LABELS[label_token]))
    return tweets


def save_tweets(path: str | Path, tweets: Sequence[LabeledTweet]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for t in tweets:
            fh.write(f"{t.id}\t{LABEL_TOKENS[t.label]}\t{t.text}\n")


def load_graphs(path: str | Path) -> list[PropagationGraph]:
    """Load a graph JSONL file; each record is normalized on load."""
    graphs: list[PropagationGraph] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            try:
                graph_id = str(rec["id"])
                n = int(rec["num_nodes"])
                edges = rec["edges"]
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: malformed graph record") from exc
            label = None
            if rec.get("label") is not None:
                token = rec["label"]
                if token not in TOKEN_LABELS:
                    raise DataError(f"{path}: line {lineno}: unknown label {token!r}")
                label = TOKEN_LABELS[token]
            if graph_id in seen_ids:
                raise DataError(f"{path}: duplicate graph id {graph_id!r} at line {lineno}")
            seen_ids.add(graph_id)
            graphs.append(PropagationGraph.build(graph_id, n, edges, label))
    return graphs


def save_graphs(path: str | Path, graphs: Sequence[PropagationGraph]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            rec: dict = {
                "id": g.id,
                "num_nodes": g.num_nodes,
                "edges": [[u, v] for u, v in g.edges],
            }
            if g.label is not None:
                rec["label"] = LABEL_TOKENS[g.label]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


T = TypeVar("T")


def split_dataset(items: Sequence[T], spec: SplitSpec) -> tuple[list[T], list[T], list[T]]:
    """Shuffle deterministically and split into train/valid/test parts.

    Part sizes are floors of the fractions; the remainder goes to train.
    """
    n = len(items)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    # The epsilon keeps exact products like 30 * 0.1 from flooring to 2.
    n_valid = int(n * spec.valid_fraction + 1e-9)
    n_test = int(n * spec.test_fraction + 1e-9)
    n_train = n - n_valid - n_test
    if n_valid == 0 or n_test == 0:
        raise DataError(
            f"split of {n} items leaves an empty part "
            f"(train {n_train}, valid {n_valid}, test {n_test})"
        )
    order = np.random.default_rng(spec.seed).permutation(n)
    shuffled = [items[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid :],
    )


def partition_majority(
    items: Sequence[T], task: str, n_parts: int, seed: int
) -> list[list[T]]:
    """Build ``n_parts`` re-balanced sub-datasets by splitting the majority class.

    Under the task's label mapping the most frequent class is shuffled and cut
    into ``n_parts`` nearly equal parts (sizes differ by at most one); every
    sub-dataset pairs one majority part with all samples of the other classes.
    Items may be tweets, token docs or graphs; anything with a ``label``.
    """
    if n_parts < 2:
        raise ConfigError(f"n_parts must be >= 2, got {n_parts}")
    counts: Counter[int] = Counter(to_class_index(item.label, task) for item in items)
    # Deterministic tie-break toward the lower class index.
    majority = min(counts, key=lambda c: (-counts[c], c))
    majority_items = [it for it in items if to_class_index(it.label, task) == majority]
    minority_items = [it for it in items if to_class_index(it.label, task) != majority]
    if len(majority_items) < n_parts:
        raise DataError(
            f"majority class has {len(majority_items)} samples, fewer than "
            f"n_parts={n_parts}"
        )
    order = np.random.default_rng(seed).permutation(len(majority_items))
    shuffled = [majority_items[i] for i in order]
    base, extra = divmod(len(shuffled), n_parts)
    parts: list[list[T]] = []
    start = 0
    for i in range(n_parts):
        size = base + (1 if i < extra else 0)
        parts.append(shuffled[start : start + size] + minority_items)
        start += size
    return parts
