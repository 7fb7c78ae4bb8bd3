"""Bag-of-words features and precomputed embedding tables.

The BoW side turns token docs into sparse term-frequency vectors over a
vocabulary built from training data only.  The embedding side consumes dense
sentence vectors computed elsewhere; this package never runs an encoder.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import TokenDoc
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-index bijection over [0, size), in lexicographic token order."""

    token_to_index: Mapping[str, int]
    min_df: int

    @property
    def size(self) -> int:
        return len(self.token_to_index)

    def tokens(self) -> list[str]:
        """Tokens ordered by index."""
        out = [""] * self.size
        for tok, i in self.token_to_index.items():
            out[i] = tok
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"min_df": self.min_df, "tokens": self.tokens()},
            sort_keys=True,
            indent=2,
        )

    @staticmethod
    def from_json(raw: str) -> "Vocabulary":
        obj = json.loads(raw)
        tokens = obj["tokens"]
        return Vocabulary({tok: i for i, tok in enumerate(tokens)}, int(obj["min_df"]))


@dataclass(frozen=True)
class SparseVector:
    """Term-frequency vector: (index, count) entries with strictly increasing indices."""

    entries: tuple[tuple[int, int], ...]

    def total_count(self) -> int:
        return sum(c for _, c in self.entries)


def build_vocabulary(docs: Sequence[TokenDoc], min_df: int = 2) -> Vocabulary:
    """Collect tokens whose document frequency is at least ``min_df``.

    Indices are assigned in lexicographic token order, so the result depends
    only on the token sets of the documents, not on their order.
    """
    if not docs:
        raise DataError("cannot build a vocabulary from an empty document list")
    if min_df < 1:
        raise ConfigError(f"min_df must be >= 1, got {min_df}")
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc.tokens))
    kept = sorted(tok for tok, n in df.items() if n >= min_df)
    if not kept:
        raise DataError(
            f"vocabulary is empty: no token reaches document frequency {min_df}"
        )
    return Vocabulary({tok: i for i, tok in enumerate(kept)}, min_df)


def vectorize(doc: TokenDoc, vocab: Vocabulary) -> SparseVector:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    counts: Counter[int] = Counter()
    for tok in doc.tokens:
        idx = vocab.token_to_index.get(tok)
        if idx is not None:
            counts[idx] += 1
    return SparseVector(tuple(sorted(counts.items())))


class EmbeddingTable:
    """Dense real vectors keyed by tweet id, all of one dimension."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        self.dim = dim
        self.vectors = vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, tweet_id: str) -> bool:
        return tweet_id in self.vectors

    def matrix_for(self, ids: Sequence[str]) -> np.ndarray:
        """Stack vectors for the given ids into an (n, dim) array."""
        rows = []
        for tweet_id in ids:
            vec = self.vectors.get(tweet_id)
            if vec is None:
                raise DataError(f"no embedding for id {tweet_id!r}")
            rows.append(vec)
        if not rows:
            return np.zeros((0, self.dim))
        return np.stack(rows)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load an embedding file: header line ``N D``, then ``id v_1 ... v_D`` rows."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: header must be 'N D'")
        try:
            n, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise DataError(f"{path}: header must be 'N D'") from exc
        if n < 0 or dim <= 0:
            raise DataError(f"{path}: invalid header counts N={n} D={dim}")
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ")
            tweet_id = parts[0]
            if tweet_id in vectors:
                raise DataError(f"{path}: duplicate id {tweet_id!r} at line {lineno}")
            if len(parts) - 1 != dim:
                raise DataError(
                    f"{path}: id {tweet_id!r} has {len(parts) - 1} values, expected {dim}"
                )
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}: id {tweet_id!r}: non-numeric value") from exc
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}: id {tweet_id!r}: non-finite value")
            vectors[tweet_id] = vec
    if len(vectors) != n:
        raise DataError(f"{path}: header declares {n} records, found {len(vectors)}")
    return EmbeddingTable(dim, vectors)


def save_embeddings(path: str | Path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.vectors)} {table.dim}\n")
        for tweet_id, vec in table.vectors.items():
            values = " ".join(f"{v:.6f}" for v in vec)
            fh.write(f"{tweet_id} {values}\n")
