"""Resampling ensemble over the text classifiers, with two fusion rules.

The training set is rebalanced by splitting its majority class into
``n_members`` parts (see ``corpus.partition_majority``); each member trains
on one part plus every minority sample.  At prediction time the members'
posteriors are fused either by majority vote or by posterior summation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .corpus import (
    LabeledTweet,
    default_stopwords,
    num_classes,
    partition_majority,
    to_class_index,
    tokenize_tweets,
    TASKS,
    TERNARY,
)
from .errors import ConfigError, DataError, MisinfoError
from .features import (
    EmbeddingTable,
    Vocabulary,
    build_vocabulary,
    vectorize,
)
from .text_models import EmbeddingLogisticRegression, NaiveBayesClassifier

BASE_KINDS = ("bow-nb", "embed-lr")
FUSION_RULES = ("vote", "sum")


def _stack_member_probs(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    try:
        stack = np.asarray(member_probs, dtype=np.float64)
    except ValueError as exc:  # ragged member shapes cannot stack
        raise DataError(f"member posterior shapes disagree: {exc}") from exc
    if stack.ndim != 3 or stack.shape[0] < 1 or stack.shape[2] < 2:
        raise DataError(
            f"expected member posteriors of shape (members, samples, classes), got {stack.shape}"
        )
    return stack


def fuse_proba(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    """Normalized elementwise sum of the member posteriors.

    This is the ensemble's probability output under either decision rule;
    only the hard decision differs between them.
    """
    stack = _stack_member_probs(member_probs)
    sums = stack.sum(axis=0)
    totals = sums.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise DataError("member posteriors sum to zero for some sample")
    return sums / totals


def fuse_sum(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    """Labels from summed posteriors; argmax breaks ties toward the lower class."""
    return np.argmax(fuse_proba(member_probs), axis=1)


def fuse_vote(member_probs: Sequence[np.ndarray]) -> np.ndarray:
    """Majority vote over member argmax decisions.

    When several classes tie for the most votes, the summed posteriors
    restricted to the tied classes decide.
    """
    stack = _stack_member_probs(member_probs)
    members, samples, classes = stack.shape
    votes = stack.argmax(axis=2)
    counts = np.zeros((samples, classes), dtype=np.int64)
    rows = np.arange(samples)
    for m in range(members):
        np.add.at(counts, (rows, votes[m]), 1)
    top = counts.max(axis=1)
    sums = stack.sum(axis=0)
    restricted = np.where(counts == top[:, None], sums, -np.inf)
    return np.argmax(restricted, axis=1)


def _fit_member(args):
    index, kind, payload = args
    try:
        if kind == "bow-nb":
            X, y, vocab_size, classes, alpha = payload
            model = NaiveBayesClassifier(num_classes=classes, alpha=alpha).fit(
                X, y, vocab_size
            )
        else:
            X, y, config = payload
            model = EmbeddingLogisticRegression(**config).fit(X, y)
        return index, model, None
    except (ConfigError, DataError) as exc:
        return index, None, (type(exc).__name__, str(exc))


class TextEnsemble(BaseEstimator, ClassifierMixin):
    """Majority-class-resampled ensemble of text classifiers.

    ``base`` picks the member model: "bow-nb" fits a Naive Bayes on
    bag-of-words counts with a per-member vocabulary, "embed-lr" fits a
    logistic regression on embedding rows looked up by tweet id.  ``rule``
    picks the decision: "vote" or "sum".  Note that under "vote" the hard
    prediction can disagree with the argmax of ``predict_proba``, which
    always reports the normalized posterior sum.
    """

    def __init__(
        self,
        task: str = TERNARY,
        base: str = "bow-nb",
        rule: str = "vote",
        n_members: int = 4,
        alpha: float = 1.0,
        min_df: int = 2,
        learning_rate: float = 0.01,
        epochs: int = 300,
        batch_size: int = 32,
        l2: float = 1e-4,
        seed: int = 0,
        n_jobs: int = 1,
    ):
        self.task = task
        self.base = base
        self.rule = rule
        self.n_members = n_members
        self.alpha = alpha
        self.min_df = min_df
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2 = l2
        self.seed = seed
        self.n_jobs = n_jobs

    def _validate_params(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.base not in BASE_KINDS:
            raise ConfigError(f"base must be one of {BASE_KINDS}, got {self.base!r}")
        if self.rule not in FUSION_RULES:
            raise ConfigError(f"rule must be one of {FUSION_RULES}, got {self.rule!r}")
        if self.n_members < 2:
            raise ConfigError(f"n_members must be >= 2, got {self.n_members}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.n_jobs < 1:
            raise ConfigError(f"n_jobs must be >= 1, got {self.n_jobs}")

    def fit(
        self,
        tweets: Sequence[LabeledTweet],
        stopwords: frozenset[str] | set[str] | None = None,
        embeddings: EmbeddingTable | None = None,
    ) -> "TextEnsemble":
        self._validate_params()
        if self.base == "embed-lr" and embeddings is None:
            raise ConfigError("base 'embed-lr' requires an embedding table")
        if stopwords is None:
            stopwords = default_stopwords()
        classes = num_classes(self.task)
        parts = partition_majority(tweets, self.task, self.n_members, self.seed)

        self.stopwords_ = frozenset(stopwords)
        self.embeddings_ = embeddings
        self.classes_ = np.arange(classes)
        self.vocabularies_: list[Vocabulary | None] = []
        tasks = []
        for i, part in enumerate(parts):
            y = [to_class_index(t.label, self.task) for t in part]
            try:
                if self.base == "bow-nb":
                    docs = tokenize_tweets(part, self.stopwords_)
                    vocab = build_vocabulary(docs, self.min_df)
                    X = [vectorize(d, vocab) for d in docs]
                    self.vocabularies_.append(vocab)
                    payload = (X, y, vocab.size, classes, self.alpha)
                else:
                    X = embeddings.matrix_for([t.id for t in part])
                    self.vocabularies_.append(None)
                    config = {
                        "num_classes": classes,
                        "learning_rate": self.learning_rate,
                        "epochs": self.epochs,
                        "batch_size": self.batch_size,
                        "l2": self.l2,
                        "seed": self.seed + i,
                    }
                    payload = (X, y, config)
            except MisinfoError as exc:
                raise type(exc)(f"member {i}: {exc}") from exc
            tasks.append((i, self.base, payload))

        if self.n_jobs > 1:
            with ProcessPoolExecutor(max_workers=self.n_jobs) as pool:
                outcomes = list(pool.map(_fit_member, tasks))
        else:
            outcomes = [_fit_member(t) for t in tasks]
        self.members_ = [None] * self.n_members
        for index, model, error in outcomes:
            if error is not None:
                name, message = error
                kind = ConfigError if name == "ConfigError" else DataError
                raise kind(f"member {index}: {message}")
            self.members_[index] = model
        return self

    def _member_probs(
        self,
        tweets: Sequence[LabeledTweet],
        embeddings: EmbeddingTable | None,
    ) -> np.ndarray:
        if not hasattr(self, "members_"):
            raise ConfigError("ensemble is not fitted")
        if self.base == "bow-nb":
            docs = tokenize_tweets(tweets, self.stopwords_)
            member_probs = [
                member.predict_proba([vectorize(d, vocab) for d in docs])
                for member, vocab in zip(self.members_, self.vocabularies_)
            ]
        else:
            table = embeddings if embeddings is not None else self.embeddings_
            if table is None:
                raise ConfigError("base 'embed-lr' requires an embedding table to predict")
            X = table.matrix_for([t.id for t in tweets])
            member_probs = [member.predict_proba(X) for member in self.members_]
        return _stack_member_probs(member_probs)

    def predict_proba(
        self,
        tweets: Sequence[LabeledTweet],
        embeddings: EmbeddingTable | None = None,
    ) -> np.ndarray:
        return fuse_proba(self._member_probs(tweets, embeddings))

    def predict(
        self,
        tweets: Sequence[LabeledTweet],
        embeddings: EmbeddingTable | None = None,
    ) -> np.ndarray:
        stack = self._member_probs(tweets, embeddings)
        if self.rule == "vote":
            return fuse_vote(stack)
        return fuse_sum(stack)
