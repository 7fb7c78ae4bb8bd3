"""Misinformation detection on tweets: a bag-of-words / embedding text track
trained as a majority-class-resampled ensemble, and a message-passing graph
classifier for tweet-propagation structures."""

from .corpus import (
    LabeledTweet,
    PropagationGraph,
    SplitSpec,
    TernaryLabel,
    TokenDoc,
    clean_text,
    load_graphs,
    load_tweets,
    partition_majority,
    split_dataset,
)
from .ensemble import TextEnsemble, fuse_proba, fuse_sum, fuse_vote
from .errors import ConfigError, DataError, MisinfoError
from .features import EmbeddingTable, Vocabulary, build_vocabulary, vectorize
from .gnn import GraphClassifier, grid_search
from .metrics import EvalReport, auc_roc, evaluate_predictions, f1_scores, macro_ovr_auc
from .persist import load_model, save_model
from .text_models import EmbeddingLogisticRegression, NaiveBayesClassifier

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "EmbeddingLogisticRegression",
    "EmbeddingTable",
    "EvalReport",
    "GraphClassifier",
    "LabeledTweet",
    "MisinfoError",
    "NaiveBayesClassifier",
    "PropagationGraph",
    "SplitSpec",
    "TernaryLabel",
    "TextEnsemble",
    "TokenDoc",
    "Vocabulary",
    "auc_roc",
    "build_vocabulary",
    "clean_text",
    "evaluate_predictions",
    "f1_scores",
    "fuse_proba",
    "fuse_sum",
    "fuse_vote",
    "grid_search",
    "load_graphs",
    "load_model",
    "load_tweets",
    "macro_ovr_auc",
    "partition_majority",
    "save_model",
    "split_dataset",
    "vectorize",
    "__version__",
]
