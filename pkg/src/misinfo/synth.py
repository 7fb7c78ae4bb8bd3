"""Synthetic corpora for end-to-end checks.

The graph corpus has three structurally distinct families (star bursts,
deep chains, random recursive trees) mapped onto the three classes, so a
structure-based classifier can realistically reach high held-out AUC.  The
tweet corpus plants class-specific keywords into noisy tweet-like text with
a 70/20/10 class skew; the embedding table places each class near its own
axis so the embedding route is separable as well.
"""

from __future__ import annotations

import numpy as np

from .corpus import LabeledTweet, PropagationGraph, TernaryLabel
from .errors import ConfigError
from .features import EmbeddingTable

FIVE_G_WORDS = ("5g", "towers", "radiation", "antenna", "microchip", "frequency")
OTHER_WORDS = ("bioweapon", "plandemic", "hoax", "lab", "agenda", "nwo")
NON_WORDS = ("vaccine", "hospital", "doctors", "recovery", "testing", "quarantine")
CLASS_WORDS = {
    TernaryLabel.FIVE_G: FIVE_G_WORDS,
    TernaryLabel.OTHER_CONSPIRACY: OTHER_WORDS,
    TernaryLabel.NON_CONSPIRACY: NON_WORDS,
}
FILLER_WORDS = (
    "virus", "corona", "covid", "news", "people", "today", "city",
    "report", "cases", "week", "government", "world", "home", "stay", "safe",
)
STOP_FILLERS = ("the", "and", "to", "of", "a", "in", "is", "it", "for", "on")
HASHTAGS = ("#COVID19", "#corona", "#breaking", "#StayHome")

# Class shares of the tweet corpus, mirroring the real data's imbalance.
CLASS_SHARES = {
    TernaryLabel.NON_CONSPIRACY: 0.70,
    TernaryLabel.OTHER_CONSPIRACY: 0.20,
    TernaryLabel.FIVE_G: 0.10,
}


def _star_burst(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """A few chained hubs, every remaining node hanging off one of them."""
    hubs = int(rng.integers(1, 4))
    hubs = min(hubs, n - 1) if n > 1 else 1
    edges = [(h - 1, h) for h in range(1, hubs)]
    for v in range(hubs, n):
        edges.append((int(rng.integers(0, hubs)), v))
    return edges


def _deep_chain(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """A long path with at most a couple of pendant offshoots."""
    pendants = int(rng.integers(0, 3)) if n > 4 else 0
    path_len = n - pendants
    edges = [(v - 1, v) for v in range(1, path_len)]
    for v in range(path_len, n):
        edges.append((int(rng.integers(1, path_len - 1)), v))
    return edges


def _random_tree(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """Uniform recursive tree: each node attaches to a random earlier one."""
    return [(int(rng.integers(0, v)), v) for v in range(1, n)]


_GRAPH_BUILDERS = {
    TernaryLabel.FIVE_G: _star_burst,
    TernaryLabel.OTHER_CONSPIRACY: _deep_chain,
    TernaryLabel.NON_CONSPIRACY: _random_tree,
}


def make_graph_corpus(
    per_class: int = 100,
    min_nodes: int = 15,
    max_nodes: int = 60,
    seed: int = 0,
) -> list[PropagationGraph]:
    if per_class < 1 or min_nodes < 2 or max_nodes < min_nodes:
        raise ConfigError("per_class must be >= 1 and 2 <= min_nodes <= max_nodes")
    rng = np.random.default_rng(seed)
    graphs = []
    for label in TernaryLabel:
        build = _GRAPH_BUILDERS[label]
        for _ in range(per_class):
            n = int(rng.integers(min_nodes, max_nodes + 1))
            edges = build(rng, n)
            graphs.append(
                PropagationGraph.build(f"g{len(graphs):04d}", n, edges, label)
            )
    return graphs


def _synth_tweet_text(
    rng: np.random.Generator, label: TernaryLabel, contaminant: TernaryLabel | None
) -> str:
    lexicon = CLASS_WORDS[label]
    words = [lexicon[int(i)] for i in rng.integers(0, len(lexicon), rng.integers(2, 5))]
    pool = FILLER_WORDS + STOP_FILLERS
    words += [pool[int(i)] for i in rng.integers(0, len(pool), rng.integers(4, 9))]
    if contaminant is not None:
        other = CLASS_WORDS[contaminant]
        words.append(other[int(rng.integers(0, len(other)))])
    if rng.random() < 0.4:
        words.append(HASHTAGS[int(rng.integers(0, len(HASHTAGS)))])
    if rng.random() < 0.3:
        tail = "".join(chr(ord("a") + int(c)) for c in rng.integers(0, 26, 8))
        words.append(f"https://t.co/{tail}")
    if rng.random() < 0.2:
        words.append(f"@user{int(rng.integers(0, 1000))}")
    if rng.random() < 0.2:
        words.append("\U0001f637")
    words = [
        w.upper() if rng.random() < 0.05 else (w.capitalize() if rng.random() < 0.1 else w)
        for w in words
    ]
    order = rng.permutation(len(words))
    return " ".join(words[i] for i in order)


def make_tweet_corpus(count: int = 2000, seed: int = 0) -> list[LabeledTweet]:
    """Tweets with planted class keywords; about 10% carry one off-class keyword."""
    if count < 10:
        raise ConfigError(f"count must be >= 10, got {count}")
    rng = np.random.default_rng(seed)
    labels: list[TernaryLabel] = []
    for label in (TernaryLabel.NON_CONSPIRACY, TernaryLabel.OTHER_CONSPIRACY):
        labels += [label] * int(count * CLASS_SHARES[label])
    labels += [TernaryLabel.FIVE_G] * (count - len(labels))
    order = rng.permutation(len(labels))
    tweets = []
    for i, pos in enumerate(order):
        label = labels[pos]
        contaminant = None
        if rng.random() < 0.10:
            others = [l for l in TernaryLabel if l != label]
            contaminant = others[int(rng.integers(0, 2))]
        tweets.append(
            LabeledTweet(f"t{i:05d}", _synth_tweet_text(rng, label, contaminant), label)
        )
    return tweets


def make_embeddings(
    tweets: list[LabeledTweet],
    dim: int = 16,
    separation: float = 3.0,
    seed: int = 0,
) -> EmbeddingTable:
    """Gaussian vectors with each class mean at ``separation`` along its own axis."""
    if dim < 3:
        raise ConfigError(f"dim must be >= 3, got {dim}")
    rng = np.random.default_rng(seed)
    vectors = {}
    for tweet in tweets:
        mean = np.zeros(dim)
        mean[int(tweet.label)] = separation
        vectors[tweet.id] = mean + rng.standard_normal(dim)
    return EmbeddingTable(dim, vectors)
