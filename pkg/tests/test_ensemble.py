import numpy as np
import pytest

from misinfo.corpus import to_class_index
from misinfo.ensemble import TextEnsemble, fuse_proba, fuse_sum, fuse_vote
from misinfo.errors import ConfigError, DataError
from misinfo.synth import make_embeddings, make_tweet_corpus
from misinfo.text_models import EmbeddingLogisticRegression, NaiveBayesClassifier
from oracles import fuse_sum_oracle, fuse_vote_oracle


def stack(*members):
    return np.asarray(members, dtype=np.float64)


@pytest.fixture(scope="module")
def corpus():
    return make_tweet_corpus(count=160, seed=9)


@pytest.fixture(scope="module")
def data():
    tweets = make_tweet_corpus(count=120, seed=10)
    table = make_embeddings(tweets, dim=8, seed=11)
    return tweets, table


class TestFusion:
    def test_frozen_vote_tie_resolved_by_restricted_sums(self):
        s = stack(
            [[0.60, 0.10, 0.30]],
            [[0.50, 0.15, 0.35]],
            [[0.20, 0.20, 0.60]],
            [[0.15, 0.20, 0.65]],
        )
        # votes 0,0,2,2; restricted sums 1.45 vs 1.90 pick class 2
        assert fuse_vote(s).tolist() == [2]
        assert fuse_sum(s).tolist() == [2]

    def test_vote_can_disagree_with_summed_posteriors(self):
        s = stack(
            [[0.34, 0.33, 0.33]],
            [[0.34, 0.33, 0.33]],
            [[0.34, 0.33, 0.33]],
            [[0.00, 0.02, 0.98]],
        )
        assert fuse_vote(s).tolist() == [0]  # three votes beat one
        assert fuse_sum(s).tolist() == [2]  # 1.97 beats 1.02
        assert np.argmax(fuse_proba(s), axis=1).tolist() == [2]

    def test_proba_is_normalized_mean(self):
        s = stack([[0.8, 0.1, 0.1]], [[0.2, 0.3, 0.5]])
        probs = fuse_proba(s)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(probs[0], [0.5, 0.2, 0.3], atol=1e-12)

    def test_matches_enumeration_oracles(self, rng):
        for _ in range(400):
            members = int(rng.integers(2, 6))
            samples = int(rng.integers(1, 8))
            classes = int(rng.integers(2, 5))
            s = rng.random((members, samples, classes))
            if rng.random() < 0.5:
                s = np.round(s, 1)  # coarse values force vote and sum ties
            s /= np.maximum(s.sum(axis=2, keepdims=True), 1e-12)
            assert fuse_sum(s).tolist() == fuse_sum_oracle(s)
            assert fuse_vote(s).tolist() == fuse_vote_oracle(s)

    def test_shape_and_content_validation(self):
        with pytest.raises(DataError):
            fuse_proba([np.zeros((2, 3)), np.zeros((3, 3))])
        with pytest.raises(DataError):
            fuse_proba(stack([[0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]]))
        with pytest.raises(DataError):
            fuse_vote(np.zeros((2, 3)))  # needs a 3-axis stack


class TestTextEnsembleBow:
    def test_members_and_vocabularies(self, corpus):
        model = TextEnsemble(n_members=4, min_df=2, seed=0).fit(corpus)
        assert len(model.members_) == 4
        assert all(isinstance(m, NaiveBayesClassifier) for m in model.members_)
        assert len(model.vocabularies_) == 4
        sizes = {v.size for v in model.vocabularies_}
        assert all(s > 0 for s in sizes)

    def test_fits_training_data_well(self, corpus):
        model = TextEnsemble(n_members=4, seed=0).fit(corpus)
        y = np.array([to_class_index(t.label, "ternary") for t in corpus])
        assert (model.predict(corpus) == y).mean() > 0.8
        probs = model.predict_proba(corpus)
        assert probs.shape == (len(corpus), 3)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_sum_rule_agrees_with_proba_argmax(self, corpus):
        model = TextEnsemble(rule="sum", seed=1).fit(corpus)
        np.testing.assert_array_equal(
            model.predict(corpus), np.argmax(model.predict_proba(corpus), axis=1)
        )

    def test_binary_task(self, corpus):
        model = TextEnsemble(task="binary", seed=2).fit(corpus)
        probs = model.predict_proba(corpus)
        assert probs.shape == (len(corpus), 2)
        assert set(model.predict(corpus)) <= {0, 1}

    def test_deterministic_given_seed(self, corpus):
        p1 = TextEnsemble(seed=3).fit(corpus).predict_proba(corpus)
        p2 = TextEnsemble(seed=3).fit(corpus).predict_proba(corpus)
        np.testing.assert_array_equal(p1, p2)

    def test_parallel_fit_matches_serial(self, corpus):
        serial = TextEnsemble(seed=4, n_jobs=1).fit(corpus)
        parallel = TextEnsemble(seed=4, n_jobs=2).fit(corpus)
        np.testing.assert_array_equal(
            serial.predict_proba(corpus), parallel.predict_proba(corpus)
        )

    def test_member_failure_names_member(self, corpus):
        with pytest.raises(DataError, match="member 0:"):
            TextEnsemble(min_df=9999).fit(corpus)

    def test_unfitted_predict_rejected(self, corpus):
        with pytest.raises(ConfigError):
            TextEnsemble().predict(corpus)


class TestTextEnsembleEmbeddings:
    def test_requires_embedding_table(self, data):
        tweets, _ = data
        with pytest.raises(ConfigError, match="embed"):
            TextEnsemble(base="embed-lr").fit(tweets)

    def test_members_learn_separable_embeddings(self, data):
        tweets, table = data
        model = TextEnsemble(base="embed-lr", epochs=60, seed=5).fit(
            tweets, embeddings=table
        )
        assert all(isinstance(m, EmbeddingLogisticRegression) for m in model.members_)
        assert all(v is None for v in model.vocabularies_)
        y = np.array([to_class_index(t.label, "ternary") for t in tweets])
        assert (model.predict(tweets) == y).mean() > 0.9

    def test_member_seeds_differ(self, data):
        tweets, table = data
        model = TextEnsemble(base="embed-lr", epochs=5, seed=6).fit(
            tweets, embeddings=table
        )
        assert [m.seed for m in model.members_] == [6, 7, 8, 9]

    def test_predict_with_explicit_table_override(self, data):
        tweets, table = data
        model = TextEnsemble(base="embed-lr", epochs=5, seed=7).fit(
            tweets, embeddings=table
        )
        np.testing.assert_array_equal(
            model.predict(tweets), model.predict(tweets, embeddings=table)
        )


class TestValidation:
    def test_bad_params_rejected(self):
        cases = [
            dict(task="both"),
            dict(base="svm"),
            dict(rule="median"),
            dict(n_members=1),
            dict(alpha=0.0),
            dict(n_jobs=0),
        ]
        tweets = make_tweet_corpus(count=40, seed=12)
        for overrides in cases:
            with pytest.raises(ConfigError):
                TextEnsemble(**overrides).fit(tweets)
