import numpy as np
import pytest

from misinfo.errors import ConfigError, DataError
from misinfo.features import SparseVector
from misinfo import nn
from misinfo.text_models import (
    EmbeddingLogisticRegression,
    NaiveBayesClassifier,
    lr_loss_and_grad,
)
from oracles import nb_posterior_oracle


def counts_to_sparse(row):
    return SparseVector(tuple((i, int(c)) for i, c in enumerate(row) if c))


class TestNaiveBayes:
    def test_worked_two_doc_example(self):
        # class 0 doc: a a b, class 1 doc: b b
        X = [counts_to_sparse([2, 1]), counts_to_sparse([0, 2])]
        model = NaiveBayesClassifier(num_classes=2, alpha=1.0).fit(X, [0, 1], vocab_size=2)
        # P(a|0) = (2+1)/(3+2) = 0.6, P(a|1) = (0+1)/(2+2) = 0.25
        assert np.exp(model.log_likelihoods_[0, 0]) == pytest.approx(0.6, abs=1e-12)
        assert np.exp(model.log_likelihoods_[1, 0]) == pytest.approx(0.25, abs=1e-12)
        probs = model.predict_proba([counts_to_sparse([1, 0])])[0]
        # posterior for "a": 0.5*0.6 vs 0.5*0.25
        assert probs[0] == pytest.approx(0.6 / 0.85, abs=1e-12)

    def test_empty_document_returns_priors(self):
        X = [counts_to_sparse([1, 0]), counts_to_sparse([1, 1]), counts_to_sparse([0, 1])]
        model = NaiveBayesClassifier(num_classes=2).fit(X, [0, 0, 1], vocab_size=2)
        probs = model.predict_proba([SparseVector(())])[0]
        np.testing.assert_allclose(probs, [2 / 3, 1 / 3], atol=1e-12)

    def test_matches_plain_probability_oracle(self, rng):
        for _ in range(300):
            vocab = int(rng.integers(1, 5))
            k = int(rng.integers(2, 4))
            n_docs = int(rng.integers(k, 6))
            labels = rng.integers(0, k, n_docs)
            for c in range(k):  # force every class to appear
                labels[c % n_docs] = c
            counts = rng.integers(0, 4, (n_docs, vocab))
            alpha = float(rng.uniform(0.1, 2.0))
            X = [counts_to_sparse(row) for row in counts]
            model = NaiveBayesClassifier(num_classes=k, alpha=alpha).fit(X, labels, vocab)
            query = rng.integers(0, 3, vocab)
            got = model.predict_proba([counts_to_sparse(query)])[0]
            want = nb_posterior_oracle(counts, labels, alpha, k, query)
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_params_round_trip(self):
        X = [counts_to_sparse([2, 1]), counts_to_sparse([0, 2])]
        model = NaiveBayesClassifier(num_classes=2).fit(X, [0, 1], vocab_size=2)
        again = NaiveBayesClassifier.from_params(model.to_params())
        query = [counts_to_sparse([3, 1])]
        np.testing.assert_array_equal(again.predict_proba(query), model.predict_proba(query))

    def test_validation_errors(self):
        X = [counts_to_sparse([1, 0]), counts_to_sparse([0, 1])]
        with pytest.raises(ConfigError):
            NaiveBayesClassifier(num_classes=2, alpha=0.0).fit(X, [0, 1], 2)
        with pytest.raises(DataError, match="class 1"):
            NaiveBayesClassifier(num_classes=2).fit(X, [0, 0], 2)
        with pytest.raises(DataError):
            NaiveBayesClassifier(num_classes=2).fit(X, [0, 2], 2)
        with pytest.raises(DataError):
            NaiveBayesClassifier(num_classes=2).fit([counts_to_sparse([0, 0, 1])], [0], 2)


class TestLogisticRegressionLoss:
    def test_gradients_match_finite_differences(self, rng):
        X = rng.standard_normal((12, 5))
        y = rng.integers(0, 3, 12)
        y[:3] = [0, 1, 2]
        w0 = rng.standard_normal((5, 3)) * 0.1
        b0 = rng.standard_normal(3) * 0.1

        def fn(params):
            loss, gw, gb = lr_loss_and_grad(params[0], params[1], X, y, l2=0.01)
            return loss, [gw, gb]

        report = nn.grad_check(fn, [w0, b0])
        assert report.passed, report.failures[:3]

    def test_l2_term_uses_half_squared_norm(self):
        X = np.zeros((2, 2))
        y = np.array([0, 1])
        w = np.array([[2.0, 0.0], [0.0, 0.0]])
        b = np.zeros(2)
        loss_zero, _, _ = lr_loss_and_grad(np.zeros((2, 2)), b, X, y, l2=0.5)
        loss_w, _, _ = lr_loss_and_grad(w, b, X, y, l2=0.5)
        assert loss_w - loss_zero == pytest.approx(0.5 * 4.0 / 2.0, abs=1e-12)


class TestEmbeddingLogisticRegression:
    def _blobs(self, rng, n_per=20, sep=5.0):
        a = rng.standard_normal((n_per, 2)) + [0.0, 0.0]
        b = rng.standard_normal((n_per, 2)) + [sep, sep]
        X = np.vstack([a, b])
        y = np.array([0] * n_per + [1] * n_per)
        return X, y

    def test_separable_blobs_reach_full_train_accuracy(self):
        rng = np.random.default_rng(0)
        X, y = self._blobs(rng)
        model = EmbeddingLogisticRegression(num_classes=2, epochs=200, seed=0).fit(X, y)
        assert (model.predict(X) == y).mean() == 1.0

    def test_zero_epochs_gives_uniform_posteriors(self):
        rng = np.random.default_rng(1)
        X, y = self._blobs(rng)
        model = EmbeddingLogisticRegression(num_classes=2, epochs=0).fit(X, y)
        probs = model.predict_proba(X)
        np.testing.assert_allclose(probs, 0.5, atol=1e-12)

    def test_loss_history_decreases_overall(self):
        rng = np.random.default_rng(2)
        X, y = self._blobs(rng)
        model = EmbeddingLogisticRegression(num_classes=2, epochs=50, seed=3).fit(X, y)
        assert len(model.loss_history_) == 50
        assert model.loss_history_[-1] < model.loss_history_[0]

    def test_deterministic_across_fits(self):
        rng = np.random.default_rng(4)
        X, y = self._blobs(rng)
        m1 = EmbeddingLogisticRegression(num_classes=2, epochs=10, seed=7).fit(X, y)
        m2 = EmbeddingLogisticRegression(num_classes=2, epochs=10, seed=7).fit(X, y)
        np.testing.assert_array_equal(m1.weights_, m2.weights_)
        np.testing.assert_array_equal(m1.bias_, m2.bias_)

    def test_params_round_trip(self):
        rng = np.random.default_rng(5)
        X, y = self._blobs(rng)
        model = EmbeddingLogisticRegression(num_classes=2, epochs=5).fit(X, y)
        again = EmbeddingLogisticRegression.from_params(model.to_params())
        np.testing.assert_array_equal(again.predict_proba(X), model.predict_proba(X))

    def test_single_row_query(self):
        rng = np.random.default_rng(6)
        X, y = self._blobs(rng)
        model = EmbeddingLogisticRegression(num_classes=2, epochs=5).fit(X, y)
        row = model.predict_proba(X[0])
        assert row.shape == (2,)

    def test_validation_errors(self):
        X = np.zeros((3, 2))
        with pytest.raises(DataError):
            EmbeddingLogisticRegression(num_classes=2).fit(X, [0, 0, 0])
        with pytest.raises(ConfigError):
            EmbeddingLogisticRegression(num_classes=2, learning_rate=-1.0).fit(X, [0, 1, 0])
        model = EmbeddingLogisticRegression(num_classes=2, epochs=1).fit(X, [0, 1, 0])
        with pytest.raises(DataError):
            model.predict_proba(np.zeros((2, 5)))
