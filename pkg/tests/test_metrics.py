"""Classification metrics against hand-computed and sklearn oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import precision_recall_fscore_support

from flowaug.harness import (
    aggregate_scores,
    confusion_matrix,
    evaluate_predictions,
    sign_test_p,
)


class TestConfusionMatrix:
    def test_hand_computed_entries(self):
        y_true = np.array([0, 0, 1, 2, 2, 2])
        y_pred = np.array([0, 1, 1, 2, 0, 2])
        conf = confusion_matrix(y_true, y_pred, 3)
        assert conf.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 2]]

    def test_rejects_out_of_range_labels(self):
        with pytest.raises(ValueError, match="outside"):
            confusion_matrix([0, 3], [0, 1], 3)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            confusion_matrix([0, 1], [0], 2)


class TestEvaluatePredictions:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 2, 0, 1, 2])
        scores = evaluate_predictions(y, y, 3)
        assert np.array_equal(scores.precision, np.ones(3))
        assert np.array_equal(scores.recall, np.ones(3))
        assert np.array_equal(scores.f1, np.ones(3))
        assert scores.accuracy == 1.0

    def test_degenerate_always_good_predictor(self):
        y_true = np.repeat([0, 1, 2], [70, 22, 8])
        y_pred = np.zeros(100, dtype=int)
        scores = evaluate_predictions(y_true, y_pred, 3)
        assert scores.recall[0] == 1.0
        assert scores.recall[2] == 0.0
        assert scores.f1[2] == 0.0
        # precision of never-predicted classes follows the 0/0 -> 0 convention
        assert scores.precision[1] == 0.0
        assert scores.accuracy == pytest.approx(0.70)

    def test_macro_f1_is_mean_of_per_class(self):
        rng = np.random.default_rng(4)
        y_true = rng.integers(0, 3, size=200)
        y_pred = rng.integers(0, 3, size=200)
        scores = evaluate_predictions(y_true, y_pred, 3)
        assert scores.macro_f1 == pytest.approx(scores.f1.mean())
        assert scores.accuracy == pytest.approx(
            np.trace(scores.confusion) / scores.confusion.sum()
        )

    @given(seed=st.integers(0, 10_000), n=st.integers(1, 300))
    @settings(max_examples=50, deadline=None)
    def test_matches_sklearn_on_random_confusions(self, seed, n):
        rng = np.random.default_rng(seed)
        y_true = rng.integers(0, 3, size=n)
        y_pred = rng.integers(0, 3, size=n)
        scores = evaluate_predictions(y_true, y_pred, 3)
        p, r, f1, _ = precision_recall_fscore_support(
            y_true, y_pred, labels=[0, 1, 2], zero_division=0
        )
        np.testing.assert_allclose(scores.precision, p, atol=1e-12)
        np.testing.assert_allclose(scores.recall, r, atol=1e-12)
        np.testing.assert_allclose(scores.f1, f1, atol=1e-12)


class TestAggregate:
    def test_mean_and_sd_across_folds(self):
        y = np.array([0, 0, 1, 1])
        a = evaluate_predictions(y, np.array([0, 0, 1, 1]), 2)
        b = evaluate_predictions(y, np.array([0, 1, 1, 1]), 2)
        agg = aggregate_scores([a, b])
        assert agg.n_folds == 2
        assert agg.accuracy_mean == pytest.approx((1.0 + 0.75) / 2)
        assert agg.recall_mean[0] == pytest.approx((1.0 + 0.5) / 2)
        assert agg.recall_sd[0] == pytest.approx(0.25)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no scores"):
            aggregate_scores([])


class TestSignTest:
    def test_all_positive_ten_folds(self):
        assert sign_test_p(np.ones(10)) == pytest.approx(1.0 / 1024.0)

    def test_eight_of_ten_positive(self):
        deltas = np.array([1, 1, 1, 1, 1, 1, 1, 1, -1, -1], dtype=float)
        expected = (45 + 10 + 1) / 1024.0
        assert sign_test_p(deltas) == pytest.approx(expected)

    def test_zeros_dropped(self):
        assert sign_test_p([1.0, 0.0, 1.0]) == pytest.approx(0.25)
        assert sign_test_p([0.0, 0.0]) == 1.0

    def test_balanced_signs_near_half(self):
        deltas = np.array([1, -1, 1, -1], dtype=float)
        # P(X >= 2) for X ~ Binomial(4, 1/2)
        assert sign_test_p(deltas) == pytest.approx(11.0 / 16.0)
