"""Linear one-vs-rest SVM training, prediction, and evaluation."""

import numpy as np
import pytest

from ddrl.classifier import (
    LinearModel,
    LinearSVM,
    evaluate,
    predict,
    train_svm,
)
from ddrl.errors import DataError, InsufficientDataError, ShapeError


def _blobs(seed, n_per=40, centers=((0, 4), (4, 0), (-4, -4))):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(size=(n_per, 2)) + c for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


class TestTrainSVM:
    def test_separable_pair(self):
        model, _ = train_svm(np.array([[-1.0], [1.0]]), [0, 1])
        np.testing.assert_array_equal(predict(model, [[-1.0], [1.0]]), [0, 1])

    def test_xor_capped_at_three_quarters(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        model, _ = train_svm(X, y, epochs=60, seed=0)
        acc, _ = evaluate(predict(model, X), y)
        assert acc <= 0.75

    def test_separable_blobs_high_accuracy(self):
        X, y = _blobs(0)
        model, _ = train_svm(X, y, seed=1)
        acc, _ = evaluate(predict(model, X), y)
        assert acc >= 0.95

    def test_objective_decreases_over_epoch_averages(self):
        # Single-epoch snapshots bounce with the stochastic updates, so
        # the decrease is asserted on averages of epoch blocks.
        X, y = _blobs(1)
        _, history = train_svm(X, y, epochs=20, seed=2)
        assert len(history) == 20
        blocks = np.asarray(history).reshape(4, 5).mean(axis=1)
        assert np.all(np.diff(blocks) <= 1e-9)
        assert history[-1] < history[0]

    def test_deterministic(self):
        X, y = _blobs(2)
        a, _ = train_svm(X, y, seed=5)
        b, _ = train_svm(X, y, seed=5)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.biases, b.biases)

    def test_regularization_shrinks_weights(self):
        X, y = _blobs(3)
        norms = []
        for reg in (1e-4, 1e-2, 1.0):
            model, _ = train_svm(X, y, reg=reg, seed=7)
            norms.append(float(np.linalg.norm(model.weights)))
        assert norms[0] >= norms[1] >= norms[2]

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="distinct"):
            train_svm(np.ones((4, 2)), [3, 3, 3, 3])

    def test_nonfinite_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            train_svm(np.array([[np.inf, 0.0], [0.0, 1.0]]), [0, 1])

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            train_svm(np.ones((1, 2)), [0])

    def test_label_length_mismatch(self):
        with pytest.raises(ShapeError, match="labels"):
            train_svm(np.ones((3, 2)), [0, 1])

    def test_constant_feature_column_tolerated(self):
        X, y = _blobs(4)
        X = np.column_stack([X, np.full(X.shape[0], 3.0)])
        model, _ = train_svm(X, y)
        acc, _ = evaluate(predict(model, X), y)
        assert acc >= 0.9


class TestPredict:
    def _zero_model(self, classes=(0, 1, 2), F=3):
        C = len(classes)
        return LinearModel(
            weights=np.zeros((C, F)),
            biases=np.zeros(C),
            classes=np.asarray(classes, dtype=np.int64),
            feature_mean=np.zeros(F),
            feature_std=np.ones(F),
            reg=1e-4,
            epochs=1,
            seed=0,
        )

    def test_all_ties_go_to_first_class(self):
        model = self._zero_model()
        np.testing.assert_array_equal(predict(model, np.ones((5, 3))), np.zeros(5))

    def test_tie_break_uses_class_order_not_position(self):
        model = self._zero_model(classes=(2, 5, 9))
        np.testing.assert_array_equal(predict(model, np.ones((2, 3))), [2, 2])

    def test_feature_scaling_invariance_of_argmax(self):
        model = self._zero_model()
        model.weights = np.random.default_rng(8).normal(size=(3, 3))
        X = np.random.default_rng(9).normal(size=(20, 3))
        np.testing.assert_array_equal(predict(model, X), predict(model, 3.0 * X))

    def test_empty_input(self):
        assert predict(self._zero_model(), np.empty((0, 3))).shape == (0,)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            predict(self._zero_model(F=4), np.ones((2, 3)))


class TestEvaluate:
    def test_perfect(self):
        acc, confusion = evaluate([1, 2, 3], [1, 2, 3])
        assert acc == 1.0
        np.testing.assert_array_equal(confusion, np.eye(3, dtype=np.int64))

    def test_fully_wrong(self):
        acc, _ = evaluate([1, 1], [2, 2])
        assert acc == 0.0

    def test_documented_example(self):
        acc, confusion = evaluate([1, 2, 2, 2], [1, 1, 2, 2])
        assert acc == 0.75
        np.testing.assert_array_equal(confusion, [[1, 1], [0, 2]])

    def test_row_sums_are_truth_counts(self):
        rng = np.random.default_rng(10)
        truth = rng.integers(0, 4, size=100)
        pred = rng.integers(0, 4, size=100)
        _, confusion = evaluate(pred, truth)
        np.testing.assert_array_equal(confusion.sum(axis=1), np.bincount(truth, minlength=4))

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            evaluate([1], [1, 2])


class TestLinearSVMEstimator:
    def test_params(self):
        est = LinearSVM(reg=0.5, epochs=3, seed=9)
        assert est.get_params() == {"reg": 0.5, "epochs": 3, "seed": 9}

    def test_fit_predict_score(self):
        X, y = _blobs(5)
        est = LinearSVM(seed=0).fit(X, y)
        assert est.score(X, y) >= 0.95
        np.testing.assert_array_equal(est.classes_, [0, 1, 2])
        assert est.decision_function(X).shape == (X.shape[0], 3)
        assert len(est.objective_history_) == est.epochs
