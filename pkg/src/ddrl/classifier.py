"""One-vs-rest linear SVM trained by hinge-loss stochastic subgradient descent.

Features are standardized with training statistics stored in the model.
Each class gets a binary hinge classifier; updates follow the projected
subgradient scheme with step size 1 / (reg * (t + 1)) and an L2 ball
projection of radius 1 / sqrt(reg).  All classes share one seeded shuffle
per epoch, so training is deterministic in (data, seed).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DataError, InsufficientDataError, ShapeError
from .validation import as_float_matrix, check_dim, check_finite

DEFAULT_REG = 1e-4
DEFAULT_EPOCHS = 30


@dataclass
class LinearModel:
    """Per-class affine scores over standardized features."""

    weights: np.ndarray
    biases: np.ndarray
    classes: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    reg: float
    epochs: int
    seed: int

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def _standardize_fit(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    return mean, std


def _objective(Z, Y, W, b, reg) -> float:
    hinge = np.maximum(0.0, 1.0 - Y * (Z @ W.T + b))
    return float(hinge.mean(axis=0).sum() + 0.5 * reg * (W**2).sum())


def train_svm(
    features,
    labels,
    reg: float = DEFAULT_REG,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
):
    """Fit the one-vs-rest model.  Returns (model, per-epoch objectives)."""
    X = as_float_matrix(features, "features")
    check_finite(X, "features")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (X.shape[0],):
        raise ShapeError(
            f"labels shape {labels.shape} does not match {X.shape[0]} feature rows"
        )
    if X.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {X.shape[0]}")
    if reg <= 0 or epochs < 1:
        raise DataError(f"invalid hyperparameters reg={reg}, epochs={epochs}")
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise DataError(f"need at least 2 distinct labels, got {classes.tolist()}")

    mean, std = _standardize_fit(X)
    # Bias rides along as a constant augmented dimension so it shares the
    # regularizer and the ball projection; otherwise its unbounded steps
    # oscillate at this learning-rate schedule.
    Z = np.column_stack([(X - mean) / std, np.ones(X.shape[0])])
    n, F = Z.shape
    C = classes.shape[0]
    Y = np.where(labels[:, None] == classes[None, :], 1.0, -1.0)
    W = np.zeros((C, F))
    radius = 1.0 / np.sqrt(reg)
    rng = np.random.default_rng(seed)
    history = []
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            lr = 1.0 / (reg * (t + 1))
            x = Z[i]
            y = Y[i]
            margins = y * (W @ x)
            W *= 1.0 - lr * reg
            hit = margins < 1.0
            if hit.any():
                W[hit] += (lr * y[hit])[:, None] * x
            norms = np.linalg.norm(W, axis=1)
            over = norms > radius
            if over.any():
                W[over] *= (radius / norms[over])[:, None]
        history.append(_objective(Z, Y, W, 0.0, reg))
    model = LinearModel(
        weights=W[:, :-1].copy(),
        biases=W[:, -1].copy(),
        classes=classes,
        feature_mean=mean,
        feature_std=std,
        reg=reg,
        epochs=epochs,
        seed=seed,
    )
    return model, history


def decision_scores(model: LinearModel, features) -> np.ndarray:
    X = as_float_matrix(features, "features")
    check_dim(X, model.n_features, "features")
    Z = (X - model.feature_mean) / model.feature_std
    return Z @ model.weights.T + model.biases


def predict(model: LinearModel, features) -> np.ndarray:
    """argmax over class scores; ties go to the lowest class index."""
    if np.asarray(features).shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return model.classes[decision_scores(model, features).argmax(axis=1)]


def evaluate(predicted, truth):
    """Returns (accuracy, confusion) with confusion[i, j] counting
    truth class i predicted as class j, over the union of observed labels."""
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape:
        raise DataError(
            f"prediction count {predicted.shape} != truth count {truth.shape}"
        )
    labels = np.unique(np.concatenate([predicted, truth]))
    index = {int(c): i for i, c in enumerate(labels)}
    confusion = np.zeros((labels.shape[0], labels.shape[0]), dtype=np.int64)
    for p, t in zip(predicted, truth):
        confusion[index[int(t)], index[int(p)]] += 1
    accuracy = float((predicted == truth).mean()) if truth.shape[0] else 0.0
    return accuracy, confusion


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Estimator wrapper over train_svm / predict."""

    def __init__(self, reg: float = DEFAULT_REG, epochs: int = DEFAULT_EPOCHS, seed: int = 0):
        self.reg = reg
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y):
        self.model_, self.objective_history_ = train_svm(
            X, y, reg=self.reg, epochs=self.epochs, seed=self.seed
        )
        self.classes_ = self.model_.classes
        self.weights_ = self.model_.weights
        self.biases_ = self.model_.biases
        return self

    def decision_function(self, X) -> np.ndarray:
        return decision_scores(self.model_, X)

    def predict(self, X) -> np.ndarray:
        return predict(self.model_, X)
