"""Patch contrast normalization and PCA whitening.

Both transforms operate on flattened patch vectors (rows).  Normalization
removes per-patch brightness and contrast; whitening decorrelates the
remaining structure so dot products against dictionary atoms compare
shapes rather than raw energy.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError, DegenerateFeatureError, InsufficientDataError
from .validation import as_float_matrix, check_dim, check_finite

# Variance regularizer matching a value of 10 on 0..255 pixel units,
# rescaled to the [0, 1] working range.
DEFAULT_SIGMA = 10.0 / 255.0**2
DEFAULT_EPSILON = 0.01


def normalize_rows(X, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Center each row and divide by sqrt(population variance + sigma)."""
    X = as_float_matrix(X, "X")
    check_finite(X, "X")
    if sigma < 0:
        raise DataError(f"sigma must be non-negative, got {sigma}")
    mean = X.mean(axis=1, keepdims=True)
    var = X.var(axis=1, keepdims=True)
    denom2 = var + sigma
    if np.any(denom2 <= 0):
        row = int(np.nonzero(denom2.ravel() <= 0)[0][0])
        raise DataError(
            f"row {row} has zero variance and sigma is 0; cannot contrast normalize"
        )
    return (X - mean) / np.sqrt(denom2)


class PatchNormalizer(TransformerMixin, BaseEstimator):
    """Stateless per-row contrast normalization."""

    def __init__(self, sigma: float = DEFAULT_SIGMA):
        self.sigma = sigma

    def fit(self, X, y=None):
        as_float_matrix(X, "X")
        return self

    def transform(self, X) -> np.ndarray:
        return normalize_rows(X, self.sigma)


def fit_whitening(X, epsilon: float = DEFAULT_EPSILON):
    """Eigendecompose the sample covariance of X (rows are observations).

    Returns (mean, lambdas, components): eigenvalues descending and
    clamped at zero, components stored as rows.  Covariance uses the
    n - 1 denominator.  Component signs are fixed so the entry with the
    largest magnitude in each component is positive.
    """
    X = as_float_matrix(X, "X")
    check_finite(X, "X")
    n, d = X.shape
    if n < 2:
        raise InsufficientDataError(f"whitening needs at least 2 rows, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    lambdas, U = np.linalg.eigh(cov)
    order = np.argsort(lambdas)[::-1]
    lambdas = np.maximum(lambdas[order], 0.0)
    components = U[:, order].T
    flip = np.sign(components[np.arange(d), np.abs(components).argmax(axis=1)])
    components *= flip[:, None]
    return mean, lambdas, components


class PCAWhitener(TransformerMixin, BaseEstimator):
    """Full-rank PCA rotation with per-component variance equalization.

    transform(x) = diag(1 / sqrt(lambda + epsilon)) @ components @ (x - mean);
    no components are dropped, so output dimension equals input dimension.
    """

    def __init__(self, epsilon: float = DEFAULT_EPSILON):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        if self.epsilon < 0:
            raise DataError(f"epsilon must be non-negative, got {self.epsilon}")
        self.mean_, self.lambdas_, self.components_ = fit_whitening(X, self.epsilon)
        denom = self.lambdas_ + self.epsilon
        # An eigenvalue at the eigensolver's noise floor cannot be
        # inverted meaningfully; a regularizer above that floor is an
        # explicit request and is honored as-is.
        floor = denom.max() * denom.shape[0] * 1e-12
        if self.epsilon <= floor and np.any(denom <= floor):
            rank = int(np.sum(denom > floor))
            raise DegenerateFeatureError(
                f"epsilon={self.epsilon} cannot whiten rank-deficient data; "
                f"covariance rank is {rank} of {denom.shape[0]}"
            )
        self.scales_ = 1.0 / np.sqrt(denom)
        return self

    def transform(self, X) -> np.ndarray:
        X = as_float_matrix(X, "X")
        check_dim(X, self.mean_.shape[0], "X")
        return (X - self.mean_) @ self.components_.T * self.scales_

    @property
    def matrix_(self) -> np.ndarray:
        """The (d, d) map W with transform(x) = W @ (x - mean)."""
        return self.components_ * self.scales_[:, None]

    @classmethod
    def from_arrays(cls, mean, lambdas, components, epsilon: float) -> "PCAWhitener":
        out = cls(epsilon=epsilon)
        out.mean_ = np.asarray(mean, dtype=np.float64)
        out.lambdas_ = np.asarray(lambdas, dtype=np.float64)
        out.components_ = np.asarray(components, dtype=np.float64)
        out.scales_ = 1.0 / np.sqrt(out.lambdas_ + epsilon)
        return out
