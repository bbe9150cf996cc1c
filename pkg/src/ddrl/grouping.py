"""Energy-correlation feature similarity and disjoint feature-map grouping.

Two features are similar when the magnitudes of their responses rise and
fall together across a sample set, regardless of sign.  Columns are
standardized to zero mean and unit second moment; similarity is then the
correlation of squared responses,

    d(j, k) = (avg(z_j^2 z_k^2) - 1) / sqrt((avg(z_j^4) - 1)(avg(z_k^4) - 1)).

Groups of T mutually-similar features become the channel stacks that the
next layer's dictionaries are trained on.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, DegenerateFeatureError, InsufficientDataError
from .validation import as_float_matrix, check_finite

_DEGENERATE_TOL = 1e-12


def standardize_columns(X):
    """Zero-mean, unit-second-moment columns plus a zero-variance mask."""
    X = as_float_matrix(X, "X")
    check_finite(X, "X")
    if X.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {X.shape[0]}")
    mean = X.mean(axis=0)
    var = X.var(axis=0)
    dead = var <= _DEGENERATE_TOL
    Z = (X - mean) / np.sqrt(np.where(dead, 1.0, var))
    Z[:, dead] = 0.0
    return Z, dead


def similarity_matrix(X):
    """Pairwise similarity over columns of X.

    Returns (matrix, degenerate) where degenerate marks columns with zero
    variance or constant squared response; their rows and columns are set
    to zero and their diagonal to 1.
    """
    Z, dead = standardize_columns(X)
    Q = Z**2
    n, k = Z.shape
    gap = Q.T @ Q / n - 1.0
    v = np.diagonal(gap).copy()
    degenerate = dead | (v <= _DEGENERATE_TOL)
    denom = np.sqrt(np.where(degenerate, 1.0, v))
    sim = gap / denom[:, None] / denom[None, :]
    sim[degenerate, :] = 0.0
    sim[:, degenerate] = 0.0
    np.fill_diagonal(sim, 1.0)
    return sim, degenerate


def similarity(X, j: int, k: int) -> float:
    """Energy correlation between columns j and k of a sample matrix."""
    sim, degenerate = similarity_matrix(X)
    for idx in (j, k):
        if degenerate[idx]:
            raise DegenerateFeatureError(
                f"column {idx} has constant squared response; similarity undefined"
            )
    value = float(sim[j, k])
    assert abs(value) <= 1.0 + 1e-9, "similarity outside [-1, 1]"
    return value


def build_groups(X, group_size: int, seed: int = 0):
    """Partition the K columns into K/group_size disjoint groups.

    Greedy selection: the unassigned feature with the largest summed
    similarity to the other unassigned features seeds a group and pulls
    in its group_size - 1 most similar unassigned peers; ties break
    toward lower index.  Degenerate columns are held out of the greedy
    phase and dealt round-robin into the remaining slots.  The result is
    canonically ordered (members ascending, groups by first member), so
    it is deterministic; seed is accepted for interface uniformity.
    """
    sim, degenerate = similarity_matrix(X)
    k = sim.shape[0]
    if group_size < 1 or group_size > k:
        raise ConfigError(f"group size {group_size} must lie in 1..{k}")
    if k % group_size != 0:
        raise ConfigError(f"group size {group_size} does not divide feature count {k}")
    n_groups = k // group_size
    groups = [[] for _ in range(n_groups)]
    unassigned = list(np.nonzero(~degenerate)[0])
    for group in groups:
        if not unassigned:
            break
        arr = np.array(unassigned)
        sub = sim[np.ix_(arr, arr)]
        totals = sub.sum(axis=1) - 1.0
        lead = int(np.argmax(totals))
        take = min(group_size, len(unassigned))
        row = sub[lead].copy()
        row[lead] = np.inf
        order = np.argsort(-row, kind="stable")[:take]
        group.extend(int(arr[i]) for i in order)
        for i in sorted(order, reverse=True):
            unassigned.pop(i)
    cursor = 0
    for idx in np.nonzero(degenerate)[0]:
        while len(groups[cursor % n_groups]) >= group_size:
            cursor += 1
        groups[cursor % n_groups].append(int(idx))
        cursor += 1
    groups = [sorted(g) for g in groups]
    groups.sort(key=lambda g: g[0])
    return groups


class FeatureGrouper(BaseEstimator):
    """Estimator wrapper over build_groups.

    fit computes groups_ (list of sorted index lists) and degenerate_
    (indices excluded from greedy selection) from a sample matrix whose
    columns are feature responses.
    """

    def __init__(self, group_size: int = 1, seed: int = 0):
        self.group_size = group_size
        self.seed = seed

    def fit(self, X, y=None):
        self.groups_ = build_groups(X, self.group_size, self.seed)
        _, degenerate = similarity_matrix(X)
        self.degenerate_ = [int(i) for i in np.nonzero(degenerate)[0]]
        return self
