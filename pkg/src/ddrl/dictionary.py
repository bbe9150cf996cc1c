"""Spherical k-means dictionary learning and the reduce-side merge.

Centroids (atoms) live on the unit sphere; assignment maximizes the dot
product and the objective is sum_i w_i * (1 - max_j <x_i / |x_i|, D_j>).
The map phase trains one dictionary per data shard; the reduce phase
merges shard dictionaries by re-clustering their atoms weighted by
assignment counts.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, InsufficientDataError, ShapeError
from .validation import as_float_matrix, check_dim, check_finite

DEFAULT_MAX_ITERS = 50
DEFAULT_TOL = 1e-4

_ZERO_NORM = 1e-12


@dataclass
class Dictionary:
    """Unit-norm atoms with the assignment counts of the final iteration."""

    atoms: np.ndarray
    weights: np.ndarray
    zero_rows: int = 0

    @property
    def k(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def validate(self):
        norms = np.linalg.norm(self.atoms, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-9):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise ShapeError(f"atom {bad} has norm {norms[bad]!r}, expected 1")
        if np.any(np.asarray(self.weights) < 0):
            raise ShapeError("atom weights must be non-negative")


def objective(Xhat, atoms, sample_weight=None) -> float:
    """sum_i w_i * (1 - best dot product) over unit rows Xhat."""
    best = (Xhat @ atoms.T).max(axis=1)
    if sample_weight is None:
        return float((1.0 - best).sum())
    return float(((1.0 - best) * sample_weight).sum())


def _kmeanspp(Xhat, k, rng, w):
    """Greedy seeding: sample rows proportionally to weighted cosine gap."""
    n = Xhat.shape[0]
    chosen = np.zeros(n, dtype=bool)
    total_w = w.sum()
    first = int(rng.choice(n, p=w / total_w)) if total_w > 0 else 0
    centers = [first]
    chosen[first] = True
    gap = np.maximum(1.0 - Xhat @ Xhat[first], 0.0)
    for _ in range(1, k):
        mass = gap * w
        total = mass.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=mass / total))
        else:
            # Remaining rows coincide with chosen centers; any pick is
            # equivalent, so take the lowest unused index.
            nxt = int(np.nonzero(~chosen)[0][0])
        centers.append(nxt)
        chosen[nxt] = True
        gap = np.minimum(gap, np.maximum(1.0 - Xhat @ Xhat[nxt], 0.0))
    return Xhat[centers].copy()


def _cluster_sums(Xhat, labels, w, k):
    sums = np.empty((k, Xhat.shape[1]))
    Xw = Xhat if w is None else Xhat * w[:, None]
    for c in range(Xhat.shape[1]):
        sums[:, c] = np.bincount(labels, weights=Xw[:, c], minlength=k)
    return sums


def _spherical_kmeans(Xhat, k, rng, max_iters, tol, w):
    """Lloyd iterations on unit rows.  Returns (atoms, labels, J, iters)."""
    n = Xhat.shape[0]
    atoms = _kmeanspp(Xhat, k, rng, w)
    J_prev = np.inf
    for it in range(max_iters):
        sims = Xhat @ atoms.T
        labels = sims.argmax(axis=1)
        best = sims[np.arange(n), labels]
        J = float((1.0 - best) @ w)
        assert J <= J_prev + 1e-9, "k-means objective increased"
        if np.isfinite(J_prev) and J_prev - J <= tol * max(J_prev, np.finfo(float).tiny):
            break
        J_prev = J
        sums = _cluster_sums(Xhat, labels, w, k)
        norms = np.linalg.norm(sums, axis=1)
        dead = np.nonzero(norms <= _ZERO_NORM)[0]
        if dead.size:
            # Reseed dead clusters from the rows farthest from any atom,
            # worst first; ties break toward lower row index.
            order = np.argsort(best, kind="stable")
            for atom_idx, row in zip(dead, order):
                sums[atom_idx] = Xhat[row]
                norms[atom_idx] = 1.0
        atoms = sums / norms[:, None]
    sims = Xhat @ atoms.T
    labels = sims.argmax(axis=1)
    J = float((1.0 - sims[np.arange(n), labels]) @ w)
    return atoms, labels, J, it + 1


def train_dictionary(
    patches,
    k: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> Dictionary:
    """Cluster patch rows into k unit-norm atoms.

    Rows with (near-)zero norm carry no direction; they are excluded from
    clustering and reported via Dictionary.zero_rows.
    """
    if k < 1 or max_iters < 1 or tol < 0:
        raise ConfigError(
            f"invalid clustering settings k={k}, max_iters={max_iters}, tol={tol}"
        )
    X = as_float_matrix(patches, "patches")
    check_finite(X, "patches")
    norms = np.linalg.norm(X, axis=1)
    keep = norms > _ZERO_NORM
    n_kept = int(keep.sum())
    if n_kept < k:
        raise InsufficientDataError(
            f"need at least k={k} rows with nonzero norm, got {n_kept}"
        )
    Xhat = X[keep] / norms[keep, None]
    rng = np.random.default_rng(seed)
    atoms, labels, _, _ = _spherical_kmeans(
        Xhat, k, rng, max_iters, tol, np.ones(n_kept)
    )
    weights = np.bincount(labels, minlength=k).astype(np.uint64)
    return Dictionary(atoms=atoms, weights=weights, zero_rows=int((~keep).sum()))


def merge_dictionaries(
    dicts,
    k_target: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> Dictionary:
    """Weighted re-clustering of the union of atoms into k_target atoms.

    Each input atom participates with its assignment count as weight, so
    heavily-used atoms pull the merged centroids harder.
    """
    if not dicts:
        raise InsufficientDataError("merge requires at least one dictionary")
    dim = dicts[0].dim
    for i, d in enumerate(dicts):
        if d.dim != dim:
            raise ShapeError(f"dictionary {i} has dim {d.dim}, expected {dim}")
    atoms = np.vstack([d.atoms for d in dicts])
    weights = np.concatenate([np.asarray(d.weights, dtype=np.float64) for d in dicts])
    if atoms.shape[0] < k_target:
        raise InsufficientDataError(
            f"union holds {atoms.shape[0]} atoms, fewer than k_target={k_target}"
        )
    if weights.sum() <= 0:
        weights = np.ones(atoms.shape[0])
    rng = np.random.default_rng(seed)
    merged, labels, _, _ = _spherical_kmeans(atoms, k_target, rng, max_iters, tol, weights)
    counts = np.zeros(k_target, dtype=np.uint64)
    np.add.at(counts, labels, np.concatenate([d.weights for d in dicts]).astype(np.uint64))
    return Dictionary(atoms=merged, weights=counts)


def concat_dictionaries(dicts) -> Dictionary:
    """Stack atoms without re-clustering (ablation merge strategy)."""
    if not dicts:
        raise InsufficientDataError("merge requires at least one dictionary")
    dim = dicts[0].dim
    for i, d in enumerate(dicts):
        if d.dim != dim:
            raise ShapeError(f"dictionary {i} has dim {d.dim}, expected {dim}")
    return Dictionary(
        atoms=np.vstack([d.atoms for d in dicts]),
        weights=np.concatenate([np.asarray(d.weights, dtype=np.uint64) for d in dicts]),
        zero_rows=sum(d.zero_rows for d in dicts),
    )


def brute_force_objective(X, k) -> float:
    """Exact optimum of the spherical k-means objective by enumeration.

    Walks all k^n label assignments with optimal per-cluster atoms
    (normalized cluster mean of unit rows).  Only viable for tiny inputs.
    """
    X = as_float_matrix(X, "X")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms <= _ZERO_NORM):
        raise InsufficientDataError("brute-force oracle requires nonzero rows")
    Xhat = X / norms[:, None]
    n = Xhat.shape[0]
    best = np.inf
    for code in range(k**n):
        labels = np.array([(code // k**i) % k for i in range(n)])
        J = 0.0
        for j in range(k):
            members = Xhat[labels == j]
            if members.shape[0] == 0:
                continue
            s = members.sum(axis=0)
            nrm = np.linalg.norm(s)
            J += members.shape[0] - (nrm if nrm > 0 else 0.0)
        best = min(best, J)
    return best


class SphericalKMeans(BaseEstimator):
    """Estimator wrapper over train_dictionary.

    fit learns atoms_ and weights_; predict returns nearest-atom indices
    and transform returns raw dot products against the atoms.
    """

    def __init__(
        self,
        k: int = 16,
        seed: int = 0,
        max_iters: int = DEFAULT_MAX_ITERS,
        tol: float = DEFAULT_TOL,
    ):
        self.k = k
        self.seed = seed
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y=None):
        self.dictionary_ = train_dictionary(
            X, self.k, seed=self.seed, max_iters=self.max_iters, tol=self.tol
        )
        self.atoms_ = self.dictionary_.atoms
        self.weights_ = self.dictionary_.weights
        return self

    def transform(self, X) -> np.ndarray:
        X = as_float_matrix(X, "X")
        check_dim(X, self.atoms_.shape[1], "X")
        return X @ self.atoms_.T

    def predict(self, X) -> np.ndarray:
        return self.transform(X).argmax(axis=1)
