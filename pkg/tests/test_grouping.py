"""Energy-correlation similarity and greedy feature grouping."""

import itertools

import numpy as np
import pytest

from ddrl.errors import ConfigError, DegenerateFeatureError, InsufficientDataError
from ddrl.grouping import (
    FeatureGrouper,
    build_groups,
    similarity,
    similarity_matrix,
    standardize_columns,
)


def _random_columns(seed, n=500, k=6):
    return np.random.default_rng(seed).normal(size=(n, k))


class TestStandardize:
    def test_mean_and_second_moment(self):
        Z, dead = standardize_columns(_random_columns(0) * 7 + 3)
        assert not dead.any()
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose((Z**2).mean(axis=0), 1.0, atol=1e-9)

    def test_constant_column_flagged(self):
        X = np.column_stack([np.ones(50), np.random.default_rng(1).normal(size=50)])
        Z, dead = standardize_columns(X)
        assert dead.tolist() == [True, False]
        np.testing.assert_array_equal(Z[:, 0], 0.0)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            standardize_columns(np.ones((1, 3)))


class TestSimilarity:
    def test_self_similarity_is_one(self):
        X = _random_columns(2)
        for j in range(X.shape[1]):
            assert abs(similarity(X, j, j) - 1.0) < 1e-9

    def test_symmetry(self):
        X = _random_columns(3)
        sim, _ = similarity_matrix(X)
        np.testing.assert_allclose(sim, sim.T, atol=1e-12)

    def test_sign_flip_is_still_maximally_similar(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=400)
        X = np.column_stack([z, -z])
        assert abs(similarity(X, 0, 1) - 1.0) < 1e-9

    def test_independent_columns_near_zero(self):
        X = np.random.default_rng(5).normal(size=(100_000, 2))
        assert abs(similarity(X, 0, 1)) < 0.05

    def test_bounded_by_one(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            X = rng.normal(size=(30, 4)) * rng.uniform(0.1, 10)
            sim, degenerate = similarity_matrix(X)
            assert np.all(np.abs(sim[~degenerate][:, ~degenerate]) <= 1 + 1e-9)

    def test_constant_magnitude_column_degenerate(self):
        # Balanced signs standardize to exactly +-1, so z^4 is constant
        # and the similarity denominator vanishes.
        signs = np.tile([-1.0, 1.0], 100)
        X = np.column_stack([signs, np.random.default_rng(7).normal(size=200)])
        with pytest.raises(DegenerateFeatureError, match="column 0"):
            similarity(X, 0, 1)

    def test_zero_variance_column_degenerate(self):
        X = np.column_stack([np.full(100, 2.0), np.random.default_rng(8).normal(size=100)])
        with pytest.raises(DegenerateFeatureError):
            similarity(X, 0, 1)


def _paired_columns(seed, k=4, n=600, noise=1e-2):
    """Columns 2i and 2i+1 share an envelope, so pairs are most similar."""
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(k // 2):
        base = rng.normal(size=n)
        cols.append(base + noise * rng.normal(size=n))
        cols.append(base * rng.choice([-1.0, 1.0]) + noise * rng.normal(size=n))
    return np.column_stack(cols)


class TestBuildGroups:
    def test_correlated_pairs_recovered(self):
        X = _paired_columns(9)
        assert build_groups(X, 2) == [[0, 1], [2, 3]]

    def test_matches_exhaustive_pairing(self):
        X = _paired_columns(10)
        sim, _ = similarity_matrix(X)

        def pairing_score(pairs):
            return sum(sim[a, b] for a, b in pairs)

        best = max(
            ([(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]), key=pairing_score
        )
        got = build_groups(X, 2)
        assert sorted(tuple(g) for g in got) == sorted(best)

    def test_single_group(self):
        X = _random_columns(11, k=5)
        assert build_groups(X, 5) == [[0, 1, 2, 3, 4]]

    def test_singletons_in_index_order(self):
        X = _random_columns(12, k=5)
        assert build_groups(X, 1) == [[0], [1], [2], [3], [4]]

    def test_indivisible_group_size_rejected(self):
        with pytest.raises(ConfigError, match="divide"):
            build_groups(_random_columns(13, k=5), 2)
        with pytest.raises(ConfigError, match="group size 9"):
            build_groups(_random_columns(13, k=5), 9)

    def test_partition_properties(self):
        X = _random_columns(14, k=12)
        groups = build_groups(X, 3)
        flat = [i for g in groups for i in g]
        assert sorted(flat) == list(range(12))
        assert all(len(g) == 3 for g in groups)

    def test_deterministic(self):
        X = _random_columns(15, k=8)
        assert build_groups(X, 2) == build_groups(X, 2)

    def test_permutation_equivariance(self):
        X = _paired_columns(16, k=6)
        perm = np.array([3, 0, 5, 1, 4, 2])
        base = build_groups(X, 2)
        permuted = build_groups(X[:, perm], 2)
        inverse = np.argsort(perm)
        remapped = sorted(sorted(int(inverse[i]) for i in g) for g in base)
        assert sorted(sorted(g) for g in permuted) == remapped

    def test_degenerate_columns_distributed_round_robin(self):
        rng = np.random.default_rng(17)
        X = np.column_stack(
            [rng.normal(size=300), np.ones(300), rng.normal(size=300), np.zeros(300)]
        )
        # Greedy pairs the two live columns; the degenerate ones (1, 3)
        # fill the remaining group's slots.
        assert build_groups(X, 2) == [[0, 2], [1, 3]]

    def test_all_degenerate_columns_still_partition(self):
        X = np.column_stack([np.full(50, v) for v in (1.0, 2.0, 3.0, 4.0)])
        groups = build_groups(X, 2)
        assert groups == [[0, 2], [1, 3]]


class TestFeatureGrouper:
    def test_estimator_api(self):
        est = FeatureGrouper(group_size=2, seed=3)
        assert est.get_params() == {"group_size": 2, "seed": 3}
        X = _paired_columns(18)
        est.fit(X)
        assert est.groups_ == [[0, 1], [2, 3]]
        assert est.degenerate_ == []
