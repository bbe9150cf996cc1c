"""Window extraction, soft-threshold responses, and quadrant pooling."""

import numpy as np
import pytest

from ddrl.encoder import (
    FoldedEncoder,
    encode_image,
    encode_image_folded,
    extract_grid,
    grid_shape,
    pool_quadrants,
    pooled_vector,
    soft_threshold_encode,
)
from ddrl.errors import ConfigError, ShapeError
from ddrl.preprocessing import PCAWhitener


class TestExtractGrid:
    def test_grid_shape_formula(self):
        assert grid_shape(32, 32, 6, 1) == (27, 27)
        assert grid_shape(32, 32, 6, 2) == (14, 14)
        assert grid_shape(32, 32, 32, 1) == (1, 1)

    def test_rf_larger_than_input_rejected(self):
        with pytest.raises(ConfigError, match="rf_size 33"):
            grid_shape(32, 32, 33, 1)
        with pytest.raises(ConfigError, match="stride"):
            grid_shape(32, 32, 6, 0)

    def test_window_count(self):
        stack = np.random.default_rng(0).random((32, 32, 3))
        patches, (gh, gw) = extract_grid(stack, 6, 1)
        assert (gh, gw) == (27, 27)
        assert patches.shape == (729, 108)

    def test_whole_image_window(self):
        stack = np.random.default_rng(1).random((32, 32, 3))
        patches, shape = extract_grid(stack, 32, 1)
        assert shape == (1, 1)
        np.testing.assert_array_equal(patches[0], stack.reshape(-1))

    def test_rows_in_row_major_grid_order(self):
        stack = np.arange(5 * 4 * 2, dtype=np.float64).reshape(5, 4, 2)
        patches, (gh, gw) = extract_grid(stack, 2, 1)
        assert (gh, gw) == (4, 3)
        for gy in range(gh):
            for gx in range(gw):
                window = stack[gy : gy + 2, gx : gx + 2].reshape(-1)
                np.testing.assert_array_equal(patches[gy * gw + gx], window)

    def test_stride_skips_positions(self):
        stack = np.arange(7 * 7, dtype=np.float64).reshape(7, 7, 1)
        patches, (gh, gw) = extract_grid(stack, 3, 2)
        assert (gh, gw) == (3, 3)
        np.testing.assert_array_equal(
            patches[1], stack[0:3, 2:5].reshape(-1)
        )

    def test_two_dim_input_treated_as_one_channel(self):
        stack = np.arange(9, dtype=np.float64).reshape(3, 3)
        patches, shape = extract_grid(stack, 2, 1)
        assert shape == (2, 2)
        np.testing.assert_array_equal(patches[0], [0, 1, 3, 4])

    @pytest.mark.parametrize("seed", range(8))
    def test_shape_formula_random_cases(self, seed):
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(2, 40)), int(rng.integers(2, 40))
        rf = int(rng.integers(1, min(h, w) + 1))
        stride = int(rng.integers(1, 6))
        patches, (gh, gw) = extract_grid(rng.random((h, w, 2)), rf, stride)
        assert gh == (h - rf) // stride + 1
        assert gw == (w - rf) // stride + 1
        assert patches.shape == (gh * gw, rf * rf * 2)


class TestSoftThreshold:
    def test_orthogonal_input_zero(self):
        atoms = np.array([[1.0, 0.0]])
        out = soft_threshold_encode(np.array([[0.0, 5.0]]), atoms, zeta=0.0)
        np.testing.assert_array_equal(out, [[0.0]])

    def test_identity_dictionary_example(self):
        atoms = np.eye(2)
        out = soft_threshold_encode(np.array([[3.0, -1.0]]), atoms, zeta=0.5)
        np.testing.assert_allclose(out, [[2.5, 0.0]])

    def test_large_threshold_silences_everything(self):
        rng = np.random.default_rng(2)
        patches = rng.normal(size=(10, 4))
        atoms = rng.normal(size=(3, 4))
        atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
        bound = float(np.abs(patches @ atoms.T).max()) + 1.0
        np.testing.assert_array_equal(
            soft_threshold_encode(patches, atoms, zeta=bound), np.zeros((10, 3))
        )

    def test_nonnegative_and_sparsity_monotone_in_zeta(self):
        rng = np.random.default_rng(3)
        patches = rng.normal(size=(50, 6))
        atoms = rng.normal(size=(8, 6))
        prev_zeros = -1
        for zeta in (0.0, 0.5, 1.0):
            out = soft_threshold_encode(patches, atoms, zeta)
            assert np.all(out >= 0)
            zeros = int(np.count_nonzero(out == 0))
            assert zeros >= prev_zeros
            prev_zeros = zeros

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError, match="dimension"):
            soft_threshold_encode(np.ones((1, 3)), np.ones((2, 4)), 0.0)

    def test_negative_zeta_rejected(self):
        with pytest.raises(ConfigError, match="zeta"):
            soft_threshold_encode(np.ones((1, 2)), np.ones((1, 2)), -0.5)


class TestPoolQuadrants:
    def test_constant_grid(self):
        out = pool_quadrants(np.ones((27, 27, 1)))
        np.testing.assert_array_equal(out, np.ones((2, 2, 1)))

    def test_two_by_two_identity(self):
        grid = np.array([[[1.0], [2.0]], [[3.0], [4.0]]])
        np.testing.assert_array_equal(pooled_vector(grid), [1, 2, 3, 4])

    def test_odd_grid_split(self):
        grid = np.arange(1.0, 10.0).reshape(3, 3, 1)
        out = pool_quadrants(grid)
        np.testing.assert_allclose(out.reshape(-1), [1.0, 2.5, 5.5, 7.0])

    def test_mean_preservation(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            gh, gw = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            grid = rng.normal(size=(gh, gw, 3))
            out = pool_quadrants(grid)
            hs, ws = gh // 2, gw // 2
            sizes = np.array(
                [[hs * ws, hs * (gw - ws)], [(gh - hs) * ws, (gh - hs) * (gw - ws)]]
            )
            total = (out * sizes[:, :, None]).sum(axis=(0, 1))
            np.testing.assert_allclose(total, grid.sum(axis=(0, 1)), atol=1e-9)

    def test_small_grid_rejected(self):
        with pytest.raises(ConfigError, match="2x2"):
            pool_quadrants(np.ones((1, 5, 2)))


class TestEncodeImage:
    def _setup(self, seed=5, d=12, k=4):
        rng = np.random.default_rng(seed)
        stack = rng.random((10, 10, 3))
        train = rng.normal(size=(200, d))
        whitener = PCAWhitener().fit(train)
        atoms = rng.normal(size=(k, d))
        atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
        return stack, whitener, atoms

    def test_matches_stage_composition(self):
        from ddrl.preprocessing import normalize_rows

        stack, whitener, atoms = self._setup()
        grid = encode_image(stack, whitener, atoms, rf_size=2, stride=1, zeta=0.1, sigma=0.01)
        patches, (gh, gw) = extract_grid(stack, 2, 1)
        manual = soft_threshold_encode(
            whitener.transform(normalize_rows(patches, 0.01)), atoms, 0.1
        ).reshape(gh, gw, 4)
        np.testing.assert_array_equal(grid, manual)
        assert grid.shape == (9, 9, 4)

    def test_folded_path_matches_literal(self):
        stack, whitener, atoms = self._setup(seed=6)
        literal = encode_image(stack, whitener, atoms, 2, 1, 0.25, 0.01)
        folded = FoldedEncoder.fold(whitener, atoms, zeta=0.25, sigma=0.01)
        fast = encode_image_folded(stack, folded, 2, 1)
        np.testing.assert_allclose(fast, literal, atol=1e-10)

    def test_folded_without_whitening(self):
        stack, _, atoms = self._setup(seed=7)
        literal = encode_image(stack, None, atoms, 2, 1, 0.0, 0.01)
        folded = FoldedEncoder.fold(None, atoms, zeta=0.0, sigma=0.01)
        np.testing.assert_allclose(encode_image_folded(stack, folded, 2, 1), literal)

    def test_positive_homogeneity_at_zero_threshold(self):
        rng = np.random.default_rng(8)
        patches = rng.normal(size=(20, 5))
        atoms = rng.normal(size=(3, 5))
        base = soft_threshold_encode(patches, atoms, 0.0)
        np.testing.assert_allclose(
            soft_threshold_encode(2.5 * patches, atoms, 0.0), 2.5 * base, atol=1e-12
        )
