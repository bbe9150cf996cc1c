"""Receptive-field extraction, soft-threshold feature maps, quadrant pooling.

An input stack (H x W x C image or feature grid) is scanned by omega x
omega windows at stride S; each window row is contrast normalized,
whitened, and mapped through Phi(x) = max(0, D x - zeta).  The resulting
response grid is averaged over 2x2 spatial quadrants to produce the
fixed-length descriptor fed to the classifier.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .preprocessing import normalize_rows
from .validation import as_float_matrix, as_image_stack


def grid_shape(h: int, w: int, rf_size: int, stride: int):
    """Window positions per axis: floor((side - rf_size) / stride) + 1."""
    if rf_size < 1 or rf_size > min(h, w):
        raise ConfigError(f"rf_size {rf_size} must lie in 1..{min(h, w)} for {h}x{w} input")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    return (h - rf_size) // stride + 1, (w - rf_size) // stride + 1


def extract_grid(stack, rf_size: int, stride: int):
    """All omega x omega x C windows as rows, in row-major grid order.

    Returns (patches, (grid_h, grid_w)) where patches has one row per
    window, flattened in (row, col, channel) order.
    """
    stack = as_image_stack(stack, "stack")
    h, w, c = stack.shape
    gh, gw = grid_shape(h, w, rf_size, stride)
    windows = np.lib.stride_tricks.sliding_window_view(stack, (rf_size, rf_size), axis=(0, 1))
    windows = windows[::stride, ::stride]
    # sliding_window_view yields (gh, gw, C, rf, rf); rows must flatten as
    # (rf, rf, C) to match the image memory layout.
    patches = windows.transpose(0, 1, 3, 4, 2).reshape(gh * gw, rf_size * rf_size * c)
    return np.ascontiguousarray(patches), (gh, gw)


def soft_threshold_encode(patches, atoms, zeta: float) -> np.ndarray:
    """Phi(x) = max(0, <D_j, x> - zeta) per row and atom."""
    patches = as_float_matrix(patches, "patches")
    atoms = as_float_matrix(atoms, "atoms")
    if zeta < 0:
        raise ConfigError(f"zeta must be >= 0, got {zeta}")
    if patches.shape[1] != atoms.shape[1]:
        raise ShapeError(
            f"patch dimension {patches.shape[1]} != dictionary dimension {atoms.shape[1]}"
        )
    return np.maximum(patches @ atoms.T - zeta, 0.0)


def pool_quadrants(grid) -> np.ndarray:
    """Average each spatial quadrant of a (gh, gw, K) response grid.

    The split index is floor(side / 2), so the top-left quadrant takes
    the smaller half of an odd side.  Returns a (2, 2, K) array ordered
    top-left, top-right, bottom-left, bottom-right.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise ShapeError(f"expected a (gh, gw, K) grid, got shape {grid.shape}")
    gh, gw = grid.shape[:2]
    if gh < 2 or gw < 2:
        raise ConfigError(f"quadrant pooling needs a grid of at least 2x2, got {gh}x{gw}")
    hs, ws = gh // 2, gw // 2
    out = np.empty((2, 2, grid.shape[2]))
    out[0, 0] = grid[:hs, :ws].mean(axis=(0, 1))
    out[0, 1] = grid[:hs, ws:].mean(axis=(0, 1))
    out[1, 0] = grid[hs:, :ws].mean(axis=(0, 1))
    out[1, 1] = grid[hs:, ws:].mean(axis=(0, 1))
    return out


def pooled_vector(grid) -> np.ndarray:
    """Flatten quadrant means to the 4K classifier feature vector."""
    return pool_quadrants(grid).reshape(-1)


def encode_image(stack, whitener, atoms, rf_size: int, stride: int, zeta: float, sigma: float):
    """Literal stage composition: extract, normalize, whiten, encode.

    whitener may be None (whitening disabled).  Returns the pre-pool
    (gh, gw, k) response grid.
    """
    patches, (gh, gw) = extract_grid(stack, rf_size, stride)
    patches = normalize_rows(patches, sigma)
    if whitener is not None:
        patches = whitener.transform(patches)
    responses = soft_threshold_encode(patches, atoms, zeta)
    return responses.reshape(gh, gw, atoms.shape[0])


@dataclass
class FoldedEncoder:
    """Whitening folded into the dictionary for single-matmul encoding.

    With z = W (x - mean), responses A z equal (A W) x - (A W) mean, so
    filters = A W and offset = -filters @ mean reproduce the two-stage
    computation in one pass over normalized patches.
    """

    filters: np.ndarray
    offset: np.ndarray
    zeta: float
    sigma: float

    @classmethod
    def fold(cls, whitener, atoms, zeta: float, sigma: float) -> "FoldedEncoder":
        atoms = np.asarray(atoms, dtype=np.float64)
        if whitener is None:
            return cls(filters=atoms, offset=np.zeros(atoms.shape[0]), zeta=zeta, sigma=sigma)
        filters = atoms @ whitener.matrix_
        return cls(filters=filters, offset=-filters @ whitener.mean_, zeta=zeta, sigma=sigma)

    @property
    def k(self) -> int:
        return self.filters.shape[0]

    def encode_rows(self, patches) -> np.ndarray:
        """Phi over already contrast-normalized patch rows."""
        return np.maximum(patches @ self.filters.T + self.offset - self.zeta, 0.0)


def encode_image_folded(stack, folded: FoldedEncoder, rf_size: int, stride: int) -> np.ndarray:
    """Fast path equivalent to encode_image, one matmul per image."""
    patches, (gh, gw) = extract_grid(stack, rf_size, stride)
    patches = normalize_rows(patches, folded.sigma)
    return folded.encode_rows(patches).reshape(gh, gw, folded.k)
