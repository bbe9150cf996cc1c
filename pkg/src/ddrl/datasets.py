"""Raster dataset loading, resizing, and role-based partitioning.

Datasets are read from CIFAR-style binary files: fixed-size records of one
(or two) label bytes followed by 32*32*3 pixel bytes stored row-major and
channel-planar (R plane, G plane, B plane).  Pixels are scaled to [0, 1]
at ingest; all downstream statistics are computed on that scale.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError

WORKING_SIZE = 32

_FORMATS = {
    # format -> (label bytes, class count of the label that is kept)
    "cifar10": (1, 10),
    "cifar100": (2, 100),
}
_PIXEL_BYTES = 32 * 32 * 3
_COARSE_CLASSES = 20


@dataclass
class LabeledImage:
    """A decoded raster image with its integer class id.

    pixels: H x W x C float64 array with values in [0, 1].
    """

    pixels: np.ndarray
    label: int

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class DatasetPartition:
    """Six disjoint role-specific subsets ID_0 ... ID_5 of one image list.

    Subsets 0..4 are treated as unlabeled (labels kept but unread); the
    last subset keeps its labels for classifier training.
    """

    subsets: list
    seed: int

    def __iter__(self):
        return iter(self.subsets)

    def sizes(self):
        return [len(s) for s in self.subsets]


def record_size(fmt: str) -> int:
    if fmt not in _FORMATS:
        raise ConfigError(f"unknown dataset format {fmt!r}; expected one of {sorted(_FORMATS)}")
    return _FORMATS[fmt][0] + _PIXEL_BYTES


def load_cifar(path, fmt: str) -> list:
    """Decode every record of a CIFAR binary file into LabeledImage objects."""
    rec = record_size(fmt)
    label_bytes, n_classes = _FORMATS[fmt]
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % rec != 0:
        offset = (len(raw) // rec) * rec
        raise FormatError(
            f"{path}: truncated record at byte offset {offset} "
            f"(file length {len(raw)} is not a multiple of {rec})"
        )
    n = len(raw) // rec
    if n == 0:
        return []
    data = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec)
    if fmt == "cifar100":
        coarse = data[:, 0]
        labels = data[:, 1]
        bad = np.nonzero(coarse >= _COARSE_CLASSES)[0]
        if bad.size:
            raise FormatError(
                f"{path}: record {bad[0]} has coarse label {coarse[bad[0]]} "
                f"outside 0..{_COARSE_CLASSES - 1}"
            )
    else:
        labels = data[:, 0]
    bad = np.nonzero(labels >= n_classes)[0]
    if bad.size:
        raise FormatError(
            f"{path}: record {bad[0]} has label {labels[bad[0]]} outside 0..{n_classes - 1}"
        )
    planes = data[:, label_bytes:].reshape(n, 3, 32, 32)
    pixels = planes.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
    return [LabeledImage(pixels[i], int(labels[i])) for i in range(n)]


def save_cifar(images, path, fmt: str = "cifar10"):
    """Write images as CIFAR binary records (inverse of load_cifar).

    Pixels are quantized with round(x * 255).  For cifar100 the coarse
    label byte is written as label // 5 (the fine labels of the published
    layout map 5-to-1 onto coarse classes).
    """
    rec = record_size(fmt)
    label_bytes, n_classes = _FORMATS[fmt]
    buf = np.empty((len(images), rec), dtype=np.uint8)
    for i, img in enumerate(images):
        if img.pixels.shape != (32, 32, 3):
            raise FormatError(f"image {i} has shape {img.pixels.shape}; records require 32x32x3")
        if not 0 <= img.label < n_classes:
            raise FormatError(f"image {i} label {img.label} outside 0..{n_classes - 1}")
        if fmt == "cifar100":
            buf[i, 0] = img.label // 5
            buf[i, 1] = img.label
        else:
            buf[i, 0] = img.label
        planes = np.round(img.pixels * 255.0).astype(np.uint8).transpose(2, 0, 1)
        buf[i, label_bytes:] = planes.reshape(-1)
    with open(path, "wb") as fh:
        fh.write(buf.tobytes())


def resize_bilinear(pixels, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling on the corner-aligned grid.

    Output pixel (i, j) samples the source at (i*(H-1)/(out_h-1),
    j*(W-1)/(out_w-1)), so corners map to corners exactly and constant
    images are preserved.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    squeeze = pixels.ndim == 2
    if squeeze:
        pixels = pixels[:, :, None]
    h, w = pixels.shape[:2]
    if h < 1 or w < 1:
        raise DataError(f"cannot resize image with zero dimension (shape {pixels.shape})")

    def _coords(n_src, n_dst):
        if n_src == 1 or n_dst == 1:
            return np.zeros(n_dst)
        return np.arange(n_dst) * (n_src - 1) / (n_dst - 1)

    ys, xs = _coords(h, out_h), _coords(w, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = pixels[y0][:, x0] * (1 - fx) + pixels[y0][:, x1] * fx
    bot = pixels[y1][:, x0] * (1 - fx) + pixels[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return out[:, :, 0] if squeeze else out


def resize_to_working(img: LabeledImage) -> LabeledImage:
    """Resize an image of any size to the 32x32 working resolution."""
    if img.pixels.shape[0] == 32 and img.pixels.shape[1] == 32:
        return LabeledImage(np.asarray(img.pixels, dtype=np.float64), img.label)
    return LabeledImage(resize_bilinear(img.pixels, WORKING_SIZE, WORKING_SIZE), img.label)


def partition(images, fractions, seed: int) -> DatasetPartition:
    """Shuffle deterministically and split into six contiguous subsets.

    Split boundaries are round(n * cumulative_fraction) with half-up
    rounding; the final boundary is forced to n so the subsets are always
    exhaustive.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.shape != (6,):
        raise ConfigError(f"expected 6 partition fractions, got {fractions.shape}")
    if np.any(fractions < 0):
        raise ConfigError("partition fractions must be non-negative")
    if abs(float(fractions.sum()) - 1.0) > 1e-9:
        raise ConfigError(f"partition fractions sum to {fractions.sum()!r}, expected 1")
    if len(images) == 0:
        raise ConfigError("cannot partition an empty image list")
    n = len(images)
    order = np.random.default_rng(seed).permutation(n)
    bounds = np.floor(n * np.cumsum(fractions) + 0.5).astype(int)
    bounds[-1] = n
    subsets, start = [], 0
    for b in bounds:
        subsets.append([images[j] for j in order[start:b]])
        start = b
    return DatasetPartition(subsets=subsets, seed=seed)


def images_to_array(images) -> np.ndarray:
    """Stack equally-sized images into an (n, H, W, C) array."""
    return np.stack([img.pixels for img in images]) if images else np.empty((0, 32, 32, 3))


def labels_to_array(images) -> np.ndarray:
    return np.asarray([img.label for img in images], dtype=np.int64)


def default_fractions():
    """Larger shares for first-layer dictionary data and classifier data."""
    return (0.3, 0.1, 0.1, 0.1, 0.1, 0.3)


def find_cifar10_dir():
    """Directory with real CIFAR-10 binaries if the user provided one."""
    path = os.environ.get("DDRL_CIFAR10_DIR")
    if path and os.path.isfile(os.path.join(path, "data_batch_1.bin")):
        return path
    return None
