"""Synthetic 10-class image corpus in the working 32x32x3 format.

Each class is an oriented sinusoidal grating (five orientations at two
spatial frequencies) with random phase, drawn over a strong low-frequency
colored background plus pixel noise.  The background dominates raw patch
variance while the class signal lives at mid frequencies, so whitening
measurably helps, mirroring the structure of natural image statistics.
A smooth random phase field decoheres the grating across the image, so
the signal is only locally periodic: small receptive fields see coherent
texture while large ones average it away, again as in natural images.
Images quantize to 8-bit, so corpora round-trip through the CIFAR binary
codec unchanged.
"""

import numpy as np

from .datasets import LabeledImage, WORKING_SIZE, resize_bilinear, save_cifar
from .seeding import rng_for

N_CLASSES = 10
N_ORIENTATIONS = 5
FREQUENCIES = (4.5, 7.5)
BACKGROUND_AMP = 0.22
GRATING_AMP = 0.065
NOISE_AMP = 0.06
CHANNEL_GAINS = (1.0, 0.85, 0.65)
ORIENTATION_JITTER = 0.12
PHASE_FIELD_AMP = 2.8
PHASE_FIELD_CELLS = 6


def synthetic_image(label: int, rng) -> LabeledImage:
    """One quantized 32x32x3 image of the given class."""
    side = WORKING_SIZE
    theta = (label % N_ORIENTATIONS) * np.pi / N_ORIENTATIONS
    theta += rng.normal(0.0, ORIENTATION_JITTER)
    freq = FREQUENCIES[label // N_ORIENTATIONS]
    phase = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0:side, 0:side] / side
    cells = PHASE_FIELD_CELLS
    drift = resize_bilinear(rng.normal(0.0, 1.0, size=(cells, cells)), side, side)
    wave = np.sin(
        2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta))
        + phase
        + drift * PHASE_FIELD_AMP
    )
    coarse = rng.normal(0.0, 1.0, size=(3, 3, 3))
    background = resize_bilinear(coarse, side, side) * BACKGROUND_AMP
    background *= np.asarray(CHANNEL_GAINS)
    pixels = 0.5 + background + wave[:, :, None] * GRATING_AMP
    pixels += rng.normal(0.0, NOISE_AMP, size=pixels.shape)
    pixels = np.clip(pixels, 0.0, 1.0)
    pixels = np.round(pixels * 255.0) / 255.0
    return LabeledImage(pixels=pixels, label=label)


def make_images(n: int, seed: int = 0) -> list:
    """n images with labels cycling through the classes in rng order."""
    rng = rng_for(seed, "synthetic")
    labels = rng.permutation(np.arange(n) % N_CLASSES)
    return [synthetic_image(int(label), rng) for label in labels]


def make_cifar_files(out_dir, n_train: int, n_test: int, seed: int = 0):
    """Write train.bin and test.bin in CIFAR-10 binary layout."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, "train.bin")
    test_path = os.path.join(out_dir, "test.bin")
    save_cifar(make_images(n_train, seed=seed), train_path, "cifar10")
    save_cifar(make_images(n_test, seed=seed + 1), test_path, "cifar10")
    return train_path, test_path
