import os
from pathlib import Path

import numpy as np
import pytest

from oda.data import Dataset, gen_circles, gen_gaussians

# 5x7 bitmap digits, upscaled and jittered: a stand-in image-classification
# set for exercising the multi-resolution path when MNIST is not on disk.
GLYPH_FONT = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def gen_glyphs(seed, n_per_class, classes=range(10), noise=0.12, jitter=2) -> Dataset:
    rng = np.random.default_rng(seed)
    samples, labels = [], []
    for c in classes:
        base = np.array([[int(ch) for ch in row] for row in GLYPH_FONT[c]], dtype=float)
        for _ in range(n_per_class):
            img = np.kron(base, np.ones((3, 3)))
            canvas = np.zeros((28, 28))
            dy = 3 + rng.integers(-jitter, jitter + 1)
            dx = 6 + rng.integers(-jitter, jitter + 1)
            canvas[dy:dy + 21, dx:dx + 15] = img * rng.uniform(0.75, 1.0)
            canvas += noise * rng.standard_normal((28, 28))
            np.clip(canvas, 0.0, 1.0, out=canvas)
            samples.append(canvas)
            labels.append(c)
    order = rng.permutation(len(samples))
    return Dataset(np.array(samples)[order], np.array(labels)[order])


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def mnist_dir():
    """Directory holding the four MNIST IDX files, or None. Checked at
    ODA_MNIST_DIR, then ./data/mnist relative to the repo root."""
    candidates = []
    if os.environ.get("ODA_MNIST_DIR"):
        candidates.append(Path(os.environ["ODA_MNIST_DIR"]))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    for cand in candidates:
        if all((cand / name).exists() for name in MNIST_FILES.values()):
            return cand
    return None


@pytest.fixture(scope="session")
def blobs() -> Dataset:
    return gen_gaussians(11, 750, [[-3.0, 0.0], [3.0, 0.0]], 1.0)


@pytest.fixture(scope="session")
def circles() -> Dataset:
    return gen_circles(7, 750, [1.0, 2.0], 0.1)


@pytest.fixture(scope="session")
def glyphs_small() -> Dataset:
    return gen_glyphs(3, 40)
