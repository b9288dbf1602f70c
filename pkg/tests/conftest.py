import os
from pathlib import Path

import numpy as np
import pytest

from gmscore.ingest import ImageSet, LabelVector, read_idx_images, read_idx_labels

MNIST_TRAIN = 2000
MNIST_TEST = 500


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _load_mnist_pool():
    """Images scaled to [0, 1] and labels, from IDX files or the mlxtend subset."""
    root = os.environ.get("GMSCORE_MNIST_DIR")
    if root:
        root = Path(root)
        images = read_idx_images(root / "train-images-idx3-ubyte").images
        labels = read_idx_labels(root / "train-labels-idx1-ubyte").labels
        return images, labels
    try:
        from mlxtend.data import mnist_data
    except ImportError:
        return None
    X, y = mnist_data()
    return (X.reshape(-1, 28, 28) / 255.0), y.astype(np.int64)


@pytest.fixture(scope="session")
def mnist_split():
    """A seeded 2000/500 train/test split of MNIST digits."""
    pool = _load_mnist_pool()
    if pool is None:
        pytest.skip("no MNIST source: set GMSCORE_MNIST_DIR or install mlxtend")
    images, labels = pool
    perm = np.random.default_rng(0).permutation(len(labels))
    tr, te = perm[:MNIST_TRAIN], perm[MNIST_TRAIN : MNIST_TRAIN + MNIST_TEST]
    return (
        ImageSet(images[tr], "mnist-train"),
        LabelVector(labels[tr], 10),
        ImageSet(images[te], "mnist-test"),
        LabelVector(labels[te], 10),
    )


# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
