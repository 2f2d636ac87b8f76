import os

import numpy as np
import pytest

from idsforge.dataset import Dataset, FeatureMeta, encode, filter_table, load_csv, normalize

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def make_dataset(features, labels, class_names=None, normal_class=0):
    """Wrap plain arrays in a Dataset with generic metadata."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if class_names is None:
        class_names = [f"c{i}" for i in range(int(labels.max()) + 1)]
    meta = [
        FeatureMeta(
            name=f"f{j}",
            original_kind="numeric",
            observed_min=float(features[:, j].min()),
            observed_max=float(features[:, j].max()),
        )
        for j in range(features.shape[1])
    ]
    return Dataset(features=features, feature_meta=meta, labels=labels,
                   class_names=class_names, normal_class=normal_class)


def make_search_dataset(seed):
    """Synthetic selection benchmark: a few noisy label copies plus noise,
    d between 6 and 12, 2 or 3 classes."""
    rng = np.random.default_rng(seed)
    n = 250
    d = 6 + seed % 7
    c = 2 + seed % 2
    labels = rng.integers(0, c, n)
    feats = rng.random((n, d))
    for j in range(2 + seed % 3):
        feats[:, j] = labels / max(c - 1, 1) + rng.normal(0, 0.12 + 0.1 * j, n)
    return normalize(make_dataset(feats, labels))


def make_blobs(seed, n=500, d=10, informative=2, spread=0.08):
    """Two linearly separable classes; only the first `informative` features
    carry signal."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    feats = rng.random((n, d))
    for j in range(informative):
        feats[:, j] = labels * 0.8 + 0.1 + rng.normal(0, spread, n)
    return make_dataset(feats, labels, class_names=["normal", "attack"])


def make_leak_dataset(seed, n=120, d=5, classes=3):
    """Feature 0 is the label itself; everything else is noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, n)
    feats = rng.random((n, d))
    feats[:, 0] = labels
    return make_dataset(feats, labels)


@pytest.fixture
def play_tennis_raw():
    return load_csv(os.path.join(DATA_DIR, "play_tennis.csv"), label_column="play")


@pytest.fixture
def play_tennis_dataset(play_tennis_raw):
    filtered, _ = filter_table(play_tennis_raw)
    return encode(filtered)
