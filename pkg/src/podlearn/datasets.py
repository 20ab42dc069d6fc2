"""Dataset construction: seeded synthetic benchmarks and CIFAR-100 binaries.

The synthetic benchmark gives every class a fixed random spatial template;
samples are the template plus i.i.d. Gaussian pixel noise. That keeps runs
fast, fully seeded, and hard enough to expose forgetting once classes arrive
incrementally.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError

_CIFAR_RECORD = 3074  # coarse label byte + fine label byte + 3*32*32 pixels
_CIFAR_CLASSES = 100


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 10
    samples_per_class: int = 100
    channels: int = 3
    width: int = 8
    height: int = 8
    pattern_seed: int = 123
    noise_sigma: float = 0.3

    def __post_init__(self):
        if self.classes < 2:
            raise ContractError(f"need >= 2 classes, got {self.classes}")
        if self.samples_per_class < 2:
            raise ContractError("need >= 2 samples per class for a train/test split")
        if min(self.channels, self.width, self.height) < 1:
            raise ContractError("degenerate image shape")
        if self.noise_sigma < 0:
            raise ContractError(f"noise sigma must be >= 0, got {self.noise_sigma}")


@dataclass
class Dataset:
    train_x: np.ndarray  # (N, C, W, H)
    train_y: np.ndarray  # (N,) int64
    test_x: np.ndarray
    test_y: np.ndarray

    @property
    def class_count(self) -> int:
        return int(self.train_y.max()) + 1

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.train_x.shape[1:])

    def train_indices_of(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.train_y == class_id)


# Every class template = one shared pixel-level background plus a coarse
# (2x-upsampled) class pattern. The coarse patterns keep single-task runs
# easily learnable by 3x3 convs; the strong shared background forces all
# classes through the same suppression filters, so training on a new class
# degrades old ones no matter which class arrives — without it, classes are
# pairwise-orthogonal, the hinge loss hits zero immediately, and incremental
# runs would show no forgetting at all.
_BACKGROUND_NORM = 3.0
_CLASS_NORM = 1.45


def class_templates(spec: SyntheticSpec) -> np.ndarray:
    """Fixed per-class spatial templates, (classes, C, W, H), seeded."""
    rng = np.random.default_rng(spec.pattern_seed)
    shape = (spec.channels, spec.width, spec.height)
    background = rng.normal(0.0, 1.0, size=shape)
    background *= _BACKGROUND_NORM / np.linalg.norm(background)
    cw, ch = (spec.width + 1) // 2, (spec.height + 1) // 2
    coarse = rng.normal(0.0, 1.0, size=(spec.classes, spec.channels, cw, ch))
    full = coarse.repeat(2, axis=2).repeat(2, axis=3)[:, :, : spec.width, : spec.height]
    flat = full.reshape(spec.classes, -1)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    flat = flat * (_CLASS_NORM / np.where(norms > 0, norms, 1.0))
    return background[None] + flat.reshape(spec.classes, *shape)


def dataset_from_templates(templates: np.ndarray, spec: SyntheticSpec, seed: int) -> Dataset:
    """Template + Gaussian noise samples, deterministic 80/20 split per class."""
    if templates.shape != (spec.classes, spec.channels, spec.width, spec.height):
        raise ContractError(f"templates shape {templates.shape} does not match spec")
    noise_rng = np.random.default_rng(seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    n = spec.samples_per_class
    n_train = max(1, int(round(0.8 * n)))
    shape = (spec.channels, spec.width, spec.height)
    for c in range(spec.classes):
        samples = templates[c][None] + spec.noise_sigma * noise_rng.normal(
            0.0, 1.0, size=(n, *shape)
        )
        train_x.append(samples[:n_train])
        test_x.append(samples[n_train:])
        train_y.append(np.full(n_train, c))
        test_y.append(np.full(n - n_train, c))
    return Dataset(
        np.concatenate(train_x),
        np.concatenate(train_y).astype(np.int64),
        np.concatenate(test_x),
        np.concatenate(test_y).astype(np.int64),
    )


def generate_synthetic_dataset(spec: SyntheticSpec, seed: int = 0) -> Dataset:
    """Seeded synthetic benchmark: shared-basis templates plus pixel noise."""
    return dataset_from_templates(class_templates(spec), spec, seed)


def _read_cifar_records(path: str) -> tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise FormatError(f"{path}: empty file")
    if raw.size % _CIFAR_RECORD != 0:
        raise FormatError(
            f"{path}: size {raw.size} is not a multiple of {_CIFAR_RECORD}"
        )
    records = raw.reshape(-1, _CIFAR_RECORD)
    labels = records[:, 1].astype(np.int64)  # byte 0 is the coarse label
    if labels.max() >= _CIFAR_CLASSES:
        raise FormatError(f"{path}: fine label >= {_CIFAR_CLASSES}")
    pixels = records[:, 2:].astype(np.float64).reshape(-1, 3, 32, 32) / 255.0
    return pixels, labels


def ingest_cifar_binary(
    path: str, test_path: str | None = None, classes: int | None = None
) -> Dataset:
    """Load CIFAR-100 binary records, scale to [0, 1], standardize per channel.

    ``path`` may be a directory holding ``train.bin``/``test.bin``. Without a
    test file, each class is split 80/20 in record order. ``classes`` keeps
    only fine labels below that count. Standardization statistics always come
    from the train split.
    """
    if os.path.isdir(path):
        test_path = test_path or os.path.join(path, "test.bin")
        path = os.path.join(path, "train.bin")
        if not os.path.exists(test_path):
            test_path = None
    train_x, train_y = _read_cifar_records(path)
    if test_path is not None:
        test_x, test_y = _read_cifar_records(test_path)
    else:
        tr_idx, te_idx = [], []
        for c in np.unique(train_y):
            idx = np.flatnonzero(train_y == c)
            cut = max(1, int(round(0.8 * idx.size)))
            tr_idx.append(idx[:cut])
            te_idx.append(idx[cut:])
        tr_idx = np.concatenate(tr_idx)
        te_idx = np.concatenate(te_idx)
        test_x, test_y = train_x[te_idx], train_y[te_idx]
        train_x, train_y = train_x[tr_idx], train_y[tr_idx]

    if classes is not None:
        keep = train_y < classes
        train_x, train_y = train_x[keep], train_y[keep]
        keep = test_y < classes
        test_x, test_y = test_x[keep], test_y[keep]
        if train_y.size == 0:
            raise FormatError(f"no records with label < {classes}")

    mean = train_x.mean(axis=(0, 2, 3), keepdims=True)
    std = train_x.std(axis=(0, 2, 3), keepdims=True)
    std = np.where(std > 0, std, 1.0)
    return Dataset(
        (train_x - mean) / std,
        train_y,
        (test_x - mean) / std,
        test_y,
    )


def save_dataset(ds: Dataset, path: str) -> None:
    np.savez(
        path,
        train_x=ds.train_x,
        train_y=ds.train_y,
        test_x=ds.test_x,
        test_y=ds.test_y,
    )


def load_dataset(path: str) -> Dataset:
    with np.load(path) as z:
        return Dataset(z["train_x"], z["train_y"], z["test_x"], z["test_y"])
