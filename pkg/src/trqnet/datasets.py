"""Dataset loading and preprocessing: Iris CSV, MNIST IDX, CIFAR-10 binary.

Loaders read local files only. Labels are re-indexed to 0..k-1 after class
filtering; the original label values are retained on the dataset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "SplitSpec",
    "load_iris",
    "load_mnist",
    "load_cifar10",
    "to_gray28",
    "standardize",
    "filter_classes",
    "split_train_test",
    "split_folds",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class indices and the original labels."""

    features: np.ndarray  # (n, width) float64
    labels: np.ndarray  # (n,) int, values in 0..k-1
    class_labels: tuple  # original label values, position = class index
    name: str

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (n, width) with one label per row")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= len(self.class_labels)
        ):
            raise ValueError("labels outside the declared class set")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_width(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def subset(self, idx: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(
            self.features[idx], self.labels[idx], self.class_labels,
            name if name is not None else self.name,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    fold_count: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.fold_count < 2:
            raise ValueError("fold_count must be >= 2")


# ---------- loaders ----------

def load_iris(path) -> Dataset:
    """CSV with four numeric columns and a class column; classes sorted
    alphabetically map to indices 0..2."""
    rows = []
    names = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(
                    f"{path}: line {lineno}: expected 5 columns, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts[:4]])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            names.append(parts[4])
    classes = tuple(sorted(set(names)))
    index = {c: i for i, c in enumerate(classes)}
    labels = np.array([index[n] for n in names], dtype=int)
    return Dataset(np.array(rows, dtype=float), labels, classes, "iris")


def _read_idx_header(fh, path, expect_magic, n_dims):
    head = fh.read(4 * (1 + n_dims))
    if len(head) < 4 * (1 + n_dims):
        raise ValueError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + n_dims}I", head)
    if fields[0] != expect_magic:
        raise ValueError(f"{path}: unrecognized IDX magic 0x{fields[0]:08x}")
    return fields[1:]


def load_mnist(images_path, labels_path) -> Dataset:
    """IDX image/label pair; pixels scaled to [0, 1], width 784."""
    with open(images_path, "rb") as fh:
        count, rows, cols = _read_idx_header(fh, images_path, IDX_IMAGES_MAGIC, 3)
        raw = fh.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise ValueError(f"{images_path}: truncated pixel data")
    with open(labels_path, "rb") as fh:
        (label_count,) = _read_idx_header(fh, labels_path, IDX_LABELS_MAGIC, 1)
        raw_labels = fh.read(label_count)
    if len(raw_labels) != label_count:
        raise ValueError(f"{labels_path}: truncated label data")
    if label_count != count:
        raise ValueError(
            f"image count {count} does not match label count {label_count}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(float) / 255.0
    features = pixels.reshape(count, rows * cols)
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(int)
    return Dataset(features, labels, tuple(range(10)), "mnist")


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Pixel-center-aligned bilinear interpolation."""
    in_h, in_w = img.shape
    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.clip(y0 + 1, 0, in_h - 1)
    x1 = np.clip(x0 + 1, 0, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def to_gray28(rgb_flat: np.ndarray) -> np.ndarray:
    """One 3072-value CIFAR record (RGB planes, [0, 1]) to a flat 28x28 gray image."""
    planes = np.asarray(rgb_flat, dtype=float).reshape(3, 32, 32)
    gray = LUMA[0] * planes[0] + LUMA[1] * planes[1] + LUMA[2] * planes[2]
    return _bilinear_resize(gray, 28, 28).reshape(-1)


def load_cifar10(batch_paths) -> Dataset:
    """CIFAR-10 binary batches, collapsed to 28x28 grayscale in [0, 1]."""
    if isinstance(batch_paths, (str, bytes)) or hasattr(batch_paths, "__fspath__"):
        batch_paths = [batch_paths]
    feats = []
    labels = []
    for path in batch_paths:
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) % CIFAR_RECORD_BYTES != 0:
            raise ValueError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].astype(int))
        pixels = records[:, 1:].astype(float) / 255.0
        feats.append(np.array([to_gray28(p) for p in pixels]))
    return Dataset(
        np.concatenate(feats), np.concatenate(labels), tuple(range(10)), "cifar10"
    )


# ---------- preprocessing ----------

def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Zero-mean unit-variance per feature, statistics from the train split only.

    Zero-variance features map to 0 (the divisor is replaced by 1).
    """
    if len(train) == 0:
        raise ValueError("train split must be nonempty")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)

    def apply(d: Dataset) -> Dataset:
        return Dataset((d.features - mean) / std, d.labels, d.class_labels, d.name)

    return tuple(apply(d) for d in (train, *others))


def filter_classes(d: Dataset, keep) -> Dataset:
    """Restrict to the given original labels, re-indexed 0..k-1 in keep order."""
    keep = list(keep)
    for label in keep:
        if label not in d.class_labels:
            raise ValueError(f"unknown class label {label!r}")
    old_index = {label: d.class_labels.index(label) for label in keep}
    remap = {old_index[label]: new for new, label in enumerate(keep)}
    mask = np.isin(d.labels, list(remap))
    labels = np.array([remap[v] for v in d.labels[mask]], dtype=int)
    return Dataset(d.features[mask], labels, tuple(keep), d.name)


def _stratified_order(labels: np.ndarray, seed: int) -> dict[int, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {
        c: rng.permutation(np.flatnonzero(labels == c))
        for c in np.unique(labels)
    }


def split_train_test(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified deterministic train/test split by spec.train_fraction."""
    per_class = _stratified_order(d.labels, spec.seed)
    train_idx, test_idx = [], []
    for c, idx in per_class.items():
        cut = int(round(spec.train_fraction * len(idx)))
        if cut == 0 or cut == len(idx):
            raise ValueError(f"class {c} too small for fraction {spec.train_fraction}")
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return d.subset(train, d.name + "-train"), d.subset(test, d.name + "-test")


def split_folds(d: Dataset, spec: SplitSpec) -> list[tuple[Dataset, Dataset]]:
    """Stratified k-fold cross-validation pairs (train, held-out fold)."""
    per_class = _stratified_order(d.labels, spec.seed)
    for c, idx in per_class.items():
        if len(idx) < spec.fold_count:
            raise ValueError(f"class {c} has fewer samples than {spec.fold_count} folds")
    folds = [[] for _ in range(spec.fold_count)]
    for idx in per_class.values():
        for pos, sample in enumerate(idx):
            folds[pos % spec.fold_count].append(sample)
    pairs = []
    for k in range(spec.fold_count):
        test = np.sort(np.array(folds[k], dtype=int))
        train = np.sort(np.concatenate([folds[j] for j in range(spec.fold_count) if j != k]).astype(int))
        pairs.append((d.subset(train, f"{d.name}-fold{k}-train"),
                      d.subset(test, f"{d.name}-fold{k}-test")))
    return pairs
