"""IDX ingestion, class filtering, normalization and node partitioning."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
PARTITION_MODES = ("balanced_homogeneous", "unbalanced_single_class")


class DatasetError(ValueError):
    pass


class IdxMagicError(DatasetError):
    pass


class IdxTruncatedError(DatasetError):
    pass


class CountMismatchError(DatasetError):
    pass


class MissingClassError(DatasetError):
    pass


class ZeroRowError(DatasetError):
    pass


class PartitionError(DatasetError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DatasetError("features must be (N, d) and aligned with labels")
        if len(self.labels) < 1:
            raise DatasetError("dataset is empty")

    @property
    def num_samples(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PartitionedDataset:
    """Node batches as arrays of global sample indices."""

    indices: tuple[np.ndarray, ...]
    num_samples: int
    mode: str
    seed: int | None

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.indices], dtype=np.int64)

    def provenance(self) -> np.ndarray:
        """Rows of ``(node, local index, global index)``."""
        rows = [np.column_stack([np.full(len(ix), i), np.arange(len(ix)), ix]) for i, ix in enumerate(self.indices)]
        return np.vstack(rows)

    def write_csv(self, path: str | Path) -> None:
        lines = ["node_id,global_index"]
        for i, ix in enumerate(self.indices):
            lines.extend(f"{i},{int(g)}" for g in ix)
        Path(path).write_text("\n".join(lines) + "\n")


# -- IDX --------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, path) -> np.ndarray:
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: truncated header")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(shape))
    if len(raw) < header + count:
        raise IdxTruncatedError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(shape)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels are scaled to ``[0, 1]``."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64))


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 ``images`` of shape ``(N, rows, cols)`` and ``labels`` as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


# -- transforms ----------------------------------------------------------------

def binarize_classes(dataset: Dataset, class_a: int, class_b: int) -> Dataset:
    """Keep two classes; ``class_a`` becomes +1 and ``class_b`` becomes -1."""
    for cls in (class_a, class_b):
        if not np.any(dataset.labels == cls):
            raise MissingClassError(f"class {cls} not present")
    keep = (dataset.labels == class_a) | (dataset.labels == class_b)
    labels = np.where(dataset.labels[keep] == class_a, 1, -1).astype(np.int64)
    return Dataset(dataset.features[keep], labels)


def normalize_unit(dataset: Dataset) -> Dataset:
    norms = np.linalg.norm(dataset.features, axis=1)
    if np.any(norms == 0):
        raise ZeroRowError(f"{int(np.sum(norms == 0))} all-zero feature rows cannot be normalized")
    return Dataset(dataset.features / norms[:, None], dataset.labels)


def make_blobs(num_samples: int, dim: int, classes=(3, 8), separation: float = 1.0,
               noise: float = 1.0, seed: int = 0) -> Dataset:
    """Gaussian blobs, one per class, with means at ``+-separation * u`` plus a shared offset."""
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    offset = rng.standard_normal(dim)
    labels = np.array(classes)[rng.integers(0, len(classes), size=num_samples)]
    signs = np.where(labels == classes[0], 1.0, -1.0)
    features = offset + separation * signs[:, None] * direction + noise * rng.standard_normal((num_samples, dim))
    return Dataset(features, labels.astype(np.int64))


# -- partitioning ----------------------------------------------------------------

def partition(dataset: Dataset, n: int, mode: str = "balanced_homogeneous", seed: int = 0) -> PartitionedDataset:
    """Split samples across ``n`` nodes.

    ``balanced_homogeneous`` shuffles each class, lays the classes out one after the
    other and deals samples round-robin, so sizes differ by at most one (extras on
    the first nodes) and class proportions match the global ones up to rounding.

    ``unbalanced_single_class`` gives every node samples of one class only. Nodes are
    assigned to classes in proportion to class sizes; within a class the shuffled
    samples are cut at sorted, distinct uniform cut points, giving random sizes.
    """
    N = dataset.num_samples
    if mode not in PARTITION_MODES:
        raise PartitionError(f"unknown partition mode {mode!r}")
    if n < 1 or N < n:
        raise PartitionError(f"cannot split {N} samples across {n} nodes")
    rng = np.random.default_rng(seed)
    classes = np.unique(dataset.labels)
    by_class = [rng.permutation(np.flatnonzero(dataset.labels == c)) for c in classes]

    if mode == "balanced_homogeneous":
        order = np.concatenate(by_class)
        indices = tuple(np.sort(order[i::n]) for i in range(n))
        return PartitionedDataset(indices, N, mode, seed)

    counts = np.array([len(b) for b in by_class])
    if n < len(classes):
        raise PartitionError(f"{n} nodes cannot each hold a single class out of {len(classes)}")
    # largest-remainder apportionment of nodes to classes, at least one each
    quota = n * counts / N
    nodes_per_class = np.maximum(np.floor(quota).astype(int), 1)
    while nodes_per_class.sum() < n:
        nodes_per_class[np.argmax(quota - nodes_per_class)] += 1
    while nodes_per_class.sum() > n:
        nodes_per_class[np.argmax(nodes_per_class - quota)] -= 1
    if np.any(nodes_per_class > counts):
        raise PartitionError("unbalanced single-class partition infeasible: too few samples in a class")

    node_order = rng.permutation(n)
    indices: list[np.ndarray | None] = [None] * n
    cursor = 0
    for samples, k in zip(by_class, nodes_per_class):
        cuts = np.sort(rng.choice(np.arange(1, len(samples)), size=k - 1, replace=False))
        for piece in np.split(samples, cuts):
            indices[node_order[cursor]] = np.sort(piece)
            cursor += 1
    return PartitionedDataset(tuple(indices), N, mode, seed)
