"""Labeled datasets: Gaussian-cluster toys, class-pair selection, CSV and IDX I/O."""
from dataclasses import dataclass
import gzip
import struct

import numpy as np

from .errors import BadMagic, BadSize, ClassAbsent, CountMismatch, ParseError, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Cluster centres for the two toy problems used throughout the tests and notebooks.
TOY_BINARY_MEANS = np.array([[-1.5, -1.0], [1.5, 1.0]])
TOY_MULTICLASS_MEANS = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels).astype(np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("inputs must be (n, dim) and labels (n,)")
        if not np.all(np.isfinite(X)):
            raise ValueError("inputs contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= self.k):
            raise ValueError(f"labels must lie in 0..{self.k - 1}")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.k)

    def __eq__(self, other):
        return (
            isinstance(other, LabeledDataset)
            and self.k == other.k
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
        )


def gen_gaussian_clusters(k, n_per_class, means, std, seed):
    """``n_per_class`` points around each of ``k`` centres; label = centre index."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    if k < 2 or means.shape[0] != k:
        raise ValueError("need k >= 2 and one mean per class")
    rng = np.random.default_rng(seed)
    X = np.concatenate([m + std * rng.standard_normal((n_per_class, means.shape[1])) for m in means])
    y = np.repeat(np.arange(k), n_per_class)
    return LabeledDataset(X, y, k)


def toy_binary(n_per_class=100, std=0.6, seed=0):
    return gen_gaussian_clusters(2, n_per_class, TOY_BINARY_MEANS, std, seed)


def toy_multiclass_means(dim=2):
    """Planar centres for dim 2; otherwise 3 * e_i for the first four axes."""
    if dim == 2:
        return TOY_MULTICLASS_MEANS.copy()
    if dim < 4:
        raise ValueError("dim must be 2 or at least 4")
    return 3.0 * np.eye(4, dim)


def toy_multiclass(n_per_class=100, std=0.7, seed=0, dim=2):
    return gen_gaussian_clusters(4, n_per_class, toy_multiclass_means(dim), std, seed)


def binarize(data, class_a, class_b):
    """Keep two classes, relabelled ``class_a -> 0`` and ``class_b -> 1``."""
    if class_a == class_b:
        raise ClassAbsent("the two classes must differ")
    present = set(np.unique(data.labels).tolist())
    for c in (class_a, class_b):
        if c not in present:
            raise ClassAbsent(f"class {c} does not occur in the dataset")
    keep = (data.labels == class_a) | (data.labels == class_b)
    return LabeledDataset(data.inputs[keep], (data.labels[keep] == class_b).astype(int), 2)


def train_val_split(data, n_val, seed):
    n = len(data)
    if not 0 < n_val < n:
        raise BadSize(f"n_val must satisfy 0 < n_val < {n}, got {n_val}")
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(np.sort(perm[n_val:])), data.subset(np.sort(perm[:n_val]))


# ---------------------------------------------------------------------------
# IDX (MNIST) files
#
#   images: >u4 magic 0x803, >u4 count, >u4 rows, >u4 cols, then count*rows*cols bytes
#   labels: >u4 magic 0x801, >u4 count, then count bytes


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _read_idx(path, expected_magic, n_dims):
    raw = _read_bytes(path)
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise TruncatedFile(f"{path}: header is incomplete")
    magic, *dims = struct.unpack(">" + "I" * (1 + n_dims), raw[:header_len])
    if magic != expected_magic:
        raise BadMagic(f"{path}: magic {magic:#010x}, expected {expected_magic:#010x}")
    size = int(np.prod(dims))
    payload = raw[header_len:]
    if len(payload) < size:
        raise TruncatedFile(f"{path}: header announces {size} bytes, file holds {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(dims)


def load_idx(images_path, labels_path, k=10):
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return LabeledDataset(X, labels.astype(np.int64), max(k, int(labels.max(initial=0)) + 1))


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images (n, rows, cols) and labels (n,) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# CSV: header x0,...,x{d-1},label


def save_csv(data, path):
    header = ",".join([f"x{i}" for i in range(data.dim)] + ["label"])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row, label in zip(data.inputs, data.labels):
            fh.write(",".join(format(v, ".17g") for v in row) + f",{label}\n")


def load_csv(path, k=None):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("empty file", line=1)
    header = [h.strip() for h in lines[0].split(",")]
    if header[-1] != "label":
        raise ParseError("last column must be 'label'", line=1)
    expected = [f"x{i}" for i in range(len(header) - 1)]
    if header[:-1] != expected or not expected:
        raise ParseError("feature columns must be named x0, x1, ...", line=1)
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", line=lineno)
        try:
            rows.append([float(c) for c in cells[:-1]])
            labels.append(int(cells[-1]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    if not rows:
        raise ParseError("no data rows", line=2)
    labels = np.array(labels)
    if k is None:
        k = max(2, int(labels.max()) + 1)
    return LabeledDataset(np.array(rows), labels, k)
