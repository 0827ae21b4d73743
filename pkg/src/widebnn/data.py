"""Dataset construction: CIFAR-10 binary batches and synthetic regression."""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptRecordError, DataFormatError

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_PIXELS = 3072
CIFAR_CLASSES = 10


@dataclass(frozen=True)
class Dataset:
    """Immutable (X, Y) design matrix pair.

    inputs is n x m, targets is n x k. Both are finite by construction.
    """

    inputs: np.ndarray
    targets: np.ndarray
    provenance: str = field(default="")

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        Y = np.asarray(self.targets, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("inputs and targets must be 2-D matrices")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"row count mismatch: inputs {X.shape[0]} vs targets {Y.shape[0]}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1 or Y.shape[1] < 1:
            raise ValueError("dataset dimensions must be positive")
        if not np.isfinite(X).all() or not np.isfinite(Y).all():
            raise ValueError("dataset contains non-finite entries")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", Y)

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def m(self):
        return self.inputs.shape[1]

    @property
    def k(self):
        return self.targets.shape[1]

    def checksum(self):
        """Content hash used in run manifests and checkpoint validation."""
        import hashlib

        h = hashlib.sha256()
        h.update(self.inputs.tobytes())
        h.update(self.targets.tobytes())
        return h.hexdigest()[:16]


def load_cifar10(path, n, seed):
    """Load a seeded subsample of a CIFAR-10 binary batch file.

    Each record is 1 label byte followed by 3072 pixel bytes. Pixels are
    mapped to [-0.5, 0.5]; targets are one-hot over 10 classes minus 1/10.
    Records are chosen by a seeded shuffle without replacement.
    """
    size = os.path.getsize(path)
    if size == 0 or size % CIFAR_RECORD_BYTES != 0:
        raise DataFormatError(
            f"{path}: size {size} is not a positive multiple of {CIFAR_RECORD_BYTES}"
        )
    n_records = size // CIFAR_RECORD_BYTES
    if n < 1:
        raise ValueError("n must be positive")
    if n > n_records:
        raise IndexError(f"requested {n} records but file holds {n_records}")

    raw = np.fromfile(path, dtype=np.uint8).reshape(n_records, CIFAR_RECORD_BYTES)
    labels = raw[:, 0]
    bad = np.nonzero(labels > CIFAR_CLASSES - 1)[0]
    if bad.size:
        raise CorruptRecordError(
            f"{path}: record {bad[0]} has label byte {labels[bad[0]]} > 9"
        )

    rng = np.random.default_rng(seed)
    idx = rng.permutation(n_records)[:n]

    pixels = raw[idx, 1:].astype(np.float64) / 255.0 - 0.5
    chosen = labels[idx].astype(np.intp)
    targets = np.full((n, CIFAR_CLASSES), -1.0 / CIFAR_CLASSES)
    targets[np.arange(n), chosen] += 1.0
    return Dataset(pixels, targets, provenance=f"cifar10:{path}:n={n}:seed={seed}")


def synthetic_regression(n, m, k, seed):
    """Gaussian design and targets, deterministic given seed."""
    if n < 1 or m < 1 or k < 1:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    Y = rng.standard_normal((n, k))
    return Dataset(X, Y, provenance=f"synthetic:n={n},m={m},k={k},seed={seed}")
