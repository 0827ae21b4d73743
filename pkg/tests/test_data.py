import numpy as np
import pytest

from widebnn.data import (
    CIFAR_RECORD_BYTES,
    Dataset,
    load_cifar10,
    synthetic_regression,
)
from widebnn.errors import CorruptRecordError, DataFormatError


def write_batch(path, labels, pixel_value=None, rng=None):
    """Assemble a CIFAR-format binary batch file."""
    records = []
    for lab in labels:
        rec = np.empty(CIFAR_RECORD_BYTES, dtype=np.uint8)
        rec[0] = lab
        if pixel_value is not None:
            rec[1:] = pixel_value
        else:
            rec[1:] = rng.integers(0, 256, size=CIFAR_RECORD_BYTES - 1)
        records.append(rec)
    np.concatenate(records).tofile(path)


def test_record_arithmetic_matches_published_layout(tmp_path):
    # 10000 records -> 30,730,000 bytes in the published batch layout
    assert 10000 * CIFAR_RECORD_BYTES == 30_730_000
    path = tmp_path / "batch.bin"
    write_batch(path, [0, 1, 2], rng=np.random.default_rng(0))
    ds = load_cifar10(path, 3, seed=0)
    assert ds.n == 3 and ds.m == 3072 and ds.k == 10


def test_one_hot_minus_tenth(tmp_path):
    path = tmp_path / "batch.bin"
    write_batch(path, [3], pixel_value=0)
    ds = load_cifar10(path, 1, seed=0)
    row = ds.targets[0]
    assert row[3] == pytest.approx(0.9)
    assert np.all(row[np.arange(10) != 3] == pytest.approx(-0.1))
    # one-hot minus 1/10 sums to zero up to ulps
    assert abs(row.sum()) < 1e-15


def test_pixel_affine_endpoints(tmp_path):
    lo = tmp_path / "lo.bin"
    hi = tmp_path / "hi.bin"
    write_batch(lo, [0], pixel_value=0)
    write_batch(hi, [0], pixel_value=255)
    assert np.all(load_cifar10(lo, 1, seed=0).inputs == -0.5)
    assert np.all(load_cifar10(hi, 1, seed=0).inputs == 0.5)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    with open(path, "wb") as fh:
        fh.write(b"\0" * (CIFAR_RECORD_BYTES + 1))
    with pytest.raises(DataFormatError):
        load_cifar10(path, 1, seed=0)


def test_bad_label_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    write_batch(path, [10], pixel_value=0)
    with pytest.raises(CorruptRecordError):
        load_cifar10(path, 1, seed=0)


def test_oversized_request_rejected(tmp_path):
    path = tmp_path / "batch.bin"
    write_batch(path, [0, 1], pixel_value=0)
    with pytest.raises(IndexError):
        load_cifar10(path, 3, seed=0)


def test_subsample_reproducible_and_without_replacement(tmp_path):
    path = tmp_path / "batch.bin"
    rng = np.random.default_rng(1)
    # distinct pixel fills identify records
    records = []
    for i in range(20):
        rec = np.full(CIFAR_RECORD_BYTES, i, dtype=np.uint8)
        rec[0] = i % 10
        records.append(rec)
    np.concatenate(records).tofile(path)

    a = load_cifar10(path, 8, seed=42)
    b = load_cifar10(path, 8, seed=42)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)
    ids = np.round((a.inputs[:, 0] + 0.5) * 255).astype(int)
    assert len(set(ids.tolist())) == 8


def test_synthetic_deterministic():
    a = synthetic_regression(4, 2, 1, seed=7)
    b = synthetic_regression(4, 2, 1, seed=7)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)


def test_synthetic_minimal_shape():
    ds = synthetic_regression(1, 1, 1, seed=0)
    assert ds.inputs.shape == (1, 1) and ds.targets.shape == (1, 1)
    assert np.isfinite(ds.inputs).all()


def test_synthetic_mean_near_zero():
    ds = synthetic_regression(100_000, 1, 1, seed=3)
    assert abs(ds.inputs.mean()) < 0.02


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([[0.0]]))
    with pytest.raises(ValueError):
        Dataset(np.array([[0.0]]), np.array([[1.0], [2.0]]))
