import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import synthetic_images
from localvis.data import (
    RECORD_BYTES,
    Dataset,
    balanced_subset,
    decode_records,
    encode_records,
    epoch_order,
    load_cifar,
    philox_permutation,
    read_cifar_file,
    split_and_shuffle,
    split_indices,
    updates_per_epoch,
    write_cifar_file,
)
from localvis.exceptions import FormatError, InputValidationError

MASK = (1 << 64) - 1


def _philox4x64(counter, key, rounds=10):
    """Reference Philox4x64-10 block function in plain integers."""
    x = list(counter)
    k0, k1 = key
    for _ in range(rounds):
        p0, p1 = 0xD2E7470EE14C6C93 * x[0], 0xCA5A826395121157 * x[2]
        x = [(p1 >> 64) ^ x[1] ^ k0, p1 & MASK, (p0 >> 64) ^ x[3] ^ k1, p0 & MASK]
        k0, k1 = (k0 + 0x9E3779B97F4A7C15) & MASK, (k1 + 0xBB67AE8584CAA73B) & MASK
    return x


def _reference_permutation(n, seed, stream):
    words = []
    block = 1
    while len(words) < 2 * n:
        words += _philox4x64([block, 0, 0, 0], (seed, stream))
        block += 1
    perm, pos, extra = list(range(n)), 0, n - 1
    for i in range(n - 1, 0, -1):
        m = i + 1
        r = words[pos]
        pos += 1
        while r >= (1 << 64) - ((1 << 64) % m):
            r, extra = words[extra], extra + 1
        j = r % m
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@pytest.mark.parametrize("n,seed,epoch", [(10, 0, 1), (257, 42, 3), (2, 7, 0)])
def test_permutation_matches_portable_reference(n, seed, epoch):
    assert philox_permutation(n, seed, epoch).tolist() == _reference_permutation(n, seed, epoch)


GOLDEN_ORDER = [6, 2, 1, 4, 0, 3, 7, 5, 9, 8]


def test_permutation_golden():
    assert epoch_order(10, 0, 1).tolist() == _reference_permutation(10, 0, 1)
    assert epoch_order(10, 0, 1).tolist() == GOLDEN_ORDER


def test_same_seed_same_order_different_seed_differs():
    assert np.array_equal(epoch_order(1000, 3, 2), epoch_order(1000, 3, 2))
    assert not np.array_equal(epoch_order(1000, 0, 1)[:100], epoch_order(1000, 1, 1)[:100])
    assert not np.array_equal(epoch_order(1000, 0, 1), epoch_order(1000, 0, 2))


@settings(max_examples=30)
@given(st.integers(0, 300), st.integers(0, 2**32), st.integers(0, 50))
def test_permutation_is_a_permutation(n, seed, epoch):
    assert sorted(philox_permutation(n, seed, epoch).tolist()) == list(range(n))


def test_split_sizes_and_disjointness():
    tr, va = split_indices(50_000, 0, 0.10)
    assert len(tr) == 45_000 and len(va) == 5_000
    assert not np.intersect1d(tr, va).size and len(np.union1d(tr, va)) == 50_000
    tr2, va2 = split_indices(50_000, 0, 0.10)
    assert np.array_equal(va, va2)


def test_updates_per_epoch():
    assert updates_per_epoch(50_000, 4) == 12_500
    assert updates_per_epoch(50_000, 32) == 1_562


def test_balanced_subset_counts():
    ds = synthetic_images(200, seed=1)
    sub = balanced_subset(ds, 53, seed=0)
    counts = np.bincount(sub.labels, minlength=10)
    assert len(sub) == 53 and counts.max() - counts.min() <= 1
    assert np.array_equal(balanced_subset(ds, 53, 0).indices, sub.indices)
    with pytest.raises(InputValidationError):
        balanced_subset(ds, 500, 0)


def test_split_and_shuffle_batches():
    ds = synthetic_images(40)
    train, val, batches = split_and_shuffle(ds, 0, 0.25)
    assert len(train) == 30 and len(val) == 10
    got = list(batches(1, 8))
    assert len(got) == 3 and all(len(b) == 8 for b in got)


def test_record_sizes():
    assert RECORD_BYTES == {"cifar10": 3073, "cifar100": 3074}


def test_cifar10_roundtrip_bit_exact(tmp_path):
    ds = synthetic_images(25, seed=3)
    path = tmp_path / "data_batch_1.bin"
    write_cifar_file(path, ds)
    assert path.stat().st_size == 25 * 3073
    back = read_cifar_file(path, "cifar10", expected_records=25)
    assert np.array_equal(back.images, ds.images) and np.array_equal(back.labels, ds.labels)
    assert path.read_bytes() == encode_records(back)


def test_record_layout_is_label_then_planes():
    img = np.zeros((1, 32, 32, 3), dtype=np.uint8)
    img[0, 0, 1, 0] = 11  # red plane, row 0, col 1
    img[0, 0, 0, 2] = 22  # blue plane, row 0, col 0
    blob = encode_records(Dataset(img, np.array([7])))
    assert blob[0] == 7 and blob[1 + 1] == 11 and blob[1 + 2048] == 22


def test_cifar100_records(tmp_path):
    ds = synthetic_images(12, seed=4, n_classes=100)
    ds = Dataset(ds.images, ds.labels, "cifar100", coarse=ds.labels % 20)
    path = tmp_path / "train.bin"
    write_cifar_file(path, ds)
    assert path.stat().st_size == 12 * 3074
    back = read_cifar_file(path, "cifar100")
    assert np.array_equal(back.labels, ds.labels) and np.array_equal(back.coarse, ds.coarse)
    with pytest.raises(FormatError):
        read_cifar_file(path, "cifar10")  # 12 * 3074 is not a multiple of 3073


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "x.bin"
    write_cifar_file(path, synthetic_images(3))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(FormatError):
        read_cifar_file(path, "cifar10")
    with pytest.raises(FormatError, match="expected 30730000 bytes"):
        read_cifar_file(path, "cifar10", expected_records=10_000)


def test_bad_label_byte():
    blob = bytearray(encode_records(synthetic_images(1)))
    blob[0] = 10
    with pytest.raises(FormatError):
        decode_records(bytes(blob), "cifar10")


def test_load_directory(synthetic_dir):
    train, test = load_cifar(synthetic_dir, strict=False)
    assert len(train) == 200 and len(test) == 60
    assert train.labels.min() >= 0 and train.labels.max() <= 9
    with pytest.raises(FormatError):
        load_cifar(synthetic_dir, strict=True)


def test_missing_directory(tmp_path):
    with pytest.raises(FormatError, match="missing"):
        load_cifar(tmp_path)
