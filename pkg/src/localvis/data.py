"""CIFAR binary files and the seeded sample orders built on them.

Shuffles use Philox4x64-10 keyed by the two 64-bit words ``(seed, epoch)``.
The 256-bit counter starts at zero and is incremented before each block,
so the first four raw words come from counter 1.  A permutation of ``n``
items is a Fisher-Yates pass from ``i = n-1`` down to ``1``.  The first
``n-1`` raw words serve the steps in order; step ``i`` swaps position ``i``
with ``word mod (i+1)``.  A word at or above ``2**64 - (2**64 mod (i+1))``
is rejected and replaced by the next unused word after those ``n-1``.
Any Philox implementation reproduces the same order from the same seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FormatError, InputValidationError

PIXELS = 3072
RECORD_BYTES = {"cifar10": 1 + PIXELS, "cifar100": 2 + PIXELS}
N_CLASSES = {"cifar10": 10, "cifar100": 100}
N_COARSE = 20

CIFAR10_TRAIN = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR10_TEST = ("test_batch.bin",)
CIFAR100_TRAIN = ("train.bin",)
CIFAR100_TEST = ("test.bin",)
STANDARD_RECORDS = {
    **{name: 10_000 for name in CIFAR10_TRAIN + CIFAR10_TEST},
    "train.bin": 50_000,
    "test.bin": 10_000,
}
# sub-directories the official archives unpack into
ARCHIVE_DIRS = {"cifar10": "cifar-10-batches-bin", "cifar100": "cifar-100-binary"}

SPLIT_TAG = 1 << 63
SUBSET_TAG = (1 << 63) + 1
_TWO64 = 1 << 64


@dataclass
class Dataset:
    images: np.ndarray  # (N, 32, 32, 3) uint8
    labels: np.ndarray  # (N,) fine labels
    variant: str = "cifar10"
    coarse: np.ndarray | None = None
    split: str = "train"
    indices: np.ndarray | None = field(default=None, repr=False)  # positions in the source

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1:] != (32, 32, 3):
            raise InputValidationError(f"images must be (N, 32, 32, 3), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise InputValidationError("one label per image is required")
        if self.indices is None:
            self.indices = np.arange(len(self.labels))

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self):
        return N_CLASSES[self.variant]

    def take(self, idx, split=None):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.images[idx],
            self.labels[idx],
            self.variant,
            None if self.coarse is None else self.coarse[idx],
            split or self.split,
            self.indices[idx],
        )

    def as_float(self):
        """Pixels scaled to [0, 1]."""
        return self.images.astype(np.float64) / 255.0


def decode_records(blob, variant, name="<bytes>"):
    rec = RECORD_BYTES[variant]
    if len(blob) % rec:
        raise FormatError(f"{name}: {len(blob)} bytes is not a whole number of {rec}-byte records")
    arr = np.frombuffer(blob, dtype=np.uint8).reshape(-1, rec)
    n_lab = rec - PIXELS
    labels = arr[:, n_lab - 1].astype(np.int64)
    coarse = arr[:, 0].astype(np.int64) if n_lab == 2 else None
    if labels.size and labels.max() >= N_CLASSES[variant]:
        raise FormatError(f"{name}: label {labels.max()} outside [0, {N_CLASSES[variant] - 1}]")
    if coarse is not None and coarse.size and coarse.max() >= N_COARSE:
        raise FormatError(f"{name}: coarse label {coarse.max()} outside [0, {N_COARSE - 1}]")
    # channel planes (R, G, B), each 32 x 32 row-major
    images = arr[:, n_lab:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).copy()
    return images, labels, coarse


def encode_records(ds: Dataset):
    planes = ds.images.transpose(0, 3, 1, 2).reshape(len(ds), PIXELS)
    if ds.variant == "cifar100":
        coarse = np.zeros(len(ds), dtype=np.uint8) if ds.coarse is None else ds.coarse.astype(np.uint8)
        head = np.stack([coarse, ds.labels.astype(np.uint8)], axis=1)
    else:
        head = ds.labels.astype(np.uint8)[:, None]
    return np.concatenate([head, planes.astype(np.uint8)], axis=1).tobytes()


def read_cifar_file(path, variant, expected_records=None):
    """Parse one binary file; ``expected_records`` pins the exact size."""
    rec = RECORD_BYTES[variant]
    size = os.path.getsize(path)
    if expected_records is not None and size != expected_records * rec:
        raise FormatError(
            f"{path}: expected {expected_records * rec} bytes ({expected_records} records of {rec}), "
            f"found {size}"
        )
    with open(path, "rb") as fh:
        images, labels, coarse = decode_records(fh.read(), variant, str(path))
    return Dataset(images, labels, variant, coarse)


def write_cifar_file(path, ds: Dataset):
    with open(path, "wb") as fh:
        fh.write(encode_records(ds))


def _concat(parts, variant, split):
    coarse = None if parts[0].coarse is None else np.concatenate([p.coarse for p in parts])
    return Dataset(
        np.concatenate([p.images for p in parts]),
        np.concatenate([p.labels for p in parts]),
        variant,
        coarse,
        split,
    )


def resolve_dir(path, variant):
    """Accept either the archive's directory or its parent."""
    sub = os.path.join(path, ARCHIVE_DIRS[variant])
    return sub if os.path.isdir(sub) else path


def load_cifar(path, variant="cifar10", strict=True):
    """Load ``(train, test)`` from a directory of CIFAR binary files.

    With ``strict`` the files must have the official record counts;
    otherwise any whole number of records is accepted (used for small
    synthetic fixtures).
    """
    if variant not in RECORD_BYTES:
        raise InputValidationError(f"unknown CIFAR variant {variant!r}")
    path = resolve_dir(path, variant)
    train_names, test_names = (
        (CIFAR10_TRAIN, CIFAR10_TEST) if variant == "cifar10" else (CIFAR100_TRAIN, CIFAR100_TEST)
    )
    out = []
    for names, split in ((train_names, "train"), (test_names, "test")):
        parts = []
        for name in names:
            fp = os.path.join(path, name)
            if not os.path.isfile(fp):
                raise FormatError(f"missing CIFAR file {fp}")
            parts.append(read_cifar_file(fp, variant, STANDARD_RECORDS[name] if strict else None))
        out.append(_concat(parts, variant, split))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# counter-based shuffling


def philox_words(seed, stream):
    key = np.array([int(seed) % _TWO64, int(stream) % _TWO64], dtype=np.uint64)
    return np.random.Philox(key=key)


def philox_permutation(n, seed, stream):
    """Fisher-Yates permutation of ``range(n)`` driven by raw Philox words."""
    bg = philox_words(seed, stream)
    perm = np.arange(n, dtype=np.int64)
    if n < 2:
        return perm
    draws = bg.random_raw(n - 1)  # one word per step; rejections draw extra
    pos = 0
    for i in range(n - 1, 0, -1):
        m = i + 1
        limit = _TWO64 - (_TWO64 % m)
        r = int(draws[pos])
        pos += 1
        while r >= limit:
            r = int(bg.random_raw())
        j = r % m
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def epoch_order(n, seed, epoch):
    return philox_permutation(n, seed, epoch)


def split_indices(n, seed, val_fraction=0.10):
    """Seed-stable disjoint ``(train_idx, val_idx)``: the last
    ``round(n * val_fraction)`` positions of the permuted order are validation."""
    if not 0.0 <= val_fraction < 1.0:
        raise InputValidationError("val_fraction must be in [0, 1)")
    perm = philox_permutation(n, seed, SPLIT_TAG)
    n_train = n - int(round(n * val_fraction))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_train_val(ds: Dataset, seed, val_fraction=0.10):
    tr, va = split_indices(len(ds), seed, val_fraction)
    return ds.take(tr, "train"), ds.take(va, "val")


def balanced_subset(ds: Dataset, n, seed, n_classes=None):
    """Class-stratified subset of size ``n``: per-class counts differ by at most one."""
    n_classes = ds.n_classes if n_classes is None else n_classes
    if n > len(ds):
        raise InputValidationError(f"subset of {n} requested from {len(ds)} samples")
    perm = philox_permutation(len(ds), seed, SUBSET_TAG)
    base, extra = divmod(n, n_classes)
    labels = ds.labels[perm]
    chosen = []
    for c in range(n_classes):
        want = base + (1 if c < extra else 0)
        pool = perm[labels == c]
        if len(pool) < want:
            raise InputValidationError(f"class {c} has {len(pool)} samples, {want} needed")
        chosen.append(pool[:want])
    return ds.take(np.sort(np.concatenate(chosen)))


def split_and_shuffle(ds: Dataset, seed, val_fraction=0.10):
    """``(train, val, batches)`` where ``batches(epoch, batch_size)`` yields
    index arrays into ``train`` (last partial batch dropped)."""
    train, val = split_train_val(ds, seed, val_fraction)

    def batches(epoch, batch_size):
        order = epoch_order(len(train), seed, epoch)
        for start in range(0, len(order) - batch_size + 1, batch_size):
            yield order[start : start + batch_size]

    return train, val, batches


def updates_per_epoch(n, batch_size):
    return n // batch_size
