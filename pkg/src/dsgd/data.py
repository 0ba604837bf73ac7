"""Dataset ingestion: IDX files and seeded synthetic generators."""

from __future__ import annotations

import os
import struct

import numpy as np

from .duality import NormTag
from .network import Dataset, NetworkArch, forward_batch, init_params

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    """Malformed IDX input (bad magic, truncation, count or label range)."""


def _read_exact(f, n: int, what: str) -> bytes:
    # compare against the file size first: a corrupt header can declare a
    # payload too large to even attempt reading
    remaining = os.fstat(f.fileno()).st_size - f.tell()
    if remaining < n:
        raise IdxError(
            f"truncated file: expected {n} bytes for {what}, {remaining} available"
        )
    buf = f.read(n)
    if len(buf) != n:
        raise IdxError(f"truncated file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def load_idx(images_path: str, labels_path: str, n_out: int) -> Dataset:
    """Read big-endian IDX image/label files into a dataset.

    Pixels are scaled to [0, 1]; labels become one-hot vectors of length
    n_out.  The image and label counts must agree and every label must be
    below n_out.
    """
    with open(images_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, "images magic"))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxError(
                f"bad magic 0x{magic:08x} in {images_path} "
                f"(expected 0x{IDX_IMAGES_MAGIC:08x} for images)"
            )
        count, rows, cols = struct.unpack(">III", _read_exact(f, 12, "images header"))
        if count < 1 or rows < 1 or cols < 1:
            raise IdxError(
                f"degenerate image dimensions in {images_path}: "
                f"{count} images of {rows}x{cols}"
            )
        raw = _read_exact(f, count * rows * cols, f"{count} images of {rows}x{cols}")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, "labels magic"))
        if magic != IDX_LABELS_MAGIC:
            raise IdxError(
                f"bad magic 0x{magic:08x} in {labels_path} "
                f"(expected 0x{IDX_LABELS_MAGIC:08x} for labels)"
            )
        (label_count,) = struct.unpack(">I", _read_exact(f, 4, "labels header"))
        labels = np.frombuffer(_read_exact(f, label_count, "labels"), dtype=np.uint8)

    if label_count != count:
        raise IdxError(f"count mismatch: {count} images but {label_count} labels")
    if labels.size and int(labels.max()) >= n_out:
        raise IdxError(f"label {int(labels.max())} out of range for {n_out} outputs")

    inputs = pixels.astype(float) / 255.0
    targets = np.zeros((count, n_out))
    targets[np.arange(count), labels] = 1.0
    return Dataset(inputs, targets)


GENERATORS = ("teacher", "clusters")


def teacher_params(seed: int, arch: NetworkArch):
    """The exact teacher weights behind `synthetic_dataset("teacher", seed, ..)`.

    Training a network of the same architecture to these weights gives
    zero empirical error on that dataset.
    """
    rng = np.random.default_rng([seed, GENERATORS.index("teacher")])
    return init_params(arch, rng, scale=1.0)


def synthetic_dataset(generator: str, seed: int, m: int, arch: NetworkArch) -> Dataset:
    """Deterministic synthetic data matching the input/target bounds.

    "teacher": inputs U(-1, 1), targets the outputs of a randomly weighted
    network of the same architecture (clipped to [0, 1], a no-op for
    sigmoid), so the data is realizable.  "clusters": two Gaussian blobs
    clipped into [-1, 1] with one-hot targets on the first two outputs.
    """
    if m < 1:
        raise ValueError("need at least one example")
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r} (expected one of {GENERATORS})")
    rng = np.random.default_rng([seed, GENERATORS.index(generator)])
    if generator == "teacher":
        teacher = init_params(arch, rng, scale=1.0)
        inputs = rng.uniform(-1.0, 1.0, (m, arch.n_in))
        targets = np.clip(forward_batch(teacher, inputs)[-1], 0.0, 1.0)
        return Dataset(inputs, targets)
    if generator == "clusters":
        if arch.n_out < 2:
            raise ValueError("cluster targets need at least two outputs")
        labels = rng.integers(0, 2, size=m)
        centers = np.zeros((2, arch.n_in))
        centers[0, : arch.n_in] = 0.5
        centers[1, : arch.n_in] = -0.5
        inputs = np.clip(
            centers[labels] + rng.normal(0.0, 0.3, (m, arch.n_in)), -1.0, 1.0
        )
        targets = np.zeros((m, arch.n_out))
        targets[np.arange(m), labels] = 1.0
        return Dataset(inputs, targets)
    raise AssertionError("unreachable")
