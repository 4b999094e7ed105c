"""Datasets for desk-scale supervised runs: synthetic oriented textures,
class-balanced subsampling, and the standard CIFAR-10 binary batch format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientSamples(ValueError):
    """A requested subset is larger than the available pool."""


@dataclass
class Dataset:
    """Images (B, n, n) or (B, c, n, n) with integer labels in [0, n_classes)."""

    images: np.ndarray
    labels: np.ndarray
    n_classes: int
    provenance: str = "synthetic"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels disagree on length")
        if self.labels.size and not (0 <= self.labels.min()
                                     and self.labels.max() < self.n_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.labels)


def synth_textures(n_classes: int, per_class: int, n: int, seed: int,
                   noise: float = 0.3, jitter: float = 1.0) -> Dataset:
    """Oriented-grating texture classes.

    Class c is a plane-wave grating at orientation c*pi/C plus a uniform
    jitter on [-pi/4C, pi/4C] (scaled by ``jitter``), frequency drawn from
    U[pi/4, 3pi/4], uniform random phase, and additive Gaussian pixel noise
    of standard deviation ``noise``.  Deterministic per seed; labels exactly
    balanced.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(101,)))
    coords = np.arange(n, dtype=float)
    uu, vv = np.meshgrid(coords, coords, indexing="ij")
    images = np.empty((n_classes * per_class, n, n))
    labels = np.empty(n_classes * per_class, dtype=np.int64)
    k = 0
    for c in range(n_classes):
        base = c * np.pi / n_classes
        for _ in range(per_class):
            ang = base + jitter * rng.uniform(-np.pi / (4 * n_classes),
                                              np.pi / (4 * n_classes))
            freq = rng.uniform(np.pi / 4, 3 * np.pi / 4)
            phase = rng.uniform(0, 2 * np.pi)
            img = np.cos(freq * (np.cos(ang) * uu + np.sin(ang) * vv) + phase)
            img += noise * rng.standard_normal((n, n))
            images[k] = img
            labels[k] = c
            k += 1
    return Dataset(images=images, labels=labels, n_classes=n_classes,
                   provenance="synthetic")


def subsample_dataset(ds: Dataset, size: int, seed: int) -> Dataset:
    """Class-balanced random subset, deterministic per seed.

    Each class contributes size // C samples; any remainder is spread over a
    seeded shuffle of the classes.  Raises InsufficientSamples when a class
    cannot fill its quota.
    """
    if size > len(ds):
        raise InsufficientSamples(f"requested {size} of {len(ds)} samples")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(202,)))
    quotas = np.full(ds.n_classes, size // ds.n_classes)
    extra = rng.permutation(ds.n_classes)[:size % ds.n_classes]
    quotas[extra] += 1
    chosen = []
    for c in range(ds.n_classes):
        pool = np.flatnonzero(ds.labels == c)
        if len(pool) < quotas[c]:
            raise InsufficientSamples(
                f"class {c} has {len(pool)} samples, needs {quotas[c]}")
        chosen.append(rng.choice(pool, size=quotas[c], replace=False))
    idx = np.concatenate(chosen)
    idx = idx[rng.permutation(len(idx))]
    return Dataset(images=ds.images[idx], labels=ds.labels[idx],
                   n_classes=ds.n_classes, provenance=ds.provenance)


CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 channel-major pixel bytes


def load_cifar10_batches(paths, color: str = "per-channel") -> Dataset:
    """Read CIFAR-10 binary batch files (3073-byte records, 10000 per file).

    ``color`` selects "per-channel" (images kept as (B, 3, 32, 32); the
    channels are pushed through the scattering transform as extra batch
    items and their features concatenated) or "luminance" (ITU-R 601 gray).
    """
    if color not in ("per-channel", "luminance"):
        raise ValueError(f"unknown color mode {color!r}")
    imgs, labels = [], []
    for path in paths:
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size % CIFAR_RECORD:
            raise ValueError(f"{path}: size {raw.size} is not a multiple of "
                             f"{CIFAR_RECORD}")
        rec = raw.reshape(-1, CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        imgs.append(rec[:, 1:].reshape(-1, 3, 32, 32).astype(float) / 255.0)
    images = np.concatenate(imgs)
    labels = np.concatenate(labels)
    if color == "luminance":
        images = (0.299 * images[:, 0] + 0.587 * images[:, 1]
                  + 0.114 * images[:, 2])
    return Dataset(images=images, labels=labels, n_classes=10,
                   provenance="cifar10-binary")
