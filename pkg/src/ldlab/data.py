"""Deterministic synthetic image classification data.

Each class gets a fixed seed-derived texture patch anchored at a
class-specific, quadrant-biased grid position; samples are jittered copies
of that patch plus Gaussian pixel noise. Because class evidence lives in a
localized region, rectangle-based augmentation patches carry class signal,
and with zero noise the data is separable by construction.

Class difficulty is deliberately uneven: classes alternate between an outer
and an inner anchor ring, and patch amplitudes vary per class, so per-class
losses spread out the way they do on natural data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StateError
from .rng import Prng

PATCH_FRACTION = 0.55   # patch side as a fraction of the grid
OUTER_RING = 0.30       # anchor radius for even classes, fraction of grid
INNER_RING = 0.14       # anchor radius for odd classes (closer together: harder)
AMPLITUDE_RANGE = (0.9, 1.8)


@dataclass
class DatasetSpec:
    classes: int
    n_train: int
    n_val: int
    n_test: int
    noise_sigma: float = 0.5
    seed: int = 0
    grid: int = 16
    channels: int = 1
    jitter: int = 2

    def validate(self) -> None:
        if self.grid < 8:
            raise ConfigError(f"grid must be >= 8, got {self.grid}")
        if self.channels != 1:
            raise ConfigError("only single-channel data is supported")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 <= self.jitter < self.grid:
            raise ConfigError("jitter must be in [0, grid)")

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "grid": self.grid,
            "channels": self.channels,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class Split:
    images: np.ndarray  # (n, 1, G, G) float32
    labels: np.ndarray  # (n,) int64

    @property
    def n(self) -> int:
        return self.images.shape[0]


class GuardedSplit:
    """Holds the test split behind an access lock so the experiment runner
    can assert it is never read before the final evaluation."""

    def __init__(self, split: Split):
        self._split = split
        self._unlocked = False

    def unlock(self) -> Split:
        self._unlocked = True
        return self._split

    @property
    def unlocked(self) -> bool:
        return self._unlocked

    @property
    def images(self) -> np.ndarray:
        return self._access().images

    @property
    def labels(self) -> np.ndarray:
        return self._access().labels

    @property
    def n(self) -> int:
        return self._split.n

    def _access(self) -> Split:
        if not self._unlocked:
            raise StateError("test split accessed before it was unlocked for final evaluation")
        return self._split


@dataclass
class Dataset:
    spec: DatasetSpec
    train: Split
    val: Split
    test: GuardedSplit = field(repr=False)


def stratified_counts(n: int, classes: int) -> list[int]:
    """Per-class sample counts within +-1 of n / classes."""
    base, extra = divmod(n, classes)
    return [base + (1 if k < extra else 0) for k in range(classes)]


def class_templates(spec: DatasetSpec) -> np.ndarray:
    """(K, G, G) fixed class textures, deterministic in the dataset seed."""
    rng = Prng(spec.seed).derive("templates")
    g = spec.grid
    patch = max(4, int(round(g * PATCH_FRACTION)))
    templates = np.zeros((spec.classes, g, g), dtype=np.float64)
    for k in range(spec.classes):
        angle = 2.0 * math.pi * k / spec.classes
        ring = OUTER_RING if k % 2 == 0 else INNER_RING
        cy = g / 2 + ring * g * math.sin(angle)
        cx = g / 2 + ring * g * math.cos(angle)
        amp_lo, amp_hi = AMPLITUDE_RANGE
        amplitude = amp_lo + (amp_hi - amp_lo) * rng.uniform()
        texture = rng.normal(size=(patch, patch))
        texture *= amplitude / math.sqrt(float(np.mean(texture**2)))
        r0 = int(round(cy - patch / 2))
        c0 = int(round(cx - patch / 2))
        rr0, cc0 = max(r0, 0), max(c0, 0)
        rr1, cc1 = min(r0 + patch, g), min(c0 + patch, g)
        templates[k, rr0:rr1, cc0:cc1] = texture[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0]
    return templates


def _make_split(spec: DatasetSpec, templates: np.ndarray, n: int, rng: Prng) -> Split:
    g = spec.grid
    counts = stratified_counts(n, spec.classes)
    images = np.empty((n, 1, g, g), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    pos = 0
    for k, count in enumerate(counts):
        for _ in range(count):
            dy = int(rng.integers(-spec.jitter, spec.jitter + 1)) if spec.jitter else 0
            dx = int(rng.integers(-spec.jitter, spec.jitter + 1)) if spec.jitter else 0
            img = np.roll(templates[k], (dy, dx), axis=(0, 1))
            if spec.noise_sigma > 0:
                img = img + rng.normal(size=(g, g), scale=spec.noise_sigma)
            images[pos, 0] = img.astype(np.float32)
            labels[pos] = k
            pos += 1
    order = rng.permutation(n)
    return Split(images=images[order], labels=labels[order])


def gen_synth(spec: DatasetSpec) -> Dataset:
    """Generate the three disjoint splits. Byte-identical output per seed."""
    spec.validate()
    templates = class_templates(spec)
    train = _make_split(spec, templates, spec.n_train, Prng(spec.seed).derive("train"))
    val = _make_split(spec, templates, spec.n_val, Prng(spec.seed).derive("val"))
    test = _make_split(spec, templates, spec.n_test, Prng(spec.seed).derive("test"))
    return Dataset(spec=spec, train=train, val=val, test=GuardedSplit(test))
