"""Supervision targets: hard labels, smoothed labels, temperature-softened
teacher outputs, teacher ensembles and multi-teacher sums, stochastic-dropout
labels, and per-class overfitting weights.

Teacher-derived label rows are produced in float64 and returned as float32,
the same precision the on-disk label cache uses, so the cached-offline path
and the recomputed-online path yield bit-identical values for identical
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, StateError
from .nn import Dropout, Network, forward, soft_ce, softmax_stable
from .nn.network import batched_logits
from .rng import Prng


class LabelMode(Enum):
    """The eleven supervision recipes the experiment runner can execute."""

    VANILLA = "vanilla"
    LABEL_SMOOTHING = "label-smoothing"
    KD = "kd"
    OFF_LDL = "off-ldl"
    OFF_EN_LDL = "off-en-ldl"
    OFF_MT_LDL = "off-mt-ldl"
    ON_LDL = "on-ldl"
    ON_EN_LDL = "on-en-ldl"
    ON_MT_LDL = "on-mt-ldl"
    MCDO = "mcdo"
    OGR = "ogr"

    @property
    def needs_teachers(self) -> bool:
        return self not in (LabelMode.VANILLA, LabelMode.LABEL_SMOOTHING, LabelMode.OGR)

    @property
    def is_offline_ldl(self) -> bool:
        return self in (LabelMode.OFF_LDL, LabelMode.OFF_EN_LDL, LabelMode.OFF_MT_LDL)

    @property
    def is_online_ldl(self) -> bool:
        return self in (LabelMode.ON_LDL, LabelMode.ON_EN_LDL, LabelMode.ON_MT_LDL)

    @property
    def is_multi_teacher(self) -> bool:
        return self in (LabelMode.OFF_MT_LDL, LabelMode.ON_MT_LDL)


@dataclass
class ModeParams:
    """Mode-specific knobs with their documented defaults."""

    smoothing_alpha: float = 0.1  # label smoothing coefficient
    kd_lambda: float = 0.1       # distillation mixing weight
    kd_tau: float = 3.0          # distillation softening temperature
    mcdo_rate: float = 0.2       # dropout rate for stochastic-inference labels
    mcdo_passes: int = 20        # stochastic passes averaged per label
    ogr_gap: int = 10            # epoch gap for overfitting-ratio refresh

    def validate(self) -> None:
        if not 0.0 <= self.smoothing_alpha < 1.0:
            raise DomainError(f"smoothing_alpha must be in [0, 1), got {self.smoothing_alpha}")
        if not 0.0 <= self.kd_lambda <= 1.0:
            raise DomainError(f"kd_lambda must be in [0, 1], got {self.kd_lambda}")
        if self.kd_tau <= 0:
            raise DomainError(f"kd_tau must be positive, got {self.kd_tau}")
        if not 0.0 <= self.mcdo_rate < 1.0:
            raise DomainError(f"mcdo_rate must be in [0, 1), got {self.mcdo_rate}")
        if self.mcdo_passes < 1:
            raise DomainError(f"mcdo_passes must be >= 1, got {self.mcdo_passes}")
        if self.ogr_gap < 1:
            raise DomainError(f"ogr_gap must be >= 1, got {self.ogr_gap}")


@dataclass
class TeacherBank:
    """Trained teacher networks evaluated in eval mode, with a shared
    softening temperature applied to their outputs."""

    teachers: list[Network]
    temperature: float = 1.0

    def __post_init__(self):
        if not self.teachers:
            raise ConfigError("teacher bank is empty")
        if self.temperature <= 0:
            raise DomainError(f"temperature must be positive, got {self.temperature}")
        k0 = self.teachers[0].num_classes
        shape0 = self.teachers[0].input_shape
        for i, t in enumerate(self.teachers):
            if t.num_classes != k0 or t.input_shape != shape0:
                raise ConfigError(f"teacher {i} disagrees on class count or input shape")

    @property
    def num_classes(self) -> int:
        return self.teachers[0].num_classes

    def __len__(self) -> int:
        return len(self.teachers)


# -- elementary label constructors ----------------------------------------


def one_hot(class_index: int, num_classes: int) -> np.ndarray:
    if not 0 <= class_index < num_classes:
        raise IndexError(f"class {class_index} out of range for {num_classes} classes")
    v = np.zeros(num_classes, dtype=np.float64)
    v[class_index] = 1.0
    return v


def one_hot_rows(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise IndexError(f"labels out of range for {num_classes} classes")
    rows = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    rows[np.arange(labels.shape[0]), labels] = 1.0
    return rows


def smooth(y: np.ndarray, alpha: float) -> np.ndarray:
    """Smoothed one-hot rows: 1-alpha on the target, alpha/(K-1) elsewhere."""
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must be in [0, 1), got {alpha}")
    y = np.asarray(y, dtype=np.float64)
    k = y.shape[-1]
    if k == 1:
        if alpha > 0:
            raise DomainError("cannot smooth with a single class")
        return y.copy()
    off = alpha / (k - 1)
    return np.where(y == 1.0, 1.0 - alpha, off)


def soften(logits: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-softened softmax: softmax(logits / tau)."""
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    return softmax_stable(np.asarray(logits, dtype=np.float64) / tau)


def kd_total_loss(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    y: np.ndarray,
    lam: float,
    tau: float,
) -> float:
    """Distillation objective: (1-lam) * CE(y, softmax(student))
    + lam * CE(soften(teacher, tau), soften(student, tau)). No extra
    temperature-squared factor is applied."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lam must be in [0, 1], got {lam}")
    hard = soft_ce(softmax_stable(student_logits), np.asarray(y, dtype=np.float64))
    soft = soft_ce(soften(student_logits, tau), soften(teacher_logits, tau))
    return (1.0 - lam) * hard + lam * soft


# -- teacher-derived labels ------------------------------------------------


def _softened_rows(net: Network, images: np.ndarray, tau: float) -> np.ndarray:
    return soften(batched_logits(net, images), tau).astype(np.float32)


def per_teacher_labels(bank: TeacherBank, images: np.ndarray) -> list[np.ndarray]:
    """Softened output rows of every teacher, in bank order."""
    return [_softened_rows(t, images, bank.temperature) for t in bank.teachers]


def offline_labels(bank: TeacherBank, images: np.ndarray, mode: str = "single") -> np.ndarray:
    """Label rows for a fixed dataset: teacher 1's softened output, or the
    arithmetic mean over the bank for mode="ensemble"."""
    if mode == "single":
        return _softened_rows(bank.teachers[0], images, bank.temperature)
    if mode == "ensemble":
        if len(bank) == 1:
            return _softened_rows(bank.teachers[0], images, bank.temperature)
        acc = np.zeros((images.shape[0], bank.num_classes), dtype=np.float64)
        for t in bank.teachers:
            acc += _softened_rows(t, images, bank.temperature).astype(np.float64)
        return (acc / len(bank)).astype(np.float32)
    raise ConfigError(f"mode must be 'single' or 'ensemble', got {mode!r}")


def online_label(bank: TeacherBank, blended_batch: np.ndarray, mode: str = "single") -> np.ndarray:
    """Label rows regenerated for an augmented batch. Teacher evaluation is
    pure, so identical batches yield identical rows."""
    return offline_labels(bank, blended_batch, mode)


def mt_loss(student_probs: np.ndarray, teacher_labels: list[np.ndarray]) -> float:
    """Literal sum of cross-entropy terms over the teacher labels, with no
    normalization by the number of teachers."""
    if not teacher_labels:
        raise ConfigError("mt_loss needs at least one teacher label set")
    p = np.asarray(student_probs, dtype=np.float64)
    total = 0.0
    for z in teacher_labels:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != p.shape:
            raise DimensionError(f"teacher labels shape {z.shape} != probs shape {p.shape}")
        total += soft_ce(p, z)
    return total


def mcdo_label(
    teacher: Network,
    x: np.ndarray,
    rate: float,
    passes: int,
    rng: Prng,
) -> np.ndarray:
    """Mean softmax output over `passes` stochastic forward passes with
    dropout active at inference, its rate overridden to `rate`."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"rate must be in [0, 1), got {rate}")
    if passes < 1:
        raise DomainError(f"passes must be >= 1, got {passes}")
    if not any(isinstance(l, Dropout) for l in teacher.layers):
        raise ConfigError("mcdo labels need a teacher with dropout layers")
    if rate == 0.0:
        # all passes are the deterministic eval output; skip the redundant averaging
        logits, _ = forward(teacher, x, mode="eval")
        return softmax_stable(logits).astype(np.float32)
    acc = np.zeros((x.shape[0], teacher.num_classes), dtype=np.float64)
    for _ in range(passes):
        logits, _ = forward(teacher, x, mode="eval", mcdo=True, rng=rng, mcdo_rate=rate)
        acc += softmax_stable(logits)
    return (acc / passes).astype(np.float32)


def ogr(
    per_class_train_losses,
    per_class_val_losses,
    epoch: int,
    gap: int,
    eps: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class overfitting-to-generalization ratio between `epoch` and
    `epoch + gap`:

        ((val2 - train2) - (val1 - train1))^2 / max(eps, |val2 - val1|)

    Returns (raw ratios, ratios normalized to mean 1 for loss weighting).
    """
    train = np.asarray(per_class_train_losses, dtype=np.float64)
    val = np.asarray(per_class_val_losses, dtype=np.float64)
    if train.ndim != 2 or val.shape != train.shape:
        raise DimensionError("loss histories must be matching (epochs, classes) arrays")
    later = epoch + gap
    if epoch < 0 or later >= train.shape[0]:
        raise StateError(
            f"loss history covers epochs [0, {train.shape[0] - 1}], need {epoch} and {later}"
        )
    gap_change = (val[later] - train[later]) - (val[epoch] - train[epoch])
    denom = np.maximum(eps, np.abs(val[later] - val[epoch]))
    raw = gap_change**2 / denom
    mean = raw.mean()
    weights = raw / mean if mean > eps else np.ones_like(raw)
    return raw, weights
