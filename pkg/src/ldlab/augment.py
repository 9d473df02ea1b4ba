"""Label-coupled batch augmentation: mixup, cutmix, and four-patch cropping
(ricap), all expressed as one blending contract.

Every method returns a :class:`BlendResult` whose per-sample blending masks
tile the image exactly: reconstructed masks sum to 1 at every pixel, and for
the region-based methods each mixing weight equals the exact area fraction
its source contributes. Masks are stored as rectangle digests (painted in
order, later rectangles overwrite earlier ones) rather than dense fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .rng import Prng

# Defaults taken from each method's reference implementation.
DEFAULT_ALPHAS = {"mixup": 1.0, "cutmix": 1.0, "ricap": 0.3}
METHODS = ("none", "mixup", "cutmix", "ricap")

LOG4 = 1.3862943611198906
CHENG_C = 2.6094379124341003  # 1 + log 5


@dataclass
class AugmentConfig:
    method: str = "none"
    alpha: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"augment method must be one of {METHODS}, got {self.method!r}")
        if self.alpha is None:
            self.alpha = DEFAULT_ALPHAS.get(self.method, 1.0)
        if self.alpha <= 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")


# A digest rectangle: (row0, col0, row1, col1, weights-per-part). Painting a
# batch of these in order reproduces the dense blending masks exactly.
Rect = tuple[int, int, int, int, tuple[float, ...]]


@dataclass
class BlendResult:
    method: str
    x_hat: np.ndarray            # (N, C, H, W)
    y_hat: np.ndarray            # (N, K) reference mixed labels
    lambdas: np.ndarray          # (N, P) per-sample mixing weights
    partners: np.ndarray         # (N, P) source sample indices
    mask_digest: list[list[Rect]]

    @property
    def parts(self) -> int:
        return self.lambdas.shape[1]

    def masks(self, sample: int) -> np.ndarray:
        """Dense (P, H, W) blending masks for one sample, rebuilt from the digest."""
        h, w = self.x_hat.shape[2], self.x_hat.shape[3]
        return masks_from_digest(self.mask_digest[sample], self.parts, h, w)


def masks_from_digest(rects: list[Rect], parts: int, h: int, w: int) -> np.ndarray:
    masks = np.zeros((parts, h, w), dtype=np.float64)
    for r0, c0, r1, c1, weights in rects:
        for p, wt in enumerate(weights):
            masks[p, r0:r1, c0:c1] = wt
    return masks


def beta_sample(alpha: float, rng: Prng) -> float:
    """One draw from Beta(alpha, alpha).

    Uses Joehnk's algorithm for alpha <= 1 and Cheng's BB rejection method
    for alpha > 1, both driven by the package rng, so the stream is
    reproducible independent of any library's internal sampler.
    """
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if alpha <= 1.0:
        return _johnk(alpha, alpha, rng)
    return _cheng(alpha, alpha, rng)


def _johnk(a: float, b: float, rng: Prng) -> float:
    while True:
        x = rng.uniform() ** (1.0 / a)
        y = rng.uniform() ** (1.0 / b)
        s = x + y
        if 0.0 < s <= 1.0:
            return x / s


def _cheng(a: float, b: float, rng: Prng) -> float:
    # Cheng (1978), algorithm BB, specialized to min(a, b) > 1.
    a0, b0 = min(a, b), max(a, b)
    alpha = a0 + b0
    beta = math.sqrt((alpha - 2.0) / (2.0 * a0 * b0 - alpha))
    gamma = a0 + 1.0 / beta
    while True:
        u1 = rng.uniform()
        u2 = rng.uniform()
        if not 0.0 < u1 < 1.0:
            continue
        v = beta * math.log(u1 / (1.0 - u1))
        w = a0 * math.exp(v)
        z = u1 * u1 * u2
        r = gamma * v - LOG4
        s = a0 + r - w
        if s + CHENG_C >= 5.0 * z:
            break
        t = math.log(z)
        if s >= t:
            break
        if r + alpha * math.log(alpha / (b0 + w)) >= t:
            break
    x = w / (b0 + w)
    return x if a == a0 else 1.0 - x


def _check_batch(batch: np.ndarray, labels: np.ndarray) -> None:
    if batch.ndim != 4:
        raise DomainError(f"batch must be (N, C, H, W), got shape {batch.shape}")
    if batch.shape[0] == 0:
        raise DomainError("batch is empty")
    if labels.shape[0] != batch.shape[0]:
        raise DomainError("labels and batch disagree on sample count")


def identity_blend(batch: np.ndarray, labels: np.ndarray) -> BlendResult:
    """method="none": the batch and labels pass through untouched."""
    _check_batch(batch, labels)
    n, _, h, w = batch.shape
    digest = [(0, 0, h, w, (1.0,))]
    return BlendResult(
        method="none",
        x_hat=batch,
        y_hat=labels,
        lambdas=np.ones((n, 1), dtype=np.float64),
        partners=np.arange(n, dtype=np.int64).reshape(n, 1),
        mask_digest=[digest] * n,
    )


def mixup(batch: np.ndarray, labels: np.ndarray, alpha: float, rng: Prng) -> BlendResult:
    """Whole-image convex blend of each sample with a shuffled partner."""
    _check_batch(batch, labels)
    n, _, h, w = batch.shape
    lam = beta_sample(alpha, rng)
    perm = rng.permutation(n)
    x_hat = lam * batch + (1.0 - lam) * batch[perm]
    y_hat = lam * labels + (1.0 - lam) * labels[perm]
    digest = [(0, 0, h, w, (lam, 1.0 - lam))]
    return BlendResult(
        method="mixup",
        x_hat=x_hat.astype(batch.dtype),
        y_hat=y_hat,
        lambdas=np.tile([lam, 1.0 - lam], (n, 1)),
        partners=np.stack([np.arange(n, dtype=np.int64), perm], axis=1),
        mask_digest=[digest] * n,
    )


def cutmix(batch: np.ndarray, labels: np.ndarray, alpha: float, rng: Prng) -> BlendResult:
    """Paste one random rectangle from a shuffled partner into each sample.

    The box side lengths scale with sqrt(1 - lam0) for a Beta-drawn lam0; the
    box is centered at a uniform pixel and clipped to the image, and the
    mixing weight is recomputed from the clipped area so it equals the
    surviving self-area fraction exactly.
    """
    _check_batch(batch, labels)
    n, _, h, w = batch.shape
    lam0 = beta_sample(alpha, rng)
    perm = rng.permutation(n)
    cut_h = int(h * math.sqrt(1.0 - lam0))
    cut_w = int(w * math.sqrt(1.0 - lam0))
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    r0 = max(cy - cut_h // 2, 0)
    r1 = min(cy + cut_h // 2, h)
    c0 = max(cx - cut_w // 2, 0)
    c1 = min(cx + cut_w // 2, w)
    area = (r1 - r0) * (c1 - c0)
    lam = 1.0 - area / (h * w)
    x_hat = batch.copy()
    x_hat[:, :, r0:r1, c0:c1] = batch[perm][:, :, r0:r1, c0:c1]
    y_hat = lam * labels + (1.0 - lam) * labels[perm]
    digest = [(0, 0, h, w, (1.0, 0.0)), (r0, c0, r1, c1, (0.0, 1.0))]
    return BlendResult(
        method="cutmix",
        x_hat=x_hat,
        y_hat=y_hat,
        lambdas=np.tile([lam, 1.0 - lam], (n, 1)),
        partners=np.stack([np.arange(n, dtype=np.int64), perm], axis=1),
        mask_digest=[digest] * n,
    )


def ricap(batch: np.ndarray, labels: np.ndarray, alpha: float, rng: Prng) -> BlendResult:
    """Tile each image from four random crops of independently shuffled
    partners. A Beta-drawn boundary position splits the image into four
    quadrants whose areas define the label weights."""
    _check_batch(batch, labels)
    n, _, h, w = batch.shape
    bh = int(round(h * beta_sample(alpha, rng)))
    bw = int(round(w * beta_sample(alpha, rng)))
    # quadrant (rows, cols) sizes and their top-left corners
    sizes = [(bh, bw), (h - bh, bw), (bh, w - bw), (h - bh, w - bw)]
    corners = [(0, 0), (bh, 0), (0, bw), (bh, bw)]
    x_hat = np.empty_like(batch)
    y_hat = np.zeros_like(labels, dtype=np.float64)
    lambdas = np.empty((n, 4), dtype=np.float64)
    partners = np.empty((n, 4), dtype=np.int64)
    digest: list[Rect] = []
    for k, ((qh, qw), (qr, qc)) in enumerate(zip(sizes, corners)):
        perm = rng.permutation(n)
        src_r = int(rng.integers(0, h - qh + 1))
        src_c = int(rng.integers(0, w - qw + 1))
        x_hat[:, :, qr : qr + qh, qc : qc + qw] = batch[perm][
            :, :, src_r : src_r + qh, src_c : src_c + qw
        ]
        lam_k = (qh * qw) / (h * w)
        y_hat += lam_k * labels[perm]
        lambdas[:, k] = lam_k
        partners[:, k] = perm
        weights = tuple(1.0 if p == k else 0.0 for p in range(4))
        digest.append((qr, qc, qr + qh, qc + qw, weights))
    return BlendResult(
        method="ricap",
        x_hat=x_hat,
        y_hat=y_hat,
        lambdas=lambdas,
        partners=partners,
        mask_digest=[digest] * n,
    )


def blend(batch: np.ndarray, labels: np.ndarray, config: AugmentConfig, rng: Prng) -> BlendResult:
    """Apply the configured augmentation to one batch."""
    if config.method == "none":
        return identity_blend(batch, labels)
    fn = {"mixup": mixup, "cutmix": cutmix, "ricap": ricap}[config.method]
    return fn(batch, labels, config.alpha, rng)
