"""Calibration measurement: reliability bins, expected / uncertainty
calibration errors, negative log-likelihood, Brier score, temperature
fitting, and per-class prediction profiles.

Conventions, fixed here once:

* Confidence of a prediction is its max class probability; bin m of M covers
  the half-open interval ((m-1)/M, m/M], and a confidence of exactly 0 falls
  into bin 1.
* ECE is the bin-count-weighted mean absolute gap between bin accuracy and
  bin mean confidence.
* UCE bins by normalized predictive entropy (entropy / log K) and compares
  each bin's error rate against its mean uncertainty.
* Brier is the full multiclass sum of squared differences, so its range is
  [0, 2].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, DomainError
from .nn.network import LOG_CLAMP, ROW_SUM_TOL, softmax_stable


@dataclass
class PredictionSet:
    """Probability rows plus true labels; the input to every metric here."""

    probs: np.ndarray       # (N, K), rows sum to 1
    true_labels: np.ndarray  # (N,) ints in [0, K)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        if self.probs.ndim != 2 or self.probs.shape[0] == 0:
            raise DomainError("predictions must be a nonempty (N, K) matrix")
        if self.true_labels.shape != (self.probs.shape[0],):
            raise DimensionError("true_labels must be one label per prediction row")
        k = self.probs.shape[1]
        if self.true_labels.min() < 0 or self.true_labels.max() >= k:
            raise DomainError(f"labels out of range for {k} classes")
        if np.any(self.probs < 0):
            raise ContractError("probabilities contain negative mass")
        sums = self.probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            raise ContractError("probability rows do not sum to 1")

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def k(self) -> int:
        return self.probs.shape[1]

    @property
    def predicted(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    @property
    def confidence(self) -> np.ndarray:
        return self.probs.max(axis=1)


def predictions_from_logits(logits: np.ndarray, labels: np.ndarray) -> PredictionSet:
    return PredictionSet(softmax_stable(logits), labels)


@dataclass
class ReliabilityBins:
    """Per-bin counts, accuracies, and mean confidences for M equal-width bins."""

    m: int
    counts: np.ndarray           # (M,) ints
    accuracy: np.ndarray         # (M,), 0 for empty bins
    mean_confidence: np.ndarray  # (M,), 0 for empty bins

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def edges(self, index: int) -> tuple[float, float]:
        return index / self.m, (index + 1) / self.m


def _bin_index(values: np.ndarray, m: int) -> np.ndarray:
    """Half-open binning: value v lands in bin ceil(v*m), clipped to [1, m]."""
    return np.clip(np.ceil(values * m).astype(np.int64), 1, m) - 1


def reliability_bins(preds: PredictionSet, m: int = 10) -> ReliabilityBins:
    if m < 1:
        raise DomainError(f"bin count must be >= 1, got {m}")
    conf = preds.confidence
    correct = (preds.predicted == preds.true_labels).astype(np.float64)
    idx = _bin_index(conf, m)
    counts = np.bincount(idx, minlength=m)
    acc = np.zeros(m)
    mean_conf = np.zeros(m)
    filled = counts > 0
    acc[filled] = np.bincount(idx, weights=correct, minlength=m)[filled] / counts[filled]
    mean_conf[filled] = np.bincount(idx, weights=conf, minlength=m)[filled] / counts[filled]
    return ReliabilityBins(m=m, counts=counts, accuracy=acc, mean_confidence=mean_conf)


def ece(bins: ReliabilityBins) -> float:
    """Expected calibration error: sum_m (count_m / N) * |acc_m - conf_m|."""
    n = bins.n
    if n == 0:
        return 0.0
    return float(np.sum(bins.counts / n * np.abs(bins.accuracy - bins.mean_confidence)))


def accuracy(preds: PredictionSet) -> float:
    return float(np.mean(preds.predicted == preds.true_labels))


def nll(preds: PredictionSet) -> float:
    """Mean negative log-likelihood of the true class, log clamped at 1e-12."""
    p_true = preds.probs[np.arange(preds.n), preds.true_labels]
    return float(-np.mean(np.log(np.maximum(p_true, LOG_CLAMP))))


def brier(preds: PredictionSet) -> float:
    """Full multiclass Brier score: (1/N) sum_i sum_k (p_ik - [k == c_i])^2."""
    onehot = np.zeros_like(preds.probs)
    onehot[np.arange(preds.n), preds.true_labels] = 1.0
    return float(np.mean(((preds.probs - onehot) ** 2).sum(axis=1)))


def normalized_entropy(probs: np.ndarray) -> np.ndarray:
    """Entropy of each row divided by log K, in [0, 1]."""
    p = np.asarray(probs, dtype=np.float64)
    k = p.shape[-1]
    if k < 2:
        raise DomainError("entropy uncertainty needs at least 2 classes")
    plogp = np.where(p > 0, p * np.log(np.maximum(p, LOG_CLAMP)), 0.0)
    return -plogp.sum(axis=-1) / math.log(k)


def uce(preds: PredictionSet, m: int = 10) -> float:
    """Uncertainty calibration error: bin by normalized entropy, compare each
    bin's error rate against its mean uncertainty."""
    u = np.clip(normalized_entropy(preds.probs), 0.0, 1.0)
    wrong = (preds.predicted != preds.true_labels).astype(np.float64)
    idx = _bin_index(u, m)
    counts = np.bincount(idx, minlength=m)
    filled = counts > 0
    err = np.zeros(m)
    mean_u = np.zeros(m)
    err[filled] = np.bincount(idx, weights=wrong, minlength=m)[filled] / counts[filled]
    mean_u[filled] = np.bincount(idx, weights=u, minlength=m)[filled] / counts[filled]
    return float(np.sum(counts / preds.n * np.abs(err - mean_u)))


def fit_temperature(val_logits: np.ndarray, labels: np.ndarray) -> float:
    """Temperature minimizing validation NLL of softmax(logits / T).

    Golden-section search over log T in [log 0.05, log 10], 200 iterations.
    Falls back to T = 1 rather than ever worsening the validation NLL.
    """
    logits = np.asarray(val_logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise DomainError("temperature fit needs a nonempty (N, K) logit matrix")

    def nll_at(t: float) -> float:
        return nll(PredictionSet(softmax_stable(logits / t), labels))

    lo, hi = math.log(0.05), math.log(10.0)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = nll_at(math.exp(c)), nll_at(math.exp(d))
    for _ in range(200):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = nll_at(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = nll_at(math.exp(d))
    t = math.exp((a + b) / 2.0)
    return t if nll_at(t) <= nll_at(1.0) else 1.0


@dataclass
class CalibReport:
    """Headline calibration numbers for one evaluated model."""

    accuracy: float
    ece: float
    uce: float
    nll: float
    brier: float
    temperature: float | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "ece": self.ece,
            "uce": self.uce,
            "nll": self.nll,
            "brier": self.brier,
            "temperature": self.temperature,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibReport":
        return cls(
            accuracy=d["accuracy"],
            ece=d["ece"],
            uce=d["uce"],
            nll=d["nll"],
            brier=d["brier"],
            temperature=d.get("temperature"),
        )


def calibration_report(preds: PredictionSet, m: int = 10, temperature: float | None = None) -> CalibReport:
    return CalibReport(
        accuracy=accuracy(preds),
        ece=ece(reliability_bins(preds, m)),
        uce=uce(preds, m),
        nll=nll(preds),
        brier=brier(preds),
        temperature=temperature,
    )


def class_profiles(preds: PredictionSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-class (F1, mean confidence on the class's true samples).

    F1 is 0 when precision + recall is 0; mean confidence is NaN for classes
    with no true samples.
    """
    k = preds.k
    pred = preds.predicted
    true = preds.true_labels
    f1 = np.zeros(k)
    mean_conf = np.full(k, np.nan)
    for c in range(k):
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1[c] = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        mask = true == c
        if mask.any():
            mean_conf[c] = preds.probs[mask, c].mean()
    return f1, mean_conf


def top_k_profile(preds: PredictionSet, class_index: int, k: int) -> list[tuple[int, float]]:
    """The k classes with the highest mean predicted probability over the
    samples whose true label is `class_index`, descending, ties broken by
    class index."""
    if k > preds.k:
        raise DomainError(f"k={k} exceeds class count {preds.k}")
    if not 0 <= class_index < preds.k:
        raise DomainError(f"class {class_index} out of range")
    mask = preds.true_labels == class_index
    if not mask.any():
        raise DomainError(f"class {class_index} has no samples")
    mean_probs = preds.probs[mask].mean(axis=0)
    order = sorted(range(preds.k), key=lambda c: (-mean_probs[c], c))
    return [(c, float(mean_probs[c])) for c in order[:k]]


# -- delimited output ------------------------------------------------------


def reliability_csv(bins: ReliabilityBins) -> str:
    """`bin_lo,bin_hi,count,accuracy,mean_confidence,gap`, 6-decimal fixed."""
    lines = ["bin_lo,bin_hi,count,accuracy,mean_confidence,gap"]
    for i in range(bins.m):
        lo, hi = bins.edges(i)
        gap = bins.accuracy[i] - bins.mean_confidence[i]
        lines.append(
            f"{lo:.6f},{hi:.6f},{bins.counts[i]},{bins.accuracy[i]:.6f},"
            f"{bins.mean_confidence[i]:.6f},{gap:.6f}"
        )
    return "\n".join(lines) + "\n"
