"""Network container plus the numeric primitives used everywhere:
stable softmax and soft-target cross-entropy.

A network is an ordered list of layers ending in a dense head that emits one
logit per class. The activation feeding that head (the penultimate
activation) is returned from every forward pass so downstream analysis can
export it without re-plumbing the engine.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ContractError, DimensionError, NumericError
from ..rng import Prng
from .layers import Dense, ForwardCtx, Layer, build_layer  # noqa: F401 (ForwardCtx re-exported)

LOG_CLAMP = 1e-12
ROW_SUM_TOL = 1e-6


class Network:
    """Feed-forward network over (N, C, H, W) batches."""

    def __init__(self, input_shape: tuple[int, int, int], layers: list[Layer], dtype=np.float32):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self._validate()

    def _validate(self) -> None:
        if len(self.input_shape) != 3:
            raise ConfigError(f"input shape must be (C, H, W), got {self.input_shape}")
        if not self.layers or not isinstance(self.layers[-1], Dense):
            raise ConfigError("network must end in a dense head")
        shape = self.input_shape
        self._shapes = [shape]
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except ConfigError as exc:
                raise ConfigError(f"layer {i} ({layer.name}): {exc}") from None
            self._shapes.append(shape)
        self.penultimate_index = max(i for i, l in enumerate(self.layers) if isinstance(l, Dense))
        self.num_classes = self.layers[-1].units

    @property
    def penultimate_dim(self) -> int:
        return int(np.prod(self._shapes[self.penultimate_index]))

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def param_shapes(self) -> list[tuple[int, ...]]:
        """Parameter array shapes in layer order, derivable without weights."""
        from .layers import Conv3x3

        shapes: list[tuple[int, ...]] = []
        for i, layer in enumerate(self.layers):
            in_shape = self._shapes[i]
            if isinstance(layer, Dense):
                shapes += [(layer.units, int(np.prod(in_shape))), (layer.units,)]
            elif isinstance(layer, Conv3x3):
                shapes += [(layer.filters, in_shape[0], 3, 3), (layer.filters,)]
        return shapes

    def set_parameters(self, arrays: list[np.ndarray]) -> None:
        it = iter(arrays)
        for layer in self.layers:
            n = len(layer.params)
            if n:
                layer.set_params([next(it) for _ in range(n)])

    def descriptor(self) -> dict:
        return {"input": list(self.input_shape), "layers": [l.descriptor() for l in self.layers]}

    def astype(self, dtype) -> "Network":
        return Network(self.input_shape, [l.astype(dtype) for l in self.layers], dtype=dtype)

    # -- forward ----------------------------------------------------------

    def _check_batch(self, batch: np.ndarray) -> None:
        if batch.ndim != 4 or tuple(batch.shape[1:]) != self.input_shape:
            raise DimensionError(
                f"batch shape {batch.shape} does not match network input {self.input_shape}"
            )

    def forward_full(self, batch: np.ndarray, ctx: ForwardCtx):
        """Run the network, returning (logits, penultimate, caches)."""
        self._check_batch(batch)
        x = batch
        caches = []
        penultimate = None
        for i, layer in enumerate(self.layers):
            if i == self.penultimate_index:
                penultimate = x.reshape(x.shape[0], -1)
            x, cache = layer.forward(x, ctx)
            caches.append(cache)
        return x, penultimate, caches

    def backward(self, dlogits: np.ndarray, caches: list) -> list[np.ndarray]:
        """Backpropagate a gradient at the logits; returns grads aligned to parameters()."""
        grads_rev = []
        dy = dlogits
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy, grads = layer.backward(dy, cache)
            grads_rev.extend(reversed(grads))
        return list(reversed(grads_rev))


def init_network(descriptor: dict, rng: Prng, dtype=np.float32) -> Network:
    """Build and initialize a network from a descriptor dict.

    Weights are fan-in-scaled normal draws (std sqrt(2/fan_in)), biases zero.
    Deterministic for a given rng seed.
    """
    if "input" not in descriptor or "layers" not in descriptor:
        raise ConfigError("descriptor needs 'input' and 'layers' entries")
    layers = [build_layer(d, i) for i, d in enumerate(descriptor["layers"])]
    net = Network(tuple(descriptor["input"]), layers, dtype=dtype)
    shape = net.input_shape
    init_rng = rng.derive("init")
    for layer in net.layers:
        layer.init_params(shape, init_rng, net.dtype)
        shape = layer.out_shape(shape)
    return net


def forward(
    net: Network,
    batch: np.ndarray,
    mode: str = "eval",
    mcdo: bool = False,
    rng: Prng | None = None,
    mcdo_rate: float | None = None,
):
    """Spec-level forward pass: returns (logits, penultimate).

    ``mode="eval"`` with ``mcdo=False`` is deterministic; train mode or
    ``mcdo=True`` samples dropout masks from ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    ctx = ForwardCtx(train=(mode == "train"), mcdo=mcdo, mcdo_rate=mcdo_rate, rng=rng)
    logits, penultimate, _ = net.forward_full(batch, ctx)
    return logits, penultimate


def batched_logits(net: Network, images: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Eval-mode logits over a whole array, evaluated in fixed-size chunks."""
    outs = [
        net.forward_full(images[s : s + chunk], ForwardCtx())[0]
        for s in range(0, images.shape[0], chunk)
    ]
    return np.concatenate(outs, axis=0)


def batched_penultimate(net: Network, images: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Eval-mode penultimate activations over a whole array."""
    outs = [
        net.forward_full(images[s : s + chunk], ForwardCtx())[1]
        for s in range(0, images.shape[0], chunk)
    ]
    return np.concatenate(outs, axis=0)


def softmax_stable(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift stabilization. Returns float64 probabilities."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax: logits contain non-finite values")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def check_label_rows(targets: np.ndarray, what: str = "targets") -> None:
    """Distribution rows must be nonnegative and sum to 1 within tolerance."""
    t = np.asarray(targets)
    if np.any(t < 0):
        raise ContractError(f"{what}: negative mass")
    sums = t.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise ContractError(f"{what}: row sums deviate from 1 by {worst:.3g}")


def soft_ce(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy of probability rows against distribution-valued targets,
    -(1/N) sum_i sum_k z_ik log p_ik, with log arguments clamped at 1e-12."""
    p = np.asarray(probs, dtype=np.float64)
    z = np.asarray(targets, dtype=np.float64)
    if p.shape != z.shape:
        raise DimensionError(f"probs shape {p.shape} != targets shape {z.shape}")
    check_label_rows(p, "probs")
    check_label_rows(z, "targets")
    return float(-(z * np.log(np.maximum(p, LOG_CLAMP))).sum() / p.shape[0])
