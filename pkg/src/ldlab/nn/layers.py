"""Layer implementations for the feed-forward engine.

Every layer is a small object holding its parameters (possibly none) plus
pure ``forward``/``backward`` methods. ``forward`` never mutates the layer;
activations needed by ``backward`` travel in an explicit cache object so
networks stay safe for concurrent read-only use.

Activations are either spatial ``(N, C, H, W)`` arrays or flat ``(N, D)``
arrays. ``Dense`` flattens whatever it receives; ``Conv3x3`` and
``MaxPool2`` require spatial input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigError, DomainError
from ..rng import Prng


@dataclass
class ForwardCtx:
    """Per-call forward options: training mode, stochastic-inference mode, rng."""

    train: bool = False
    mcdo: bool = False
    mcdo_rate: float | None = None
    rng: Prng | None = None

    @property
    def stochastic(self) -> bool:
        return self.train or self.mcdo


class Layer:
    """Base layer. Subclasses override the shape/param/forward/backward quartet."""

    name = "layer"

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def init_params(self, in_shape: tuple[int, ...], rng: Prng, dtype) -> None:
        pass

    @property
    def params(self) -> list[np.ndarray]:
        return []

    def set_params(self, arrays: list[np.ndarray]) -> None:
        if arrays:
            raise ConfigError(f"{self.name} takes no parameters")

    def forward(self, x: np.ndarray, ctx: ForwardCtx):
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache):
        """Returns (dx, grads) with grads aligned to ``params``."""
        raise NotImplementedError

    def astype(self, dtype) -> "Layer":
        return self

    def descriptor(self) -> dict:
        return {"type": self.name}


def _flat_dim(shape: tuple[int, ...]) -> int:
    return int(np.prod(shape))


class Dense(Layer):
    """Fully connected layer, weights shaped (units, in_features). Flattens its input."""

    name = "dense"

    def __init__(self, units: int):
        if units < 1:
            raise ConfigError(f"dense: units must be >= 1, got {units}")
        self.units = units
        self.w: np.ndarray | None = None
        self.b: np.ndarray | None = None

    def out_shape(self, in_shape):
        return (self.units,)

    def init_params(self, in_shape, rng, dtype):
        fan_in = _flat_dim(in_shape)
        std = np.sqrt(2.0 / fan_in)
        self.w = rng.normal(size=(self.units, fan_in), scale=std).astype(dtype)
        self.b = np.zeros(self.units, dtype=dtype)

    @property
    def params(self):
        return [self.w, self.b]

    def set_params(self, arrays):
        self.w, self.b = arrays

    def forward(self, x, ctx):
        x2 = x.reshape(x.shape[0], -1)
        return x2 @ self.w.T + self.b, (x2, x.shape)

    def backward(self, dy, cache):
        x2, in_shape = cache
        dw = dy.T @ x2
        db = dy.sum(axis=0)
        dx = (dy @ self.w).reshape(in_shape)
        return dx, [dw, db]

    def astype(self, dtype):
        out = Dense(self.units)
        out.w = self.w.astype(dtype)
        out.b = self.b.astype(dtype)
        return out

    def descriptor(self):
        return {"type": "dense", "units": self.units}


class Conv3x3(Layer):
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    name = "conv3x3"

    def __init__(self, filters: int):
        if filters < 1:
            raise ConfigError(f"conv3x3: filters must be >= 1, got {filters}")
        self.filters = filters
        self.w: np.ndarray | None = None  # (filters, in_channels, 3, 3)
        self.b: np.ndarray | None = None

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ConfigError("conv3x3: requires spatial input (C, H, W)")
        c, h, w = in_shape
        return (self.filters, h, w)

    def init_params(self, in_shape, rng, dtype):
        c = in_shape[0]
        std = np.sqrt(2.0 / (c * 9))
        self.w = rng.normal(size=(self.filters, c, 3, 3), scale=std).astype(dtype)
        self.b = np.zeros(self.filters, dtype=dtype)

    @property
    def params(self):
        return [self.w, self.b]

    def set_params(self, arrays):
        self.w, self.b = arrays

    @staticmethod
    def _im2col(x: np.ndarray) -> np.ndarray:
        """(N, C, H, W) -> (N*H*W, C*9) patch matrix for pad-1 3x3 windows."""
        n, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        sn, sc, sh, sw = xp.strides
        windows = as_strided(xp, shape=(n, c, h, w, 3, 3), strides=(sn, sc, sh, sw, sh, sw))
        return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * 9)

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        cols = self._im2col(x)
        wmat = self.w.reshape(self.filters, -1)
        y = cols @ wmat.T + self.b
        y = y.reshape(n, h, w, self.filters).transpose(0, 3, 1, 2)
        return y, (cols, x.shape)

    def backward(self, dy, cache):
        cols, (n, c, h, w) = cache
        wmat = self.w.reshape(self.filters, -1)
        dyr = dy.transpose(0, 2, 3, 1).reshape(-1, self.filters)
        dw = (dyr.T @ cols).reshape(self.w.shape)
        db = dyr.sum(axis=0)
        dcols = (dyr @ wmat).reshape(n, h, w, c, 3, 3).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
        for ki in range(3):
            for kj in range(3):
                dxp[:, :, ki : ki + h, kj : kj + w] += dcols[:, :, :, :, ki, kj]
        return dxp[:, :, 1:-1, 1:-1], [dw, db]

    def astype(self, dtype):
        out = Conv3x3(self.filters)
        out.w = self.w.astype(dtype)
        out.b = self.b.astype(dtype)
        return out

    def descriptor(self):
        return {"type": "conv3x3", "filters": self.filters}


class ReLU(Layer):
    name = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, ctx):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache):
        return dy * cache, []


class MaxPool2(Layer):
    """2x2 max pooling, stride 2. Odd trailing rows/columns are dropped."""

    name = "maxpool2"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ConfigError("maxpool2: requires spatial input (C, H, W)")
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ConfigError(f"maxpool2: spatial dims must be >= 2, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        xc = x[:, :, : h2 * 2, : w2 * 2]
        quads = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        idx = quads.argmax(axis=-1)
        y = np.take_along_axis(quads, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, dy, cache):
        idx, (n, c, h, w) = cache
        h2, w2 = h // 2, w // 2
        dquads = np.zeros((n, c, h2, w2, 4), dtype=dy.dtype)
        np.put_along_axis(dquads, idx[..., None], dy[..., None], axis=-1)
        dxc = dquads.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
        if h2 * 2 == h and w2 * 2 == w:
            return dxc, []
        dx = np.zeros((n, c, h, w), dtype=dy.dtype)
        dx[:, :, : h2 * 2, : w2 * 2] = dxc
        return dx, []


class Dropout(Layer):
    """Inverted dropout: active in train mode or under stochastic inference,
    scaling kept units by 1/(1-rate) so the eval path needs no correction."""

    name = "dropout"

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise DomainError(f"dropout: rate must be in [0, 1), got {rate}")
        self.rate = rate

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, ctx):
        rate = self.rate
        if ctx.mcdo and ctx.mcdo_rate is not None:
            rate = ctx.mcdo_rate
        if not ctx.stochastic or rate == 0.0:
            return x, None
        if ctx.rng is None:
            raise ConfigError("dropout: stochastic forward requires an rng")
        keep = ctx.rng.uniform(size=x.shape) >= rate
        scale = x.dtype.type(1.0 / (1.0 - rate))
        mask = keep.astype(x.dtype) * scale
        return x * mask, mask

    def backward(self, dy, cache):
        if cache is None:
            return dy, []
        return dy * cache, []

    def astype(self, dtype):
        return Dropout(self.rate)

    def descriptor(self):
        return {"type": "dropout", "rate": self.rate}


LAYER_BUILDERS = {
    "dense": lambda d: Dense(int(d["units"])),
    "conv3x3": lambda d: Conv3x3(int(d["filters"])),
    "relu": lambda d: ReLU(),
    "maxpool2": lambda d: MaxPool2(),
    "dropout": lambda d: Dropout(float(d.get("rate", 0.5))),
}


def build_layer(desc: dict, position: int) -> Layer:
    kind = desc.get("type")
    builder = LAYER_BUILDERS.get(kind)
    if builder is None:
        raise ConfigError(f"layer {position}: unknown type {kind!r}")
    try:
        return builder(desc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"layer {position} ({kind}): bad descriptor {desc}") from exc
