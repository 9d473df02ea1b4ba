"""SGD with momentum, decoupled-from-nothing weight decay (classic L2-in-gradient),
and a stepwise learning-rate schedule."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, TrainingDiverged
from ..rng import Prng
from .network import Network, soft_ce, softmax_stable


class Sgd:
    """Momentum SGD: v <- m*v + (g + wd*theta); theta <- theta - lr*v.

    The learning rate follows a step schedule: after the m-th milestone epoch
    has been reached, lr equals lr0 * gamma**m exactly.
    """

    def __init__(
        self,
        lr: float,
        momentum: float = 0.0,
        weight_decay: float = 0.0,
        milestones: tuple[int, ...] = (),
        gamma: float = 0.1,
    ):
        if lr <= 0:
            raise DomainError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise DomainError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0:
            raise DomainError(f"weight_decay must be >= 0, got {weight_decay}")
        if not 0.0 < gamma <= 1.0:
            raise DomainError(f"gamma must be in (0, 1], got {gamma}")
        self.lr0 = float(lr)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.milestones = tuple(sorted(int(m) for m in milestones))
        self.gamma = float(gamma)
        self.velocity: list[np.ndarray] | None = None

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.milestones if epoch >= m)
        return self.lr0 * self.gamma**passed

    def set_epoch(self, epoch: int) -> None:
        self.lr = self.lr_at(epoch)

    def step(
        self,
        net: Network,
        grads: list[np.ndarray],
        epoch: int | None = None,
        batch: int | None = None,
    ) -> None:
        params = net.parameters()
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for theta, g, v in zip(params, grads, self.velocity):
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged("non-finite gradient", epoch=epoch, batch=batch)
            g = g + self.weight_decay * theta
            v *= self.momentum
            v += g
            theta -= self.lr * v


def backward_step(
    net: Network,
    batch: np.ndarray,
    targets: np.ndarray,
    opt: Sgd,
    rng: Prng | None = None,
    epoch: int | None = None,
    batch_index: int | None = None,
) -> float:
    """One training step against distribution-valued targets; returns the loss
    measured before the parameter update.

    Uses the combined softmax + cross-entropy gradient (p - z)/N at the head.
    """
    from .layers import ForwardCtx

    ctx = ForwardCtx(train=True, rng=rng)
    logits, _, caches = net.forward_full(batch, ctx)
    probs = softmax_stable(logits)
    loss = soft_ce(probs, targets)
    dlogits = ((probs - targets) / batch.shape[0]).astype(net.dtype)
    grads = net.backward(dlogits, caches)
    opt.step(net, grads, epoch=epoch, batch=batch_index)
    return loss
