"""Finite-difference verification of the analytic gradients.

Runs the network in 64-bit eval mode (dropout inert) and compares the
backpropagated gradient of the mean soft-target cross-entropy against
central differences, parameter by parameter.
"""

from __future__ import annotations

import numpy as np

from .layers import ForwardCtx
from .network import Network, soft_ce, softmax_stable


def _loss(net: Network, batch: np.ndarray, targets: np.ndarray) -> float:
    logits, _, _ = net.forward_full(batch, ForwardCtx())
    return soft_ce(softmax_stable(logits), targets)


def grad_check(
    net: Network,
    batch: np.ndarray,
    targets: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|)
    over every parameter of a float64 copy of the network."""
    net64 = net.astype(np.float64)
    batch = np.asarray(batch, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)

    logits, _, caches = net64.forward_full(batch, ForwardCtx())
    probs = softmax_stable(logits)
    dlogits = (probs - targets) / batch.shape[0]
    analytic = net64.backward(dlogits, caches)

    worst = 0.0
    for theta, ga in zip(net64.parameters(), analytic):
        flat = theta.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = _loss(net64, batch, targets)
            flat[i] = orig - eps
            lo = _loss(net64, batch, targets)
            flat[i] = orig
            gfd = (hi - lo) / (2.0 * eps)
            rel = abs(ga_flat[i] - gfd) / max(1e-8, abs(ga_flat[i]) + abs(gfd))
            worst = max(worst, rel)
    return worst
