"""Minimal deterministic feed-forward engine: dense / 3x3 conv / ReLU /
2x2 max-pool / dropout layers, soft-target cross-entropy, momentum SGD with
a step schedule, and finite-difference gradient verification."""

from .gradcheck import grad_check
from .layers import Conv3x3, Dense, Dropout, ForwardCtx, MaxPool2, ReLU
from .network import (
    Network,
    check_label_rows,
    forward,
    init_network,
    soft_ce,
    softmax_stable,
)
from .optim import Sgd, backward_step

__all__ = [
    "Conv3x3",
    "Dense",
    "Dropout",
    "ForwardCtx",
    "MaxPool2",
    "Network",
    "ReLU",
    "Sgd",
    "backward_step",
    "check_label_rows",
    "forward",
    "grad_check",
    "init_network",
    "soft_ce",
    "softmax_stable",
]
