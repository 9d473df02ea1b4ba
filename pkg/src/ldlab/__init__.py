"""ldlab: a desk-scale laboratory for label-distribution supervision of
image classifiers, with calibration measurement and a deterministic,
config-driven experiment harness."""

__version__ = "0.1.0"

from . import augment, calib, data, labels, nn, report, train
from .rng import Prng

__all__ = ["Prng", "augment", "calib", "data", "labels", "nn", "report", "train", "__version__"]
