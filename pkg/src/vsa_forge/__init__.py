"""Functional model and instruction-level simulator of a folded, multi-tile
vector-symbolic accelerator."""

from .hdc import (
    Accumulator,
    ConfigError,
    DimensionMismatch,
    Hypervector,
    VsaError,
    accumulate,
    bind,
    bundle,
    dot,
    fold_dot,
    hamming,
    permute,
    random_hv,
    sign,
    similarity,
    unbind,
)
from .codebook import Codebook, ca90_step, expand, footprint

__version__ = "0.1.0"
