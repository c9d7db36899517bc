"""Bit-exact binary hypervector algebra.

Bits carry bipolar meaning: bit 0 is +1 and bit 1 is -1, so XOR is the
element-wise product.  Vectors are stored unpacked (one uint8 per bit) in
fold-major order; fold ``k`` is ``bits[k*W:(k+1)*W]``.

Integer intermediates saturate instead of wrapping: accumulator lanes at
``H`` bits and similarity scores at ``C`` bits, two's complement ranges.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

DEFAULT_BND_BITS = 8  # H
DEFAULT_DIST_BITS = 12  # C

HV_MAGIC = b"HVEC"
HV_VERSION = 1
_HV_HEADER = struct.Struct("<4sHII2x")  # 16 bytes


class VsaError(Exception):
    """Base class for library errors."""


class ConfigError(VsaError, ValueError):
    pass


class DimensionMismatch(VsaError, ValueError):
    pass


def int_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def saturate(x, bits: int):
    """Clamp ``x`` (scalar or array) to the signed ``bits``-bit range."""
    lo, hi = int_range(bits)
    if isinstance(x, np.ndarray):
        return np.clip(x, lo, hi)
    return min(max(int(x), lo), hi)


class Hypervector:
    """Immutable D-bit binary hypervector split into folds of W bits."""

    __slots__ = ("bits", "fold_width")

    def __init__(self, bits, fold_width: int | None = None):
        arr = np.array(bits, dtype=np.uint8).reshape(-1)
        if arr.size == 0:
            raise ConfigError("hypervector must have at least one bit")
        if np.any(arr > 1):
            raise ValueError("bits must be 0 or 1")
        if fold_width is None:
            fold_width = arr.size
        if fold_width <= 0 or arr.size % fold_width:
            raise ConfigError(
                f"dimension {arr.size} is not a multiple of fold width {fold_width}"
            )
        arr.flags.writeable = False
        self.bits = arr
        self.fold_width = int(fold_width)

    @classmethod
    def zeros(cls, dim: int, fold_width: int | None = None) -> "Hypervector":
        return cls(np.zeros(dim, dtype=np.uint8), fold_width)

    @classmethod
    def from_string(cls, s: str, fold_width: int | None = None) -> "Hypervector":
        """Build from a string of '0'/'1' characters, index 0 first."""
        return cls([int(c) for c in s if c in "01"], fold_width)

    @classmethod
    def from_folds(cls, folds: Sequence[np.ndarray]) -> "Hypervector":
        folds = [np.asarray(f, dtype=np.uint8) for f in folds]
        return cls(np.concatenate(folds), folds[0].size)

    @property
    def dim(self) -> int:
        return self.bits.size

    @property
    def num_folds(self) -> int:
        return self.bits.size // self.fold_width

    @property
    def folds(self) -> np.ndarray:
        return self.bits.reshape(self.num_folds, self.fold_width)

    def fold(self, k: int) -> np.ndarray:
        return self.folds[k]

    def bipolar(self) -> np.ndarray:
        return 1 - 2 * self.bits.astype(np.int64)

    def complement(self) -> "Hypervector":
        return Hypervector(1 - self.bits, self.fold_width)

    def with_fold_width(self, fold_width: int) -> "Hypervector":
        return Hypervector(self.bits, fold_width)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hypervector):
            return NotImplemented
        return (
            self.fold_width == other.fold_width
            and self.dim == other.dim
            and bool(np.array_equal(self.bits, other.bits))
        )

    def __hash__(self) -> int:
        return hash((self.dim, self.fold_width, self.bits.tobytes()))

    def __repr__(self) -> str:
        head = self.to_string()[:16]
        return f"Hypervector(D={self.dim}, W={self.fold_width}, bits={head}{'...' if self.dim > 16 else ''})"

    # serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        header = _HV_HEADER.pack(HV_MAGIC, HV_VERSION, self.dim, self.fold_width)
        return header + np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Hypervector":
        if len(data) < _HV_HEADER.size:
            raise ValueError("truncated hypervector header")
        magic, version, dim, width = _HV_HEADER.unpack_from(data)
        if magic != HV_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != HV_VERSION:
            raise ValueError(f"unsupported hypervector version {version}")
        payload = np.frombuffer(data, dtype=np.uint8, offset=_HV_HEADER.size)
        if payload.size != (dim + 7) // 8:
            raise ValueError("payload size does not match header dimension")
        bits = np.unpackbits(payload, bitorder="little")[:dim]
        return cls(bits, width)


class Accumulator:
    """D integer lanes saturating at ``bits`` (H) bits."""

    __slots__ = ("lanes", "fold_width", "bits")

    def __init__(self, lanes, fold_width: int | None = None, bits: int = DEFAULT_BND_BITS):
        arr = np.array(lanes, dtype=np.int64).reshape(-1)
        lo, hi = int_range(bits)
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValueError(f"lane values outside the {bits}-bit range")
        fold_width = arr.size if fold_width is None else fold_width
        if arr.size % fold_width:
            raise ConfigError("accumulator size is not a multiple of fold width")
        arr.flags.writeable = False
        self.lanes = arr
        self.fold_width = fold_width
        self.bits = bits

    @classmethod
    def zeros(cls, dim: int, fold_width: int | None = None, bits: int = DEFAULT_BND_BITS):
        return cls(np.zeros(dim, dtype=np.int64), fold_width, bits)

    @classmethod
    def from_hv(cls, v: Hypervector, bits: int = DEFAULT_BND_BITS) -> "Accumulator":
        return cls(v.bipolar(), v.fold_width, bits)

    @property
    def dim(self) -> int:
        return self.lanes.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Accumulator):
            return NotImplemented
        return self.bits == other.bits and bool(np.array_equal(self.lanes, other.lanes))

    def __repr__(self) -> str:
        return f"Accumulator(D={self.dim}, H={self.bits}, lanes={self.lanes[:8].tolist()}...)"


def _check_pair(a, b) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.fold_width != b.fold_width:
        raise DimensionMismatch(
            f"fold width mismatch: {a.fold_width} vs {b.fold_width}"
        )


def random_hv(dim: int, fold_width: int, seed) -> Hypervector:
    """I.i.d. uniform bits from a Philox counter-based generator.

    ``seed`` may be an int or a sequence of ints (the latter is how child
    streams are derived).  The mapping from seed to bits is fixed by
    numpy's Philox-4x64 bit generator and ``Generator.integers``.
    """
    if fold_width <= 0 or dim <= 0 or dim % fold_width:
        raise ConfigError(f"dimension {dim} is not a multiple of fold width {fold_width}")
    rng = np.random.Generator(np.random.Philox(seed))
    return Hypervector(rng.integers(0, 2, size=dim, dtype=np.uint8), fold_width)


def bind(a: Hypervector, b: Hypervector) -> Hypervector:
    _check_pair(a, b)
    return Hypervector(a.bits ^ b.bits, a.fold_width)


# XOR binding is its own inverse
def unbind(a: Hypervector, b: Hypervector) -> Hypervector:
    return bind(a, b)


def permute(v: Hypervector, times: int) -> Hypervector:
    """Rotate left by ``times`` bits: ``out[i] = v[(i + times) % D]``."""
    if times < 0:
        raise ValueError("permutation count must be non-negative")
    return Hypervector(np.roll(v.bits, -(times % v.dim)), v.fold_width)


def accumulate(acc: Accumulator, v: Hypervector, weight: int = 1) -> Accumulator:
    if acc.dim != v.dim:
        raise DimensionMismatch(f"dimension mismatch: {acc.dim} vs {v.dim}")
    lim = 1 << (acc.bits - 1)
    if abs(weight) >= lim:
        raise ValueError(f"|weight| must be below {lim} for H={acc.bits}")
    lanes = saturate(acc.lanes + weight * v.bipolar(), acc.bits)
    return Accumulator(lanes, acc.fold_width, acc.bits)


def sign(acc: Accumulator) -> Hypervector:
    # zero lanes resolve to bit 0 (+1)
    return Hypervector((acc.lanes < 0).astype(np.uint8), acc.fold_width)


def bundle(vs: Sequence[Hypervector], bits: int = DEFAULT_BND_BITS) -> Hypervector:
    """Element-wise majority; ties go to bit 0."""
    if len(vs) == 0:
        raise ValueError("cannot bundle an empty list")
    acc = Accumulator.zeros(vs[0].dim, vs[0].fold_width, bits)
    for v in vs:
        _check_pair(vs[0], v)
        acc = accumulate(acc, v, 1)
    return sign(acc)


def hamming(a: Hypervector, b: Hypervector) -> int:
    _check_pair(a, b)
    return int(np.count_nonzero(a.bits ^ b.bits))


def dot(a: Hypervector, b: Hypervector, bits: int = DEFAULT_DIST_BITS) -> int:
    """Bipolar dot product, D - 2*hamming, saturated to ``bits``."""
    return saturate(a.dim - 2 * hamming(a, b), bits)


def fold_partials(a: Hypervector, b: Hypervector) -> list[int]:
    """Per-fold dot products (zeros minus ones of the XOR difference)."""
    _check_pair(a, b)
    diff = a.folds ^ b.folds
    ones = diff.sum(axis=1, dtype=np.int64)
    return (a.fold_width - 2 * ones).tolist()


def fold_dot(a: Hypervector, b: Hypervector, bits: int = DEFAULT_DIST_BITS) -> int:
    """Dot product aggregated fold by fold in a ``bits``-wide saturating sum."""
    total = 0
    for p in fold_partials(a, b):
        total = saturate(total + saturate(p, bits), bits)
    return total


def similarity(a, b, metric: str = "dot", bits: int = DEFAULT_DIST_BITS) -> int:
    """Integer similarity/distance score.

    ``dot`` and ``hamming`` take hypervectors; ``l1`` and ``l2`` take
    accumulators, ``l2`` being the squared Euclidean distance.  ``hamming``,
    ``l1`` and ``l2`` are distances and are saturated the same way as
    ``dot``.
    """
    if metric in ("dot", "hamming"):
        if not (isinstance(a, Hypervector) and isinstance(b, Hypervector)):
            raise TypeError(f"{metric} needs Hypervector operands")
        if metric == "dot":
            return dot(a, b, bits)
        return saturate(hamming(a, b), bits)
    if metric in ("l1", "l2"):
        if not (isinstance(a, Accumulator) and isinstance(b, Accumulator)):
            raise TypeError(f"{metric} needs Accumulator operands")
        if a.dim != b.dim:
            raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")
        d = a.lanes - b.lanes
        val = np.abs(d).sum() if metric == "l1" else (d * d).sum()
        return saturate(int(val), bits)
    raise ValueError(f"unknown metric {metric!r}")
