"""Seed-compressed codebooks expanded fold by fold with rule-90 automata."""

from __future__ import annotations

import struct
import threading

import numpy as np

from .hdc import ConfigError, Hypervector

CB_MAGIC = b"CBNK"
CB_VERSION = 1
_CB_HEADER = struct.Struct("<4sHIII2x")  # 20 bytes


def ca90_step(fold: np.ndarray) -> np.ndarray:
    """One rule-90 update on a cyclic ring: ``out[i] = f[i-1] ^ f[i+1]``."""
    f = np.asarray(fold, dtype=np.uint8)
    return np.roll(f, 1) ^ np.roll(f, -1)


def ca90_steps(fold: np.ndarray, steps: int) -> np.ndarray:
    f = np.asarray(fold, dtype=np.uint8)
    for _ in range(steps):
        f = ca90_step(f)
    return f


def expand(seed: np.ndarray, num_folds: int) -> list[np.ndarray]:
    """Fold 0 is the seed; each later fold is one CA step past the previous."""
    if num_folds < 1:
        raise ValueError("num_folds must be >= 1")
    folds = [np.asarray(seed, dtype=np.uint8).copy()]
    for _ in range(num_folds - 1):
        folds.append(ca90_step(folds[-1]))
    return folds


class Codebook:
    """N atomic hypervectors stored as one W-bit seed fold each."""

    def __init__(self, seeds, dim: int, name: str = "cb"):
        seeds = np.array(seeds, dtype=np.uint8)
        if seeds.ndim != 2 or seeds.shape[0] == 0:
            raise ConfigError("seeds must be a non-empty (N, W) array")
        width = seeds.shape[1]
        if dim <= 0 or dim % width:
            raise ConfigError(f"dimension {dim} is not a multiple of fold width {width}")
        if np.any(seeds > 1):
            raise ValueError("seed bits must be 0 or 1")
        if np.any(seeds.sum(axis=1) == 0):
            raise ConfigError("all-zero seeds are fixed points of rule 90 and are rejected")
        seeds.flags.writeable = False
        self.seeds = seeds
        self.dim = dim
        self.fold_width = width
        self.name = name
        self._cache: dict[int, Hypervector] = {}
        self._lock = threading.Lock()

    @classmethod
    def random(cls, num_items: int, dim: int, fold_width: int, seed, name: str = "cb"):
        if fold_width <= 0 or dim % fold_width:
            raise ConfigError(f"dimension {dim} is not a multiple of fold width {fold_width}")
        rng = np.random.Generator(np.random.Philox(seed))
        seeds = rng.integers(0, 2, size=(num_items, fold_width), dtype=np.uint8)
        for i in range(num_items):
            while not seeds[i].any():
                seeds[i] = rng.integers(0, 2, size=fold_width, dtype=np.uint8)
        return cls(seeds, dim, name)

    @property
    def num_items(self) -> int:
        return self.seeds.shape[0]

    @property
    def num_folds(self) -> int:
        return self.dim // self.fold_width

    def __len__(self) -> int:
        return self.num_items

    def item(self, index: int) -> Hypervector:
        if not 0 <= index < self.num_items:
            raise IndexError(f"item {index} out of range for {self.num_items} items")
        with self._lock:
            hv = self._cache.get(index)
            if hv is None:
                hv = Hypervector.from_folds(expand(self.seeds[index], self.num_folds))
                self._cache[index] = hv
        return hv

    def items(self) -> list[Hypervector]:
        return [self.item(i) for i in range(self.num_items)]

    def footprint(self, compressed: bool = True) -> int:
        return footprint(self, compressed)

    def to_bytes(self) -> bytes:
        n, w = self.seeds.shape
        out = [_CB_HEADER.pack(CB_MAGIC, CB_VERSION, n, self.dim, w)]
        for s in self.seeds:
            out.append(np.packbits(s, bitorder="little").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, name: str = "cb") -> "Codebook":
        if len(data) < _CB_HEADER.size:
            raise ValueError("truncated codebook header")
        magic, version, n, dim, w = _CB_HEADER.unpack_from(data)
        if magic != CB_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != CB_VERSION:
            raise ValueError(f"unsupported codebook version {version}")
        if w == 0 or dim % w:
            raise ConfigError(f"dimension {dim} is not a multiple of fold width {w}")
        stride = (w + 7) // 8
        payload = np.frombuffer(data, dtype=np.uint8, offset=_CB_HEADER.size)
        if payload.size != n * stride:
            raise ValueError("payload size does not match header")
        seeds = np.unpackbits(payload.reshape(n, stride), axis=1, bitorder="little")[:, :w]
        return cls(seeds, dim, name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.seeds, other.seeds)

    def __repr__(self) -> str:
        return f"Codebook({self.name!r}, N={self.num_items}, D={self.dim}, W={self.fold_width})"


def footprint(cb: Codebook, compressed: bool = True) -> int:
    """Storage in bytes: one seed fold per item, or the full vectors."""
    bits = cb.fold_width if compressed else cb.dim
    return cb.num_items * bits // 8
