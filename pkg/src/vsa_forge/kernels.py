"""Kernel sub-functions: encoding, weighted projection, nearest-neighbour search,
resonator factorization and the selector-driven dispatcher.

These are the functional reference for the simulator; every saturation and
tie rule here is mirrored by the hardware model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codebook import Codebook
from .hdc import (
    DEFAULT_BND_BITS,
    DEFAULT_DIST_BITS,
    DimensionMismatch,
    Hypervector,
    bind,
    bundle,
    int_range,
    permute,
)


class OperandError(ValueError):
    """Operands do not fit the selected kernel sub-function."""


@dataclass(frozen=True)
class KernelSelector:
    s1: int = 0
    s2: int = 0
    s3: int = 0

    def __post_init__(self):
        if self.s1 not in (0, 1):
            raise OperandError(f"s1 must be 0 or 1, got {self.s1}")
        if self.s2 not in (0, 1, 2, 3):
            raise OperandError(f"s2 must be in 0..3, got {self.s2}")
        if self.s3 not in (0, 1, 2):
            raise OperandError(f"s3 must be in 0..2, got {self.s3}")


@dataclass
class OperandArray:
    groups: list[list[Hypervector]]
    query: Hypervector | None = None
    weights: list[int] | None = None

    def __post_init__(self):
        members = [v for g in self.groups for v in g]
        if self.query is not None:
            members.append(self.query)
        for v in members[1:]:
            if v.dim != members[0].dim or v.fold_width != members[0].fold_width:
                raise DimensionMismatch("operand array members must share D and W")
        if self.weights is not None and len(self.weights) != len(self.groups):
            raise OperandError("weights length must equal the number of groups")

    @property
    def items(self) -> list[Hypervector]:
        """Groups flattened, for the sub-functions that take a plain list."""
        return [v for g in self.groups for v in g]


@dataclass
class FactorizationResult:
    factor_indices: list[int]
    iterations: int
    converged: bool
    estimates: list[Hypervector] = field(default_factory=list, repr=False)


def encode_group(group: Sequence[Hypervector], s2: int, position: int = 1) -> Hypervector:
    """Binding/permutation stage of the encoder for one group.

    ``position`` is the 1-based index of the group in its enclosing array
    and only matters for ``s2 == 2``.
    """
    if len(group) == 0:
        raise OperandError("empty group")
    if s2 in (0, 2) and len(group) != 1:
        raise OperandError(f"s2={s2} takes single-vector groups")
    if s2 == 0:
        return group[0]
    if s2 == 1:
        out = group[0]
        for v in group[1:]:
            out = bind(out, v)
        return out
    if s2 == 2:
        return permute(group[0], position)
    if s2 == 3:
        out = group[0]
        for j, v in enumerate(group[1:], start=1):
            out = bind(out, permute(v, j))
        return out
    raise OperandError(f"invalid s2 {s2}")


def encode(y: OperandArray, s1: int, s2: int, bits: int = DEFAULT_BND_BITS) -> Hypervector:
    KernelSelector(s1, s2, 0)
    if not y.groups:
        raise OperandError("no groups to encode")
    if s1 == 0:
        if len(y.groups) != 1:
            raise OperandError("s1=0 encodes exactly one group")
        return encode_group(y.groups[0], s2, 1)
    parts = [encode_group(g, s2, i + 1) for i, g in enumerate(y.groups)]
    return bundle(parts, bits)


def clamp_weight(w: int, bits: int = DEFAULT_BND_BITS) -> int:
    lim = (1 << (bits - 1)) - 1
    return max(-lim, min(lim, int(w)))


def project_bits(item_bits: np.ndarray, weights: Sequence[int], bits: int = DEFAULT_BND_BITS) -> np.ndarray:
    """Weighted superposition on raw (N, D) bit rows; returns the sign bits."""
    lo, hi = int_range(bits)
    acc = np.zeros(item_bits.shape[1], dtype=np.int64)
    for row, w in zip(item_bits, weights):
        w = clamp_weight(w, bits)
        acc += np.where(row == 0, w, -w)
        np.clip(acc, lo, hi, out=acc)
    return (acc < 0).astype(np.uint8)


def project(items: Sequence[Hypervector], weights: Sequence[int], bits: int = DEFAULT_BND_BITS) -> Hypervector:
    """sign(sum_i n_i * y_i) with weights clamped to +-(2^(H-1)-1) and
    H-bit saturating lanes, accumulated in item order."""
    if len(items) == 0:
        raise OperandError("nothing to project")
    if len(items) != len(weights):
        raise OperandError("items and weights differ in length")
    rows = np.stack([v.bits for v in items])
    return Hypervector(project_bits(rows, weights, bits), items[0].fold_width)


def fold_scores(item_bits: np.ndarray, query_bits: np.ndarray, fold_width: int,
                bits: int = DEFAULT_DIST_BITS) -> np.ndarray:
    """Folded dot products of every row against the query, each a C-bit
    saturating sum of per-fold partials."""
    n, dim = item_bits.shape
    diff = (item_bits ^ query_bits).reshape(n, dim // fold_width, fold_width)
    partials = fold_width - 2 * diff.sum(axis=2, dtype=np.int64)
    lo, hi = int_range(bits)
    total = np.zeros(n, dtype=np.int64)
    for k in range(partials.shape[1]):
        total = np.clip(total + np.clip(partials[:, k], lo, hi), lo, hi)
    return total


def similarity_scores(items: Sequence[Hypervector], query: Hypervector,
                      bits: int = DEFAULT_DIST_BITS) -> np.ndarray:
    for v in items:
        if v.dim != query.dim or v.fold_width != query.fold_width:
            raise DimensionMismatch("items and query differ in D or W")
    rows = np.stack([v.bits for v in items])
    return fold_scores(rows, query.bits, query.fold_width, bits)


def nn_search(items: Sequence[Hypervector], query: Hypervector, bits: int = DEFAULT_DIST_BITS) -> int:
    """Index of the most similar item; the lowest index wins ties."""
    if len(items) == 0:
        raise OperandError("nearest-neighbour search over an empty list")
    return int(np.argmax(similarity_scores(items, query, bits)))


def score_to_weight(score, dist_bits: int = DEFAULT_DIST_BITS, bnd_bits: int = DEFAULT_BND_BITS):
    """Requantize a C-bit similarity into the H-bit weight domain by an
    arithmetic right shift of C-H bits (then the usual clamp)."""
    return np.asarray(score, dtype=np.int64) >> max(0, dist_bits - bnd_bits)


def resonator_factorize(
    composite: Hypervector,
    codebooks: Sequence[Codebook],
    max_iters: int = 60,
    bnd_bits: int = DEFAULT_BND_BITS,
    dist_bits: int = DEFAULT_DIST_BITS,
) -> FactorizationResult:
    """Iterative factorization of a bound product of codebook items.

    Estimates start as the superposition of each codebook and are updated
    one factor at a time (later factors see the fresh estimates of earlier
    ones).  The loop stops at the first sweep that changes nothing.

    Binary binding cannot tell ``a*b`` from ``(-a)*(-b)``, so estimates may
    settle on complements of the true factors; the readout therefore picks
    the item with the largest *absolute* similarity.
    """
    if len(codebooks) < 2:
        raise OperandError("factorization needs at least two codebooks")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    for cb in codebooks:
        if cb.dim != composite.dim or cb.fold_width != composite.fold_width:
            raise DimensionMismatch(f"codebook {cb.name} does not match the composite")
    width = composite.fold_width
    rows = [np.stack([v.bits for v in cb.items()]) for cb in codebooks]
    est = [project_bits(r, [1] * len(r), bnd_bits) for r in rows]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        changed = False
        for f, r in enumerate(rows):
            noisy = composite.bits.copy()
            for g, e in enumerate(est):
                if g != f:
                    noisy ^= e
            scores = fold_scores(r, noisy, width, dist_bits)
            new = project_bits(r, score_to_weight(scores, dist_bits, bnd_bits), bnd_bits)
            if not np.array_equal(new, est[f]):
                changed = True
                est[f] = new
        if not changed:
            converged = True
            break
    indices = [
        int(np.argmax(np.abs(fold_scores(r, e, width, dist_bits)))) for r, e in zip(rows, est)
    ]
    return FactorizationResult(
        indices, it, converged, [Hypervector(e, width) for e in est]
    )


def exhaustive_factorize(composite: Hypervector, codebooks: Sequence[Codebook]) -> tuple[int, ...]:
    """Brute-force factorization: the index tuple whose bound product is
    closest to the composite (lowest lexicographic tuple on ties)."""
    rows = [np.stack([v.bits for v in cb.items()]) for cb in codebooks]
    best, best_dist = None, None
    # peel the last factor off vectorised, enumerate the rest
    for head in itertools.product(*[range(len(r)) for r in rows[:-1]]):
        partial = composite.bits.copy()
        for r, i in zip(rows, head):
            partial ^= r[i]
        dists = np.count_nonzero(rows[-1] ^ partial, axis=1)
        j = int(np.argmin(dists))
        if best_dist is None or dists[j] < best_dist:
            best, best_dist = head + (j,), int(dists[j])
    return best


def kernel_dispatch(y: OperandArray, s: KernelSelector, bnd_bits: int = DEFAULT_BND_BITS,
                    dist_bits: int = DEFAULT_DIST_BITS):
    """Route to encode (s3=0), project (s3=1) or nn_search (s3=2)."""
    if s.s3 == 0:
        return encode(y, s.s1, s.s2, bnd_bits)
    items = y.items
    if not items:
        raise OperandError("no operand vectors")
    if s.s3 == 1:
        if y.weights is None:
            raise OperandError("projection needs weights")
        if any(len(g) != 1 for g in y.groups):
            raise OperandError("projection takes single-vector groups")
        return project(items, y.weights, bnd_bits)
    if y.query is None:
        raise OperandError("nearest-neighbour search needs a query")
    return nn_search(items, y.query, dist_bits)


__all__ = [
    "FactorizationResult",
    "KernelSelector",
    "OperandArray",
    "OperandError",
    "clamp_weight",
    "encode",
    "encode_group",
    "exhaustive_factorize",
    "fold_scores",
    "kernel_dispatch",
    "nn_search",
    "project",
    "project_bits",
    "resonator_factorize",
    "score_to_weight",
    "similarity_scores",
]
