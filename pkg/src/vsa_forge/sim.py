"""Cycle-level model of the multi-tile accelerator.

One Instruction Word issues per cycle and every unit has a one-cycle
latency.  All active tiles execute every stage op in lockstep (SIMD).
Within a cycle each op reads the machine state as it was at the start of
the cycle; writes commit at the end of the cycle.  Stage outputs travel
through per-stage latches and reach their consumer in the next cycle.

Memory layout per tile:

``seeds``
    seed folds of codebook items, addressed by slot ``A``.  Distributed
    codebooks put item ``g`` on active tile ``g % K`` at slot
    ``base + g // K``.  Replicated codebooks occupy the same slots on every
    tile.
``rbuf``
    replicated full-vector buffer, the same contents on every tile.
``dbuf``
    distributed full-vector buffer with a per-tile, per-fold valid flag.
``tab``
    per-tile list of seed slots walked by ``LDX``; ``-1`` marks no item.

Stage ops on a tile whose input is invalid (an empty slot or a ``-1``
table entry) change nothing on that tile.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codebook import Codebook
from .config import AccConfig
from .hdc import DimensionMismatch, Hypervector, VsaError, int_range
from .isa import (
    NUM_STAGES,
    DecodeError,
    InstructionWord,
    OPCODES,
    Program,
    Stage,
    decode_word,
    prim,
    schedule,
    split_param,
    validate,
)

REPORT_VERSION = 1
TRACE_HEADER = ("cycle", "tile", "stage", "opcode", "energy_delta")


class SimError(VsaError):
    pass


class CapacityError(SimError):
    pass


class MachineFault(SimError):
    def __init__(self, cycle: int, msg: str):
        super().__init__(f"fault at cycle {cycle}: {msg}")
        self.cycle = cycle


@dataclass
class MemoryImage:
    """Initial tile memory contents for the active tiles (axis 0)."""

    dim: int
    fold_width: int
    seeds: np.ndarray  # (K, S, W) uint8
    seed_valid: np.ndarray  # (K, S) bool
    rbuf: np.ndarray  # (NR, L, W) uint8
    dbuf: np.ndarray  # (K, ND, L, W) uint8
    dbuf_valid: np.ndarray  # (K, ND, L) bool
    tab: np.ndarray  # (K, T) int32

    @property
    def num_tiles(self) -> int:
        return self.seeds.shape[0]

    @property
    def num_folds(self) -> int:
        return self.dim // self.fold_width

    def tile_bytes(self) -> int:
        w, d = self.fold_width, self.dim
        return (self.seeds.shape[1] * w + (self.rbuf.shape[0] + self.dbuf.shape[1]) * d) // 8 \
            + 2 * self.tab.shape[1]


class ImageBuilder:
    """Allocates slots and buffers for one set of active tiles."""

    def __init__(self, num_tiles: int, dim: int, fold_width: int):
        if dim % fold_width:
            raise DimensionMismatch(f"dimension {dim} is not a multiple of fold width {fold_width}")
        self.k = num_tiles
        self.dim = dim
        self.width = fold_width
        self._seeds: list[tuple[np.ndarray, np.ndarray]] = []  # per slot: (K, W), (K,)
        self._rbuf: list[np.ndarray] = []
        self._dbuf: list[tuple[np.ndarray, np.ndarray]] = []
        self._tab: list[list[int]] = [[] for _ in range(num_tiles)]

    @property
    def num_folds(self) -> int:
        return self.dim // self.width

    def _fold_seeds(self, cb: Codebook) -> np.ndarray:
        if cb.dim != self.dim or cb.fold_width != self.width:
            raise DimensionMismatch(f"codebook {cb.name} does not match the machine geometry")
        return cb.seeds

    def distribute(self, cb: Codebook) -> int:
        """Round-robin placement; returns the base slot."""
        seeds = self._fold_seeds(cb)
        base = len(self._seeds)
        for j in range(-(-cb.num_items // self.k)):
            data = np.zeros((self.k, self.width), dtype=np.uint8)
            valid = np.zeros(self.k, dtype=bool)
            for t in range(self.k):
                g = j * self.k + t
                if g < cb.num_items:
                    data[t] = seeds[g]
                    valid[t] = True
            self._seeds.append((data, valid))
        return base

    def replicate(self, cb: Codebook) -> int:
        seeds = self._fold_seeds(cb)
        base = len(self._seeds)
        for s in seeds:
            self._seeds.append((np.broadcast_to(s, (self.k, self.width)).copy(), np.ones(self.k, dtype=bool)))
        return base

    def rbuf(self, vectors: Sequence[Hypervector] | int) -> int:
        base = len(self._rbuf)
        if isinstance(vectors, int):
            self._rbuf.extend(np.zeros((self.num_folds, self.width), dtype=np.uint8) for _ in range(vectors))
        else:
            for v in vectors:
                if v.dim != self.dim or v.fold_width != self.width:
                    raise DimensionMismatch("buffer vector does not match the machine geometry")
                self._rbuf.append(v.folds.copy())
        return base

    def dbuf(self, count: int) -> int:
        base = len(self._dbuf)
        for _ in range(count):
            self._dbuf.append((np.zeros((self.k, self.num_folds, self.width), dtype=np.uint8),
                               np.zeros((self.k, self.num_folds), dtype=bool)))
        return base

    def table(self, per_tile: Sequence[Sequence[int]]) -> int:
        """Append one entry list per tile, padded with -1; returns the start."""
        if len(per_tile) != self.k:
            raise SimError("one table list per active tile is required")
        start = len(self._tab[0])
        n = max((len(x) for x in per_tile), default=0)
        for t, entries in enumerate(per_tile):
            self._tab[t].extend(list(entries) + [-1] * (n - len(entries)))
        return start

    @property
    def table_size(self) -> int:
        return len(self._tab[0])

    def build(self) -> MemoryImage:
        k, w, l = self.k, self.width, self.num_folds
        if self._seeds:
            seeds = np.stack([s for s, _ in self._seeds], axis=1)
            seed_valid = np.stack([v for _, v in self._seeds], axis=1)
        else:
            seeds = np.zeros((k, 0, w), dtype=np.uint8)
            seed_valid = np.zeros((k, 0), dtype=bool)
        rbuf = np.stack(self._rbuf) if self._rbuf else np.zeros((0, l, w), dtype=np.uint8)
        if self._dbuf:
            dbuf = np.stack([d for d, _ in self._dbuf], axis=1)
            dvalid = np.stack([v for _, v in self._dbuf], axis=1)
        else:
            dbuf = np.zeros((k, 0, l, w), dtype=np.uint8)
            dvalid = np.zeros((k, 0, l), dtype=bool)
        tab = np.array(self._tab, dtype=np.int32).reshape(k, -1)
        return MemoryImage(self.dim, w, seeds, seed_valid, rbuf, dbuf, dvalid, tab)


@dataclass(frozen=True)
class CycleTrace:
    cycle: int
    ops: tuple[tuple[str, str], ...]  # (stage, opcode) fired on every active tile
    tiles: tuple[int, ...]
    energy_delta: float


@dataclass
class RunReport:
    total_cycles: int
    words_executed: int
    utilization: dict[str, float]
    energy_total: float
    outputs: list[int]
    rbuf_digest: str
    saturation_events: int
    control: str = ""
    config: str = ""

    @property
    def mean_power(self) -> float:
        return self.energy_total / self.total_cycles if self.total_cycles else 0.0

    @property
    def results_digest(self) -> str:
        h = hashlib.sha256(json.dumps(self.outputs).encode())
        h.update(self.rbuf_digest.encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "config": self.config,
            "control": self.control,
            "total_cycles": self.total_cycles,
            "words_executed": self.words_executed,
            "utilization": self.utilization,
            "energy_total": round(self.energy_total, 6),
            "mean_power": round(self.mean_power, 6),
            "saturation_events": self.saturation_events,
            "results_digest": self.results_digest,
            "outputs": self.outputs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _sign(lanes: np.ndarray) -> np.ndarray:
    return (lanes < 0).astype(np.uint8)


class Machine:
    """Architectural state of the active tiles plus the program counter."""

    def __init__(self, cfg: AccConfig, program: Program, image: MemoryImage):
        self.cfg = cfg
        self.program = program
        self.raw = program.encoded()
        self._decoded: dict[int, InstructionWord] = {}
        k = cfg.num_active
        if image.num_tiles != k:
            raise SimError(f"image built for {image.num_tiles} tiles, config has {k} active")
        if image.fold_width != cfg.fold_width:
            raise DimensionMismatch("image fold width differs from the configuration")
        self.k = k
        self.dim = image.dim
        self.width = image.fold_width
        self.folds = image.num_folds
        w, l = self.width, self.folds
        self.seeds = image.seeds.copy()
        self.seed_valid = image.seed_valid.copy()
        # the CA-90 expansion of every stored seed, fold by fold
        exp = np.empty(self.seeds.shape[:2] + (l, w), dtype=np.uint8)
        cur = self.seeds
        for j in range(l):
            exp[:, :, j] = cur
            cur = ca90_step_batch(cur)
        self.expanded = exp
        self.tab = image.tab.copy()
        self.tptr = 0
        self.rbuf = image.rbuf.copy()
        self.dbuf = image.dbuf.copy()
        self.dbuf_valid = image.dbuf_valid.copy()
        self.rf = np.zeros((k, cfg.ca90_rf_regs, w), dtype=np.uint8)
        self.bb = np.zeros((k, w), dtype=np.uint8)
        self.qry = np.zeros((k, l, w), dtype=np.uint8)
        self.bnd = np.zeros((k, cfg.bnd_rf_regs, w), dtype=np.int64)
        self.touched = np.zeros((k, cfg.bnd_rf_regs), dtype=bool)
        self.dsum = np.zeros((k, cfg.dsum_regs), dtype=np.int64)
        self.score = np.zeros((k, 256), dtype=np.int64)
        self.best = np.zeros(k, dtype=np.int64)
        self.best_slot = np.zeros(k, dtype=np.int64)
        self.has_best = np.zeros(k, dtype=bool)
        self.argbase = 0
        self.out: list[int] = []
        self.latch: dict[Stage, tuple] = {}
        self.cycle = 0
        self.pc = 0
        self.energy = 0.0
        self.busy = [0] * NUM_STAGES
        self.saturations = 0
        self.fault: MachineFault | None = None
        self.h_lo, self.h_hi = int_range(cfg.bnd_bits)
        self.c_lo, self.c_hi = int_range(cfg.distance_bits)
        self.wlim = (1 << (cfg.bnd_bits - 1)) - 1
        self.shift = max(0, cfg.distance_bits - cfg.bnd_bits)
        self.weights = [cfg.stage_energy[s.name] * k for s in Stage]
        self.leak = cfg.leakage * k
        self.ranks = np.arange(k, dtype=np.int64)

    @property
    def finished(self) -> bool:
        return self.pc >= len(self.raw) or self.fault is not None

    # helpers -------------------------------------------------------------

    def _satc(self, v: np.ndarray) -> np.ndarray:
        if v.size and (v.min() < self.c_lo or v.max() > self.c_hi):
            self.saturations += 1
            return np.clip(v, self.c_lo, self.c_hi)
        return v

    def _partial(self, data: np.ndarray, k: int) -> np.ndarray:
        ones = np.count_nonzero(data ^ self.qry[:, k], axis=1)
        return self.width - 2 * ones.astype(np.int64)

    def _fold_check(self, k: int, name: str) -> None:
        if k >= self.folds:
            raise MachineFault(self.cycle, f"{name} addresses fold {k} of {self.folds}")

    def _slot_check(self, arr_len: int, a: int, what: str) -> None:
        if a >= arr_len:
            raise MachineFault(self.cycle, f"{what} slot {a} out of range ({arr_len})")

    # one cycle -------------------------------------------------------------

    def step(self) -> CycleTrace:
        if self.fault is not None:
            raise self.fault
        if self.pc >= len(self.raw):
            raise SimError("program finished")
        raw = self.raw[self.pc]
        word = self._decoded.get(raw)
        if word is None:
            try:
                word = self._decoded[raw] = decode_word(raw)
            except DecodeError as e:
                self.fault = MachineFault(self.cycle, str(e))
                raise self.fault from None
        a, k, x = split_param(word.param)
        commits = []
        latch: dict[Stage, tuple] = {}
        fired = []
        try:
            for s in range(NUM_STAGES):
                code = word.types[s]
                if not code:
                    continue
                spec = OPCODES[Stage(s)][code]
                if spec.src is None:
                    inp = None
                else:
                    inp = self.latch.get(spec.src)
                    if inp is None:
                        raise MachineFault(self.cycle, f"{spec.name} has no {spec.src.name} input")
                res = _EXEC[spec.name](self, inp, word.param, a, k, x)
                if res is not None:
                    out, commit = res
                    if out is not None:
                        latch[spec.stage] = out
                    if commit is not None:
                        commits.append(commit)
                fired.append((Stage(s).name, spec.name))
                self.busy[s] += 1
        except MachineFault as f:
            self.fault = f
            raise
        for c in commits:
            c()
        self.latch = latch
        delta = self.leak + sum(self.weights[Stage[st]] for st, _ in fired)
        self.energy += delta
        tr = CycleTrace(self.cycle, tuple(fired), tuple(self.cfg.active_tiles), delta)
        self.cycle += 1
        self.pc += 1
        return tr

    def report(self) -> RunReport:
        n = self.cycle
        util = {s.name: (self.busy[s] / n if n else 0.0) for s in Stage}
        return RunReport(
            total_cycles=n,
            words_executed=self.pc,
            utilization=util,
            energy_total=self.energy,
            outputs=list(self.out),
            rbuf_digest=hashlib.sha256(self.rbuf.tobytes()).hexdigest(),
            saturation_events=self.saturations,
            control=self.program.control,
            config=self.cfg.name,
        )

    def rbuf_vector(self, slot: int) -> Hypervector:
        return Hypervector(self.rbuf[slot].reshape(-1), self.width)

    def dbuf_vector(self, tile_rank: int, slot: int) -> Hypervector:
        return Hypervector(self.dbuf[tile_rank, slot].reshape(-1), self.width)


def ca90_step_batch(f: np.ndarray) -> np.ndarray:
    """Rule-90 step along the last axis."""
    return np.roll(f, 1, axis=-1) ^ np.roll(f, -1, axis=-1)


# ---------------------------------------------------------------------------
# stage op semantics.  Each returns (latch_value | None, commit | None); a
# latch value is (data, valid[K], slot[K] | None).


def _ldi(m: Machine, inp, p, a, k, x):
    m._slot_check(m.seeds.shape[1], a, "seed")
    slot = np.full(m.k, a, dtype=np.int64)
    return (m.seeds[:, a], m.seed_valid[:, a], slot), None


def _ldx(m: Machine, inp, p, a, k, x):
    if m.tptr >= m.tab.shape[1]:
        raise MachineFault(m.cycle, f"table pointer {m.tptr} past the end")
    idx = m.tab[:, m.tptr].astype(np.int64)
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    if np.any(safe >= m.seeds.shape[1]):
        raise MachineFault(m.cycle, "table entry names a missing seed slot")
    valid = valid & m.seed_valid[m.ranks, safe]
    data = m.seeds[m.ranks, safe]
    nxt = m.tptr + 1

    def commit():
        m.tptr = nxt
    return (data, valid, safe), commit


def _ldv(m: Machine, inp, p, a, k, x):
    m._slot_check(m.rbuf.shape[0], a, "rbuf")
    m._fold_check(k, "LDV")
    data = np.broadcast_to(m.rbuf[a, k], (m.k, m.width))
    return (data, np.ones(m.k, dtype=bool), None), None


def _ldd(m: Machine, inp, p, a, k, x):
    m._slot_check(m.dbuf.shape[1], a, "dbuf")
    m._fold_check(k, "LDD")
    return (m.dbuf[:, a, k].copy(), m.dbuf_valid[:, a, k].copy(), None), None


def _ldq(m: Machine, inp, p, a, k, x):
    m._slot_check(m.rbuf.shape[0], a, "rbuf")
    m._fold_check(k, "LDQ")
    v = m.rbuf[a, k].copy()

    def commit():
        m.qry[:, k] = v
    return None, commit


def _tset(m: Machine, inp, p, a, k, x):
    def commit():
        m.tptr = p
    return None, commit


def _seed(m: Machine, inp, p, a, k, x):
    data, valid, slot = inp
    new = np.where(valid[:, None], data, m.rf[:, x])

    def commit():
        m.rf[:, x] = new
    return (data, valid, slot), commit


def _ca(m: Machine, inp, p, a, k, x):
    new = ca90_step_batch(m.rf[:, x])

    def commit():
        m.rf[:, x] = new
    return (new, np.ones(m.k, dtype=bool), None), commit


def _expand(m: Machine, inp, k: int) -> np.ndarray:
    data, valid, slot = inp
    if slot is not None:
        return m.expanded[m.ranks, slot, k]
    out = data
    for _ in range(k):
        out = ca90_step_batch(out)
    return out


def _exp(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "EXP")
    return (_expand(m, inp, k), inp[1], None), None


def _expr(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "EXPR")
    lo = _expand(m, inp, k)
    if x == 0:
        return (lo, inp[1], None), None
    hi = _expand(m, inp, (k + 1) % m.folds)
    return (np.concatenate([lo[:, x:], hi[:, :x]], axis=1), inp[1], None), None


def _bld(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    new = np.where(valid[:, None], data, m.bb)

    def commit():
        m.bb = new
    return None, commit


def _bxr(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    new = np.where(valid[:, None], m.bb ^ data, m.bb)

    def commit():
        m.bb = new
    return None, commit


def _bxo(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    return (m.bb ^ data, valid, None), None


def _bxq(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "BXQ")
    data, valid, _ = inp
    new = np.where(valid[:, None], m.bb ^ data, m.qry[:, k])

    def commit():
        m.qry[:, k] = new
    return None, commit


def _dbuf_store(m: Machine, a: int, k: int, data, valid):
    m._slot_check(m.dbuf.shape[1], a, "dbuf")
    m._fold_check(k, "DBUF store")
    new = np.where(valid[:, None], data, m.dbuf[:, a, k])
    valid = valid.copy()

    def commit():
        m.dbuf[:, a, k] = new
        m.dbuf_valid[:, a, k] = valid
    return None, commit


def _bxs(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    return _dbuf_store(m, a, k, m.bb ^ data, valid)


def _bstg(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    return _dbuf_store(m, a, k, data, valid)


def _conv(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    return (1 - 2 * data.astype(np.int64), valid, None), None


def _mult(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    w = np.clip(m.score[:, a] >> m.shift, -m.wlim, m.wlim)
    return (w[:, None] * (1 - 2 * data.astype(np.int64)), valid, None), None


def _bclr(m: Machine, inp, p, a, k, x):
    def commit():
        m.bnd[:, x] = 0
        m.touched[:, x] = False
    return None, commit


def _bacc(m: Machine, inp, p, a, k, x):
    # chained over tiles in rank order, result broadcast to every tile
    data, valid, _ = inp
    v = m.bnd[0, x].copy()
    for t in range(m.k):
        if valid[t]:
            v += data[t]
            np.clip(v, m.h_lo, m.h_hi, out=v)
    any_valid = bool(valid.any())

    def commit():
        m.bnd[:, x] = v
        m.touched[:, x] |= any_valid
    return None, commit


def _bacc1(m: Machine, inp, p, a, k, x, produce=False):
    data, valid, _ = inp
    new = np.where(valid[:, None], np.clip(m.bnd[:, x] + data, m.h_lo, m.h_hi), m.bnd[:, x])
    valid = valid.copy()

    def commit():
        m.bnd[:, x] = new
        m.touched[:, x] |= valid
    return ((new, valid, None) if produce else None), commit


def _baco(m: Machine, inp, p, a, k, x):
    return _bacc1(m, inp, p, a, k, x, produce=True)


def _brd(m: Machine, inp, p, a, k, x):
    return (m.bnd[:, x].copy(), m.touched[:, x].copy(), None), None


def _sgr(m: Machine, inp, p, a, k, x):
    m._slot_check(m.rbuf.shape[0], a, "rbuf")
    m._fold_check(k, "SGR")
    data, valid, _ = inp
    hit = np.flatnonzero(valid)
    if hit.size == 0:
        return None, None
    v = _sign(data[hit[0]])

    def commit():
        m.rbuf[a, k] = v
    return None, commit


def _sgd(m: Machine, inp, p, a, k, x):
    data, valid, _ = inp
    return _dbuf_store(m, a, k, _sign(data), valid)


def _sgq(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "SGQ")
    data, valid, _ = inp
    new = np.where(valid[:, None], _sign(data), m.qry[:, k])

    def commit():
        m.qry[:, k] = new
    return None, commit


def _pc(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "PC")
    data, valid, _ = inp
    return (m._partial(data, k), valid, None), None


def _sgpc(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "SGPC")
    data, valid, _ = inp
    return (m._partial(_sign(data), k), valid, None), None


def _pci(m: Machine, inp, p, a, k, x):
    m._fold_check(k, "PCI")
    data, valid, _ = inp
    part = m._satc(m._partial(data, k))
    new = np.where(valid, part, m.dsum[:, x])

    def commit():
        m.dsum[:, x] = new
    return None, commit


def _dacc_value(m: Machine, inp, k, x):
    data, valid, _ = inp
    part = m._satc(data)
    total = part if k == 0 else m._satc(m.dsum[:, x] + part)
    return np.where(valid, total, m.dsum[:, x]), valid


def _dacc(m: Machine, inp, p, a, k, x):
    new, _ = _dacc_value(m, inp, k, x)

    def commit():
        m.dsum[:, x] = new
    return None, commit


def _dsc(m: Machine, inp, p, a, k, x):
    new, valid = _dacc_value(m, inp, k, x)
    last = k == m.folds - 1

    def commit():
        m.dsum[:, x] = new
        if last:
            m.score[:, a] = np.where(valid, new, m.score[:, a])
    return None, commit


def _dam(m: Machine, inp, p, a, k, x, absolute=False):
    new, valid = _dacc_value(m, inp, k, x)
    if k != m.folds - 1:
        def commit():
            m.dsum[:, x] = new
        return None, commit
    val = np.abs(new) if absolute else new
    better = valid & (~m.has_best | (val > m.best))
    best = np.where(better, val, m.best)
    slot = np.where(better, a, m.best_slot)
    has = m.has_best | valid

    def commit():
        m.dsum[:, x] = new
        m.best, m.best_slot, m.has_best = best, slot, has
    return None, commit


def _dama(m: Machine, inp, p, a, k, x):
    return _dam(m, inp, p, a, k, x, absolute=True)


def _amr(m: Machine, inp, p, a, k, x):
    def commit():
        m.has_best = np.zeros(m.k, dtype=bool)
        m.argbase = a
    return None, commit


def _ams(m: Machine, inp, p, a, k, x):
    # cross-tile reduction: highest value, ties to the lowest global index
    result = -1
    if m.has_best.any():
        gidx = (m.best_slot - m.argbase) * m.k + m.ranks
        cand = [(-int(m.best[t]), int(gidx[t])) for t in range(m.k) if m.has_best[t]]
        result = min(cand)[1]

    def commit():
        m.out.append(result)
    return None, commit


_EXEC = {
    "LDI": _ldi, "LDX": _ldx, "LDV": _ldv, "LDD": _ldd, "LDQ": _ldq, "TSET": _tset,
    "SEED": _seed, "CA": _ca, "EXP": _exp, "EXPR": _expr,
    "BLD": _bld, "BLDG": _bld, "BXR": _bxr, "BXRG": _bxr, "BXO": _bxo, "BXOG": _bxo,
    "BXQ": _bxq, "BXQG": _bxq, "BXS": _bxs, "BXSG": _bxs, "BSTG": _bstg,
    "CONV": _conv, "CONVB": _conv, "CONVV": _conv, "MULT": _mult,
    "BCLR": _bclr, "BACC": _bacc, "BACC1": _bacc1, "BACO": _baco, "BRD": _brd,
    "SGR": _sgr, "SGD": _sgd, "SGQ": _sgq, "PC": _pc, "PCI": _pci, "PCV": _pc, "PCVI": _pci,
    "SGPC": _sgpc,
    "DACC": _dacc, "DSC": _dsc, "DAM": _dam, "DAMA": _dama, "AMR": _amr, "AMS": _ams,
}


# ---------------------------------------------------------------------------
# driver


def load(cfg: AccConfig, program: Program, image: MemoryImage, check: bool = True) -> Machine:
    """Build a machine at cycle 0 after capacity and hazard checks."""
    if cfg.num_active == 0:
        raise SimError("empty tile mask")
    need = image.tile_bytes()
    if need > cfg.tile_capacity:
        raise CapacityError(f"tile image needs {need} bytes, tile holds {cfg.tile_capacity}")
    if check:
        bad = validate(program, cfg)
        if bad:
            raise SimError(f"program fails validation: {bad[0]} ({len(bad)} violations)")
    return Machine(cfg, program, image)


def run(m: Machine, trace_path=None) -> RunReport:
    """Step to completion; optionally write the per-tile trace CSV."""
    if trace_path is None:
        while m.pc < len(m.raw):
            m.step()
        return m.report()
    with open(trace_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        leak = m.cfg.leakage
        while m.pc < len(m.raw):
            tr = m.step()
            for t in tr.tiles:
                for st, name in tr.ops:
                    w.writerow((tr.cycle, t, st, name, m.cfg.stage_energy[st]))
                w.writerow((tr.cycle, t, "-", "LEAK", leak))
    return m.report()


def write_report(report: RunReport, path, extra: dict | None = None) -> None:
    d = report.to_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class DistanceResult:
    index: int
    report: RunReport
    saturated: bool = field(default=False)


def scan_ops(kind: str, path: str, slots: Sequence[int], folds: int, regs: int,
             extra: dict | None = None) -> list:
    """Fold partials of every slot into DSUM registers.

    Slots are taken ``regs`` at a time, one DSUM register each; within a
    group the loop runs fold-major so neighbouring primitives agree on ``k``.
    The slot's own address goes in ``A``.
    """
    ops = []
    slots = list(slots)
    for g in range(0, len(slots), regs):
        group = slots[g:g + regs]
        for k in range(folds):
            for r, a in enumerate(group):
                ops.append(prim(kind, path, a=a, k=k, x=r))
    return ops


def distance_ops(base: int, slots: int, folds: int, query_slot: int, regs: int) -> list:
    """Primitive stream: load the query, then a signed argmax over the
    distributed slots ``base .. base+slots-1``."""
    ops = [prim("LOAD_QUERY", "LDQ", a=query_slot, k=k) for k in range(folds)]
    ops.append(prim("ARGMAX", "AMR", a=base))
    ops += scan_ops("POPCNT", "LDI EXP PC DAM", range(base, base + slots), folds, regs)
    ops.append(prim("ARGMAX", "AMS"))
    return ops


def distance_pipeline(cfg: AccConfig, items: Sequence[Hypervector], query: Hypervector,
                      control: str = "mopc") -> DistanceResult:
    """Nearest-neighbour search of ``query`` over ``items`` on the machine.

    The items are stored as codebook seeds, so each must be a CA-90
    expansion of its first fold (as codebook items are).
    """
    if len(items) == 0:
        raise SimError("no items loaded")
    w = query.fold_width
    seeds = np.stack([v.fold(0) for v in items])
    cb = Codebook(seeds, query.dim, "items")
    for i, v in enumerate(items):
        if cb.item(i) != v:
            raise SimError(f"item {i} is not a CA-90 expansion of its seed")
    b = ImageBuilder(cfg.num_active, query.dim, w)
    base = b.distribute(cb)
    q = b.rbuf([query])
    image = b.build()
    slots = -(-len(items) // cfg.num_active)
    ops = distance_ops(base, slots, query.num_folds, q, cfg.dsum_regs)
    m = load(cfg, schedule(ops, control), image)
    rep = run(m)
    return DistanceResult(rep.outputs[-1], rep, rep.saturation_events > 0)


def static_energy(program: Program, cfg: AccConfig) -> tuple[float, int]:
    """(energy_total, cycles) that a run of ``program`` accrues.

    Energy depends only on which stages fire each cycle, so it can be
    computed without executing the program; ``run`` reports the same total.
    """
    k = cfg.num_active
    counts = [0] * NUM_STAGES
    for w in program.words:
        for s, code in enumerate(w.types):
            if code:
                counts[s] += 1
    n = len(program.words)
    dyn = sum(cfg.stage_energy[s.name] * counts[s] for s in Stage)
    return (cfg.leakage * n + dyn) * k, n
