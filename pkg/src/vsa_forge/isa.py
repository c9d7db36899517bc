"""Instruction Word format, assembler, and SOPC/MOPC schedulers.

A word holds one 4-bit opcode per pipeline stage plus a shared 16-bit
``OP_PARAM``::

    bits  0..27  stage opcodes, MEM in bits 0..3 up to DC in bits 24..27
    bits 28..43  OP_PARAM
    bits 44..63  reserved, must be zero

OP_PARAM packs three fields: ``A`` (bits 0..7, slot or address), ``k``
(bits 8..11, fold index) and ``x`` (bits 12..15, register index or
rotation).  Every stage op reads the fields it needs from the word it sits
in, so ops of different primitives can share a word only when they agree on
every field both use.

*Entry* ops start a primitive.  Every other op consumes the output latch
its fixed source stage produced in the previous cycle.  A primitive placed
at start cycle ``t`` occupies ``path[i]`` at cycle ``t + i``.
Architectural state is double-buffered per cycle: every stage reads the
state as of the start of the cycle, writes land at the cycle's end.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from .config import AccConfig


class Stage(IntEnum):
    MEM = 0
    GEN = 1
    BIND = 2
    MUL = 3
    BND = 4
    SGN = 5
    DC = 6


NUM_STAGES = 7
FIELD_NAMES = tuple(s.name for s in Stage)
RESERVED_MASK = ~((1 << 44) - 1) & 0xFFFF_FFFF_FFFF_FFFF

PROG_MAGIC = b"VSAP"
PROG_VERSION = 1
_PROG_HEADER = struct.Struct("<4sHBxI4x")  # 16 bytes


class IsaError(ValueError):
    pass


class DecodeError(IsaError):
    pass


class AsmError(IsaError):
    def __init__(self, line: int, col: int, msg: str):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class OpSpec:
    stage: Stage
    code: int
    name: str
    fields: str  # OP_PARAM fields read, a subset of "Akx"
    src: Stage | None  # None marks an entry op
    produces: bool
    doc: str = ""

    @property
    def entry(self) -> bool:
        return self.src is None


M, G, B, U, N, S, D = Stage
_SPECS = [
    OpSpec(M, 1, "LDI", "A", None, True, "read seed fold at SRAM slot A"),
    OpSpec(M, 2, "LDX", "", None, True, "read seed at SRAM slot TAB[TPTR], TPTR += 1"),
    OpSpec(M, 3, "LDV", "Ak", None, True, "read fold k of replicated buffer slot A"),
    OpSpec(M, 4, "LDD", "Ak", None, True, "read fold k of distributed buffer slot A"),
    OpSpec(M, 5, "LDQ", "Ak", None, False, "QRY[k] <- fold k of replicated buffer slot A"),
    OpSpec(M, 6, "TSET", "Akx", None, False, "TPTR <- OP_PARAM"),
    OpSpec(G, 1, "SEED", "x", M, True, "CA90_RF[x] <- seed; pass it on"),
    OpSpec(G, 2, "CA", "x", None, True, "CA90_RF[x] <- rule90(CA90_RF[x]); pass it on"),
    OpSpec(G, 3, "EXP", "k", M, True, "fold k of the seed's expansion"),
    OpSpec(G, 4, "EXPR", "kx", M, True, "fold k of the expansion rotated left by x"),
    OpSpec(B, 1, "BLD", "", M, False, "BB <- in"),
    OpSpec(B, 2, "BLDG", "", G, False, "BB <- in"),
    OpSpec(B, 3, "BXR", "", M, False, "BB <- BB ^ in"),
    OpSpec(B, 4, "BXRG", "", G, False, "BB <- BB ^ in"),
    OpSpec(B, 5, "BXO", "", M, True, "pass BB ^ in"),
    OpSpec(B, 6, "BXOG", "", G, True, "pass BB ^ in"),
    OpSpec(B, 7, "BXQ", "k", M, False, "QRY[k] <- BB ^ in"),
    OpSpec(B, 8, "BXQG", "k", G, False, "QRY[k] <- BB ^ in"),
    OpSpec(B, 9, "BXS", "Ak", M, False, "DBUF[A].k <- BB ^ in"),
    OpSpec(B, 10, "BXSG", "Ak", G, False, "DBUF[A].k <- BB ^ in"),
    OpSpec(B, 11, "BSTG", "Ak", G, False, "DBUF[A].k <- in"),
    OpSpec(U, 1, "CONV", "", G, True, "binary -> bipolar integers"),
    OpSpec(U, 2, "CONVB", "", B, True, "binary -> bipolar integers"),
    OpSpec(U, 3, "CONVV", "", M, True, "binary -> bipolar integers"),
    OpSpec(U, 4, "MULT", "A", G, True, "bipolar(in) * requantized SCORE[A]"),
    OpSpec(N, 1, "BCLR", "x", None, False, "BND_RF[x] <- 0"),
    OpSpec(N, 2, "BACC", "x", U, False, "BND_RF[x] += in, chained over tiles in order"),
    OpSpec(N, 3, "BACC1", "x", U, False, "BND_RF[x] += in, per tile"),
    OpSpec(N, 4, "BRD", "x", None, True, "read BND_RF[x]"),
    OpSpec(N, 5, "BACO", "x", U, True, "BND_RF[x] += in per tile; pass the sum on"),
    OpSpec(S, 1, "SGR", "Ak", N, False, "RBUF[A].k <- sign(in)"),
    OpSpec(S, 2, "SGD", "Ak", N, False, "DBUF[A].k <- sign(in)"),
    OpSpec(S, 3, "SGQ", "k", N, False, "QRY[k] <- sign(in)"),
    OpSpec(S, 4, "PC", "k", G, True, "partial dot of in against QRY[k]"),
    OpSpec(S, 5, "PCI", "kx", G, False, "DSUM[x] <- partial dot"),
    OpSpec(S, 6, "PCV", "k", M, True, "partial dot of in against QRY[k]"),
    OpSpec(S, 7, "PCVI", "kx", M, False, "DSUM[x] <- partial dot"),
    OpSpec(S, 8, "SGPC", "k", N, True, "partial dot of sign(in) against QRY[k]"),
    OpSpec(D, 1, "DACC", "kx", S, False, "DSUM[x] += in (k == 0 assigns)"),
    OpSpec(D, 2, "DSC", "Akx", S, False, "DACC; SCORE[A] <- DSUM[x] on the last fold"),
    OpSpec(D, 3, "DAM", "Akx", S, False, "DACC; ARGMAX update on the last fold"),
    OpSpec(D, 4, "DAMA", "Akx", S, False, "DACC; ARGMAX update by |DSUM| on the last fold"),
    OpSpec(D, 5, "AMR", "A", None, False, "reset ARGMAX"),
    OpSpec(D, 6, "AMS", "", None, False, "push the global ARGMAX index to OUT"),
]
del M, G, B, U, N, S, D

OPCODES: dict[Stage, dict[int, OpSpec]] = {s: {} for s in Stage}
BY_NAME: dict[Stage, dict[str, OpSpec]] = {s: {} for s in Stage}
for _spec in _SPECS:
    OPCODES[_spec.stage][_spec.code] = _spec
    BY_NAME[_spec.stage][_spec.name] = _spec


def op(stage: Stage | str, name: str) -> OpSpec:
    st = Stage[stage] if isinstance(stage, str) else stage
    try:
        return BY_NAME[st][name.upper()]
    except KeyError:
        raise IsaError(f"unknown {st.name} mnemonic {name!r}") from None


def make_param(a: int = 0, k: int = 0, x: int = 0) -> int:
    if not (0 <= a < 256 and 0 <= k < 16 and 0 <= x < 16):
        raise IsaError(f"param fields out of range: A={a} k={k} x={x}")
    return a | k << 8 | x << 12


def split_param(p: int) -> tuple[int, int, int]:
    return p & 0xFF, (p >> 8) & 0xF, (p >> 12) & 0xF


# resources touched by each op, as functions of OP_PARAM
def _acc(spec: OpSpec, tag: int) -> tuple[tuple, tuple]:
    a, k, x = split_param(tag)
    n = spec.name
    if n in ("LDI", "SEED", "EXP", "EXPR", "CONV", "CONVB", "CONVV", "PC", "PCV", "SGPC"):
        if n == "SEED":
            return (), (("RF", x),)
        if n in ("PC", "PCV", "SGPC"):
            return (("QRY", k),), ()
        return (), ()
    table = {
        "LDX": ((("TPTR",),), (("TPTR",),)),
        "LDV": ((("RBUF", a, k),), ()),
        "LDD": ((("DBUF", a, k),), ()),
        "LDQ": ((("RBUF", a, k),), (("QRY", k),)),
        "TSET": ((), (("TPTR",),)),
        "CA": ((("RF", x),), (("RF", x),)),
        "BLD": ((), (("BB",),)),
        "BLDG": ((), (("BB",),)),
        "BXR": ((("BB",),), (("BB",),)),
        "BXRG": ((("BB",),), (("BB",),)),
        "BXO": ((("BB",),), ()),
        "BXOG": ((("BB",),), ()),
        "BXQ": ((("BB",),), (("QRY", k),)),
        "BXQG": ((("BB",),), (("QRY", k),)),
        "BXS": ((("BB",),), (("DBUF", a, k),)),
        "BXSG": ((("BB",),), (("DBUF", a, k),)),
        "BSTG": ((), (("DBUF", a, k),)),
        "MULT": ((("SCORE", a),), ()),
        "BCLR": ((), (("BND", x),)),
        "BACC": ((("BND", x),), (("BND", x),)),
        "BACC1": ((("BND", x),), (("BND", x),)),
        "BACO": ((("BND", x),), (("BND", x),)),
        "BRD": ((("BND", x),), ()),
        "SGR": ((), (("RBUF", a, k),)),
        "SGD": ((), (("DBUF", a, k),)),
        "SGQ": ((), (("QRY", k),)),
        "PCI": ((("QRY", k),), (("DSUM", x),)),
        "PCVI": ((("QRY", k),), (("DSUM", x),)),
        "DACC": ((("DSUM", x),), (("DSUM", x),)),
        "DSC": ((("DSUM", x),), (("DSUM", x), ("SCORE", a))),
        "DAM": ((("DSUM", x), ("ARGMAX",)), (("DSUM", x), ("ARGMAX",))),
        "DAMA": ((("DSUM", x), ("ARGMAX",)), (("DSUM", x), ("ARGMAX",))),
        "AMR": ((), (("ARGMAX",),)),
        "AMS": ((("ARGMAX",),), (("OUT",),)),
    }
    return table[n]


_ACCESS_CACHE: dict[tuple[str, str, int], tuple[tuple, tuple]] = {}


def accesses(spec: OpSpec, tag: int) -> tuple[tuple, tuple]:
    """(reads, writes) of architectural resources for one stage op."""
    tag &= field_mask(spec.fields)
    key = (spec.stage.name, spec.name, tag)
    hit = _ACCESS_CACHE.get(key)
    if hit is None:
        hit = _ACCESS_CACHE[key] = _acc(spec, tag)
    return hit


# register files indexed by the x field, with the config bound
_REG_FILES = {
    "SEED": "RF", "CA": "RF",
    "BCLR": "BND", "BACC": "BND", "BACC1": "BND", "BACO": "BND", "BRD": "BND",
    "PCI": "DSUM", "PCVI": "DSUM", "DACC": "DSUM", "DSC": "DSUM", "DAM": "DSUM", "DAMA": "DSUM",
}


def register_bound(name: str, cfg: AccConfig) -> tuple[str, int] | None:
    rf = _REG_FILES.get(name)
    if rf is None:
        return None
    limit = {"RF": cfg.ca90_rf_regs, "BND": cfg.bnd_rf_regs, "DSUM": cfg.dsum_regs}[rf]
    return rf, limit


@dataclass(frozen=True)
class InstructionWord:
    types: tuple[int, ...] = (0,) * NUM_STAGES
    param: int = 0

    def __post_init__(self):
        if len(self.types) != NUM_STAGES:
            raise IsaError("a word has exactly seven type fields")
        for s, code in zip(Stage, self.types):
            if code and code not in OPCODES[s]:
                raise DecodeError(f"unknown {s.name} opcode {code}")
        if not 0 <= self.param < 1 << 16:
            raise IsaError(f"OP_PARAM {self.param:#x} exceeds 16 bits")

    @property
    def active(self) -> int:
        return sum(1 for c in self.types if c)

    def ops(self) -> list[OpSpec]:
        return [OPCODES[s][c] for s, c in zip(Stage, self.types) if c]


def encode_word(word: InstructionWord) -> int:
    v = 0
    for i, code in enumerate(word.types):
        v |= code << (4 * i)
    return v | word.param << 28


def decode_word(value: int) -> InstructionWord:
    if not 0 <= value < 1 << 64:
        raise DecodeError("word does not fit in 64 bits")
    if value & RESERVED_MASK:
        raise DecodeError(f"reserved bits set in {value:#018x}")
    types = tuple((value >> (4 * i)) & 0xF for i in range(NUM_STAGES))
    return InstructionWord(types, (value >> 28) & 0xFFFF)


@dataclass(frozen=True)
class PrimitiveOp:
    """An ordered path of stage ops sharing one OP_PARAM value."""

    kind: str
    param: int
    ops: tuple[OpSpec, ...]

    def __post_init__(self):
        if not self.ops:
            raise IsaError("primitive without stage ops")
        if not self.ops[0].entry:
            raise IsaError(f"{self.kind}: first op {self.ops[0].name} is not an entry op")
        for prev, cur in zip(self.ops, self.ops[1:]):
            if cur.stage <= prev.stage:
                raise IsaError(f"{self.kind}: stage path is not increasing")
            if cur.entry or cur.src != prev.stage or not prev.produces:
                raise IsaError(f"{self.kind}: {cur.name} cannot follow {prev.name}")
        if self.ops[-1].produces:
            raise IsaError(f"{self.kind}: path ends on a producing op {self.ops[-1].name}")

    @property
    def stage_path(self) -> tuple[Stage, ...]:
        return tuple(o.stage for o in self.ops)

    def accesses(self) -> list[tuple[tuple, tuple]]:
        return [accesses(o, self.param) for o in self.ops]

    @property
    def reads(self) -> set:
        return {r for rd, _ in self.accesses() for r in rd}

    @property
    def writes(self) -> set:
        return {w for _, wr in self.accesses() for w in wr}


_PRIM_CACHE: dict = {}


def _lookup(tok: str) -> OpSpec:
    if ":" in tok:
        return op(*tok.split(":"))
    hits = [BY_NAME[s][tok.upper()] for s in Stage if tok.upper() in BY_NAME[s]]
    if len(hits) != 1:
        raise IsaError(f"unknown or ambiguous mnemonic {tok!r}")
    return hits[0]


def prim(kind: str, path: str, a: int = 0, k: int = 0, x: int = 0) -> PrimitiveOp:
    """Build a primitive from ``"LDI EXP PC DSC"`` notation; a token may
    carry its stage as ``"MEM:LDI"``."""
    param = make_param(a, k, x)
    key = (kind, path, param)
    p = _PRIM_CACHE.get(key)
    if p is None:
        ops = tuple(_lookup(tok) for tok in path.split())
        p = _PRIM_CACHE[key] = PrimitiveOp(kind, param, ops)
    return p


@dataclass
class Program:
    words: tuple[InstructionWord, ...]
    control: str = "mopc"
    ops: tuple[PrimitiveOp, ...] | None = None
    starts: tuple[int, ...] | None = None

    def __post_init__(self):
        self.words = tuple(self.words)
        self.control = self.control.lower()
        if self.control not in ("sopc", "mopc"):
            raise IsaError(f"unknown control mode {self.control!r}")

    def __len__(self) -> int:
        return len(self.words)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return self.control == other.control and self.words == other.words

    def encoded(self) -> list[int]:
        return [encode_word(w) for w in self.words]

    def to_bytes(self) -> bytes:
        mode = 0 if self.control == "sopc" else 1
        head = _PROG_HEADER.pack(PROG_MAGIC, PROG_VERSION, mode, len(self.words))
        return head + struct.pack(f"<{len(self.words)}Q", *self.encoded())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Program":
        if len(data) < _PROG_HEADER.size:
            raise DecodeError("truncated program header")
        magic, version, mode, count = _PROG_HEADER.unpack_from(data)
        if magic != PROG_MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        if version != PROG_VERSION:
            raise DecodeError(f"unsupported program version {version}")
        if len(data) != _PROG_HEADER.size + 8 * count:
            raise DecodeError("program size does not match word count")
        vals = struct.unpack_from(f"<{count}Q", data, _PROG_HEADER.size)
        return cls(tuple(decode_word(v) for v in vals), "sopc" if mode == 0 else "mopc")


# ---------------------------------------------------------------------------
# scheduling

_FIELD_MASK = {"A": 0x00FF, "k": 0x0F00, "x": 0xF000}


def field_mask(fields: str) -> int:
    m = 0
    for f in fields:
        m |= _FIELD_MASK[f]
    return m


def _fits(row: list, o: OpSpec, param: int) -> bool:
    if row[o.stage]:
        return False
    mask = field_mask(o.fields)
    return (row[NUM_STAGES] & mask & (row[NUM_STAGES + 1] ^ param)) == 0


def _place(row: list, o: OpSpec, param: int) -> None:
    mask = field_mask(o.fields)
    row[o.stage] = o.code
    row[NUM_STAGES] |= mask
    row[NUM_STAGES + 1] = (row[NUM_STAGES + 1] & ~mask) | (param & mask)


def _new_row() -> list:
    # seven opcodes, mask of claimed PARAM bits, PARAM value
    return [0] * NUM_STAGES + [0, 0]


def schedule_sopc(ops: Sequence[PrimitiveOp]) -> Program:
    """One stage op per word, primitives back to back."""
    words = []
    starts = []
    for p in ops:
        starts.append(len(words))
        for o in p.ops:
            types = [0] * NUM_STAGES
            types[o.stage] = o.code
            words.append(InstructionWord(tuple(types), p.param & field_mask(o.fields)))
    return Program(tuple(words), "sopc", tuple(ops), tuple(starts))


def _earliest(p: PrimitiveOp, t: int, last_w: dict, last_r: dict) -> int:
    for i, (rd, wr) in enumerate(p.accesses()):
        for r in rd:
            w = last_w.get(r)
            if w is not None and w + 1 - i > t:
                t = w + 1 - i
        for r in wr:
            w = last_w.get(r)
            if w is not None and w + 1 - i > t:
                t = w + 1 - i
            q = last_r.get(r)
            if q is not None and q - i > t:
                t = q - i
    return t


def schedule_mopc(ops: Sequence[PrimitiveOp]) -> Program:
    """Greedy in-order list scheduling with overlapped stages.

    Each primitive starts at the earliest cycle, not before its
    predecessor's start, where
      - each of its stages is free,
      - every OP_PARAM field it reads agrees with the word's,
      - it reads a resource only after its last writer's cycle,
      - it writes a resource no earlier than prior reads and after prior writes.
    """
    rows: dict[int, list] = {}
    last_w: dict = {}
    last_r: dict = {}
    starts = []
    prev = 0
    end = 0
    for p in ops:
        t = _earliest(p, prev, last_w, last_r)
        path = p.ops
        while True:
            for i, o in enumerate(path):
                row = rows.get(t + i)
                if row is not None and not _fits(row, o, p.param):
                    break
            else:
                break
            t += 1
        for i, o in enumerate(path):
            row = rows.get(t + i)
            if row is None:
                row = rows[t + i] = _new_row()
            _place(row, o, p.param)
        for i, (rd, wr) in enumerate(p.accesses()):
            c = t + i
            for r in rd:
                if last_r.get(r, -1) < c:
                    last_r[r] = c
            for r in wr:
                if last_w.get(r, -1) < c:
                    last_w[r] = c
        starts.append(t)
        prev = t
        end = max(end, t + len(path))
    nop = InstructionWord()
    words = []
    for c in range(end):
        row = rows.get(c)
        if row is None:
            words.append(nop)
        else:
            words.append(InstructionWord(tuple(row[:NUM_STAGES]), row[NUM_STAGES + 1]))
    return Program(tuple(words), "mopc", tuple(ops), tuple(starts))


def schedule(ops: Sequence[PrimitiveOp], control: str) -> Program:
    if control.lower() == "sopc":
        return schedule_sopc(ops)
    if control.lower() == "mopc":
        return schedule_mopc(ops)
    raise IsaError(f"unknown control mode {control!r}")


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    cycle: int
    kind: str
    message: str

    def __str__(self) -> str:
        return f"cycle {self.cycle}: {self.kind}: {self.message}"


def walk(words: Sequence[InstructionWord]):
    """Yield ``(cycle, spec, fed)`` for every stage op in issue order.

    ``fed`` is False when a non-entry op finds its source latch empty,
    i.e. its source stage produced nothing in the previous cycle."""
    live: set[Stage] = set()
    for c, w in enumerate(words):
        nxt: set[Stage] = set()
        for s, code in enumerate(w.types):
            if not code:
                continue
            spec = OPCODES[Stage(s)][code]
            fed = spec.entry or spec.src in live
            yield c, spec, fed
            if spec.produces and fed:
                nxt.add(spec.stage)
        live = nxt


def validate(p: Program, cfg: AccConfig) -> list[Violation]:
    """Audit a program; an empty list means it is hazard-free.

    Word-level checks run on the decoded words alone:
      - dangling latch consumers and produced values nobody consumes,
      - register indices beyond the configuration,
      - two writers of one resource in a cycle,
      - the SOPC one-op-per-word rule.
    When the source primitive stream and start cycles are attached, the
    schedule is also replayed against program order to find structural,
    OP_PARAM and data hazards.
    """
    out: list[Violation] = []
    words = p.words
    produced: set[tuple[int, Stage]] = set()
    consumed: set[tuple[int, Stage]] = set()
    writers: dict[tuple[int, tuple], str] = {}
    if p.control == "sopc":
        for c, w in enumerate(words):
            if w.active > 1:
                out.append(Violation(c, "sopc", f"{w.active} stage ops in one word"))
    for c, spec, fed in walk(words):
        if not fed:
            out.append(Violation(c, "dangling", f"{spec.name} has no {spec.src.name} input"))
            continue
        if not spec.entry:
            consumed.add((c - 1, spec.src))
        if spec.produces:
            produced.add((c, spec.stage))
        param = words[c].param
        _, _, x = split_param(param)
        bound = register_bound(spec.name, cfg)
        if bound and x >= bound[1]:
            out.append(Violation(c, "register", f"{spec.name} uses {bound[0]}[{x}] but only {bound[1]} exist"))
        if spec.name == "EXPR" and x >= cfg.fold_width:
            out.append(Violation(c, "register", f"rotation {x} exceeds fold width"))
        for r in accesses(spec, param)[1]:
            prev = writers.get((c, r))
            if prev is not None:
                out.append(Violation(c, "write-conflict", f"{prev} and {spec.name} both write {r}"))
            writers[(c, r)] = spec.name
    for c, s in produced - consumed:
        out.append(Violation(c, "dropped", f"{s.name} output is never consumed"))
    if p.ops is not None and p.starts is not None:
        out.extend(_check_order(p))
    out.sort(key=lambda v: (v.cycle, v.kind))
    return out


def _check_order(p: Program) -> list[Violation]:
    out = []
    if len(p.ops) != len(p.starts):
        return [Violation(0, "metadata", "ops and starts differ in length")]
    placed: dict[tuple[int, Stage], int] = {}
    last_w: dict = {}
    last_r: dict = {}
    prev = 0
    for n, (prim_op, t) in enumerate(zip(p.ops, p.starts)):
        if p.control == "mopc" and t < prev:
            out.append(Violation(t, "order", f"primitive {n} issued before its predecessor"))
        prev = t
        for i, (o, (rd, wr)) in enumerate(zip(prim_op.ops, prim_op.accesses())):
            c = t + i
            if c >= len(p.words):
                out.append(Violation(c, "metadata", f"primitive {n} runs past the program end"))
                break
            w = p.words[c]
            if w.types[o.stage] != o.code:
                out.append(Violation(c, "metadata", f"primitive {n} {o.name} not found in word"))
            mask = field_mask(o.fields)
            if (w.param ^ prim_op.param) & mask:
                out.append(Violation(c, "param", f"primitive {n} {o.name} sees OP_PARAM {w.param:#06x}"))
            key = (c, o.stage)
            if key in placed:
                out.append(Violation(c, "structural", f"primitives {placed[key]} and {n} share {o.stage.name}"))
            placed[key] = n
            for r in rd:
                if last_w.get(r, -1) >= c:
                    out.append(Violation(c, "raw", f"primitive {n} reads {r} before it is written"))
            for r in wr:
                if last_w.get(r, -1) >= c:
                    out.append(Violation(c, "waw", f"primitive {n} writes {r} out of order"))
                if last_r.get(r, -1) > c:
                    out.append(Violation(c, "war", f"primitive {n} overwrites {r} before it is read"))
        for i, (rd, wr) in enumerate(prim_op.accesses()):
            c = t + i
            for r in rd:
                last_r[r] = max(last_r.get(r, -1), c)
            for r in wr:
                last_w[r] = max(last_w.get(r, -1), c)
    return out


# ---------------------------------------------------------------------------
# assembly text

_TOKEN = re.compile(r"\S+")


def assemble(text: str, cfg: AccConfig | None = None, control: str | None = None) -> Program:
    """Parse assembly text into a Program.

    One word per line as ``FIELD=VALUE`` tokens (fields MEM GEN BIND MUL
    BND SGN DC PARAM, any order, omitted fields are NOP/0).  ``#`` starts a
    comment; ``.control sopc|mopc`` sets the control mode.  With ``cfg``,
    register indices are checked against the configuration.
    """
    words = []
    lines = []
    mode = control
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        toks = [(m.start() + 1, m.group()) for m in _TOKEN.finditer(line)]
        if toks[0][1].lower() == ".control":
            if len(toks) != 2 or toks[1][1].lower() not in ("sopc", "mopc"):
                raise AsmError(ln, toks[0][0], "expected '.control sopc' or '.control mopc'")
            mode = toks[1][1].lower()
            continue
        types = [0] * NUM_STAGES
        seen = set()
        param = 0
        for col, tok in toks:
            if "=" not in tok:
                raise AsmError(ln, col, f"expected FIELD=VALUE, got {tok!r}")
            field, value = tok.split("=", 1)
            field = field.upper()
            if field in seen:
                raise AsmError(ln, col, f"field {field} given twice")
            seen.add(field)
            if field == "PARAM":
                try:
                    param = int(value, 0)
                except ValueError:
                    raise AsmError(ln, col, f"bad PARAM value {value!r}") from None
                if not 0 <= param < 1 << 16:
                    raise AsmError(ln, col, f"PARAM {value} exceeds 16 bits")
            elif field in FIELD_NAMES:
                st = Stage[field]
                if value.upper() == "NOP":
                    continue
                spec = BY_NAME[st].get(value.upper())
                if spec is None:
                    raise AsmError(ln, col, f"unknown {field} mnemonic {value!r}")
                types[st] = spec.code
            else:
                raise AsmError(ln, col, f"unknown field {field!r}")
        words.append(InstructionWord(tuple(types), param))
        lines.append(ln)
    prog = Program(tuple(words), mode or "mopc")
    if cfg is not None:
        for v in validate(prog, cfg):
            if v.kind == "register":
                raise AsmError(lines[v.cycle], 1, v.message)
    return prog


def format_word(w: InstructionWord) -> str:
    parts = []
    for s, code in zip(Stage, w.types):
        parts.append(f"{s.name}={OPCODES[s][code].name if code else 'NOP'}")
    parts.append(f"PARAM=0x{w.param:04X}")
    return " ".join(parts)


def disassemble(p: Program) -> str:
    lines = [f".control {p.control}"]
    lines.extend(format_word(w) for w in p.words)
    return "\n".join(lines) + "\n"


