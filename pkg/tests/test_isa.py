from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streams import config, random_stream
from vsa_forge.config import PRESETS
from vsa_forge.isa import (
    OPCODES,
    AsmError,
    DecodeError,
    InstructionWord,
    IsaError,
    Program,
    Stage,
    assemble,
    decode_word,
    disassemble,
    encode_word,
    make_param,
    op,
    prim,
    schedule,
    schedule_mopc,
    schedule_sopc,
    split_param,
    validate,
)

DATA = Path(__file__).parent / "data"
FULL = "LDI EXP BXOG CONVB BACO SGPC DACC"
ACC2 = PRESETS["acc2"]

valid_types = st.tuples(*[st.sampled_from([0] + sorted(OPCODES[s])) for s in Stage])
words = st.builds(InstructionWord, valid_types, st.integers(0, 0xFFFF))


class TestEncoding:
    def test_nop_is_zero(self):
        assert encode_word(InstructionWord()) == 0
        assert decode_word(0) == InstructionWord()

    def test_layout(self):
        w = InstructionWord((1, 0, 0, 0, 0, 0, 2), 0xABCD)
        assert encode_word(w) == 1 | 2 << 24 | 0xABCD << 28

    def test_reserved_bit(self):
        with pytest.raises(DecodeError):
            decode_word(1 << 63)
        with pytest.raises(DecodeError):
            decode_word(1 << 44)

    def test_unknown_opcode(self):
        with pytest.raises(DecodeError):
            decode_word(0xF)  # MEM opcode 15 is unassigned

    @given(words)
    def test_round_trip(self, w):
        v = encode_word(w)
        assert 0 <= v < 1 << 44
        assert decode_word(v) == w

    def test_param_fields(self):
        p = make_param(0x12, 3, 4)
        assert p == 0x4312 and split_param(p) == (0x12, 3, 4)
        with pytest.raises(IsaError):
            make_param(256)


class TestPrimitive:
    def test_full_path(self):
        p = prim("FULL", FULL)
        assert p.stage_path == tuple(Stage)

    def test_stage_qualified(self):
        assert prim("X", "MEM:LDI GEN:EXP SGN:PC DC:DACC") == prim("X", "LDI EXP PC DACC")

    @pytest.mark.parametrize("path", ["EXP PC DACC", "LDI PC DACC", "LDI EXP", "LDI EXP CONV BACC SGR"])
    def test_bad_paths(self, path):
        with pytest.raises(IsaError):
            prim("BAD", path)

    def test_resources(self):
        p = prim("P", "LDI EXP CONV BACC", x=1)
        assert ("BND", 1) in p.reads and ("BND", 1) in p.writes
        q = prim("Q", "LDV BXQ", a=3, k=2)
        assert q.reads == {("RBUF", 3, 2), ("BB",)} and q.writes == {("QRY", 2)}

    def test_unused_fields_ignored(self):
        assert prim("B", "BCLR", a=9, x=1).writes == prim("B", "BCLR", x=1).writes


class TestAssembler:
    def test_nop_line(self):
        p = assemble("MEM=NOP GEN=NOP BIND=NOP MUL=NOP BND=NOP SGN=NOP DC=NOP PARAM=0x0000")
        assert p.words == (InstructionWord(),)

    def test_case_and_comments(self):
        p = assemble("# header\nmem=ldi  gen=exp param=0x10  # trailing\n\n")
        assert p.words == (InstructionWord((1, 3, 0, 0, 0, 0, 0), 0x10),)

    def test_bogus(self):
        with pytest.raises(AsmError) as e:
            assemble("MEM=LDI\nBND=BOGUS\n")
        assert e.value.line == 2 and e.value.col == 1
        assert "BND" in str(e.value) and "line 2" in str(e.value)

    @pytest.mark.parametrize("text", ["MEM", "FOO=NOP", "MEM=LDI MEM=LDV", "PARAM=0x10000",
                                      "PARAM=zz", ".control fast"])
    def test_syntax_errors(self, text):
        with pytest.raises(AsmError):
            assemble(text)

    def test_register_bound(self):
        # BND_RF has two registers on acc2, so x=2 is out of range
        with pytest.raises(AsmError) as e:
            assemble("\nBND=BCLR PARAM=0x2000", ACC2)
        assert e.value.line == 2
        assemble("BND=BCLR PARAM=0x1000", ACC2)

    def test_empty(self):
        assert len(assemble("")) == 0

    def test_golden_listing(self):
        text = (DATA / "fact_small.asm").read_text()
        prog = assemble(text)
        body = "".join(l + "\n" for l in text.splitlines() if not l.startswith("#"))
        assert disassemble(prog) == body
        assert Program.from_bytes(prog.to_bytes()) == prog
        assert validate(prog, ACC2) == []

    def test_golden_matches_generator(self):
        from vsa_forge.workloads import gen_fact
        spec = gen_fact(seed=3, items=3, composites=1, dim=1024, exhaustive=False)
        _, prog = spec.program(ACC2, "mopc")
        assert prog == assemble((DATA / "fact_small.asm").read_text())

    @settings(max_examples=50)
    @given(st.lists(words, max_size=30), st.sampled_from(["sopc", "mopc"]))
    def test_round_trip(self, ws, mode):
        p = Program(tuple(ws), mode)
        assert assemble(disassemble(p)) == p
        assert Program.from_bytes(p.to_bytes()) == p

    def test_binary_header(self):
        data = Program((InstructionWord(),), "sopc").to_bytes()
        assert data[:4] == b"VSAP" and len(data) == 16 + 8
        with pytest.raises(DecodeError):
            Program.from_bytes(data[:-1])


class TestSchedulers:
    def test_sopc_counts(self):
        p = prim("FULL", FULL)
        assert len(schedule_sopc([p])) == 7
        assert len(schedule_sopc([p] * 5)) == 35
        assert len(schedule_sopc([])) == 0
        assert all(w.active == 1 for w in schedule_sopc([p] * 3).words)

    def test_sopc_sum_of_paths(self):
        ops = [prim("A", "LDQ"), prim("B", "LDI EXP PC DACC"), prim("C", "BRD SGR")]
        assert len(schedule_sopc(ops)) == 1 + 4 + 2

    @pytest.mark.parametrize("n", [1, 2, 5, 20])
    def test_mopc_pipeline(self, n):
        assert len(schedule_mopc([prim("FULL", FULL)] * n)) == n + 6

    def test_single_primitive_matches_sopc(self):
        for path in ["LDI EXP PC DACC", FULL, "BRD SGR", "LDQ"]:
            p = [prim("P", path, a=1, k=1, x=1)]
            assert schedule_mopc(p).words == schedule_sopc(p).words

    def test_raw_bnd0(self):
        writer = prim("ACC", "LDI EXP CONV BACC", x=0)
        reader = prim("READ", "BRD SGR", a=1, x=0)
        prog = schedule_mopc([writer, reader])
        s1, s2 = prog.starts
        # BACC sits at path index 3, BRD at index 0, both in the BND stage
        assert s2 >= s1 + 3 + 1
        assert check_schedule(prog) == []

    def test_independent_overlap(self):
        a = prim("A", "LDI EXP CONV BACC", x=0)
        b = prim("B", "LDI EXP CONV BACC", a=1, x=1)
        assert schedule_mopc([a, b]).starts == (0, 1)

    def test_fields_merge(self):
        # LDI reads only A and BXQ only k, so they share word 1 with the
        # immediate assembled from both
        a = prim("A", "LDV BXQ", a=1, k=0)
        b = prim("B", "LDI EXP PC DACC", a=2, k=1)
        prog = schedule_mopc([a, b])
        assert prog.starts == (0, 1)
        assert prog.words[1].param == make_param(2, 0, 0)
        assert prog.words[2].param == make_param(0, 1, 0)
        assert check_schedule(prog) == []

    def test_field_conflict_delays(self):
        # starting at 1 would put EXP (k=1) beside BXQG (k=0) in word 2
        a = prim("A", "LDI EXPR BXQG", a=1, k=0)
        b = prim("B", "LDI EXP PC DACC", a=2, k=1)
        prog = schedule_mopc([a, b])
        assert prog.starts[1] > 1
        assert check_schedule(prog) == []

    def test_dispatch(self):
        with pytest.raises(IsaError):
            schedule([], "vliw")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32), st.integers(0, 200))
    def test_mopc_never_longer(self, seed, n):
        cfg = config()
        ops = random_stream(np.random.default_rng(seed), n, cfg)
        m, s = schedule_mopc(ops), schedule_sopc(ops)
        assert len(m) <= len(s)
        assert validate(m, cfg) == []
        assert validate(s, cfg) == []
        assert check_schedule(m) == []


def check_schedule(prog: Program) -> list[str]:
    """Brute-force audit: expand every primitive to (cycle, stage, reads,
    writes) and compare every pair."""
    events = []
    for n, (p, t) in enumerate(zip(prog.ops, prog.starts)):
        for i, (o, (rd, wr)) in enumerate(zip(p.ops, p.accesses())):
            events.append((n, t + i, o, set(rd), set(wr), p.param))
    errors = []
    for n, c, o, rd, wr, param in events:
        w = prog.words[c]
        if w.types[o.stage] != o.code:
            errors.append(f"{n}: {o.name} missing at {c}")
        for f, mask in (("A", 0xFF), ("k", 0xF00), ("x", 0xF000)):
            if f in o.fields and (w.param ^ param) & mask:
                errors.append(f"{n}: {o.name} sees the wrong {f}")
    for e1 in events:
        for e2 in events:
            n1, c1, o1, r1, w1, _ = e1
            n2, c2, o2, r2, w2, _ = e2
            if n1 >= n2:
                continue
            if c1 == c2 and o1.stage == o2.stage:
                errors.append(f"{n1},{n2}: both in {o1.stage.name} at {c1}")
            if w1 & r2 and c2 <= c1:
                errors.append(f"{n2} reads {w1 & r2} at {c2}, written by {n1} at {c1}")
            if w1 & w2 and c2 <= c1:
                errors.append(f"{n2} rewrites {w1 & w2} at {c2}")
            if r1 & w2 and c2 < c1:
                errors.append(f"{n2} overwrites {r1 & w2} at {c2} before {n1} reads it at {c1}")
    return errors


class TestValidator:
    def test_two_dsum_writers(self):
        text = """
        MEM=LDI GEN=CA PARAM=0x1000
        GEN=SEED SGN=PC PARAM=0x1000
        SGN=PCI DC=DACC PARAM=0x1000
        """
        kinds = {v.kind for v in validate(assemble(text), ACC2)}
        assert "write-conflict" in kinds

    def test_register_bound(self):
        prog = Program((InstructionWord((0, 0, 0, 0, op("BND", "BCLR").code, 0, 0), make_param(x=2)),))
        bad = validate(prog, ACC2)
        assert [v.kind for v in bad] == ["register"]
        assert validate(prog, PRESETS["acc4"]) == []

    def test_dangling_and_dropped(self):
        kinds = {v.kind for v in validate(assemble("SGN=SGR\nMEM=LDI"), ACC2)}
        assert kinds == {"dangling", "dropped"}

    def test_sopc_rule(self):
        p = Program(schedule_mopc([prim("F", FULL)] * 2).words, "sopc")
        assert any(v.kind == "sopc" for v in validate(p, ACC2))

    def test_tampered_schedule(self):
        writer = prim("ACC", "LDI EXP CONV BACC", x=0)
        reader = prim("READ", "BRD SGR", a=1, x=0)
        good = schedule_mopc([writer, reader])
        early = Program(good.words, "mopc", good.ops, (0, 2))
        assert any(v.kind in ("raw", "metadata") for v in validate(early, ACC2))

    def test_never_raises(self):
        junk = Program(tuple(InstructionWord((c,) * 7 if c < 2 else (0,) * 7, 0xFFFF) for c in range(3)))
        assert isinstance(validate(junk, ACC2), list)
