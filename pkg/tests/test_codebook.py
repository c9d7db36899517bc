import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vsa_forge.codebook import Codebook, ca90_step, expand, footprint
from vsa_forge.hdc import ConfigError, Hypervector, dot


def rule90_cells(cells):
    # cell-by-cell reference, cyclic boundary
    w = len(cells)
    return [cells[(i - 1) % w] ^ cells[(i + 1) % w] for i in range(w)]


def one_hot(w, i):
    f = np.zeros(w, np.uint8)
    f[i] = 1
    return f


class TestCA90:
    def test_single_bit(self):
        once = ca90_step(one_hot(8, 3))
        assert np.flatnonzero(once).tolist() == [2, 4]
        assert np.flatnonzero(ca90_step(once)).tolist() == [1, 5]

    def test_zero_fixed_point(self):
        assert not ca90_step(np.zeros(16, np.uint8)).any()

    def test_wraps(self):
        assert np.flatnonzero(ca90_step(one_hot(8, 0))).tolist() == [1, 7]

    @given(st.lists(st.integers(0, 1), min_size=3, max_size=64))
    def test_matches_reference(self, cells):
        assert ca90_step(np.array(cells, np.uint8)).tolist() == rule90_cells(cells)

    @given(st.integers(3, 64).flatmap(lambda w: st.tuples(
        st.lists(st.integers(0, 1), min_size=w, max_size=w),
        st.lists(st.integers(0, 1), min_size=w, max_size=w))))
    def test_linear_over_xor(self, ab):
        a, b = (np.array(x, np.uint8) for x in ab)
        assert np.array_equal(ca90_step(a ^ b), ca90_step(a) ^ ca90_step(b))


class TestExpand:
    def test_one(self):
        s = one_hot(8, 2)
        out = expand(s, 1)
        assert len(out) == 1 and np.array_equal(out[0], s)

    def test_definition(self):
        s = np.random.default_rng(0).integers(0, 2, 32, dtype=np.uint8)
        assert np.array_equal(expand(s, 3)[2], ca90_step(ca90_step(s)))

    def test_bad_count(self):
        with pytest.raises(ValueError):
            expand(one_hot(8, 0), 0)

    def test_folds_quasi_orthogonal(self):
        worst = 0.0
        for s in range(100):
            cb = Codebook.random(1, 512 * 8, 512, s)
            folds = [Hypervector(f) for f in cb.item(0).folds]
            for i in range(8):
                for j in range(i + 1, 8):
                    worst = max(worst, abs(dot(folds[i], folds[j], bits=16)) / 512)
        assert worst < 0.3


class TestCodebook:
    def test_item_deterministic(self):
        cb = Codebook.random(4, 256, 64, 1)
        assert cb.item(2) == cb.item(2)
        assert Codebook.random(4, 256, 64, 1) == cb

    def test_single_fold_is_seed(self):
        cb = Codebook.random(3, 64, 64, 2)
        assert np.array_equal(cb.item(1).bits, cb.seeds[1])

    def test_item_matches_standalone_automaton(self):
        cb = Codebook.random(5, 2048, 512, 3)
        cells = cb.seeds[0].tolist()
        want = list(cells)
        for _ in range(3):
            cells = rule90_cells(cells)
            want += cells
        assert cb.item(0).bits.tolist() == want

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            Codebook.random(3, 64, 64, 0).item(3)

    def test_rejects_zero_seed(self):
        seeds = np.ones((2, 8), np.uint8)
        seeds[1] = 0
        with pytest.raises(ConfigError):
            Codebook(seeds, 16)

    def test_rejects_non_divisible(self):
        with pytest.raises(ConfigError):
            Codebook(np.ones((1, 8), np.uint8), 12)

    def test_footprint(self):
        cb = Codebook.random(120, 2048, 512, 0)
        assert footprint(cb, True) == 7680
        assert footprint(cb, False) == 30720
        assert footprint(cb, False) // footprint(cb, True) == 4
        small = Codebook.random(13, 512, 512, 0)
        assert small.footprint(True) == small.footprint(False) == 832

    def test_file_round_trip(self):
        cb = Codebook.random(13, 1024, 256, 9)
        data = cb.to_bytes()
        assert data[:4] == b"CBNK"
        assert Codebook.from_bytes(data) == cb

    def test_file_rejects_zero_seed(self):
        cb = Codebook.random(2, 64, 8, 9)
        data = bytearray(cb.to_bytes())
        data[-1] = 0
        with pytest.raises(ConfigError):
            Codebook.from_bytes(bytes(data))
