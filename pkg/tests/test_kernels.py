import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsa_forge.codebook import Codebook
from vsa_forge.hdc import Hypervector, bind, bundle, dot, permute, random_hv, unbind
from vsa_forge.kernels import (
    KernelSelector,
    OperandArray,
    OperandError,
    encode,
    encode_group,
    exhaustive_factorize,
    kernel_dispatch,
    nn_search,
    project,
    resonator_factorize,
    score_to_weight,
)


def rhv(seed, d=256, w=None):
    return random_hv(d, w or d, seed)


def flip(v, frac, seed):
    rng = np.random.default_rng(seed)
    idx = rng.choice(v.dim, int(frac * v.dim), replace=False)
    bits = v.bits.copy()
    bits[idx] ^= 1
    return Hypervector(bits, v.fold_width)


class TestEncode:
    def test_sequence(self):
        a, b, c = rhv(1), rhv(2), rhv(3)
        assert encode_group([a, b, c], 3) == bind(a, bind(permute(b, 1), permute(c, 2)))

    def test_pair_self_inverse(self):
        x = rhv(4)
        assert encode_group([x, x], 1) == Hypervector.zeros(256)

    def test_pass_through(self):
        x = rhv(5)
        assert encode_group([x], 0) == x

    def test_position_permute(self):
        x = rhv(6)
        assert encode_group([x], 2, position=3) == permute(x, 3)
        y = OperandArray([[x], [rhv(7)], [rhv(8)]])
        want = bundle([permute(x, 1), permute(rhv(7), 2), permute(rhv(8), 3)])
        assert encode(y, 1, 2) == want

    def test_arity_errors(self):
        with pytest.raises(OperandError):
            encode_group([], 1)
        with pytest.raises(OperandError):
            encode_group([rhv(1), rhv(2)], 0)
        with pytest.raises(OperandError):
            encode_group([rhv(1)], 4)

    def test_record(self):
        k1, v1, k2, v2 = (rhv(i) for i in range(4))
        y = OperandArray([[k1, v1], [k2, v2]])
        assert encode(y, 1, 1) == bundle([bind(k1, v1), bind(k2, v2)])
        assert encode(OperandArray([[k1, v1]]), 0, 1) == encode_group([k1, v1], 1)

    def test_s1_zero_needs_one_group(self):
        with pytest.raises(OperandError):
            encode(OperandArray([[rhv(1)], [rhv(2)]]), 0, 0)

    def test_record_unbind_recovers_value(self):
        for s in range(100):
            k1, v1, k2, v2 = (random_hv(1024, 1024, (s, i)) for i in range(4))
            rec = encode(OperandArray([[k1, v1], [k2, v2]]), 1, 1)
            assert dot(unbind(rec, k1), v1) / 1024 > 0.3

    @settings(max_examples=30)
    @given(st.integers(0, 2**31), st.integers(2, 7), st.randoms(use_true_random=False))
    def test_group_order_invariant(self, s, n, rnd):
        groups = [[random_hv(1024, 1024, (s, i, j)) for j in range(2)] for i in range(n)]
        shuffled = list(groups)
        rnd.shuffle(shuffled)
        assert encode(OperandArray(groups), 1, 1) == encode(OperandArray(shuffled), 1, 1)


class TestProject:
    def test_unit_weights_is_bundle(self):
        vs = [rhv(i) for i in range(5)]
        assert project(vs, [1] * 5) == bundle(vs)

    def test_negative_single(self):
        x = rhv(9)
        assert project([x], [-1]) == x.complement()

    def test_hand_lanes(self):
        a, b = random_hv(16, 16, 1), random_hv(16, 16, 2)
        want = []
        for x, y in zip(a.bits.tolist(), b.bits.tolist()):
            lane = 3 * (1 - 2 * x) - (1 - 2 * y)
            want.append(1 if lane < 0 else 0)
        assert project([a, b], [3, -1]).bits.tolist() == want

    def test_length_mismatch(self):
        with pytest.raises(OperandError):
            project([rhv(1)], [1, 2])
        with pytest.raises(OperandError):
            project([], [])

    def test_score_to_weight(self):
        assert score_to_weight(2047).item() == 127
        assert score_to_weight(-2048).item() == -128
        assert score_to_weight(31).item() == 1


class TestSearch:
    def test_exact(self):
        items = [rhv(i) for i in range(10)]
        assert nn_search(items, items[5]) == 5

    def test_noisy(self):
        for s in range(100):
            items = [random_hv(1024, 512, (s, i)) for i in range(120)]
            assert nn_search(items, flip(items[2], 0.05, s)) == 2

    def test_tie_lowest(self):
        x = rhv(1)
        assert nn_search([rhv(2), x, x], x) == 1

    def test_empty(self):
        with pytest.raises(OperandError):
            nn_search([], rhv(1))

    @settings(max_examples=25)
    @given(st.integers(0, 2**31), st.integers(0, 255))
    def test_permutation_invariant(self, s, t):
        items = [random_hv(256, 64, (s, i)) for i in range(12)]
        q = random_hv(256, 64, (s, 99))
        assert nn_search([permute(v, t) for v in items], permute(q, t)) == nn_search(items, q)


class TestResonator:
    def test_two_by_two(self):
        cbs = [Codebook.random(2, 256, 256, (5, f)) for f in range(2)]
        comp = bind(cbs[0].item(1), cbs[1].item(1))
        want = min(itertools.product(range(2), range(2)),
                   key=lambda ij: -dot(bind(cbs[0].item(ij[0]), cbs[1].item(ij[1])), comp))
        res = resonator_factorize(comp, cbs, 60)
        assert res.converged
        assert tuple(res.factor_indices) == want == (1, 1)

    def test_singletons(self):
        cbs = [Codebook.random(1, 256, 64, (1, f)) for f in range(3)]
        comp = bind(bind(cbs[0].item(0), cbs[1].item(0)), cbs[2].item(0))
        res = resonator_factorize(comp, cbs, 60)
        assert res.converged and res.iterations == 1 and res.factor_indices == [0, 0, 0]

    def test_errors(self):
        cb = Codebook.random(2, 64, 64, 0)
        with pytest.raises(OperandError):
            resonator_factorize(cb.item(0), [cb], 10)
        with pytest.raises(ValueError):
            resonator_factorize(cb.item(0), [cb, cb], 0)

    def test_exhaustive_oracle(self):
        cbs = [Codebook.random(4, 256, 64, (2, f)) for f in range(3)]
        comp = bind(bind(cbs[0].item(3), cbs[1].item(0)), cbs[2].item(2))
        assert exhaustive_factorize(comp, cbs) == (3, 0, 2)

    @pytest.mark.slow
    def test_thirteen_cubed(self):
        hits = 0
        for s in range(100):
            cbs = [Codebook.random(13, 2048, 512, (s, f)) for f in range(3)]
            truth = np.random.default_rng(s).integers(0, 13, 3).tolist()
            comp = bind(bind(cbs[0].item(truth[0]), cbs[1].item(truth[1])), cbs[2].item(truth[2]))
            res = resonator_factorize(comp, cbs, 60)
            hits += res.factor_indices == truth
        assert hits >= 95


class TestDispatch:
    def test_bind(self):
        a, b = rhv(1), rhv(2)
        assert kernel_dispatch(OperandArray([[a, b]]), KernelSelector(0, 1, 0)) == bind(a, b)

    def test_search(self):
        items = [rhv(i) for i in range(6)]
        y = OperandArray([[v] for v in items], query=items[4])
        assert kernel_dispatch(y, KernelSelector(1, 0, 2)) == 4

    def test_sequence(self):
        a, b, c = rhv(1), rhv(2), rhv(3)
        got = kernel_dispatch(OperandArray([[a, b, c]]), KernelSelector(1, 3, 0))
        assert got == bundle([bind(bind(a, permute(b, 1)), permute(c, 2))])

    def test_project(self):
        vs = [rhv(i) for i in range(3)]
        y = OperandArray([[v] for v in vs], weights=[2, -1, 1])
        assert kernel_dispatch(y, KernelSelector(0, 0, 1)) == project(vs, [2, -1, 1])

    def test_selector_range(self):
        with pytest.raises(OperandError):
            KernelSelector(2, 0, 0)
        with pytest.raises(OperandError):
            KernelSelector(0, 0, 3)

    def test_missing_operands(self):
        y = OperandArray([[rhv(1)]])
        with pytest.raises(OperandError):
            kernel_dispatch(y, KernelSelector(0, 0, 1))
        with pytest.raises(OperandError):
            kernel_dispatch(y, KernelSelector(0, 0, 2))

    def test_totality(self):
        a, b = rhv(1), rhv(2)
        for s1, s2, s3 in itertools.product(range(2), range(4), range(3)):
            for groups in ([[a]], [[a, b]], [[a], [b]]):
                y = OperandArray(groups, query=a, weights=[1] * len(groups))
                try:
                    out = kernel_dispatch(y, KernelSelector(s1, s2, s3))
                except OperandError:
                    continue
                assert isinstance(out, (Hypervector, int))
