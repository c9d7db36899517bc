import json

import numpy as np
import pytest

from vsa_forge.codebook import Codebook
from vsa_forge.config import PRESETS, AccConfig
from vsa_forge.hdc import Hypervector, bind
from vsa_forge.isa import assemble
from vsa_forge.sim import load, run
from vsa_forge.workloads import WORKLOADS, dump, gen_fact, gen_mult, gen_react, gen_tree, generate

SMALL = {
    "fact": dict(items=4, composites=3, dim=1024, exhaustive=False),
    "mult": dict(samples=12, items=12, classes=3, queries=4, keys=3, dim=1024),
    "tree": dict(trees=6, items=5, queries=5, dim=1024),
    "react": dict(samples=10, items=8, recalls=4, dim=1024),
}


def brute_nn(rows, q):
    # independent scan: fewest differing bits, lowest index first
    dists = [int(np.count_nonzero(r.bits != q.bits)) for r in rows]
    return dists.index(min(dists))


class TestDefaults:
    def test_sizes(self):
        assert generate("mult").params == {"samples": 300, "items": 120, "classes": 16,
                                           "queries": 100, "keys": 8}
        assert generate("tree").params == {"trees": 70, "items": 9, "queries": 400, "depth": 4}
        assert generate("react").params == {"samples": 500, "items": 55, "recalls": 160}
        fact = generate("fact", exhaustive=False)
        assert fact.params == {"num_factors": 3, "items": 13, "composites": 120, "max_iters": 60}
        assert len(fact.expected) == 360
        assert (fact.dim, fact.fold_width) == (2048, 512)

    def test_unknown(self):
        with pytest.raises(ValueError):
            generate("sort")

    @pytest.mark.parametrize("name", WORKLOADS)
    def test_deterministic(self, name):
        a, b = generate(name, 5, **SMALL[name]), generate(name, 5, **SMALL[name])
        assert a.expected == b.expected
        cfg = PRESETS["acc2"]
        assert a.program(cfg, "mopc")[1] == b.program(cfg, "mopc")[1]


class TestGenerators:
    def test_mult_single(self):
        spec = gen_mult(samples=1, items=4, classes=1, queries=1, keys=2, dim=512)
        assert spec.expected == [0]

    def test_mult_matches_scan(self):
        spec = gen_mult(seed=1, **SMALL["mult"])
        protos = spec.extra["prototypes"]
        keys, vals = spec.codebooks["keys"], spec.codebooks["values"]
        for q, want in zip(spec.data["queries"], spec.expected):
            ones = sum(bind(keys.item(p), vals.item(v)).bits.astype(int) for p, v in enumerate(q))
            rec = Hypervector((2 * ones > len(q)).astype(np.uint8), 512)
            assert brute_nn(protos, rec) == want

    def test_tree_depth_one(self):
        spec = gen_tree(seed=2, trees=5, items=4, queries=3, depth=1, dim=512)
        cb = spec.codebooks["nodes"]
        for path, stored in zip(spec.data["paths"], spec.extra["stored"]):
            assert stored == cb.item(path[0])

    def test_tree_stored_path_found(self):
        for s in range(100):
            spec = gen_tree(seed=s, queries=1)
            stored, paths = spec.extra["stored"], spec.data["paths"]
            i = s % len(stored)
            first = paths.index(paths[i])
            assert brute_nn(stored, stored[i]) == first

    def test_fact_cap_and_singletons(self):
        spec = gen_fact(seed=0, items=1, composites=3, dim=512, exhaustive=False)
        assert spec.params["max_iters"] == 60
        assert spec.extra["iterations"] == [1, 1, 1]
        assert spec.expected == [0] * 9

    def test_fact_matches_exhaustive(self):
        spec = gen_fact(seed=3, items=5, composites=10, dim=1024)
        got = np.array(spec.expected).reshape(10, 3).tolist()
        assert got == spec.extra["exhaustive"] == spec.extra["truth"]

    def test_react_exact_key(self):
        spec = gen_react(seed=1, noise=0.0)
        policy = spec.extra["policy"]
        assert spec.expected == [policy[s] for s in spec.extra["recall_states"]]

    def test_react_noisy_matches_scan(self):
        spec = gen_react(seed=2)
        items = spec.codebooks["motor"].items()
        mem = spec.extra["memory"]
        for key, want in zip(spec.data["keys"], spec.expected):
            assert brute_nn(items, bind(mem, key)) == want


class TestCompiled:
    @pytest.mark.parametrize("name", WORKLOADS)
    @pytest.mark.parametrize("preset", ["acc2", "acc4", "acc8"])
    @pytest.mark.parametrize("control", ["sopc", "mopc"])
    def test_small_matches_oracle(self, name, preset, control):
        spec = generate(name, 11, **SMALL[name])
        cfg = PRESETS[preset]
        image, prog = spec.program(cfg, control)
        rep = run(load(cfg, prog, image))
        assert rep.outputs == spec.expected

    def test_masked_tiles(self):
        spec = generate("react", 3, **SMALL["react"])
        cfg = PRESETS["acc4"].with_mask(0b0110)
        image, prog = spec.program(cfg, "mopc")
        assert image.num_tiles == 2
        assert run(load(cfg, prog, image)).outputs == spec.expected

    def test_fold_width_mismatch(self):
        spec = generate("tree", 0, **SMALL["tree"])
        with pytest.raises(ValueError):
            spec.compile(AccConfig(fold_width=256))


class TestDump:
    def test_directory(self, tmp_path):
        spec = generate("fact", 4, **SMALL["fact"])
        cfg = PRESETS["acc2"]
        out = dump(spec, tmp_path / "fact", cfg, "sopc")
        assert Codebook.from_bytes((out / "f0.cbk").read_bytes()) == spec.codebooks["f0"]
        golden = json.loads((out / "golden.json").read_text())
        assert golden["expected"] == spec.expected and golden["control"] == "sopc"
        prog = assemble((out / "program.asm").read_text())
        assert prog == spec.program(cfg, "sopc")[1]
        blob = (out / "composites.hv").read_bytes()
        first = Hypervector.from_bytes(blob[: len(blob) // 3])
        assert first == spec.data["composites"][0]
