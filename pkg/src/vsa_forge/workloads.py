"""Generators for the four evaluation workloads.

Each generator draws its data from a Philox stream keyed by ``seed``,
computes golden results with the kernels module, and knows how to compile
itself into a primitive-op stream plus tile memory image for a given
accelerator configuration.  The golden value is the sequence of indices the
machine pushes to its output FIFO.

Encodings:

MULT
    records are ``bundle(bind(key_p, value_p))`` over ``P`` modality keys
    (s1=1, s2=1); a class prototype bundles its training records; queries
    are classified by nearest prototype.
TREE
    a tree is a root-to-leaf path of items bound with position-permuted
    roles (s2=3); queries are item paths with one substituted node and are
    answered by clean-up over the stored trees.
FACT
    composites bind one item from each codebook; the resonator recovers the
    factors.
REACT
    a motor memory bundles ``bind(state, action)`` over all samples; a
    recall unbinds a noisy state and cleans up against the item memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import Codebook
from .config import AccConfig
from .hdc import Hypervector, bind, bundle
from .isa import PrimitiveOp, Program, disassemble, prim, schedule
from .kernels import (
    OperandArray,
    encode,
    exhaustive_factorize,
    nn_search,
    resonator_factorize,
)
from .sim import ImageBuilder, MemoryImage, scan_ops

DEFAULT_DIM = 2048
DEFAULT_FOLD_WIDTH = 512
WORKLOADS = ("mult", "tree", "fact", "react")


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox([int(seed), stream]))


@dataclass
class WorkloadSpec:
    name: str
    seed: int
    dim: int
    fold_width: int
    params: dict
    codebooks: dict[str, Codebook]
    data: dict
    expected: list[int]
    extra: dict = field(default_factory=dict)

    @property
    def num_folds(self) -> int:
        return self.dim // self.fold_width

    def compile(self, cfg: AccConfig) -> tuple[MemoryImage, list[PrimitiveOp]]:
        if cfg.fold_width != self.fold_width:
            raise ValueError(f"workload fold width {self.fold_width} differs from config {cfg.fold_width}")
        return _COMPILERS[self.name](self, cfg)

    def program(self, cfg: AccConfig, control: str) -> tuple[MemoryImage, Program]:
        image, ops = self.compile(cfg)
        return image, schedule(ops, control)

    def golden(self) -> dict:
        return {"workload": self.name, "seed": self.seed, "params": self.params,
                "dim": self.dim, "fold_width": self.fold_width, "expected": self.expected}


def _split16(v: int) -> dict:
    return {"a": v & 0xFF, "k": (v >> 8) & 0xF, "x": v >> 12}


def _bundle_ops(acc: int, slots, folds: int, path: str, kind: str, dest: int, store: str,
                regs: int) -> list:
    """Per fold: clear, accumulate every slot, then sign-store the fold."""
    ops = []
    for k in range(folds):
        x = (acc + k) % regs
        ops.append(prim("BUNDLE_CLR", "BCLR", x=x))
        for a in slots:
            ops.append(prim(kind, path, a=a, k=k, x=x))
        ops.append(prim("SIGN", f"BRD {store}", a=dest, k=k, x=x))
    return ops


# ---------------------------------------------------------------------------
# FACT


def gen_fact(seed: int = 0, num_factors: int = 3, items: int = 13, composites: int = 120,
             max_iters: int = 60, dim: int = DEFAULT_DIM, fold_width: int = DEFAULT_FOLD_WIDTH,
             exhaustive: bool = True) -> WorkloadSpec:
    cbs = {f"f{f}": Codebook.random(items, dim, fold_width, [int(seed), 100 + f], f"f{f}")
           for f in range(num_factors)}
    books = list(cbs.values())
    rng = _rng(seed, 1)
    truth = rng.integers(0, items, size=(composites, num_factors))
    comps = []
    for row in truth:
        v = books[0].item(int(row[0]))
        for cb, i in zip(books[1:], row[1:]):
            v = bind(v, cb.item(int(i)))
        comps.append(v)
    expected, iters, converged = [], [], []
    for c in comps:
        r = resonator_factorize(c, books, max_iters)
        expected.extend(r.factor_indices)
        iters.append(r.iterations)
        converged.append(r.converged)
    extra = {"iterations": iters, "converged": converged, "truth": truth.tolist()}
    if exhaustive:
        extra["exhaustive"] = [list(exhaustive_factorize(c, books)) for c in comps]
    return WorkloadSpec("fact", seed, dim, fold_width,
                        {"num_factors": num_factors, "items": items, "composites": composites,
                         "max_iters": max_iters},
                        cbs, {"composites": comps}, expected, extra)


def _compile_fact(spec: WorkloadSpec, cfg: AccConfig):
    k_act, folds = cfg.num_active, spec.num_folds
    nf = spec.params["num_factors"]
    b = ImageBuilder(k_act, spec.dim, spec.fold_width)
    books = list(spec.codebooks.values())
    bases = [b.distribute(cb) for cb in books]
    nslots = [-(-cb.num_items // k_act) for cb in books]
    comp0 = b.rbuf(spec.data["composites"])
    init0 = b.rbuf(nf)
    est0 = b.rbuf(nf)
    image = b.build()
    regs, dregs = cfg.bnd_rf_regs, cfg.dsum_regs
    slots = [range(bases[f], bases[f] + nslots[f]) for f in range(nf)]
    ops: list[PrimitiveOp] = []
    # initial estimates: plain superposition of each codebook
    for f in range(nf):
        ops += _bundle_ops(0, slots[f], folds, "LDI EXP CONV BACC", "BUNDLE", init0 + f, "SGR", regs)
    for c, iters in enumerate(spec.extra["iterations"]):
        est = [init0 + f for f in range(nf)]
        for _ in range(iters):
            for f in range(nf):
                others = [est[g] for g in range(nf) if g != f]
                for k in range(folds):
                    ops.append(prim("LOAD_ITEM", "LDV BLD", a=comp0 + c, k=k))
                    for g in others[:-1]:
                        ops.append(prim("BIND", "LDV BXR", a=g, k=k))
                    ops.append(prim("LOAD_QUERY", "LDV BXQ", a=others[-1], k=k))
                ops += scan_ops("POPCNT", "LDI EXP PC DSC", slots[f], folds, dregs)
                ops += _bundle_ops(f, slots[f], folds, "LDI EXP MULT BACC", "SCALAR_MULT",
                                   est0 + f, "SGR", regs)
                est[f] = est0 + f
        for f in range(nf):
            ops += [prim("LOAD_QUERY", "LDQ", a=est[f], k=k) for k in range(folds)]
            ops.append(prim("ARGMAX", "AMR", a=bases[f]))
            ops += scan_ops("POPCNT", "LDI EXP PC DAMA", slots[f], folds, dregs)
            ops.append(prim("ARGMAX", "AMS"))
    return image, ops


# ---------------------------------------------------------------------------
# MULT


def gen_mult(seed: int = 0, samples: int = 300, items: int = 120, classes: int = 16,
             queries: int = 100, keys: int = 8, noise: float = 0.25,
             dim: int = DEFAULT_DIM, fold_width: int = DEFAULT_FOLD_WIDTH) -> WorkloadSpec:
    """``samples`` training records plus ``queries`` held-out records.

    The item memory holds ``keys`` modality keys and ``items - keys`` value
    items.  Each class has a template value per key; a record replaces each
    template value with a random one with probability ``noise``.
    """
    if not 0 < keys < items:
        raise ValueError("need at least one key and one value item")
    nvals = items - keys
    key_cb = Codebook.random(keys, dim, fold_width, [int(seed), 200], "keys")
    val_cb = Codebook.random(nvals, dim, fold_width, [int(seed), 201], "values")
    rng = _rng(seed, 2)
    templates = rng.integers(0, nvals, size=(classes, keys))

    def draw(label):
        v = templates[label].copy()
        swap = rng.random(keys) < noise
        v[swap] = rng.integers(0, nvals, size=int(swap.sum()))
        return v

    train_labels = np.arange(samples) % classes
    rng.shuffle(train_labels)
    train = np.array([draw(c) for c in train_labels]).reshape(samples, keys)
    query_labels = rng.integers(0, classes, size=queries)
    query = np.array([draw(c) for c in query_labels]).reshape(queries, keys)

    def record(vals):
        groups = [[key_cb.item(p), val_cb.item(int(v))] for p, v in enumerate(vals)]
        return encode(OperandArray(groups), 1, 1)

    recs = [record(v) for v in train]
    protos = []
    for c in range(classes):
        members = [r for r, lab in zip(recs, train_labels) if lab == c]
        protos.append(bundle(members) if members else None)
    if any(p is None for p in protos):
        raise ValueError("every class needs at least one training sample")
    expected = [nn_search(protos, record(v)) for v in query]
    return WorkloadSpec("mult", seed, dim, fold_width,
                        {"samples": samples, "items": items, "classes": classes,
                         "queries": queries, "keys": keys},
                        {"keys": key_cb, "values": val_cb},
                        {"train": train.tolist(), "train_labels": train_labels.tolist(),
                         "queries": query.tolist()},
                        expected,
                        {"query_labels": query_labels.tolist(),
                         "prototypes": protos})


def _record_ops(pairs, k: int, x: int, loader: str) -> list:
    """Bind each (key, value) pair of one fold and accumulate it in BND[x]."""
    ops = []
    for ka, va in pairs:
        ops.append(prim("LOAD_ITEM", f"{loader} EXP BLDG", a=ka, k=k))
        ops.append(prim("BIND", f"{loader} EXP BXOG CONVB BACC1", a=va, k=k, x=x))
    return ops


def _compile_mult(spec: WorkloadSpec, cfg: AccConfig):
    k_act, folds = cfg.num_active, spec.num_folds
    p = spec.params
    b = ImageBuilder(k_act, spec.dim, spec.fold_width)
    kb = b.replicate(spec.codebooks["keys"])
    vb = b.replicate(spec.codebooks["values"])
    nloc = -(-p["classes"] // k_act)
    proto0 = b.dbuf(nloc)
    scratch = b.dbuf(1)
    labels = spec.data["train_labels"]
    train = spec.data["train"]
    keys = p["keys"]
    # per local class: a table section listing key/value slots per sample
    sections = []
    for j in range(nloc):
        per_tile = []
        for t in range(k_act):
            c = j * k_act + t
            entries = []
            for i, lab in enumerate(labels):
                if lab == c:
                    for q, v in enumerate(train[i]):
                        entries += [kb + q, vb + v]
            per_tile.append(entries)
        n = max(len(e) for e in per_tile) // (2 * keys)
        sections.append((b.table(per_tile), n))
    qry_pairs = [[(kb + q, vb + v) for q, v in enumerate(vals)] for vals in spec.data["queries"]]
    image = b.build()
    if cfg.bnd_rf_regs < 2:
        raise ValueError("MULT training needs two BND registers")
    ops: list[PrimitiveOp] = []
    for j, (start, n) in enumerate(sections):
        for k in range(folds):
            ops.append(prim("TABLE", "TSET", **_split16(start)))
            ops.append(prim("BUNDLE_CLR", "BCLR", x=1))
            for _ in range(n):
                ops.append(prim("BUNDLE_CLR", "BCLR", x=0))
                for _ in range(keys):
                    ops.append(prim("LOAD_ITEM", "LDX EXP BLDG", k=k))
                    ops.append(prim("BIND", "LDX EXP BXOG CONVB BACC1", k=k, x=0))
                ops.append(prim("SIGN", "BRD SGD", a=scratch, k=k, x=0))
                ops.append(prim("BUNDLE_ACC", "LDD CONVV BACC1", a=scratch, k=k, x=1))
            ops.append(prim("SIGN", "BRD SGD", a=proto0 + j, k=k, x=1))
    for pairs in qry_pairs:
        for k in range(folds):
            x = k % cfg.bnd_rf_regs
            ops.append(prim("BUNDLE_CLR", "BCLR", x=x))
            ops += _record_ops(pairs, k, x, "LDI")
            ops.append(prim("SIGN", "BRD SGQ", k=k, x=x))
        ops.append(prim("ARGMAX", "AMR", a=proto0))
        ops += scan_ops("POPCNT", "LDD PCV DAM", range(proto0, proto0 + nloc), folds, cfg.dsum_regs)
        ops.append(prim("ARGMAX", "AMS"))
    return image, ops


# ---------------------------------------------------------------------------
# TREE


def gen_tree(seed: int = 0, trees: int = 70, items: int = 9, queries: int = 400, depth: int = 4,
             dim: int = DEFAULT_DIM, fold_width: int = DEFAULT_FOLD_WIDTH) -> WorkloadSpec:
    """Trees are fixed-depth root-to-leaf paths; a query is a stored path
    with one node replaced by a random item."""
    cb = Codebook.random(items, dim, fold_width, [int(seed), 300], "nodes")
    rng = _rng(seed, 3)
    paths = rng.integers(0, items, size=(trees, depth))
    picks = rng.integers(0, trees, size=queries)
    qpaths = paths[picks].copy()
    pos = rng.integers(0, depth, size=queries)
    qpaths[np.arange(queries), pos] = rng.integers(0, items, size=queries)

    def enc(path):
        return encode(OperandArray([[cb.item(int(i)) for i in path]]), 0, 3)

    stored = [enc(pth) for pth in paths]
    expected = [nn_search(stored, enc(q)) for q in qpaths]
    return WorkloadSpec("tree", seed, dim, fold_width,
                        {"trees": trees, "items": items, "queries": queries, "depth": depth},
                        {"nodes": cb},
                        {"paths": paths.tolist(), "queries": qpaths.tolist()},
                        expected, {"picked": picks.tolist(), "stored": stored})


def _compile_tree(spec: WorkloadSpec, cfg: AccConfig):
    k_act, folds = cfg.num_active, spec.num_folds
    p = spec.params
    depth = p["depth"]
    if depth > 16 or depth >= spec.fold_width:
        raise ValueError("tree depth exceeds the rotation range")
    b = ImageBuilder(k_act, spec.dim, spec.fold_width)
    nb = b.replicate(spec.codebooks["nodes"])
    nloc = -(-p["trees"] // k_act)
    tree0 = b.dbuf(nloc)
    paths = spec.data["paths"]
    per_tile = [[] for _ in range(k_act)]
    for j in range(nloc):
        for t in range(k_act):
            g = j * k_act + t
            per_tile[t] += [nb + i for i in paths[g]] if g < len(paths) else [-1] * depth
    start = b.table(per_tile)
    zero = b.rbuf(1) if depth == 1 else None
    image = b.build()
    ops: list[PrimitiveOp] = []
    for k in range(folds):
        ops.append(prim("TABLE", "TSET", **_split16(start)))
        for j in range(nloc):
            for d in range(depth):
                if depth == 1:
                    path = "LDX EXPR BSTG"
                elif d == 0:
                    path = "LDX EXPR BLDG"
                elif d == depth - 1:
                    path = "LDX EXPR BXSG"
                else:
                    path = "LDX EXPR BXRG"
                ops.append(prim("BIND" if d else "LOAD_ITEM", path, a=tree0 + j, k=k, x=d))
    for q in spec.data["queries"]:
        for k in range(folds):
            for d, i in enumerate(q):
                if d == 0:
                    path = "LDI EXPR BLDG"
                elif d == depth - 1:
                    path = "LDI EXPR BXQG"
                else:
                    path = "LDI EXPR BXRG"
                ops.append(prim("BIND" if d else "LOAD_ITEM", path, a=nb + i, k=k, x=d))
            if depth == 1:
                # a lone item passes through BIND against an all-zero vector
                ops.append(prim("LOAD_QUERY", "LDV BXQ", a=zero, k=k))
        ops.append(prim("ARGMAX", "AMR", a=tree0))
        ops += scan_ops("POPCNT", "LDD PCV DAM", range(tree0, tree0 + nloc), folds, cfg.dsum_regs)
        ops.append(prim("ARGMAX", "AMS"))
    return image, ops


# ---------------------------------------------------------------------------
# REACT


def gen_react(seed: int = 0, samples: int = 500, items: int = 55, recalls: int = 160,
              noise: float = 0.1, dim: int = DEFAULT_DIM,
              fold_width: int = DEFAULT_FOLD_WIDTH) -> WorkloadSpec:
    """States are the first half of the item memory, actions the rest; a
    fixed policy maps each state to an action and samples follow it."""
    cb = Codebook.random(items, dim, fold_width, [int(seed), 400], "motor")
    rng = _rng(seed, 4)
    nstates = max(1, items // 2)
    nact = items - nstates
    if nact < 1:
        raise ValueError("need at least two items")
    policy = nstates + rng.integers(0, nact, size=nstates)
    states = rng.integers(0, nstates, size=samples)
    actions = policy[states]
    mem = bundle([bind(cb.item(int(s)), cb.item(int(a))) for s, a in zip(states, actions)])
    rstates = rng.integers(0, nstates, size=recalls)
    keys = []
    for s in rstates:
        flip = (rng.random(dim) < noise).astype(np.uint8)
        keys.append(Hypervector(cb.item(int(s)).bits ^ flip, fold_width))
    item_list = cb.items()
    expected = [nn_search(item_list, bind(mem, key)) for key in keys]
    return WorkloadSpec("react", seed, dim, fold_width,
                        {"samples": samples, "items": items, "recalls": recalls},
                        {"motor": cb},
                        {"states": states.tolist(), "actions": actions.tolist(), "keys": keys},
                        expected,
                        {"memory": mem, "recall_states": rstates.tolist(),
                         "policy": policy.tolist()})


def _compile_react(spec: WorkloadSpec, cfg: AccConfig):
    k_act, folds = cfg.num_active, spec.num_folds
    b = ImageBuilder(k_act, spec.dim, spec.fold_width)
    cb = spec.codebooks["motor"]
    rep = b.replicate(cb)
    dist = b.distribute(cb)
    nloc = -(-cb.num_items // k_act)
    mem = b.rbuf(1)
    key0 = b.rbuf(spec.data["keys"])
    image = b.build()
    pairs = [(rep + s, rep + a) for s, a in zip(spec.data["states"], spec.data["actions"])]
    ops: list[PrimitiveOp] = []
    for k in range(folds):
        x = k % cfg.bnd_rf_regs
        ops.append(prim("BUNDLE_CLR", "BCLR", x=x))
        ops += _record_ops(pairs, k, x, "LDI")
        ops.append(prim("SIGN", "BRD SGR", a=mem, k=k, x=x))
    for r in range(len(spec.data["keys"])):
        for k in range(folds):
            ops.append(prim("LOAD_ITEM", "LDV BLD", a=mem, k=k))
            ops.append(prim("LOAD_QUERY", "LDV BXQ", a=key0 + r, k=k))
        ops.append(prim("ARGMAX", "AMR", a=dist))
        ops += scan_ops("POPCNT", "LDI EXP PC DAM", range(dist, dist + nloc), folds, cfg.dsum_regs)
        ops.append(prim("ARGMAX", "AMS"))
    return image, ops


_COMPILERS = {"fact": _compile_fact, "mult": _compile_mult, "tree": _compile_tree,
              "react": _compile_react}
GENERATORS = {"fact": gen_fact, "mult": gen_mult, "tree": gen_tree, "react": gen_react}


def generate(name: str, seed: int = 0, **kw) -> WorkloadSpec:
    try:
        gen = GENERATORS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown workload {name!r}; choose from {', '.join(WORKLOADS)}") from None
    return gen(seed=seed, **kw)


def dump(spec: WorkloadSpec, directory, cfg: AccConfig, control: str = "mopc") -> Path:
    """Write codebooks, query vectors, the program listing and goldens."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, cb in spec.codebooks.items():
        (out / f"{name}.cbk").write_bytes(cb.to_bytes())
    vecs = {k: v for k, v in spec.data.items()
            if isinstance(v, list) and v and isinstance(v[0], Hypervector)}
    for name, vs in vecs.items():
        (out / f"{name}.hv").write_bytes(b"".join(v.to_bytes() for v in vs))
    _, prog = spec.program(cfg, control)
    (out / "program.asm").write_text(disassemble(prog))
    plain = {k: v for k, v in spec.data.items() if k not in vecs}
    golden = spec.golden() | {"data": plain, "config": cfg.name, "control": control}
    (out / "golden.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
    return out
