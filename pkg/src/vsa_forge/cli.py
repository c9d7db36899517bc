"""Command-line driver: generate, assemble, schedule, simulate, compare.

Exit codes: 0 success (and every oracle check passed), 1 oracle mismatch,
2 usage, configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .config import AccConfig, load_config
from .hdc import VsaError
from .isa import AsmError, IsaError, Program, assemble, disassemble
from .sim import load, run, static_energy, write_report
from .workloads import WORKLOADS, dump, generate

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


class CliError(Exception):
    pass


@dataclass
class RunManifest:
    workload: str
    config: str
    control: str = "mopc"
    seed: int = 0
    tiles_mask: int | None = None
    dim: int | None = None
    fold_width: int | None = None
    factors: int | None = None
    report: str | None = None
    trace: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_file(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise CliError(f"unknown manifest keys {sorted(unknown)}")
        return cls(**data)


def _config(name: str, mask: int | None, fold_width: int | None) -> AccConfig:
    try:
        cfg = load_config(name)
    except FileNotFoundError as e:
        raise CliError(str(e)) from None
    if fold_width is not None and fold_width != cfg.fold_width:
        cfg = replace(cfg, fold_width=fold_width)
    return cfg.with_mask(mask) if mask is not None else cfg


def _workload(name: str, seed: int, dim: int | None, fold_width: int | None, factors: int | None,
              cfg: AccConfig):
    kw = {}
    kw["fold_width"] = fold_width or cfg.fold_width
    if dim is not None:
        kw["dim"] = dim
    if name == "fact":
        kw["exhaustive"] = False
        if factors is not None:
            kw["num_factors"] = factors
    elif factors is not None:
        raise CliError("--factors applies to the fact workload only")
    return generate(name, seed, **kw)


def execute(man: RunManifest) -> tuple[dict, bool]:
    cfg = _config(man.config, man.tiles_mask, man.fold_width)
    spec = _workload(man.workload, man.seed, man.dim, man.fold_width, man.factors, cfg)
    image, prog = spec.program(cfg, man.control)
    m = load(cfg, prog, image)
    rep = run(m, man.trace)
    match = rep.outputs == spec.expected
    d = rep.to_dict()
    d.update({"workload": spec.name, "seed": man.seed, "oracle_match": match,
              "manifest": json.loads(man.to_json())})
    if man.report:
        write_report(rep, man.report, {k: d[k] for k in ("workload", "seed", "oracle_match", "manifest")})
    return d, match


def cmd_run(args) -> int:
    if args.manifest:
        man = RunManifest.from_file(args.manifest)
    else:
        if not args.workload or not args.config:
            raise CliError("run needs --workload and --config (or --manifest)")
        man = RunManifest(args.workload.lower(), args.config, args.control, args.seed,
                          args.tiles_mask, args.dim, args.fold_width, args.factors,
                          args.report, args.trace)
    d, match = execute(man)
    summary = {k: d[k] for k in ("workload", "config", "control", "total_cycles",
                                  "energy_total", "mean_power", "oracle_match")}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if match else EXIT_MISMATCH


def _split(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def compare(workloads, configs, controls, factors=None, seed=0, dim=None, fold_width=None,
            simulate=False) -> list[dict]:
    """Sweep the grid in deterministic order.

    Speedups and energy ratios are relative to the first cell of the same
    workload (and factor count).  Cycles and energy come from the schedule
    alone; ``simulate`` additionally runs each cell against the oracle.
    """
    fvals = factors or [None]
    grid = list(itertools.product(workloads, fvals, configs, controls))
    if len(grid) < 2:
        raise CliError("a comparison needs at least two cells")
    rows = []
    specs = {}
    for wl, f, cname, ctl in grid:
        cfg = _config(cname, None, fold_width)
        key = (wl, f, cfg.fold_width)
        if key not in specs:
            specs[key] = _workload(wl, seed, dim, fold_width, f if wl == "fact" else None, cfg)
        spec = specs[key]
        image, prog = spec.program(cfg, ctl)
        energy, cycles = static_energy(prog, cfg)
        row = {"workload": wl, "factors": f if wl == "fact" else "", "config": cname, "control": ctl,
               "cycles": cycles, "energy": round(energy, 3), "power": round(energy / max(cycles, 1), 6)}
        if simulate:
            rep = run(load(cfg, prog, image))
            row["oracle_match"] = rep.outputs == spec.expected
        rows.append(row)
    base = {}
    for row in rows:
        base.setdefault((row["workload"], row["factors"]), row)
    for row in rows:
        b = base[(row["workload"], row["factors"])]
        row["speedup"] = round(b["cycles"] / row["cycles"], 6)
        row["energy_ratio"] = round(row["energy"] / b["energy"], 6)
    return rows


def cmd_compare(args) -> int:
    workloads = [w.lower() for w in _split(args.workload or "fact")]
    configs = _split(args.config or "acc2")
    controls = _split(args.control_list or args.control)
    factors = [int(f) for f in _split(args.factors)] if args.factors else None
    rows = compare(workloads, configs, controls, factors, args.seed, args.dim, args.fold_width,
                   args.simulate)
    fields = list(rows[0])
    w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            cw = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            cw.writeheader()
            cw.writerows(rows)
    if args.report:
        Path(args.report).write_text(json.dumps({"version": 1, "cells": rows}, indent=2) + "\n")
    if any(r.get("oracle_match") is False for r in rows):
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_asm(args) -> int:
    text = Path(args.input).read_text()
    cfg = load_config(args.config) if args.config else None
    prog = assemble(text, cfg)
    out = Path(args.output or Path(args.input).with_suffix(".bin"))
    out.write_bytes(prog.to_bytes())
    print(f"{len(prog)} words -> {out}")
    return EXIT_OK


def cmd_disasm(args) -> int:
    prog = Program.from_bytes(Path(args.input).read_bytes())
    text = disassemble(prog)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = _config(args.config or "acc2", args.tiles_mask, args.fold_width)
    spec = _workload(args.workload.lower(), args.seed, args.dim, args.fold_width, args.factors, cfg)
    out = dump(spec, args.out, cfg, args.control)
    print(f"wrote {spec.name} workload to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vsa-forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, workload_help="workload name"):
        sp.add_argument("--workload", help=workload_help)
        sp.add_argument("--config", help="preset name (acc2/acc4/acc8) or config file")
        sp.add_argument("--control", choices=("sopc", "mopc"), default="mopc")
        sp.add_argument("--tiles-mask", type=lambda s: int(s, 0), default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--dim", type=int, default=None)
        sp.add_argument("--fold-width", type=int, default=None)
        sp.add_argument("--factors", default=None, help="factor count(s) for fact")

    r = sub.add_parser("run", help="generate, schedule and simulate one workload")
    common(r, f"one of {', '.join(WORKLOADS)}")
    r.add_argument("--report", help="write the JSON report here")
    r.add_argument("--trace", help="write the per-cycle CSV trace here")
    r.add_argument("--manifest", help="JSON run manifest (overrides the flags)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="sweep workloads x configs x control modes")
    common(c, "comma-separated workloads")
    c.add_argument("--controls", dest="control_list", default=None, help="comma-separated, e.g. sopc,mopc")
    c.add_argument("--report", help="write the JSON table here")
    c.add_argument("--csv", help="write the CSV table here")
    c.add_argument("--simulate", action="store_true", help="also simulate and check the oracle")
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("asm", help="assemble text into a binary program")
    a.add_argument("input")
    a.add_argument("-o", "--output")
    a.add_argument("--config", help="check register indices against this config")
    a.set_defaults(func=cmd_asm)

    d = sub.add_parser("disasm", help="disassemble a binary program")
    d.add_argument("input")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_disasm)

    g = sub.add_parser("gen", help="dump a workload directory")
    common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "factors", None) is not None and args.cmd in ("run", "gen"):
        try:
            args.factors = int(args.factors)
        except ValueError:
            parser.error("--factors takes one integer here")
    if args.cmd == "gen" and not args.workload:
        parser.error("gen needs --workload")
    try:
        return args.func(args)
    except AsmError as e:
        print(f"{getattr(args, 'input', '')}:{e}", file=sys.stderr)
        return EXIT_ERROR
    except (CliError, VsaError, IsaError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
