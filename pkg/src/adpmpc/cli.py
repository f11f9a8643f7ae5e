"""Command-line entry point: ``adpmpc {offline,run,stability,bench,export}``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure,
4 run terminated by an infeasible instant.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .controller import Strategy
from .errors import AdpMpcError, ConfigError, ModelMismatchError, UnreachableSetpointError
from .psetio import load_artifacts, save_artifacts
from .scenario import Scenario, build_problem
from .simulation import (
    benchmark,
    compute_ise,
    latency_stats,
    read_trace_csv,
    run_closed_loop,
    write_report,
    write_trace_csv,
)
from .stability import AuditConfig, audit

logger = logging.getLogger("adpmpc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_INFEASIBLE = 4


def _scenario(args) -> Scenario:
    sc = Scenario.from_file(args.config) if args.config else Scenario.from_dict({})
    c = sc.config
    for key, attr in (("horizon", "horizon"), ("epsilon", "epsilon"), ("budget", "budget"),
                      ("region_grid", "region_grid"), ("partitions", "partitions")):
        val = getattr(args, attr, None)
        if val is not None:
            c[key] = val
    if getattr(args, "sigma", None) is not None:
        c["noise"]["sigma"] = args.sigma
    if getattr(args, "seed", None) is not None:
        c["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        c["duration"] = args.duration
    sc.validate()
    return sc


def _problem(args):
    sc = _scenario(args)
    pb = build_problem(sc)
    if getattr(args, "pset", None):
        sets, rmap = load_artifacts(args.pset)
        pb.load_sets(sets, rmap)
    else:
        pb.synthesize()
    return sc, pb


def _outdir(args, sc: Scenario) -> Path:
    out = Path(args.out or sc.config["output"])
    out.mkdir(parents=True, exist_ok=True)
    sc.dump(out / "scenario.resolved.yaml")
    return out


def cmd_offline(args) -> int:
    sc = _scenario(args)
    pb = build_problem(sc)
    pb.synthesize()
    out = Path(args.out or Path(sc.config["output"]) / "pset.txt")
    sets = {"full": pb.full_set, "constrained": pb.constrained_set}
    save_artifacts(out, sets, pb.region_map, map_parent="constrained" if pb.region_map else None)
    sc.dump(out.parent / "scenario.resolved.yaml")
    fs = pb.full_set
    print(f"horizon {fs.horizon}, levels {fs.n_levels}, epsilon {fs.epsilon:g}")
    print(f"full set: {fs.mu} matrices (removed per level: {list(fs.levels_pruned)})")
    print(f"constrained set: {pb.constrained_set.mu} matrices")
    if pb.region_map is not None:
        print(f"regional sets: {[s.mu for s in pb.region_map.sets]}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    sc, pb = _problem(args)
    out = _outdir(args, sc)
    tr = run_closed_loop(pb, pb.spec(args.strategy), policy=args.on_infeasible)
    path = write_trace_csv(tr, out / f"trace_{args.strategy}.csv")
    mean, med, p99 = latency_stats(tr)
    if len(tr):
        print(f"{args.strategy}: {len(tr)} steps, ISE {compute_ise(tr, pb.setpoint.x_r):.6g}, "
              f"mean step {mean:.3e} s, p99 {p99:.3e} s")
    print(f"wrote {path}")
    if tr.failure_kind == "infeasible":
        print(f"terminated: {tr.failure}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if tr.failure_kind == "runtime":
        print(f"failed: {tr.failure}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_stability(args) -> int:
    sc, pb = _problem(args)
    a = sc.config["audit"]
    ctl = args.controller or a["controller"]
    step = args.grid_step if args.grid_step is not None else a.get("grid_step")

    def progress(done, total):
        if args.progress:
            print(f"\r{done}/{total} points", end="", file=sys.stderr)

    cfg = AuditConfig(
        pb.X_error, pb.spec(ctl), pb.error_plant, per_axis=int(args.per_axis or a["per_axis"]),
        grid_step=step, exclusion=float(args.exclusion if args.exclusion is not None else a["exclusion"]),
        workers=int(args.workers or a["workers"]), progress=progress,
    )
    rep = audit(cfg)
    if args.progress:
        print(file=sys.stderr)
    print(f"controller {ctl}")
    print(rep.summary())
    if args.out:
        out = _outdir(args, sc)
        (out / "audit.yaml").write_text(yaml.safe_dump({"controller": ctl, **rep.to_dict()}, sort_keys=False))
    return EXIT_OK


def cmd_bench(args) -> int:
    sc, pb = _problem(args)
    out = _outdir(args, sc)
    strategies = args.strategies.split(",") if args.strategies else None
    rep = benchmark(pb, strategies, steps=args.steps)
    print(rep.table())
    for p in write_report(rep, out):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_export(args) -> int:
    """Split a trace into figure-ready CSVs: levels, input, objective."""
    tr = read_trace_csv(args.trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x_r = np.asarray(args.setpoint, dtype=float) if args.setpoint else None
    files = {
        "levels.csv": (["t"] + [f"x{i + 1}" for i in range(tr.n)] + ([f"x{i + 1}_ref" for i in range(tr.n)] if x_r is not None else []),
                       lambda k: [tr.t[k], *tr.x_true[k], *(x_r if x_r is not None else [])]),
        "input.csv": (["t"] + [f"u{j + 1}" for j in range(tr.m)], lambda k: [tr.t[k], *tr.u[k]]),
        "objective.csv": (["t", "value"], lambda k: [tr.t[k], tr.value[k]]),
    }
    for name, (header, row) in files.items():
        with (out / name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(tr)):
                w.writerow([repr(float(v)) for v in row(k)])
        print(f"wrote {out / name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adpmpc", description="Min-of-quadratics MPC toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, pset=True):
        sp.add_argument("--config", help="scenario YAML (defaults used for missing keys)")
        sp.add_argument("--out", help="output path")
        if pset:
            sp.add_argument("--pset", help="value-set file from 'offline' (synthesized if omitted)")

    def synth_flags(sp):
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--budget", type=float, help="max matrices per level before pruning")
        sp.add_argument("--region-grid", dest="region_grid", type=int, help="grid points per axis")
        sp.add_argument("--partitions", type=int, help="number of regional cells")

    sp = sub.add_parser("offline", help="build and prune the value sets")
    common(sp, pset=False)
    synth_flags(sp)
    sp.set_defaults(func=cmd_offline)

    sp = sub.add_parser("run", help="simulate one strategy")
    common(sp)
    synth_flags(sp)
    sp.add_argument("--strategy", default="adp2", choices=[s.value for s in Strategy])
    sp.add_argument("--sigma", type=float, help="measurement noise standard deviation (m)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--duration", type=float, help="simulated seconds")
    sp.add_argument("--on-infeasible", dest="on_infeasible", choices=["apply-least-violation", "terminate"])
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("stability", help="grid audit of the decrease condition")
    common(sp)
    synth_flags(sp)
    sp.add_argument("--grid-step", dest="grid_step", type=float)
    sp.add_argument("--per-axis", dest="per_axis", type=int)
    sp.add_argument("--exclusion", type=float)
    sp.add_argument("--controller", choices=[s.value for s in Strategy])
    sp.add_argument("--workers", type=int)
    sp.add_argument("--progress", action="store_true")
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("bench", help="compare strategies on one scenario")
    common(sp)
    synth_flags(sp)
    sp.add_argument("--strategies", help="comma-separated subset")
    sp.add_argument("--steps", type=int, help="override the number of steps")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("export", help="split a trace CSV into figure-ready files")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--setpoint", type=float, nargs="+", help="reference levels to add as columns")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelMismatchError, UnreachableSetpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AdpMpcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
