"""Command line entry point: ``zosga run|sweep-rician|varactor-sweep|bench|catalog``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import harness
from .catalog import CATALOG, load_experiment
from .optimizer import ALGORITHMS
from .scenario import ConfigError
from .varactor import sweep as varactor_table


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _experiment(args):
    exp = load_experiment(args.scenario)
    over = {}
    if getattr(args, "iters", None) is not None:
        over["iterations"] = args.iters
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
        over["master_seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        over["runs"] = args.runs
    if getattr(args, "chunk_size", None) is not None:
        over["chunk_size"] = args.chunk_size
    if over:
        exp = exp.replace(**over)
    if getattr(args, "irs_mode", None):
        exp = dataclasses.replace(exp, scenario=exp.scenario.with_irs_mode(args.irs_mode))
    return exp


def cmd_run(args):
    exp = _experiment(args)
    algos = tuple(args.algo or ALGORITHMS)
    res = harness.repeat(exp, algos, workers=args.workers)
    out = Path(args.out or f"out/{exp.name}")
    files = harness.emit(res, out)
    for a in algos:
        f = res.final_rates(a)
        line = f"{a:12s} final sumrate {f.mean():.4f} bit/s/Hz"
        if a in res.aggregates:
            g = res.aggregates[a]
            line += f"  95% CI [{g.final_lo95:.4f}, {g.final_hi95:.4f}]"
        print(line + f"  ({len(f)} runs)")
    if set(ALGORITHMS) <= set(algos):
        gain = res.final_rates("zosga").mean() / res.final_rates("random-irs").mean() - 1
        print(f"gain over random IRS: {100 * gain:.1f}%")
    print(f"wrote {len(files)} files to {out}")


def cmd_sweep_rician(args):
    exp = _experiment(args)
    rows = harness.sweep_rician(exp, args.betas, workers=args.workers)
    text = harness.write_table(rows, args.out)
    sys.stdout.write(text)


def cmd_varactor(args):
    spec = load_experiment(args.scenario).scenario.varactor
    tab = varactor_table(spec, args.points)
    rows = [
        {"C_pF": c * 1e12, "re": re, "im": im, "abs": ab, "arg_rad": ar} for c, re, im, ab, ar in tab.tolist()
    ]
    sys.stdout.write(harness.write_table(rows, args.out))


def cmd_bench(args):
    rows, fits = harness.bench_complexity(iterations=args.iterations)
    sys.stdout.write(harness.write_table(rows, args.out))
    checks = harness.check_bench(fits)
    print(json.dumps({"fits": fits, "checks": checks}, indent=2))


def cmd_catalog(args):
    for name in CATALOG:
        sc = load_experiment(name).scenario
        modes = ",".join(sorted({s.mode for s in sc.irs}))
        n = sum(s.n_elements for s in sc.irs)
        print(f"{name:8s} K={sc.n_users} M={sc.n_antennas} IRS={len(sc.irs)} N={n} S={sc.n_params} mode={modes}")


def build_parser():
    p = argparse.ArgumentParser(prog="zosga", description="Zeroth-order IRS tuning with a WMMSE precoding oracle.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", help="catalog name or path to an experiment YAML file")
        sp.add_argument("--runs", type=int)
        sp.add_argument("--iters", type=int, help="ZoSGA iterations T")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--chunk-size", type=int, help="runs per lockstep batch (affects speed only)")
        sp.add_argument("--irs-mode", choices=("ideal", "physical"), help="override the mode of every IRS")

    r = sub.add_parser("run", help="Monte-Carlo runs with trace, aggregate and manifest output")
    common(r)
    r.add_argument("--algo", action="append", choices=ALGORITHMS, help="repeatable; default runs both")
    r.add_argument("--out", help="output directory (default out/<scenario>)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-rician", help="gain versus Rician factor on uncorrelated channels")
    common(s)
    s.add_argument("--betas", type=_floats, default=list(harness.DEFAULT_BETAS_DB), help="dB list, e.g. -10,0,10")
    s.add_argument("--out", help="CSV file")
    s.set_defaults(func=cmd_sweep_rician)

    v = sub.add_parser("varactor-sweep", help="element coefficient over the capacitance box")
    v.add_argument("--scenario", default="fig6a", help="scenario whose circuit block to use")
    v.add_argument("--points", type=int, default=1000)
    v.add_argument("--out", help="CSV file")
    v.set_defaults(func=cmd_varactor)

    b = sub.add_parser("bench", help="per-iteration timing over S, M and T2")
    b.add_argument("--iterations", type=int, default=1000)
    b.add_argument("--out", help="CSV file")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("catalog", help="list catalog scenarios")
    c.set_defaults(func=cmd_catalog)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
