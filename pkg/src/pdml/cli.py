"""Command line entry point.

    pdml run <config.yaml>
    pdml suite <dir> [--out DIR] [--workers K]
    pdml bounds <config.yaml> [--out FILE]
    pdml graph-gen <n> <E> <seed> [--out FILE]

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, PDMLError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args):
    from .config import load_config
    from .experiment import run_experiment

    cfg = load_config(args.config)
    res = run_experiment(cfg)
    print(f"{cfg.name}: T={len(res.records)} final_risk={res.final_risk:.6f} reference_risk={res.reference_risk:.6f} "
          f"consensus_norm_gap={res.records[-1].consensus_norm_gap:.3e}")
    if res.accuracy_final:
        print(f"accuracy (final classifiers) = {100 * res.accuracy:.2f}%")
    if cfg.outputs.dir:
        print(f"artifacts in {cfg.resolve(cfg.outputs.dir)}")


def _cmd_suite(args):
    from .experiment import load_suite_dir, run_suite

    cfgs, opts = load_suite_dir(args.dir)
    if args.workers:
        opts.workers = args.workers
    out = Path(args.out) if args.out else Path(args.dir) / "suite_out"
    summary = run_suite(cfgs, opts, out_dir=out)
    print(summary.to_text(), end="")
    print(f"table written to {out / 'table.csv'}")


def _cmd_bounds(args):
    from .config import load_config
    from .experiment import compute_bounds, prepare

    cfg = load_config(args.config)
    res = compute_bounds(cfg, prepare(cfg))
    if args.out:
        Path(args.out).write_text(res.text)
    else:
        print(res.text, end="")


def _cmd_graph_gen(args):
    from .topology import format_edge_list, random_connected_graph

    g = random_connected_graph(args.n, args.E, args.seed)
    text = format_edge_list(g, header=f"random connected graph n={args.n} E={args.E} seed={args.seed}")
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdml", description="Privacy-preserving distributed ADMM experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a YAML config")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("suite", help="run the accuracy grid over every config in a directory")
    p.add_argument("dir")
    p.add_argument("--out", help="output directory (default: <dir>/suite_out)")
    p.add_argument("--workers", type=int, help="parallel processes")
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("bounds", help="evaluate the convergence and generalization bounds")
    p.add_argument("config")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("graph-gen", help="print a random connected graph as an edge list")
    p.add_argument("n", type=int)
    p.add_argument("E", type=int)
    p.add_argument("seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_graph_gen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PDMLError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
