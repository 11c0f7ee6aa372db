"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as dpipe
from .experiment import (ConfigError, StageError, _load_data, emit_plot_data, parse_config, run_experiment,
                         sweep)
from .graphs import GraphError, build_topology, metropolis_weights, spectral_gap, write_weights
from .metrics import Trace

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_graph(args) -> int:
    params = {"radius": args.radius} if args.radius is not None else {}
    topo = build_topology(args.kind, args.n, params, args.seed)
    W = metropolis_weights(topo, lazy=args.lazy)
    lam = spectral_gap(W).lam
    deg = topo.degrees()
    print(f"kind={topo.kind} n={topo.n} edges={len(topo.edges)} degree_min={deg.min()} degree_max={deg.max()}")
    print(f"lambda={lam!r} gap={1.0 - lam!r}")
    if args.output:
        write_weights(args.output, topo, W)
        print(f"weights written to {args.output}")
    return EXIT_OK


def _cmd_partition(args) -> int:
    cfg = parse_config(args.config)
    train, _ = _load_data(cfg)
    part = dpipe.partition(train, cfg.get("graph.n"), cfg.get("data.partition"),
                           cfg.get("experiment.seed") if cfg.get("data.partition_seed") == "auto"
                           else cfg.get("data.partition_seed"))
    sizes = part.sizes
    print(f"mode={part.mode} n={part.n} N={part.num_samples} "
          f"size_min={sizes.min()} size_max={sizes.max()} size_mean={sizes.mean():.6g}")
    for i, ix in enumerate(part.indices[: args.show]):
        labels, counts = np.unique(train.labels[ix], return_counts=True)
        mix = " ".join(f"{int(lab):+d}:{int(c)}" for lab, c in zip(labels, counts))
        print(f"node {i}: m={len(ix)} labels {mix}")
    if args.output:
        part.write_csv(args.output)
        print(f"partition written to {args.output}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    res = run_experiment(cfg, Path(args.output) if args.output else None, workers=args.workers)
    print(f"trace: {res.trace_path}")
    for key in ("final_gap", "final_epoch", "grad_evals_per_node", "comm_rounds_per_node"):
        print(f"{key} = {res.summary[key]}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    values = [v for v in args.values.split(",") if v]
    results = sweep(cfg, args.param, values, Path(args.output) if args.output else None)
    for val, res in results.items():
        print(f"{args.param}={val}: final_gap={res.summary['final_gap']} dir={res.directory}")
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    runs = {}
    for d in args.run_dirs:
        runs[Path(d).name] = Trace.read_csv(Path(d) / "trace.csv")
    text = emit_plot_data(runs, args.x_axis)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gtvr", description="Decentralized stochastic optimization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="build a topology and report its mixing rate")
    g.add_argument("kind", choices=("ring", "complete", "exponential", "random_geometric"))
    g.add_argument("n", type=int)
    g.add_argument("--radius", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lazy", action="store_true", help="use (I + W)/2")
    g.add_argument("--output", help="write the weight matrix as text")
    g.set_defaults(func=_cmd_graph)

    pt = sub.add_parser("partition", help="inspect the data split defined by a config")
    pt.add_argument("config")
    pt.add_argument("--show", type=int, default=8, help="number of nodes to print")
    pt.add_argument("--output", help="write node_id,global_index CSV")
    pt.set_defaults(func=_cmd_partition)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("config")
    r.add_argument("--output", help="run directory (overrides output.directory)")
    r.add_argument("--workers", type=int, help="evaluation threads (overrides algorithm.workers)")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run one experiment per parameter value")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="section.key, e.g. algorithm.alpha")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--output", help="root directory for the sweep runs")
    s.set_defaults(func=_cmd_sweep)

    pd = sub.add_parser("plotdata", help="long-format CSV from run directories")
    pd.add_argument("run_dirs", nargs="+")
    pd.add_argument("--x-axis", choices=("epoch", "grad_evals", "comm_rounds"), default="epoch")
    pd.add_argument("--output")
    pd.set_defaults(func=_cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, GraphError, dpipe.DatasetError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
