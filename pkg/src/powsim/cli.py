"""Command-line front end.

Every command validates its configuration before any side effect, collects
all output rows in memory, and only then writes files, so a failed run
leaves nothing behind. Exit codes: 0 success, 2 configuration error,
3 runtime error, 4 invariant violation detected (a broken coupling
dominance signals an engine bug, not a bad input).
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import figures, runner
from .engine import StopCondition
from .params import InvariantViolation, TopologyError
from .scenarios import ConfigError, load_config

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_INVARIANT = 4


def parse_lambda_grid(spec: str) -> list[float]:
    """Parse ``lo:hi:per-decade`` into a geometric grid, or a comma list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError("lambda grid must be lo:hi:points-per-decade")
        lo, hi, per_decade = float(parts[0]), float(parts[1]), float(parts[2])
        if lo <= 0 or hi <= lo or per_decade <= 0:
            raise ConfigError("lambda grid needs 0 < lo < hi and per-decade > 0")
        decades = np.log10(hi / lo)
        count = max(int(round(decades * per_decade)) + 1, 2)
        return [float(x) for x in np.geomspace(lo, hi, count)]
    return [float(x) for x in spec.split(",")]


def _common_args(sub):
    sub.add_argument("config", help="scenario YAML file")
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--seed", type=int, help="run a single seed")
    sub.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    sub.add_argument("--blocks", type=int, help="override: stop at N chain blocks")
    sub.add_argument("--horizon", type=float, help="override: stop after T seconds")
    sub.add_argument(
        "--strict-config",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="reject unknown config keys (default on)",
    )
    sub.add_argument("--plot", action="store_true", help="also render PNG figures")
    sub.add_argument("--jobs", type=int, default=1, help="parallel seed workers")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="powsim",
        description="Simulate and analyze proof-of-work mining under latency",
    )
    subs = p.add_subparsers(dest="command", required=True)

    s = subs.add_parser("simulate", help="run a scenario and emit efficiency tables")
    _common_args(s)
    s.add_argument(
        "--lambda-grid",
        help="sweep hardness over lo:hi:points-per-decade (or a comma list)",
    )

    s = subs.add_parser("analytic", help="closed-form coordinated efficiencies")
    s.add_argument("config")
    s.add_argument("--out", default="out")
    s.add_argument(
        "--strict-config", action=argparse.BooleanOptionalAction, default=True
    )

    s = subs.add_parser("compare", help="coupled P2P vs coordinated dominance check")
    _common_args(s)
    s.add_argument("--lambda-grid")

    s = subs.add_parser("place", help="search the best coordinator position")
    s.add_argument("config")
    s.add_argument("--out", default="out")
    s.add_argument("--grid", type=int, default=50, help="cells per axis")
    s.add_argument(
        "--strict-config", action=argparse.BooleanOptionalAction, default=True
    )
    s.add_argument("--plot", action="store_true")

    s = subs.add_parser("convergence", help="efficiency vs simulation length")
    _common_args(s)
    s.add_argument(
        "--checkpoints",
        default="10000,20000,30000,40000,50000,60000,70000,80000,90000,100000",
        help="comma-separated chain lengths to report at",
    )

    s = subs.add_parser("centrality", help="centrality vs efficiency correlations")
    _common_args(s)
    s.add_argument(
        "--lambdas", default="1", help="comma-separated lambda values"
    )
    return p


def _load(args):
    cfg = load_config(args.config, strict=args.strict_config)
    if getattr(args, "seed", None) is not None:
        cfg.seeds = (args.seed,)
    elif getattr(args, "seeds", None):
        cfg.seeds = tuple(range(args.seeds))
    if getattr(args, "blocks", None):
        cfg.stop = StopCondition.blocks(args.blocks)
    elif getattr(args, "horizon", None):
        cfg.stop = StopCondition.horizon(args.horizon)
    return cfg


def _write_outputs(out_dir, tables, manifest) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (header, rows) in tables.items():
        body = runner.rows_to_csv(header, rows)
        (out / name).write_text(body, encoding="utf-8")
        paths.append(str(out / name))
    manifest = dict(manifest)
    manifest["outputs"] = paths
    manifest["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, TopologyError, InvariantViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "simulate":
            lambdas = (
                parse_lambda_grid(args.lambda_grid) if args.lambda_grid else None
            )
            tables, manifest = runner.simulate(cfg, lambdas=lambdas, jobs=args.jobs)
            _write_outputs(args.out, tables, manifest)
            if args.plot:
                figures.plot_simulation(args.out)
        elif args.command == "analytic":
            tables, manifest, res = runner.analytic_table(cfg)
            _write_outputs(args.out, tables, manifest)
            print(f"taubar = {res.taubar:.6g} s   overall efficiency = {res.overall:.6g}")
            for i in range(cfg.params.n):
                print(
                    f"  miner {i}: h={cfg.params.capacities[i]:.4g} "
                    f"p={res.win_probs[i]:.6g} eta={res.individual[i]:.6g}"
                )
        elif args.command == "compare":
            lambdas = (
                parse_lambda_grid(args.lambda_grid) if args.lambda_grid else None
            )
            tables, manifest = runner.compare(
                cfg, lambdas=lambdas, horizon=args.horizon
            )
            _write_outputs(args.out, tables, manifest)
            verdicts = tables["compare_summary.csv"][1]
            ok = all(v[-2] for v in verdicts)
            print("dominance holds for every realization" if ok else "DOMINANCE BROKEN")
            if args.plot:
                figures.plot_compare(args.out)
        elif args.command == "place":
            tables, manifest, (pos, eta) = runner.place(cfg, grid=args.grid)
            _write_outputs(args.out, tables, manifest)
            print(f"best coordinator position: ({pos[0]:.6g}, {pos[1]:.6g}) "
                  f"efficiency {eta:.6g}")
            if args.plot:
                figures.plot_placement(args.out)
        elif args.command == "convergence":
            checkpoints = [int(c) for c in args.checkpoints.split(",")]
            tables, manifest = runner.convergence(cfg, checkpoints, jobs=args.jobs)
            _write_outputs(args.out, tables, manifest)
            if args.plot:
                figures.plot_convergence(args.out)
        elif args.command == "centrality":
            lambdas = [float(x) for x in args.lambdas.split(",")]
            tables, manifest = runner.centrality_correlation(
                cfg, lambdas, jobs=args.jobs
            )
            _write_outputs(args.out, tables, manifest)
            for row in tables["correlation.csv"][1]:
                print(f"lambda={row[1]:g}  pearson={row[2]:.4f}  spearman={row[3]:.4f}")
    except AssertionError as exc:
        # only raised for broken run invariants (e.g. coupling dominance)
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, TopologyError, InvariantViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
