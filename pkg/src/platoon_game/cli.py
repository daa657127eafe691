"""Command-line front end.

Exit codes: 0 success (for ``run``: certified convergence), 1 usage or
configuration error, 2 for ``run`` hitting the iteration cap without a
certified equilibrium. The ``PLATOON_GAME_OUT`` environment variable
overrides the default output directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .game import GameError
from .metrics import emit
from .potential import SizeGuardError, exact_potential_exists
from .runner import SWEEP_PARAMS, run_scenario, run_sweep, verify_potential
from .scenario import ScenarioError, load_scenario, sample_population

import numpy as np


def _out_dir(arg: str | None, spec_dir: str) -> Path:
    if arg is not None:
        return Path(arg)
    env = os.environ.get("PLATOON_GAME_OUT")
    if env:
        return Path(env)
    return Path(spec_dir)


def _parse_values(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoon-game",
        description="Simulate and analyse the car/truck departure-time congestion game.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a learning experiment from a scenario file")
    p_run.add_argument("--config", default=None, help="scenario JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--algorithm", choices=("jsfp", "asfp"), default=None)
    p_run.add_argument("--max-iters", type=int, default=None)
    p_run.add_argument("--emit", default="csv,json",
                       help="comma-separated outputs: csv,json,truck_csv")

    p_ver = sub.add_parser("verify-potential",
                           help="check pricing/potential consistency for a scenario")
    p_ver.add_argument("--config", default=None)
    p_ver.add_argument("--trials", type=int, default=10_000)
    p_ver.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="rerun a scenario over a parameter grid")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated list or lo..hi range")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--emit", default="csv,json")

    p_oracle = sub.add_parser("oracle",
                              help="decide exact-potential existence on a small game")
    p_oracle.add_argument("--config", default=None)
    p_oracle.add_argument("--max-cycles", type=int, default=250_000,
                          help="guard on the number of 4-cycles enumerated")
    return parser


def _cmd_run(args) -> int:
    spec = load_scenario(args.config)
    result = run_scenario(spec, seed=args.seed, algorithm=args.algorithm,
                          max_iters=args.max_iters)
    out = _out_dir(args.out, spec.output_dir)
    formats = [f for f in args.emit.split(",") if f]
    written = emit(result.trace, result.summary, out, formats)
    trace, summary = result.trace, result.summary
    status = f"certified Nash at iteration {trace.certified_at}" if trace.converged \
        else f"no certified equilibrium within {trace.iterations} iterations"
    print(f"{trace.algorithm} run: {status}")
    print(f"social cost {summary.s_nash:.4f} km/h, optimal {summary.s_optimal:.4f} km/h, "
          f"ratio {summary.ratio_nash:.4f} (preference-only ratio {summary.ratio_preference:.4f})")
    for path in written.values():
        print(f"wrote {path}")
    return 0 if trace.converged else 2


def _cmd_verify(args) -> int:
    spec = load_scenario(args.config)
    report = verify_potential(spec, trials=args.trials, seed=args.seed)
    print(report.describe())
    return 0 if report.passed else 1


def _cmd_sweep(args) -> int:
    spec = load_scenario(args.config)
    if args.param not in SWEEP_PARAMS:
        print(f"unknown sweep parameter {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}",
              file=sys.stderr)
        return 1
    out = _out_dir(args.out, spec.output_dir)
    rows = run_sweep(spec, args.param, _parse_values(args.values), _parse_seeds(args.seeds),
                     out_dir=out, emit_formats=[f for f in args.emit.split(",") if f])
    print(f"{len(rows)} runs; wrote {out / 'sweep.csv'}")
    for row in rows:
        print(f"  {args.param}={row.param_value:g} seed={row.seed}: "
              f"{'converged' if row.converged else 'NOT converged'} "
              f"in {row.iterations} iterations, s_nash={row.s_nash:.4f}, "
              f"max trucks together={row.max_truck_concentration}")
    return 0


def _cmd_oracle(args) -> int:
    spec = load_scenario(args.config)
    cfg = spec.game_config()
    pop = sample_population(spec, np.random.default_rng(
        np.random.SeedSequence(spec.seed).spawn(2)[0]))
    decision = exact_potential_exists(cfg, pop, max_cycles=args.max_cycles)
    if decision.exists:
        print("exact potential exists: every 4-cycle of unilateral deviations closes")
    else:
        print("no exact potential")
        print("counterexample: " + decision.counterexample.describe())
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "verify-potential": _cmd_verify,
        "sweep": _cmd_sweep,
        "oracle": _cmd_oracle,
    }
    if getattr(args, "config", None) is None:
        print("error: --config is required", file=sys.stderr)
        return 1
    try:
        return handlers[args.command](args)
    except (ScenarioError, FileNotFoundError, SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GameError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
