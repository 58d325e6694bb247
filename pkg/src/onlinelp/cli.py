"""Command-line entry point.

Subcommands:
  run <config>        run an experiment config and write its report
  solve <instance>    offline relaxation of one instance file (optionally the
                      exact binary optimum for n <= 25)
  bench <mknap>       one-pass runs vs the offline relaxation on benchmark
                      problems, with timings
  gen <family> ...    generate an instance file from a seeded spec

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .algorithms import AlgorithmConfig, AlgorithmKind, run_soa
from .core import StepSchedule, load_instance, save_instance
from .generators import GeneratorFamily, GeneratorSpec, PermutationPlan, generate, permute, read_mknap
from .harness import ConfigError, child_seed, load_config, run_experiment
from .metrics import evaluate_trial
from .simplex import LpStatus, solve_binary_exact, solve_relaxation


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); config errors are exit 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="onlinelp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="experiment config file")
    p_run.add_argument("--workers", type=int, default=None,
                       help="parallel trial workers (overrides config and environment)")
    p_run.add_argument("--output", default=None, help="report directory (overrides config)")

    p_solve = sub.add_parser("solve", help="solve the offline relaxation of an instance file")
    p_solve.add_argument("instance", help="instance file in the plain-text format")
    p_solve.add_argument("--binary", action="store_true",
                         help="also report the exact binary optimum (n <= 25)")

    p_bench = sub.add_parser("bench", help="benchmark one-pass runs against the relaxation")
    p_bench.add_argument("mknap", help="multi-knapsack benchmark file")
    p_bench.add_argument("--trials", type=int, default=10,
                         help="seeded arrival permutations per problem (default 10)")
    p_bench.add_argument("--seed", type=int, default=0, help="root seed (default 0)")

    p_gen = sub.add_parser("gen", help="generate an instance file")
    p_gen.add_argument("family", choices=[f.value for f in GeneratorFamily])
    p_gen.add_argument("-n", type=int, required=True, help="number of columns")
    p_gen.add_argument("-m", type=int, required=True, help="number of constraints")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--d-lo", type=float, default=1.0 / 3.0)
    p_gen.add_argument("--d-hi", type=float, default=2.0 / 3.0)
    p_gen.add_argument("--cauchy-truncation", type=float, default=10.0)
    p_gen.add_argument("--adversarial-low", type=float, default=1.0)
    p_gen.add_argument("--adversarial-high", type=float, default=2.0)
    p_gen.add_argument("--adversarial-capacity-fraction", type=float, default=0.5)
    p_gen.add_argument("-o", "--output", required=True, help="output instance file")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    report = run_experiment(cfg, workers=args.workers)
    outdir = args.output or cfg.output_dir or f"{cfg.name}-report"
    report.save(outdir)
    for doc in report.aggregates:
        comp = doc["mean_competitiveness"]
        comp_txt = f"{comp:.4f}" if comp == comp else "n/a"
        print(f"{doc['algorithm']:>16s}  n={doc['n']:<7d} trials={doc['count']:<4d} "
              f"regret={doc['mean_regret']:.4f}  violation={doc['mean_violation']:.4f}  "
              f"competitiveness={comp_txt}")
    if report.errors:
        for err in report.errors:
            print(f"trial failure: {err}", file=sys.stderr)
        print(f"{len(report.errors)} trial(s) failed; see summary.json", file=sys.stderr)
    print(f"report written to {outdir}")
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    sol = solve_relaxation(inst)
    print(f"status {sol.status.value}")
    if sol.status is LpStatus.OPTIMAL:
        print(f"objective {sol.objective:.12g}")
        print("duals " + " ".join(f"{v:.12g}" for v in sol.duals))
        print("primal " + " ".join(f"{v:.12g}" for v in sol.primal))
    if args.binary:
        if inst.n > 25:
            raise ConfigError(f"--binary needs n <= 25, instance has n = {inst.n}")
        obj, x = solve_binary_exact(inst)
        print(f"binary_objective {obj:.12g}")
        print("binary_solution " + "".join(str(int(v)) for v in x))
    return 0


def _cmd_bench(args) -> int:
    problems = read_mknap(args.mknap)
    schedules = (StepSchedule.SQRT_T, StepSchedule.SQRT_N)
    for idx, (inst, known) in enumerate(problems, start=1):
        t0 = time.perf_counter()
        lp = solve_relaxation(inst)
        lp_seconds = time.perf_counter() - t0
        if lp.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"problem {idx}: relaxation returned {lp.status.value}")
        known_txt = f"{known:.12g}" if known is not None else "unknown"
        print(f"problem {idx}: n={inst.n} m={inst.m} lp_opt={lp.objective:.12g} "
              f"known_opt={known_txt} lp_seconds={lp_seconds:.4f}")
        for schedule in schedules:
            label = f"soa/{schedule.value}"
            comps = []
            vios = []
            seconds = 0.0
            for trial in range(args.trials):
                plan = PermutationPlan.random(
                    inst.n, child_seed(args.seed, inst.n, trial, f"b{idx}:{label}"))
                run_inst = permute(inst, plan)
                t0 = time.perf_counter()
                trace = run_soa(run_inst, AlgorithmConfig(AlgorithmKind.SOA, schedule))
                seconds += time.perf_counter() - t0
                res = evaluate_trial(run_inst, trace, lp.objective, algorithm=label)
                comps.append(res.competitiveness if res.competitiveness is not None else float("nan"))
                vios.append(res.violation)
            print(f"  {label:>10s}: competitiveness={np.mean(comps):.4f} "
                  f"violation={np.mean(vios):.4f} seconds_per_run={seconds / args.trials:.6f}")
    return 0


def _cmd_gen(args) -> int:
    spec = GeneratorSpec(
        family=GeneratorFamily(args.family),
        n=args.n,
        m=args.m,
        seed=args.seed,
        d_range=(args.d_lo, args.d_hi),
        cauchy_truncation=args.cauchy_truncation,
        adversarial_low=args.adversarial_low,
        adversarial_high=args.adversarial_high,
        adversarial_capacity_fraction=args.adversarial_capacity_fraction,
    )
    inst = generate(spec)
    save_instance(inst, args.output)
    print(f"wrote n={inst.n} m={inst.m} instance to {args.output}")
    return 0


_COMMANDS = {"run": _cmd_run, "solve": _cmd_solve, "bench": _cmd_bench, "gen": _cmd_gen}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
