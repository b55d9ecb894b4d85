"""Command-line front door.

Exit codes:
  0  success
  1  planners disagreed or an internal consistency check failed
  2  usage error
  3  input file could not be parsed
  4  infeasible: no plan fits in memory, or a given plan fails validation
  5  refused: brute force asked to run beyond its scale limits or timeout
"""

from __future__ import annotations

import argparse
import json
import random
import statistics
import sys
from pathlib import Path
from typing import Optional

from .core import InfeasiblePlanError, InvalidPoolError, Plan, validate_plan
from .instances import random_model, random_pool
from .io import ParseError, load_model, load_plan, load_pool, load_scenario, plan_to_dict, write_json
from .partitioner import (
    BruteForceLimits,
    InfeasibleError,
    PlannerConsistencyError,
    PlannerTimeoutError,
    RefusedScaleError,
    naive_dp_work,
    partition_brute_force,
    partition_category_dp,
    partition_even,
    partition_naive_dp,
)
from .sim import SimConfig, simulate, steady_state_check

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_REFUSED = 5

# naive DP is skipped in `compare` beyond this many transition evaluations
NAIVE_DP_BUDGET = 50_000_000
COMPARE_ORDERS = 10


class UsageError(Exception):
    pass


def _emit(args, payload: dict, summary: str) -> None:
    if args.output:
        write_json(args.output, payload)
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    if not args.quiet:
        print(summary, file=sys.stderr)


def _plan_summary(payload: dict) -> str:
    stages = ", ".join(
        f"{s['device_id']}[{s['first_layer']}-{s['last_layer']}]" for s in payload["stages"]
    )
    return (
        f"{payload['planner']}: T_opt={payload['t_opt_s']:.6g} s, "
        f"throughput={payload['predicted_throughput']:.6g} samples/s, "
        f"{len(payload['stages'])} stages: {stages}"
    )


def cmd_plan(args) -> int:
    model = load_model(args.model)
    pool = load_pool(args.pool)
    if args.planner == "even":
        if not args.device_order:
            raise UsageError("--device-order is required with --planner even")
        try:
            result = partition_even(model, pool, args.device_order, args.mb)
        except InvalidPoolError as exc:
            raise UsageError(str(exc)) from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        if args.device_order:
            raise UsageError("--device-order only applies to --planner even")
        if args.planner == "dp":
            result = partition_naive_dp(model, pool, args.mb)
        elif args.planner == "category":
            result = partition_category_dp(model, pool, args.mb)
        else:
            limits = BruteForceLimits(args.brute_max_devices, args.brute_max_layers, args.brute_timeout)
            result = partition_brute_force(model, pool, args.mb, limits)
    payload = plan_to_dict(result)
    summary = _plan_summary(payload)
    if result.violations:
        summary += "\n  violations: " + "; ".join(str(v) for v in result.violations)
    _emit(args, payload, summary)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    pool = load_pool(args.pool)
    plan = load_plan(args.plan)
    mb = args.mb if args.mb is not None else plan.microbatch_size
    plan = Plan(plan.stages, mb, plan.predicted_period_s)
    violations = validate_plan(model, pool, plan)
    if violations:
        raise InfeasiblePlanError(violations)
    count = max(args.microbatches, 10 * len(plan.stages))
    config = SimConfig(count, mb, args.warmup)
    report = simulate(model, pool, plan, config)
    check = steady_state_check(model, pool, plan, config)
    payload = report.to_json(include_events=False)
    payload.update(
        analytic_period_s=check.analytic_period_s,
        relative_error=check.relative_error,
        microbatch_count=count,
    )
    if args.events:
        report.write_events(args.events)
    summary = (
        f"steady throughput {report.throughput_samples_per_s:.6g} samples/s, "
        f"period {report.steady_period_s:.6g} s (analytic {check.analytic_period_s:.6g} s, "
        f"relative error {check.relative_error:.3g}), makespan {report.makespan_s:.6g} s"
    )
    _emit(args, payload, summary)
    return EXIT_OK


def _simulated(model, pool, result, mb, count):
    n = max(count, 10 * len(result.plan.stages))
    report = simulate(model, pool, result.plan, SimConfig(n, mb))
    return {
        "t_opt_s": result.t_opt_s,
        "throughput": report.throughput_samples_per_s,
        "devices_used": len(result.plan.stages),
        "stages": plan_to_dict(result)["stages"],
        "wall_time_s": result.wall_time_s,
        "states_explored": result.states_explored,
    }


def compare_scenario(model, pool, microbatch_size: int, seed: int, microbatches: int = 100,
                     orders: int = COMPARE_ORDERS) -> dict:
    out = {"microbatch_size": microbatch_size, "planners": {}}
    cat = partition_category_dp(model, pool, microbatch_size)
    out["planners"]["category"] = _simulated(model, pool, cat, microbatch_size, microbatches)
    if naive_dp_work(pool.size, model.num_layers) <= NAIVE_DP_BUDGET:
        dp = partition_naive_dp(model, pool, microbatch_size)
        out["planners"]["dp"] = _simulated(model, pool, dp, microbatch_size, microbatches)
    else:
        out["planners"]["dp"] = {"skipped": f"state space above {NAIVE_DP_BUDGET} evaluations; "
                                            "category DP gives the same optimum"}

    rng = random.Random(seed)
    ids = [d.id for d in pool.devices]
    k = min(len(ids), model.num_layers)
    runs = []
    for _ in range(orders):
        order = rng.sample(ids, len(ids))[:k]
        res = partition_even(model, pool, order, microbatch_size)
        entry = {"order": order, "t_opt_s": res.t_opt_s}
        if res.violations:
            entry["throughput"] = None
            entry["violations"] = [str(v) for v in res.violations]
        else:
            entry["throughput"] = _simulated(model, pool, res, microbatch_size, microbatches)["throughput"]
        runs.append(entry)
    feasible = [r["throughput"] for r in runs if r["throughput"] is not None]
    out["planners"]["even"] = {
        "orders": runs,
        "throughput": [r["throughput"] for r in runs],
        "min": min(feasible) if feasible else None,
        "mean": statistics.fmean(feasible) if feasible else None,
        "max": max(feasible) if feasible else None,
        "infeasible_orders": len(runs) - len(feasible),
    }
    return out


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    model, pool = scenario.load()
    results = [
        compare_scenario(model, pool, mb, args.seed, args.microbatches)
        for mb in scenario.microbatch_sizes
    ]
    payload = {"scenario": scenario.name, "seed": args.seed, "comment": scenario.comment, "results": results}
    lines = [f"scenario {scenario.name} (seed {args.seed})"]
    for r in results:
        p = r["planners"]
        even = p["even"]
        line = f"  mb={r['microbatch_size']}: category {p['category']['throughput']:.4g} samples/s " \
               f"on {p['category']['devices_used']} devices"
        if "throughput" in p["dp"]:
            line += f", dp {p['dp']['throughput']:.4g}"
        if even["max"] is not None:
            line += f", even min/mean/max {even['min']:.4g}/{even['mean']:.4g}/{even['max']:.4g}"
        lines.append(line)
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def bench_planners(layers: int, categories: int, per_category: int, seed: int, *, brute: bool = False,
                   brute_limits: BruteForceLimits = BruteForceLimits(), microbatch_size: int = 4,
                   skip_naive: bool = False) -> dict:
    rng = random.Random(seed)
    model = random_model(rng, layers)
    pool = random_pool(rng, [per_category] * categories)
    rows = {}
    runners = [("category", lambda: partition_category_dp(model, pool, microbatch_size))]
    if not skip_naive:
        runners.append(("dp", lambda: partition_naive_dp(model, pool, microbatch_size)))
    if brute:
        runners.append(("brute", lambda: partition_brute_force(model, pool, microbatch_size, brute_limits)))
    for name, run in runners:
        try:
            res = run()
        except (RefusedScaleError, PlannerTimeoutError) as exc:
            rows[name] = {"refused": str(exc)}
            continue
        rows[name] = {
            "t_opt_s": res.t_opt_s,
            "wall_time_s": res.wall_time_s,
            "states_explored": res.states_explored,
            "stages": len(res.plan.stages),
        }
    optima = {r["t_opt_s"] for r in rows.values() if "t_opt_s" in r}
    return {
        "layers": layers,
        "categories": categories,
        "per_category": per_category,
        "devices": categories * per_category,
        "seed": seed,
        "microbatch_size": microbatch_size,
        "planners": rows,
        "agree": len(optima) <= 1,
    }


def cmd_bench_planners(args) -> int:
    limits = BruteForceLimits(args.brute_max_devices, args.brute_max_layers, args.brute_timeout)
    payload = bench_planners(args.layers, args.categories, args.per_category, args.seed,
                             brute=args.brute, brute_limits=limits, microbatch_size=args.mb)
    lines = [f"L={args.layers} N={args.categories} n={args.per_category} seed={args.seed}",
             f"{'planner':<10}{'wall time (s)':>16}{'states':>14}{'T_opt (s)':>16}"]
    for name, row in payload["planners"].items():
        if "refused" in row:
            lines.append(f"{name:<10}  refused: {row['refused']}")
        else:
            lines.append(f"{name:<10}{row['wall_time_s']:>16.4f}{row['states_explored']:>14}{row['t_opt_s']:>16.6g}")
    _emit(args, payload, "\n".join(lines))
    if not payload["agree"]:
        print("error: planners disagree on T_opt", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0,
                   help="PRNG seed (default 0)")
    p.add_argument("--output", "-o", type=Path, default=default,
                   help="write the JSON result here instead of stdout")
    p.add_argument("--quiet", "-q", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="suppress the human summary on stderr")


def _add_brute_limits(p: argparse.ArgumentParser) -> None:
    d = BruteForceLimits()
    p.add_argument("--brute-max-devices", type=int, default=d.max_devices)
    p.add_argument("--brute-max-layers", type=int, default=d.max_layers)
    p.add_argument("--brute-timeout", type=float, default=None, help="seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipeplan", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="partition a model over a device pool")
    _add_globals(p, suppress=True)
    p.add_argument("model", type=Path)
    p.add_argument("pool", type=Path)
    p.add_argument("--planner", choices=["dp", "category", "brute", "even"], default="dp")
    p.add_argument("--mb", type=int, default=1, help="microbatch size")
    p.add_argument("--device-order", nargs="+", metavar="ID")
    _add_brute_limits(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a plan and compare with the analytic period")
    _add_globals(p, suppress=True)
    p.add_argument("model", type=Path)
    p.add_argument("pool", type=Path)
    p.add_argument("plan", type=Path)
    p.add_argument("--microbatches", type=int, default=100)
    p.add_argument("--mb", type=int, default=None, help="microbatch size (default: from plan)")
    p.add_argument("--warmup", type=int, default=None, help="leading microbatches excluded (default: stages)")
    p.add_argument("--events", type=Path, default=None, help="write the event log as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="DP planners vs the even baseline over random device orders")
    _add_globals(p, suppress=True)
    p.add_argument("scenario", type=Path)
    p.add_argument("--microbatches", type=int, default=100)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench-planners", help="time the planners on a random instance")
    _add_globals(p, suppress=True)
    p.add_argument("--layers", type=int, default=12)
    p.add_argument("--categories", type=int, default=3)
    p.add_argument("--per-category", type=int, default=3)
    p.add_argument("--mb", type=int, default=4)
    p.add_argument("--brute", action="store_true", help="also run brute force (subject to limits)")
    _add_brute_limits(p)
    p.set_defaults(func=cmd_bench_planners)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "mb", None) is not None and args.mb < 1:
            raise UsageError("--mb must be >= 1")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InfeasibleError, InfeasiblePlanError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RefusedScaleError, PlannerTimeoutError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except InvalidPoolError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PlannerConsistencyError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
