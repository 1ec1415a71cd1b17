"""Command-line interface: generate, validate, solve, plan, run, oracle, suite.

All output is machine-readable JSON unless asked for CSV.  The LP feasibility
tolerance can be overridden globally with the BANDITLP_TOL environment
variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import bench, oracle, policies, relaxations, statespace
from .lp import format_lp, solve_lp


def _emit(doc) -> None:
    json.dump(doc, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _solve(instance, epsilon=None):
    return relaxations.solve_relaxation(instance, epsilon=epsilon)


def _pipeline(instance, alpha: float, epsilon=None):
    solution = _solve(instance, epsilon)
    pols = relaxations.extract_single_arm_policies(solution, instance)
    plan = policies.make_greedy_plan(pols, instance, instance.objective.kind, alpha=alpha)
    return solution, pols, plan


def cmd_gen(args) -> int:
    if args.family == "integrality-gap":
        instance = bench.gen_integrality_gap(args.n)
    elif args.family == "adaptivity-gap":
        instance = bench.gen_adaptivity_gap(args.n, depth=args.depth)
    else:
        spec = bench.GeneratorSpec(family=args.family, count=1, max_arms=args.n or 3, seed=args.seed)
        instance = bench.gen_random_suite(spec)[0]
    statespace.save_instance(instance, args.output)
    _emit({"written": args.output, "arms": len(instance.arms), "budget": instance.budget})
    return 0


def cmd_validate(args) -> int:
    instance = statespace.load_instance(args.file)
    diags = bench.validate_instance(instance)
    _emit(
        {
            "file": args.file,
            "valid": not diags,
            "diagnostics": [dataclasses.asdict(d) for d in diags],
        }
    )
    return 0 if not diags else 1


def _apply_variant(instance, variant):
    if variant is None or variant == instance.objective.kind:
        return instance
    if variant == "lagrangean":
        return bench.as_lagrangean(instance)
    raise SystemExit(f"cannot reinterpret a {instance.objective.kind} instance as {variant}")


def cmd_solve(args) -> int:
    instance = _apply_variant(statespace.load_instance(args.file), args.variant)
    kind = instance.objective.kind
    if kind == "budgeted":
        lp = relaxations.build_budgeted_lp(instance)
    elif kind == "lagrangean":
        lp = relaxations.build_lagrangean_lp(instance)
    else:
        lp = relaxations.build_concave_lp(instance, args.epsilon)
    if args.dump_lp:
        with open(args.dump_lp, "w") as fh:
            fh.write(format_lp(lp))
    raw = solve_lp(lp)
    if raw.status != "optimal":
        _emit({"status": raw.status})
        return 1
    solution = relaxations.RelaxationSolution.from_raw(
        instance,
        raw,
        kind,
        grid=None
        if kind != "concave"
        else statespace.concave_grid_size(
            len(instance.arms),
            args.epsilon if args.epsilon is not None else instance.objective.concave.epsilon,
        ),
    )
    _emit(
        {
            "status": raw.status,
            "gamma_star": solution.gamma_star,
            "values": raw.values,
        }
    )
    return 0


def _effective_alpha(args, instance) -> float:
    if args.alpha is not None:
        return args.alpha
    return instance.objective.alpha


def cmd_plan(args) -> int:
    instance = _apply_variant(statespace.load_instance(args.file), args.variant)
    solution, pols, plan = _pipeline(instance, _effective_alpha(args, instance), args.epsilon)
    _emit(
        {
            "variant": plan.variant,
            "alpha": plan.alpha,
            "budget": plan.budget,
            "gamma_star": solution.gamma_star,
            "order": [
                {"arm": r.arm_id, "nu": r.nu, "mu": r.mu, "ratio": None if r.ratio in (float("inf"), float("-inf")) else r.ratio}
                for r in plan.order
            ],
            "stats": [
                {"arm": p.arm_id, "P": p.explore_prob, "R": p.reward, "C": p.cost} for p in pols
            ],
        }
    )
    return 0


def cmd_run(args) -> int:
    instance = _apply_variant(statespace.load_instance(args.file), args.variant)
    solution, _, plan = _pipeline(instance, _effective_alpha(args, instance), args.epsilon)
    kind = instance.objective.kind
    if args.reps:
        report = policies.monte_carlo_evaluate(
            instance, plan, solution, args.reps, args.seed, rule=args.rule
        )
        _emit(
            {
                "variant": kind,
                "reps": report.reps,
                "mean": report.mean,
                "stderr": report.stderr,
                "mean_cost": report.mean_cost,
                "max_cost": report.max_cost,
                "violations": report.violations,
            }
        )
        return 0
    if kind == "budgeted":
        runner = (
            policies.execute_greedy_violate if args.rule == "violate" else policies.execute_greedy_order
        )
        trace = runner(instance, plan, solution, args.seed)
    elif kind == "lagrangean":
        trace = policies.execute_lagrangean_greedy(instance, plan, solution, args.seed)
    else:
        trace = policies.execute_concave_greedy(instance, plan, solution, args.seed)
    sys.stdout.write(policies.trace_to_jsonl(trace))
    return 0


def cmd_oracle(args) -> int:
    instance = _apply_variant(statespace.load_instance(args.file), args.variant)
    solution = _solve(instance)
    opt, _ = oracle.dp_optimal(instance, limits=args.limit)
    _emit(
        {
            "opt": opt,
            "gamma_star": solution.gamma_star,
            "ratio": solution.gamma_star / opt if opt > 0 else None,
        }
    )
    return 0


def cmd_suite(args) -> int:
    with open(args.spec) as fh:
        doc = json.load(fh)
    spec_fields = {f.name for f in dataclasses.fields(bench.GeneratorSpec)}
    spec = bench.GeneratorSpec(**{k: v for k, v in doc.items() if k in spec_fields})
    suite = bench.gen_random_suite(spec)
    variant = doc.get("variant", "budgeted")
    if variant == "lagrangean":
        suite = [bench.as_lagrangean(i) for i in suite]
    elif variant == "concave":
        suite = [
            bench.as_concave(i, doc.get("B", 1.0), doc.get("epsilon", 0.25)) for i in suite
        ]
    opt_fields = {f.name for f in dataclasses.fields(bench.SuiteOptions)}
    options = bench.SuiteOptions(**{k: v for k, v in doc.get("options", {}).items() if k in opt_fields})
    report = bench.run_guarantee_suite(suite, variant, options)
    doc_out = report.to_json()
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(doc_out, fh, indent=1)
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        _emit(doc_out)
    return 0 if report.ok else 1


def cmd_report(args) -> int:
    with open(args.file) as fh:
        doc = json.load(fh)
    if args.format == "json":
        _emit(doc)
        return 0
    import csv as _csv

    writer = _csv.writer(sys.stdout)
    rows = doc.get("rows", [])
    if rows:
        keys = list(rows[0].keys())
        writer.writerow(keys)
        for row in rows:
            writer.writerow([row.get(k) for k in keys])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditlp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("--family", required=True,
                   choices=["integrality-gap", "adaptivity-gap", "random-two-level", "random-beta"])
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="model diagnostics for an instance file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve the instance's LP relaxation")
    p.add_argument("file")
    p.add_argument("--variant", choices=["budgeted", "lagrangean", "concave"], default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--dump-lp", default=None, help="write the LP in text interchange format")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("plan", help="print the greedy ordering and per-arm statistics")
    p.add_argument("file")
    p.add_argument("--variant", choices=["budgeted", "lagrangean", "concave"], default=None)
    p.add_argument("--alpha", type=float, default=None, help="bicriteria budget factor (defaults to the instance file's alpha)")
    p.add_argument("--epsilon", type=float, default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="execute the rounded policy (trace or Monte-Carlo)")
    p.add_argument("file")
    p.add_argument("--variant", choices=["budgeted", "lagrangean", "concave"], default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reps", type=int, default=0)
    p.add_argument("--alpha", type=float, default=None, help="bicriteria budget factor (defaults to the instance file's alpha)")
    p.add_argument("--rule", choices=["order", "violate"], default="order")
    p.add_argument("--epsilon", type=float, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="exact DP optimum vs gamma*")
    p.add_argument("file")
    p.add_argument("--variant", choices=["budgeted", "lagrangean"], default=None)
    p.add_argument("--limit", type=int, default=oracle.ORACLE_GUARD)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("suite", help="generate a suite and run the guarantee checks")
    p.add_argument("--spec", required=True, help="JSON file with GeneratorSpec fields + variant/options")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("report", help="re-emit a saved suite report")
    p.add_argument("file")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
