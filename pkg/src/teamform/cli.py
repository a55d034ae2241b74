"""Command-line entry point: ``teamform <command> [options]``.

Exit codes: 0 success, 2 infeasible task, 1 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

from .greedy import dinkelbach_greedy
from .harness import DEFAULT_K, METHODS, air, bench, run_method
from .io import FormatError, load_problem, read_ranks, task_to_json
from .lp import build_lp, dump_lp, lp_feasible_rounding, lp_solution
from .model import InfeasibleError, TaskSpec, expand_solution, normalize_task, reduce_subset, task_distances
from .oracle import MAX_GDSP, brute_force_gdsp
from .ratiodca import GammaSchedule, RatioDCAConfig, forte

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(obj, out: Optional[str]):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"
    _write(text, out)


def _json_default(o):
    import numpy as np

    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays strict."""
    import math

    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _write(text: str, out: Optional[str]):
    if out and out != "-":
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _problem(args, need_task=True):
    inst, task = load_problem(args.graph, args.skills, getattr(args, "task", None),
                              getattr(args, "weights", None), getattr(args, "costs", None))
    if task is None:
        if need_task and getattr(args, "task", None):
            raise UsageError("task file gave no task")
        task = TaskSpec()
    return inst, task


def _solution_exit(sol) -> int:
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


def cmd_solve(args) -> int:
    inst, task = _problem(args)
    schedule = GammaSchedule(gamma0=args.gamma0, growth=args.growth, max_rounds=args.max_rounds)
    cfg = RatioDCAConfig(max_outer=args.max_outer, inner_max=args.inner_max, inner_tol=args.inner_tol)
    trace = [] if args.trace else None
    sol = forte(inst, task, schedule, cfg, trace=trace)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "gamma", "outer", "lambda", "feasible", "size"])
            for r in trace:
                w.writerow([r["round"], " ".join(repr(float(x)) for x in r["gamma"]), r["outer"],
                            repr(float(r["lambda"])), int(bool(r["feasible"])), r["size"]])
    _emit(_clean(sol.to_dict(inst)), args.out)
    return _solution_exit(sol)


def cmd_greedy(args) -> int:
    inst, task = _problem(args)
    task = normalize_task(inst, task)
    dist = task_distances(inst, task)
    red = reduce_subset(inst, task, dist)
    if not red.lower_bound_only:
        raise UsageError("greedy supports lower-bound skill constraints only")
    if red.m == 0:
        sol = expand_solution(red, [], inst, task, "greedy", dist)
    else:
        mask, _ = dinkelbach_greedy(red)
        sol = expand_solution(red, mask, inst, task, "greedy", dist)
    _emit(_clean(sol.to_dict(inst)), args.out)
    return _solution_exit(sol)


def cmd_lp(args) -> int:
    inst, task = _problem(args)
    task = normalize_task(inst, task)
    dist = task_distances(inst, task)
    red = reduce_subset(inst, task, dist)
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            dump_lp(build_lp(red), fh)
    res = lp_solution(red)
    out = {"schema": 1, "lp_bound": res.objective, "status": res.status, "iterations": res.iterations,
           "t": float(res.block("t")[0])}
    if args.round:
        rnd = lp_feasible_rounding(red, res.block("f"), float(res.block("t")[0]))
        if rnd:
            sol = expand_solution(red, rnd.mask, inst, task, "lpfeas", dist)
            sol.lp_bound = res.objective
            out["rounding"] = sol.to_dict(inst)
        else:
            out["rounding"] = None
            out["rounding_reason"] = rnd.reason
    _emit(_clean(out), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst, task = _problem(args)
    task = normalize_task(inst, task)
    dist = task_distances(inst, task)
    red = reduce_subset(inst, task, dist)
    if red.m > MAX_GDSP:
        raise UsageError(f"oracle refuses m = {red.m} > {MAX_GDSP} vertices after reduction")
    res = brute_force_gdsp(red)
    if res.feasible:
        sol = expand_solution(red, res.best_set, inst, task, "oracle", dist)
    elif red.seed_feasible:
        sol = expand_solution(red, [], inst, task, "oracle", dist)
    else:
        _emit({"schema": 1, "provenance": "oracle", "feasible": False, "team": []}, args.out)
        return EXIT_INFEASIBLE
    sol.metrics["n_feasible"] = res.n_feasible
    _emit(_clean(sol.to_dict(inst)), args.out)
    return _solution_exit(sol)


def cmd_random_task(args) -> int:
    from .harness import random_task

    task = random_task(args.k, args.p, seed=args.seed)
    _emit(task_to_json(task), args.out)
    return EXIT_OK


def _int_list(s: str):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def cmd_bench(args) -> int:
    inst = None
    if args.graph:
        inst, _ = load_problem(args.graph, args.skills, None, args.weights)
    ranks = read_ranks(args.ranks, inst) if args.ranks else None
    methods = tuple(args.methods.split(","))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s): {', '.join(bad)}")
    seeds = range(args.seeds) if len(args.seed_list) == 0 else args.seed_list
    report = bench(seeds, args.k, methods, instance=inst, n=args.n, p=args.p, edge_prob=args.edge_prob,
                   ranks=ranks, timing=not args.no_timing)
    _write(report.to_csv(), args.out)
    return EXIT_OK


def cmd_air(args) -> int:
    inst = None
    if args.graph:
        inst, _ = load_problem(args.graph)
    ranks = read_ranks(args.ranks, inst)
    team = []
    lookup = {lab: i for i, lab in enumerate(inst.labels)} if inst is not None and inst.labels else None
    for tok in args.team.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if lookup is not None:
            if tok not in lookup:
                raise UsageError(f"unknown team member {tok!r}")
            team.append(lookup[tok])
        else:
            team.append(int(tok) if tok.isdigit() else tok)
    if not team:
        raise UsageError("empty team")
    _emit({"schema": 1, "air": air(ranks, team), "size": len(team)}, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teamform", description="Dense team formation under skill, size, "
                                 "budget and distance constraints.")
    sub = ap.add_subparsers(dest="command", required=True)

    def files(p, task=True):
        p.add_argument("--graph", required=True, help="edge list TSV: u, v, weight")
        p.add_argument("--skills", help="skills TSV: vertex, skill, level")
        if task:
            p.add_argument("--task", help="task JSON")
        p.add_argument("--weights", help="vertex weights TSV (default 1)")
        p.add_argument("--costs", help="vertex costs TSV (overrides costs_file in the task)")
        p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("solve", help="penalized RatioDCA with gamma continuation")
    files(p)
    p.add_argument("--trace", help="write a per-iteration CSV trace here")
    p.add_argument("--gamma0", type=float, default=None)
    p.add_argument("--growth", type=float, default=4.0)
    p.add_argument("--max-rounds", type=int, default=25)
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--inner-max", type=int, default=2000)
    p.add_argument("--inner-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("greedy", help="Dinkelbach greedy peeling (lower bounds only)")
    files(p)
    p.set_defaults(func=cmd_greedy)

    p = sub.add_parser("lp", help="LP relaxation bound, optionally with rounding")
    files(p)
    p.add_argument("--dump", help="write the LP in plain text here")
    p.add_argument("--round", action="store_true", help="threshold the LP solution into a team")
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("oracle", help=f"exhaustive search (at most {MAX_GDSP} vertices)")
    files(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("random-task", help="sample a lower-bound task")
    p.add_argument("--k", type=int, required=True, help="number of skill draws")
    p.add_argument("--p", type=int, required=True, help="number of skills")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_random_task)

    p = sub.add_parser("bench", help="random task sweep, CSV report")
    p.add_argument("--seeds", type=int, default=10, help="use seeds 0..N-1")
    p.add_argument("--seed-list", type=_int_list, default=[], help="explicit comma-separated seeds")
    p.add_argument("--k", type=_int_list, default=list(DEFAULT_K))
    p.add_argument("--methods", default="forte")
    p.add_argument("--graph", help="fixed instance instead of random graphs")
    p.add_argument("--skills")
    p.add_argument("--weights")
    p.add_argument("--ranks", help="ranks TSV for the air column")
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--edge-prob", type=float, default=0.15)
    p.add_argument("--no-timing", action="store_true", help="report runtime 0 for reproducible output")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("air", help="average inverse rank of a team")
    p.add_argument("--ranks", required=True)
    p.add_argument("--team", required=True, help="comma-separated vertex ids or labels")
    p.add_argument("--graph", help="graph file, to resolve labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_air)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except InfeasibleError as e:
        print(f"teamform: infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FormatError, UsageError, OSError, ValueError, IndexError) as e:
        print(f"teamform: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
