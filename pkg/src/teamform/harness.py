"""Task generation, evaluation metrics and the experiment driver."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .greedy import dinkelbach_greedy
from .lp import lp_feasible_rounding, lp_solution
from .model import (
    INF, InfeasibleError, ProblemInstance, SkillBound, TaskSpec, TeamSolution, expand_solution,
    hop_distances, normalize_task, reduce_subset, task_distances,
)
from .oracle import brute_force_gdsp
from .ratiodca import GammaSchedule, RatioDCAConfig, forte

__all__ = [
    "RankTable", "air", "random_task", "random_instance", "hop_distances",
    "skill_levels_from_publications", "rank_vertex_weights", "run_method", "bench",
    "ExperimentReport", "REPORT_COLUMNS", "DEFAULT_K",
]

DEFAULT_RANK = 10001
DEFAULT_K = (3, 8, 13, 18, 23, 28)
METHODS = ("forte", "greedy", "lpfeas", "oracle")


@dataclass
class RankTable:
    ranks: dict = field(default_factory=dict)
    default: int = DEFAULT_RANK

    def __post_init__(self):
        if any(r < 1 for r in self.ranks.values()) or self.default < 1:
            raise ValueError("ranks must be positive integers")

    def __getitem__(self, v) -> int:
        return self.ranks.get(v, self.default)


def air(ranks, team) -> float:
    """Average inverse rank, ``(1000 / |team|) * sum_i 1 / R_i``."""
    team = list(team)
    if not team:
        raise ValueError("empty team")
    if not isinstance(ranks, RankTable):
        ranks = RankTable(dict(ranks))
    return 1000.0 * sum(1.0 / ranks[v] for v in team) / len(team)


def random_task(k: int, p: int, seed=None) -> TaskSpec:
    """Sample ``k`` skills with replacement; lower bound = multiplicity."""
    if k < 1 or p < 1:
        raise ValueError("k and p must be positive")
    rng = np.random.default_rng(seed)
    counts = np.bincount(rng.integers(0, p, size=k), minlength=p)
    return TaskSpec(skill_bounds=tuple(SkillBound(j, float(counts[j])) for j in range(p)))


def skill_levels_from_publications(counts, threshold: float = 0.25) -> np.ndarray:
    """Binary skills: field share of a vertex's publications strictly above ``threshold``."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("publication counts must be nonnegative")
    tot = counts.sum(axis=1, keepdims=True)
    share = np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)
    return (share > threshold).astype(float)


def rank_vertex_weights(field_ranks) -> np.ndarray:
    """Vertex weight = best (minimum) rank over fields; ``inf`` marks unranked fields."""
    r = np.asarray(field_ranks, dtype=float)
    if r.ndim == 1:
        r = r[None, :]
    return r.min(axis=1)


def random_instance(n: int, p: int = 4, edge_prob: float = 0.3, skill_prob: float = 0.35,
                    seed=None, max_weight: int = 1, vertex_weights: bool = False) -> ProblemInstance:
    """Erdos-Renyi collaboration graph with binary skills (integer edge weights)."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < edge_prob
    w = rng.integers(1, max_weight + 1, size=int(keep.sum()))
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist(), w.tolist()))
    M = (rng.random((n, p)) < skill_prob).astype(float)
    g = rng.integers(1, 4, size=n).astype(float) if vertex_weights else np.ones(n)
    c = rng.integers(1, 10, size=n).astype(float)
    return ProblemInstance.from_edges(n, edges, g=g, M=M, c=c)


# ------------------------------------------------------------------ methods

def run_method(method: str, inst: ProblemInstance, task: TaskSpec,
               schedule: GammaSchedule = GammaSchedule(), cfg: RatioDCAConfig = RatioDCAConfig()) -> TeamSolution:
    """Solve with one of ``forte``, ``greedy``, ``lpfeas`` or ``oracle``."""
    if method == "forte":
        return forte(inst, task, schedule, cfg)
    task = normalize_task(inst, task)
    dist = task_distances(inst, task)
    red = reduce_subset(inst, task, dist)
    if method == "greedy":
        try:
            mask, _ = dinkelbach_greedy(red)
        except InfeasibleError:
            return _infeasible("greedy")
        return expand_solution(red, mask, inst, task, "greedy", dist)
    if method == "lpfeas":
        res = lp_solution(red)
        rnd = lp_feasible_rounding(red, res.block("f"), float(res.block("t")[0]))
        if not rnd:
            sol = _infeasible("lpfeas")
            sol.metrics["reason"] = rnd.reason
        else:
            sol = expand_solution(red, rnd.mask, inst, task, "lpfeas", dist)
        sol.lp_bound = res.objective
        return sol
    if method == "oracle":
        res = brute_force_gdsp(red)
        if not res.feasible:
            if red.seed_feasible:
                return expand_solution(red, [], inst, task, "oracle", dist)
            return _infeasible("oracle")
        return expand_solution(red, res.best_set, inst, task, "oracle", dist)
    raise ValueError(f"unknown method {method!r}")


def _infeasible(provenance: str) -> TeamSolution:
    return TeamSolution((), float("nan"), False, {}, provenance)


# ------------------------------------------------------------------- report

REPORT_COLUMNS = ("seed", "k", "method", "density", "size", "runtime_ms", "lp_bound", "gap", "feasible", "air")


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append({c: row.get(c) for c in REPORT_COLUMNS})

    def sorted_rows(self):
        order = {m: i for i, m in enumerate(METHODS)}
        return sorted(self.rows, key=lambda r: (r["k"], r["seed"], order.get(r["method"], 99), r["method"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.sorted_rows():
            w.writerow({c: _fmt(r[c]) for c in REPORT_COLUMNS})
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return str(v)


def bench(seeds: Iterable[int], ks: Sequence[int] = DEFAULT_K, methods: Sequence[str] = ("forte",),
          instance: Optional[ProblemInstance] = None, n: int = 40, p: int = 4, edge_prob: float = 0.15,
          ranks: Optional[RankTable] = None, timing: bool = True,
          schedule: GammaSchedule = GammaSchedule(), cfg: RatioDCAConfig = RatioDCAConfig()) -> ExperimentReport:
    """Random lower-bound task sweep reporting density, size and runtime per k.

    Without ``instance`` a random graph is drawn per seed. ``gap`` is
    ``density / lp_bound``; with ``timing=False`` runtimes are reported as 0
    so that output is reproducible byte for byte.
    """
    report = ExperimentReport()
    for k in ks:
        for seed in seeds:
            inst = instance if instance is not None else random_instance(n, p, edge_prob, seed=seed)
            task = random_task(k, inst.p, seed=(seed, k))
            try:
                red = reduce_subset(inst, task)
                bound = lp_solution(red).objective
            except InfeasibleError:
                bound = None
            for method in methods:
                t0 = time.perf_counter()
                try:
                    sol = run_method(method, inst, task, schedule, cfg)
                except InfeasibleError:
                    sol = _infeasible(method)
                ms = (time.perf_counter() - t0) * 1e3 if timing else 0.0
                feasible = bool(sol.feasible)
                gap = sol.density / bound if feasible and bound else None
                report.add(seed=seed, k=k, method=method,
                           density=sol.density if feasible else None,
                           size=len(sol.team) if feasible else None,
                           runtime_ms=round(ms, 3), lp_bound=bound, gap=gap, feasible=feasible,
                           air=air(ranks, sol.team) if ranks is not None and sol.team else None)
    return report
