"""Seeded random instances shared by the test modules."""
import math

import numpy as np

from teamform.model import INF, ProblemInstance, SkillBound, TaskSpec, is_feasible_reduced, reduce_subset


def triangle(g=None, M=None):
    return ProblemInstance.from_edges(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)], g=g, M=M)


def random_graph(rng, n, p=3, edge_prob=0.4, max_weight=1, weights=False):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < edge_prob
    w = rng.integers(1, max_weight + 1, size=int(keep.sum()))
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist(), w.tolist()))
    M = (rng.random((n, p)) < 0.4).astype(float)
    g = rng.integers(1, 4, size=n).astype(float) if weights else np.ones(n)
    c = rng.integers(1, 6, size=n).astype(float)
    return ProblemInstance.from_edges(n, edges, g=g, M=M, c=c)


def random_task(rng, inst, upper=True, distance=True, seed=True, size=False):
    bounds = []
    for j in range(inst.p):
        lo = float(rng.integers(0, 3))
        hi = lo + float(rng.integers(0, 3)) if upper and rng.random() < 0.5 else INF
        bounds.append(SkillBound(j, lo, hi))
    S = ()
    if seed and rng.random() < 0.4:
        S = (int(rng.integers(inst.n)),)
    d0 = float(rng.integers(1, 3)) if distance and rng.random() < 0.5 else None
    b = float(rng.integers(max(len(S), 2), inst.n + 1)) if size and rng.random() < 0.5 else INF
    return TaskSpec(tuple(bounds), seed=S, d0=d0, size_bound=b)


def feasible_reduced(rng, n_range=(5, 10), upper=True, distance=True, seed=True, weights=False, tries=200):
    """A reduced problem with at least one feasible set of positive assoc."""
    from teamform.oracle import brute_force_gdsp

    for _ in range(tries):
        n = int(rng.integers(*n_range))
        inst = random_graph(rng, n, weights=weights)
        task = random_task(rng, inst, upper, distance, seed)
        try:
            red = reduce_subset(inst, task)
        except ValueError:
            continue
        if red.m == 0:
            continue
        if brute_force_gdsp(red).feasible:
            return inst, task, red
    raise RuntimeError("no feasible instance found")


def all_masks(m):
    codes = np.arange(1, 1 << m)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
