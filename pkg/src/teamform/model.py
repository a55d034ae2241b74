"""Graph, skill and task data model plus the reduction of a team formation
instance to the generalized densest subgraph problem on ``V' = V \\ S``.

Vertices are dense 0-based integers everywhere; human-readable names live
in ``ProblemInstance.labels``. Sets of vertices are accepted either as an
iterable of ids or as a boolean mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

INF = math.inf


class InfeasibleError(ValueError):
    """Raised when a task can be proven infeasible before solving."""


class EmptyTeamError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_mask(A, m: int) -> np.ndarray:
    """Boolean mask of length ``m`` for a vertex set given as ids or as a mask."""
    if isinstance(A, np.ndarray) and A.dtype == bool:
        if A.shape != (m,):
            raise ValueError(f"mask has shape {A.shape}, expected ({m},)")
        return A
    idx = np.fromiter((int(i) for i in A), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise IndexError(f"vertex id out of range [0, {m})")
    mask = np.zeros(m, dtype=bool)
    mask[idx] = True
    return mask


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Weighted collaboration graph with vertex weights, skills and costs.

    ``W`` is stored as a symmetric CSR matrix without diagonal entries.
    """

    W: sp.csr_matrix
    g: np.ndarray
    M: np.ndarray
    c: np.ndarray
    labels: Optional[tuple] = None
    skill_names: Optional[tuple] = None

    def __post_init__(self):
        W = sp.csr_matrix(self.W, dtype=float)
        n = W.shape[0]
        if W.shape != (n, n):
            raise ValueError("weight matrix must be square")
        if W.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if W.nnz and W.data.min() < 0:
            raise ValueError("edge weights must be nonnegative")
        if abs(W - W.T).sum() > 1e-12 * max(1.0, abs(W).sum()):
            raise ValueError("weight matrix must be symmetric")
        W.eliminate_zeros()
        W.sort_indices()
        g = np.asarray(self.g, dtype=float).reshape(-1)
        M = np.asarray(self.M, dtype=float)
        if M.ndim == 1:
            M = M.reshape(n, -1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if g.shape != (n,) or c.shape != (n,) or M.shape[0] != n:
            raise ValueError("g, c and M must have one row per vertex")
        if np.any(g <= 0):
            raise ValueError("vertex weights g must be positive")
        if np.any(M < 0) or np.any(c < 0):
            raise ValueError("skill levels and costs must be nonnegative")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("label list length must equal n")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "g", _frozen(g))
        object.__setattr__(self, "M", _frozen(M))
        object.__setattr__(self, "c", _frozen(c))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_edges(cls, n, edges, g=None, M=None, c=None, labels=None, skill_names=None):
        """Build from ``(u, v[, w])`` tuples; duplicate pairs are summed."""
        rows, cols, vals = [], [], []
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            rows += [u, v]
            cols += [v, u]
            vals += [w, w]
        W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        W.sum_duplicates()
        g = np.ones(n) if g is None else g
        M = np.zeros((n, 0)) if M is None else M
        c = np.zeros(n) if c is None else c
        return cls(W, g, M, c, labels, skill_names)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.M.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.W.sum(axis=1)).ravel()

    def scaled(self, factor: float) -> "ProblemInstance":
        return replace(self, W=self.W * float(factor))


def assoc(inst: ProblemInstance, C) -> float:
    """Sum of ``w_ij`` over ordered pairs inside ``C`` (twice the edge mass)."""
    x = as_mask(C, inst.n).astype(float)
    return float(x @ (inst.W @ x))


def generalized_density(inst: ProblemInstance, C) -> float:
    """``assoc(C) / vol_g(C)``."""
    mask = as_mask(C, inst.n)
    if not mask.any():
        raise EmptyTeamError("empty team")
    return assoc(inst, mask) / float(inst.g[mask].sum())


def assoc_terms(inst: ProblemInstance, S):
    """Constants contributed by the seed set.

    Returns ``(mu_S, nu_S, dS)`` where ``dS`` is indexed over ``V \\ S`` in
    increasing vertex order.
    """
    mask = as_mask(S, inst.n)
    x = mask.astype(float)
    mu = float(x @ (inst.W @ x))
    nu = float(inst.g[mask].sum())
    dS = np.asarray(inst.W @ x).ravel()[~mask]
    return mu, nu, dS


@dataclass(frozen=True)
class SkillBound:
    """``lower <= vol_row(C) <= upper`` where the row is ``M[:, index]`` or an
    explicit vector (used for the folded size and budget constraints)."""

    index: Optional[int]
    lower: float = 0.0
    upper: float = INF
    row: Optional[tuple] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.lower < 0 or self.lower > self.upper:
            raise ValueError(f"invalid skill bounds [{self.lower}, {self.upper}]")
        if (self.index is None) == (self.row is None):
            raise ValueError("a skill bound needs exactly one of index or row")

    def vector(self, inst: ProblemInstance) -> np.ndarray:
        if self.row is not None:
            return np.asarray(self.row, dtype=float)
        return inst.M[:, self.index]


@dataclass(frozen=True)
class TaskSpec:
    skill_bounds: tuple = ()
    seed: tuple = ()
    size_bound: float = INF
    budget: float = INF
    d0: Optional[float] = None
    distance_mode: str = "hops"
    distance_matrix: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "skill_bounds", tuple(self.skill_bounds))
        object.__setattr__(self, "seed", tuple(sorted({int(s) for s in self.seed})))
        if self.d0 is not None and self.d0 < 0:
            raise ValueError("distance bound d0 must be nonnegative")
        if math.isfinite(self.size_bound) and self.size_bound < len(self.seed):
            raise ValueError("size bound is smaller than the seed set")
        if self.distance_mode not in ("hops", "matrix"):
            raise ValueError(f"unknown distance mode {self.distance_mode!r}")
        if self.distance_mode == "matrix" and self.d0 is not None and self.distance_matrix is None:
            raise ValueError("matrix distance mode needs a distance matrix")

    @property
    def has_distance(self) -> bool:
        return self.d0 is not None


def normalize_task(inst: ProblemInstance, task: TaskSpec) -> TaskSpec:
    """Fold the size bound and the budget into synthetic skill rows."""
    extra = []
    if math.isfinite(task.size_bound):
        extra.append(SkillBound(None, 0.0, float(task.size_bound), row=(1.0,) * inst.n, name="size"))
    if math.isfinite(task.budget):
        extra.append(SkillBound(None, 0.0, float(task.budget), row=tuple(inst.c), name="budget"))
    if not extra:
        return task
    return replace(task, skill_bounds=task.skill_bounds + tuple(extra), size_bound=INF, budget=INF)


def hop_distances(inst: ProblemInstance, sources=None) -> np.ndarray:
    """BFS hop counts on the unweighted graph; unreachable pairs are ``inf``."""
    A = inst.W.copy()
    A.data[:] = 1.0
    idx = None if sources is None else np.asarray(list(sources), dtype=np.int64)
    return shortest_path(A, method="D", unweighted=True, directed=False, indices=idx)


def task_distances(inst: ProblemInstance, task: TaskSpec) -> Optional[np.ndarray]:
    if not task.has_distance:
        return None
    if task.distance_mode == "matrix":
        dist = np.asarray(task.distance_matrix, dtype=float)
        if dist.shape != (inst.n, inst.n):
            raise ValueError(f"distance matrix has shape {dist.shape}, expected {(inst.n, inst.n)}")
        if np.any(dist < 0) or not np.allclose(dist, dist.T):
            raise ValueError("distance matrix must be symmetric and nonnegative")
        return dist
    return hop_distances(inst)


def task_skill_matrix(inst: ProblemInstance, task: TaskSpec):
    """Columns of all skill rows of the task with their lower/upper bounds."""
    if not task.skill_bounds:
        return np.zeros((inst.n, 0)), np.zeros(0), np.zeros(0)
    cols = np.column_stack([b.vector(inst) for b in task.skill_bounds])
    lower = np.array([b.lower for b in task.skill_bounds], dtype=float)
    upper = np.array([b.upper for b in task.skill_bounds], dtype=float)
    return cols, lower, upper


@dataclass(frozen=True, eq=False)
class ReducedProblem:
    """GDSP on ``V'`` after folding the seed set ``S`` into constants.

    ``d`` is the degree of each ``V'`` vertex in the graph that survives the
    distance elimination (``V' + S``), so that
    ``assoc_S(A) = vol_d(A) - cut(A, V' \\ A) + mu_S + vol_dS(A)`` equals
    ``assoc(A + S)``.
    """

    index: np.ndarray          # V' -> original vertex ids
    W: sp.csr_matrix
    g: np.ndarray
    d: np.ndarray
    dS: np.ndarray
    mu_S: float
    nu_S: float
    M: np.ndarray
    k: np.ndarray
    l: np.ndarray
    k_raw: np.ndarray
    D: sp.csr_matrix
    seed: tuple
    total_degree: float
    bound_names: tuple = ()

    def __post_init__(self):
        W = sp.triu(self.W, k=1).tocoo()
        object.__setattr__(self, "edges", (W.row.astype(np.int64), W.col.astype(np.int64), W.data.copy()))
        Du = sp.triu(self.D, k=1).tocoo()
        object.__setattr__(self, "dpairs", (Du.row.astype(np.int64), Du.col.astype(np.int64), Du.data.copy()))
        object.__setattr__(self, "dD", np.asarray(self.D.sum(axis=1)).ravel())

    @property
    def m(self) -> int:
        return len(self.index)

    @property
    def q(self) -> int:
        return self.M.shape[1]

    @property
    def has_upper(self) -> np.ndarray:
        return np.isfinite(self.l)

    @property
    def has_lower(self) -> np.ndarray:
        return self.k > 0

    @property
    def has_distance(self) -> bool:
        return self.D.nnz > 0

    @property
    def lower_bound_only(self) -> bool:
        return not self.has_upper.any() and not self.has_distance

    @property
    def seed_feasible(self) -> bool:
        """Whether ``S`` alone satisfies all skill bounds."""
        return len(self.seed) > 0 and bool(np.all(self.k_raw <= 1e-12))


def reduce_subset(inst: ProblemInstance, task: TaskSpec, dist: Optional[np.ndarray] = None) -> ReducedProblem:
    """Fold the seed set into GDSP constants and drop unreachable vertices.

    ``dist`` overrides the task's distance oracle with a dense ``n x n``
    matrix. Raises :class:`InfeasibleError` when the seed set alone
    violates an upper bound or the pairwise distance bound.
    """
    task = normalize_task(inst, task)
    n = inst.n
    S = np.asarray(task.seed, dtype=np.int64)
    if S.size and (S.min() < 0 or S.max() >= n):
        raise IndexError("seed vertex out of range")
    if dist is None:
        dist = task_distances(inst, task)
    seed_mask = np.zeros(n, dtype=bool)
    seed_mask[S] = True

    keep = ~seed_mask
    capped = None
    if dist is not None:
        d0 = float(task.d0)
        if S.size and np.any(dist[np.ix_(S, S)] > d0):
            raise InfeasibleError("infeasible seed: pairwise distance within S exceeds d0")
        if S.size:
            keep &= ~np.any(dist[S] > d0, axis=0)
        finite = dist[np.isfinite(dist)]
        cap = max(float(finite.max()) if finite.size else 0.0, d0) + 1.0
        capped = np.where(np.isfinite(dist), dist, cap)

    Mt, kappa, iota = task_skill_matrix(inst, task)
    volS = Mt[S].sum(axis=0) if S.size else np.zeros(Mt.shape[1])
    k_raw = kappa - volS
    l = iota - volS
    if np.any(l < -1e-12):
        raise InfeasibleError("infeasible seed: S exceeds a skill upper bound")
    l = np.maximum(l, 0.0)
    k = np.maximum(k_raw, 0.0)

    V1 = np.flatnonzero(keep)
    if V1.size == 0 and (not S.size or np.any(k_raw > 1e-12)):
        raise InfeasibleError("empty reduced universe")

    alive = keep | seed_mask
    Wa = inst.W[alive][:, alive]
    W1 = inst.W[V1][:, V1]
    d = np.asarray(inst.W[V1][:, np.flatnonzero(alive)].sum(axis=1)).ravel()
    mu, nu, _ = assoc_terms(inst, S)
    dS = np.asarray(inst.W[V1][:, S].sum(axis=1)).ravel() if S.size else np.zeros(V1.size)
    if capped is not None and V1.size:
        Dd = np.maximum(0.0, capped[np.ix_(V1, V1)] - float(task.d0))
        np.fill_diagonal(Dd, 0.0)
        D = sp.csr_matrix(Dd)
    else:
        D = sp.csr_matrix((V1.size, V1.size))
    names = tuple(b.name if b.name is not None else f"skill{b.index}" for b in task.skill_bounds)
    return ReducedProblem(
        index=_frozen(V1), W=W1, g=_frozen(inst.g[V1].copy()), d=_frozen(d), dS=_frozen(dS),
        mu_S=mu, nu_S=nu, M=_frozen(Mt[V1].copy()), k=_frozen(k), l=_frozen(l),
        k_raw=_frozen(k_raw), D=D, seed=tuple(int(s) for s in S),
        total_degree=float(Wa.sum()), bound_names=names,
    )


def reduced_assoc(red: ReducedProblem, A) -> float:
    """``assoc_S(A) = assoc(A) + 2 cut(A, S) + assoc(S)``; zero for empty A."""
    x = as_mask(A, red.m).astype(float)
    if not x.any():
        return 0.0
    return float(x @ (red.W @ x) + 2.0 * red.dS @ x + red.mu_S)


def reduced_density(red: ReducedProblem, A) -> float:
    mask = as_mask(A, red.m)
    den = float(red.g[mask].sum()) + red.nu_S
    if den <= 0:
        raise EmptyTeamError("empty team")
    return reduced_assoc(red, mask) / den


def is_feasible_reduced(red: ReducedProblem, A, tol: float = 1e-9) -> bool:
    mask = as_mask(A, red.m)
    vol = red.M[mask].sum(axis=0)
    if np.any(vol < red.k - tol) or np.any(vol > red.l + tol):
        return False
    if red.has_distance and mask.any():
        x = mask.astype(float)
        if x @ (red.D @ x) > tol:
            return False
    return True


# ---------------------------------------------------------------- solutions

@dataclass
class TeamSolution:
    team: tuple
    density: float
    feasible: bool
    slack: dict
    provenance: str
    lp_bound: Optional[float] = None
    metrics: dict = field(default_factory=dict)

    def to_dict(self, inst: Optional[ProblemInstance] = None) -> dict:
        out = {
            "schema": 1,
            "provenance": self.provenance,
            "team": list(self.team),
            "density": self.density,
            "size": len(self.team),
            "feasible": self.feasible,
            "slack": self.slack,
            "lp_bound": self.lp_bound,
        }
        if inst is not None and inst.labels is not None:
            out["labels"] = [inst.labels[i] for i in self.team]
        if self.metrics:
            out["metrics"] = self.metrics
        return out


def feasibility_report(inst: ProblemInstance, task: TaskSpec, team, dist=None, tol: float = 1e-9):
    """Per-constraint slacks for ``team`` in the original instance.

    A negative slack is a violation. Returns ``(feasible, slack_dict)``.
    """
    task = normalize_task(inst, task)
    mask = as_mask(team, inst.n)
    report = {}
    ok = True
    missing = [s for s in task.seed if not mask[s]]
    report["seed_missing"] = missing
    ok &= not missing
    for i, b in enumerate(task.skill_bounds):
        vol = float(b.vector(inst)[mask].sum())
        name = b.name if b.name is not None else f"skill{b.index}"
        entry = {"volume": vol, "lower_slack": vol - b.lower}
        if math.isfinite(b.upper):
            entry["upper_slack"] = b.upper - vol
        ok &= entry["lower_slack"] >= -tol and entry.get("upper_slack", 0.0) >= -tol
        report[f"{i}:{name}"] = entry
    if task.has_distance:
        if dist is None:
            dist = task_distances(inst, task)
        ids = np.flatnonzero(mask)
        worst = float(dist[np.ix_(ids, ids)].max()) if ids.size else 0.0
        report["distance_slack"] = float(task.d0) - worst
        ok &= report["distance_slack"] >= -tol
    ok &= bool(mask.any())
    return bool(ok), report


def expand_solution(red: ReducedProblem, A, inst: ProblemInstance, task: TaskSpec,
                    provenance: str = "", dist=None) -> TeamSolution:
    """Map a ``V'`` subset back to a team, comparing ``A + S`` against ``S`` alone."""
    mask = as_mask(A, red.m)
    seed = list(red.seed)
    candidates = []
    if mask.any():
        candidates.append(sorted(seed + [int(i) for i in red.index[mask]]))
    if seed and (red.seed_feasible or not candidates):
        candidates.append(sorted(seed))
    if not candidates:
        raise EmptyTeamError("empty team")
    scored = []
    for team in candidates:
        feas, slack = feasibility_report(inst, task, team, dist=dist)
        scored.append((feas, generalized_density(inst, team), -len(team), team, slack))
    feas, dens, _, team, slack = max(scored, key=lambda s: s[:3])
    return TeamSolution(tuple(team), dens, feas, slack, provenance)
