"""RatioDCA with a FISTA inner solver, optimal thresholding and the
gamma-continuation driver :func:`forte`.

The inner convex problem at iterate ``f^l`` is::

    min_{u >= 0}  <c, u> + sigma * max(u) + lam * sum_e w_e |u_i - u_j|

with ``c = rho - r2(f^l) - lam * s1(f^l)``. It is solved through its smooth
dual over one bounded variable per undirected edge and a simplex variable::

    min_{|alpha| <= 1, v in simplex}  1/2 || P_+(-c - lam K alpha - sigma v) ||^2

where ``(K alpha)_i = sum_{e = (i, j)} w_e alpha_e - sum_{e = (j, i)} w_e alpha_e``.
This is the ordered-pair form with ``alpha_ij = -alpha_ji`` collapsed to
one entry per edge, so ``(lam / 2) A alpha = lam K alpha``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .model import (
    InfeasibleError, ProblemInstance, ReducedProblem, TaskSpec, TeamSolution, as_mask, expand_solution,
    is_feasible_reduced, normalize_task, reduce_subset, reduced_assoc, reduced_density,
    task_distances,
)
from .penalty import (
    TIE_REL, DegenerateDenominator, PenaltyConfig, chain, chain_feasible, chain_objective,
    continuous_objective, dc_parts, default_theta, discrete_objective, gamma_threshold,
    subgrad_r2, subgrad_s1, violated_groups,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RatioDCAConfig:
    eps_outer: float = 1e-6
    max_outer: int = 100
    inner_max: int = 2000
    inner_tol: float = 1e-6
    early_descent: bool = True
    check_every: int = 25
    lipschitz_mode: str = "power"
    restart: bool = True

    def __post_init__(self):
        if self.eps_outer <= 0:
            raise ValueError("eps_outer must be positive")
        if self.max_outer < 1 or self.inner_max < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.lipschitz_mode not in ("power", "upper-bound"):
            raise ValueError(f"unknown lipschitz mode {self.lipschitz_mode!r}")


@dataclass(frozen=True)
class GammaSchedule:
    gamma0: Optional[float] = None   # None: gamma_threshold / 1024
    growth: float = 4.0
    max_rounds: int = 25

    def __post_init__(self):
        if self.growth <= 1:
            raise ValueError("growth must exceed 1")


@dataclass(frozen=True, eq=False)
class InnerProblem:
    c: np.ndarray
    sigma: float
    lam: float
    edges: tuple

    @property
    def m(self) -> int:
        return self.c.size


@dataclass
class InnerResult:
    f: np.ndarray
    u: np.ndarray
    primal: float
    dual: float
    n_iter: int
    inexact: bool
    early: bool = False

    @property
    def gap(self) -> float:
        return self.primal - self.dual


# ------------------------------------------------------------- primitives

def project_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{v >= 0, sum(v) = 1}`` (sort-based)."""
    n = y.size
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.flatnonzero(u - css / ind > 0)[-1]
    return np.maximum(y - css[rho] / (rho + 1.0), 0.0)


def _K(alpha, edges, m):
    i, j, w = edges
    wa = w * alpha
    return np.bincount(i, weights=wa, minlength=m) - np.bincount(j, weights=wa, minlength=m)


def _Kt(u, edges):
    i, j, w = edges
    return w * (u[i] - u[j])


def lipschitz_estimate(ip: InnerProblem, mode: str = "power", iters: int = 30) -> float:
    """Bound on ``||B||^2`` for ``B(alpha, v) = lam K alpha + sigma v``.

    ``B B^T = lam^2 L + sigma^2 I`` where ``L`` is the Laplacian with edge
    weights ``w_e^2``. ``power`` runs power iteration on ``B B^T`` and
    inflates the Rayleigh quotient by 5%; ``upper-bound`` uses
    ``lam_max(L) <= max_{(i,j) in E} (s_i + s_j)``, ``s_i = sum_j w_ij^2``.
    """
    m = ip.m
    lam2, sig2 = ip.lam ** 2, ip.sigma ** 2
    i, j, w = ip.edges
    if m == 0 or (lam2 == 0 and sig2 == 0):
        return 0.0
    if mode == "upper-bound":
        if i.size == 0 or lam2 == 0:
            return sig2
        s = np.bincount(i, weights=w * w, minlength=m) + np.bincount(j, weights=w * w, minlength=m)
        return lam2 * float(np.max(s[i] + s[j])) + sig2
    if i.size == 0 or lam2 == 0:
        return sig2
    x = np.random.default_rng(0).standard_normal(m)
    x /= np.linalg.norm(x)
    rq = 0.0
    for _ in range(iters):
        y = lam2 * _K(_Kt(x, ip.edges), ip.edges, m) + sig2 * x
        rq = float(x @ y)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            break
        x = y / nrm
    return 1.05 * rq


def inner_primal(ip: InnerProblem, u: np.ndarray) -> float:
    i, j, w = ip.edges
    return float(ip.c @ u + ip.sigma * (u.max() if u.size else 0.0)
                 + ip.lam * (w @ np.abs(u[i] - u[j])) + 0.5 * u @ u)


def solve_inner(ip: InnerProblem, cfg: RatioDCAConfig = RatioDCAConfig(),
                descent_check: Optional[Callable[[np.ndarray], Optional[np.ndarray]]] = None) -> InnerResult:
    """FISTA on the smooth dual; returns the recovered primal, normalized.

    Stops when the relative duality gap drops below ``cfg.inner_tol``. If
    ``descent_check`` is given it is called on the current primal every
    ``cfg.check_every`` steps; a non-None return ends the solve early and is
    used as the returned ``f``.
    """
    m = ip.m
    E = ip.edges[0].size
    lam, sigma, c = ip.lam, ip.sigma, ip.c

    def dual_f(alpha, v):
        u = np.maximum(-c - lam * _K(alpha, ip.edges, m) - sigma * v, 0.0)
        return 0.5 * float(u @ u), u

    def finish(u, Fz, it, inexact, early=False, f=None):
        P = inner_primal(ip, u)
        if f is None:
            nu = np.linalg.norm(u)
            f = u / nu if nu > 0 else np.zeros(m)
        return InnerResult(f, u, P, -Fz, it, inexact, early)

    L = lipschitz_estimate(ip, cfg.lipschitz_mode)
    # near a fixed point the optimum is u = 0 and both values vanish; resolve
    # the gap only to what the outer stopping rule can tell apart
    floor = 0.5 * (cfg.eps_outer * float(np.linalg.norm(c))) ** 2
    xa, xv = np.zeros(E), np.full(m, 1.0 / m)
    Fx, ux = dual_f(xa, xv)
    if L == 0:
        return finish(ux, Fx, 0, False)
    ya, yv, Fy, uy = xa, xv, Fx, ux
    t = 1.0
    at_x = True
    for it in range(1, cfg.inner_max + 1):
        ga = -lam * _Kt(uy, ip.edges)
        gv = -sigma * uy
        while True:
            na = np.clip(ya - ga / L, -1.0, 1.0)
            nv = project_simplex(yv - gv / L) if sigma else yv
            Fn, un = dual_f(na, nv)
            da, dv = na - ya, nv - yv
            model = Fy + ga @ da + gv @ dv + 0.5 * L * (da @ da + dv @ dv)
            if Fn <= model + 1e-14 * max(1.0, abs(Fy)):
                break
            L *= 2.0
        if cfg.restart and Fn > Fx and not at_x:
            # function-value restart: drop momentum and step again from x
            t = 1.0
            ya, yv, Fy, uy = xa, xv, Fx, ux
            at_x = True
            continue
        at_x = False
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        ya, yv = na + mom * (na - xa), nv + mom * (nv - xv)
        xa, xv, Fx, ux = na, nv, Fn, un
        t = t_next
        Fy, uy = dual_f(ya, yv)

        P = inner_primal(ip, ux)
        gap = P + Fx
        if gap <= max(cfg.inner_tol * max(abs(P), Fx), floor):
            return finish(ux, Fx, it, False)
        if descent_check is not None and it % cfg.check_every == 0 and ux.any():
            f_early = descent_check(ux)
            if f_early is not None:
                return finish(ux, Fx, it, True, early=True, f=f_early)
    return finish(ux, Fx, cfg.inner_max, True)


# ----------------------------------------------------------- thresholding

def optimal_threshold(red: ReducedProblem, cfg: PenaltyConfig, f):
    """Best threshold set of ``f`` under the penalized discrete objective.

    Returns ``(mask, value)``. Among sets whose values agree to a relative
    ``1e-12`` the smallest is returned.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or not np.any(f > 0):
        raise ValueError("f must be nonnegative and nonzero")
    ch = chain(red, f)
    cuts = ch.cut_points()
    vals = chain_objective(red, cfg, ch)[cuts - 1]
    if not np.isfinite(vals).any():
        raise DegenerateDenominator("no valid threshold")
    best = vals.min()
    pos = int(np.flatnonzero(vals <= best + TIE_REL * abs(best))[0])
    return ch.mask(int(cuts[pos]), red.m), float(vals[pos])


def best_feasible_threshold(red: ReducedProblem, f):
    """Feasible threshold set of ``f`` with the largest density, or ``None``."""
    ch = chain(red, f)
    cuts = ch.cut_points()
    ok = chain_feasible(red, ch)[cuts - 1] & (ch.assocS[cuts - 1] > 0)
    if not ok.any():
        return None
    dens = ch.assocS[cuts - 1] / (ch.volg[cuts - 1] + red.nu_S)
    dens = np.where(ok, dens, -np.inf)
    top = dens.max()
    pos = int(np.flatnonzero(dens >= top - TIE_REL * abs(top))[0])
    return ch.mask(int(cuts[pos]), red.m), float(dens[pos])


# --------------------------------------------------------------- RatioDCA

@dataclass
class TraceRow:
    outer: int
    lam: float
    feasible: bool
    size: int


@dataclass
class RatioDCAResult:
    f: np.ndarray
    lam: float
    trace: list
    threshold_set: np.ndarray
    threshold_value: float
    stop: str


def _safe_q(red, cfg, f):
    try:
        return continuous_objective(red, cfg, f)
    except (DegenerateDenominator, ValueError):
        return math.inf


def _admissible_start(red, pcfg, f):
    if math.isfinite(_safe_q(red, pcfg, f)):
        return f
    nf = np.linalg.norm(f)
    base = f / nf if nf > 0 else np.zeros(red.m)
    d = default_start(red)
    for eps in (1e-3, 1e-2, 1e-1, 1.0):
        g = base + eps * d
        if math.isfinite(_safe_q(red, pcfg, g)):
            return g / np.linalg.norm(g)
    raise DegenerateDenominator("no valid starting point: assoc_S vanishes on V'")


def ratiodca(red: ReducedProblem, pcfg: PenaltyConfig, f0, cfg: RatioDCAConfig = RatioDCAConfig()) -> RatioDCAResult:
    """Local minimization of ``Q`` from ``f0``; ``lam`` never increases.

    A start where ``Q`` is undefined (for instance the indicator of an
    isolated vertex) is mixed with a small multiple of the degree start
    until the denominator is positive.
    """
    f = _admissible_start(red, pcfg, np.asarray(f0, dtype=float))
    lam = continuous_objective(red, pcfg, f)
    parts = dc_parts(red, pcfg)

    def row(l, f, lam):
        A, _ = optimal_threshold(red, pcfg, f)
        return TraceRow(l, lam, is_feasible_reduced(red, A), int(A.sum()))

    trace = [row(0, f, lam)]
    stop = "max_outer"
    for l in range(1, cfg.max_outer + 1):
        c = parts.rho - subgrad_r2(red, pcfg, f) - lam * subgrad_s1(red, f)
        ip = InnerProblem(c, parts.sigma, lam, red.edges)
        target = lam * (1.0 - cfg.eps_outer)

        def check(u, target=target):
            q_u = _safe_q(red, pcfg, u)
            try:
                A, q_A = optimal_threshold(red, pcfg, u)
            except DegenerateDenominator:
                q_A = math.inf
            if min(q_u, q_A) >= target:
                return None
            if q_A < q_u:
                return A / np.sqrt(A.sum())
            return u / np.linalg.norm(u)

        sub = cfg
        accepted = False
        for attempt in range(2):
            res = solve_inner(ip, sub, check if sub.early_descent else None)
            if not res.f.any():
                break
            lam_new = _safe_q(red, pcfg, res.f)
            if lam_new <= lam:
                accepted = True
                break
            if not res.inexact or sub.early_descent:
                # converged without descent (a fixed point), or every periodic
                # check along the way already failed
                break
            # cut off by the iteration cap: tighten once, then give up
            sub = replace(sub, inner_tol=sub.inner_tol / 2, inner_max=2 * sub.inner_max, early_descent=False)
        if not accepted:
            stop = "no_descent"
            break
        rel = (lam - lam_new) / lam
        f, lam = res.f, lam_new
        trace.append(row(l, f, lam))
        if rel < cfg.eps_outer:
            stop = "converged"
            break
    A, val = optimal_threshold(red, pcfg, f)
    return RatioDCAResult(f, lam, trace, A, val, stop)


# ------------------------------------------------------------ continuation

STARTS = ("degree", "lp")


def default_start(red: ReducedProblem) -> np.ndarray:
    d = red.d + red.dS
    if not np.any(d > 0):
        d = np.ones(red.m)
    return d / np.linalg.norm(d)


def lp_start(red: ReducedProblem) -> Optional[np.ndarray]:
    """Normalized ``f`` of the LP relaxation, or None when unavailable."""
    from .lp import MAX_LP_VARS, lp_solution

    if 1 + red.m + red.edges[0].size > MAX_LP_VARS:
        return None
    try:
        res = lp_solution(red)
    except (InfeasibleError, RuntimeError):
        return None
    f = np.maximum(res.block("f"), 0.0)
    nf = np.linalg.norm(f)
    return f / nf if nf > 0 else None


def _gamma_scale(red: ReducedProblem, theta: float) -> float:
    full = np.ones(red.m, dtype=bool)
    a = reduced_assoc(red, full)
    if a <= 0:
        return 1.0
    if is_feasible_reduced(red, full):
        return gamma_threshold(red, full, theta)
    return red.total_degree / theta * (red.g.sum() + red.nu_S) / a


class _Best:
    """Densest feasible set seen so far; ties go to the smaller set."""

    def __init__(self):
        self.density, self.size, self.mask = -math.inf, 0, None

    def offer(self, red, mask):
        if mask is None or not mask.any() or not is_feasible_reduced(red, mask):
            return
        dens = reduced_density(red, mask)
        size = int(mask.sum())
        if self.mask is None or dens > self.density + TIE_REL * abs(self.density) or (
                abs(dens - self.density) <= TIE_REL * abs(self.density) and size < self.size):
            self.density, self.size, self.mask = dens, size, mask


def _continuation(red, f, theta, schedule, cfg, best, trace, start_name):
    scale = _gamma_scale(red, theta)
    gamma0 = schedule.gamma0 if schedule.gamma0 is not None else scale / 1024.0
    # past this every weight exceeds the exactness scale; growing further only hurts conditioning
    gamma_cap = max(scale, gamma0) * schedule.growth
    gamma = np.zeros(2 * red.q + 1)
    rounds = outer = 0
    last = None
    for rnd in range(schedule.max_rounds + 1):
        rounds = rnd + 1
        res = ratiodca(red, PenaltyConfig(gamma.copy(), theta), f, cfg)
        outer += len(res.trace) - 1
        f, last = res.f, res.threshold_set
        if trace is not None:
            for r in res.trace:
                trace.append({"start": start_name, "round": rnd, "gamma": gamma.tolist(), "outer": r.outer,
                              "lambda": float(r.lam), "feasible": r.feasible, "size": r.size})
        hit = best_feasible_threshold(red, f)
        if hit is not None:
            best.offer(red, hit[0])
        viol = violated_groups(red, last)
        if not viol.any():
            best.offer(red, last)
            break
        if np.all(gamma[viol] >= gamma_cap):
            break
        gamma[viol] = np.where(gamma[viol] > 0, gamma[viol] * schedule.growth, gamma0)
    return last, rounds, outer, gamma


def forte(inst: ProblemInstance, task: TaskSpec, schedule: GammaSchedule = GammaSchedule(),
          cfg: RatioDCAConfig = RatioDCAConfig(), f0=None, theta: Optional[float] = None,
          trace: Optional[list] = None, starts=STARTS) -> TeamSolution:
    """Team formation by penalized RatioDCA with per-group gamma continuation.

    From each start (``degree``: normalized degree vector, ``lp``: the LP
    relaxation's ``f``; or ``f0`` alone when given) the problem is first
    solved unconstrained, then the weight of every violated constraint group
    is raised and the previous solution reused until the optimal threshold
    set is feasible. The densest feasible set found is finally polished by
    one more run above its own exactness threshold. ``trace``, if given,
    receives one dict per outer iteration.
    """
    task = normalize_task(inst, task)
    dist = task_distances(inst, task)
    red = reduce_subset(inst, task, dist)
    if red.m == 0:
        return expand_solution(red, [], inst, task, "forte", dist)
    theta = default_theta(red) if theta is None else theta

    if f0 is not None:
        f = np.asarray(f0, dtype=float)
        init = [("f0", f)]
    else:
        init = []
        for name in starts:
            if name == "degree":
                init.append((name, default_start(red)))
            elif name == "lp":
                f = lp_start(red)
                if f is not None:
                    init.append((name, f))
            else:
                raise ValueError(f"unknown start {name!r}")

    best = _Best()
    rounds = outer = 0
    last, gamma = None, np.zeros(2 * red.q + 1)
    for name, f in init:
        l, r, o, g = _continuation(red, f, theta, schedule, cfg, best, trace, name)
        rounds += r
        outer += o
        if last is None:
            last, gamma = l, g

    full = np.ones(red.m, dtype=bool)
    if best.mask is None and is_feasible_reduced(red, full) and reduced_assoc(red, full) > 0:
        best.offer(red, full)
    if best.mask is not None:
        # from a feasible start above its own exactness threshold the result
        # stays feasible and can only get denser
        start = best.mask
        pcfg = PenaltyConfig.uniform(red, gamma_threshold(red, start, theta), theta)
        res = ratiodca(red, pcfg, start / np.sqrt(start.sum()), cfg)
        outer += len(res.trace) - 1
        best.offer(red, res.threshold_set)
    A = best.mask if best.mask is not None else last
    sol = expand_solution(red, A, inst, task, "forte", dist)
    sol.metrics.update({"rounds": rounds, "outer_iterations": outer, "gamma": gamma.tolist(),
                        "theta": theta, "starts": [n for n, _ in init]})
    return sol
