"""LP relaxation of GDSP: upper bounds and thresholded feasible teams.

Variables are ordered ``[t, f_0 .. f_{m-1}, alpha_0 .. alpha_{|E'|-1}]``
with one ``alpha`` per undirected edge of ``G'`` (objective coefficient
``2 w_e``). The solver is a dense two-phase revised simplex.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from .model import InfeasibleError, ReducedProblem
from .penalty import TIE_REL, chain

log = logging.getLogger(__name__)

MAX_LP_VARS = 5000
TOL = 1e-9


@dataclass
class LinearProgram:
    """``max c @ x`` subject to sparse rows ``A x (sense) b`` and ``lb <= x <= ub``."""

    c: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    b: np.ndarray
    senses: tuple
    lb: np.ndarray
    ub: np.ndarray
    names: tuple = ()
    blocks: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def dense(self) -> np.ndarray:
        A = np.zeros((self.n_rows, self.n_vars))
        np.add.at(A, (self.rows, self.cols), self.vals)
        return A

    def max_violation(self, x: np.ndarray) -> float:
        r = self.dense() @ x - self.b
        s = np.array(self.senses)
        v = np.where(s == "<=", r, np.where(s == ">=", -r, np.abs(r)))
        v = np.append(v, np.append(self.lb - x, x - self.ub))
        return float(max(0.0, v.max())) if v.size else 0.0


@dataclass
class LPResult:
    status: str
    objective: float
    x: Optional[np.ndarray]
    iterations: int = 0
    blocks: dict = field(default_factory=dict)

    def block(self, name: str) -> np.ndarray:
        return self.x[self.blocks[name]]


# ------------------------------------------------------------------ solver

class _Simplex:
    def __init__(self, A, b, max_iter, refactor=50):
        self.A, self.b = A, b
        self.max_iter = max_iter
        self.refactor = refactor
        self.iterations = 0

    def run(self, c, basis, allowed):
        A, b = self.A, self.b
        Binv = np.linalg.inv(A[:, basis])
        xB = Binv @ b
        degenerate_run = 0
        since = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration-limit", basis, xB
            if since >= self.refactor:
                Binv = np.linalg.inv(A[:, basis])
                xB = Binv @ b
                since = 0
            y = c[basis] @ Binv
            r = c - y @ A
            r[basis] = 0.0
            r[~allowed] = 0.0
            cand = np.flatnonzero(r > TOL)
            if cand.size == 0:
                return "optimal", basis, xB
            # Dantzig pricing, Bland's rule while stalled on degenerate pivots
            bland = degenerate_run >= 20
            j = int(cand[0]) if bland else int(cand[np.argmax(r[cand])])
            d = Binv @ A[:, j]
            pos = d > TOL
            if not pos.any():
                return "unbounded", basis, xB
            ratios = np.full(d.size, np.inf)
            ratios[pos] = np.maximum(xB[pos], 0.0) / d[pos]
            step = ratios.min()
            ties = np.flatnonzero(ratios <= step + TOL)
            if bland:
                i = int(ties[np.argmin(basis[ties])])
            else:
                i = int(ties[np.argmax(d[ties])])
            degenerate_run = degenerate_run + 1 if step <= TOL else 0
            piv = d[i]
            Binv[i] /= piv
            other = np.arange(d.size) != i
            Binv[other] -= np.outer(d[other], Binv[i])
            xB = xB - step * d
            xB[i] = step
            basis[i] = j
            self.iterations += 1
            since += 1


def solve_lp(lp: LinearProgram, max_iter: int = 200_000) -> LPResult:
    """Two-phase revised simplex (see module docstring)."""
    if lp.n_vars > MAX_LP_VARS:
        raise ValueError(f"LP has {lp.n_vars} variables; the dense solver accepts at most {MAX_LP_VARS}")
    lb = np.asarray(lp.lb, dtype=float)
    ub = np.asarray(lp.ub, dtype=float)
    if np.any(lb > ub):
        return LPResult("infeasible", np.nan, None, blocks=lp.blocks)
    n = lp.n_vars
    A0 = lp.dense()
    b0 = np.asarray(lp.b, dtype=float).copy()
    senses = list(lp.senses)

    # free variables: x = x+ - x-
    free = np.flatnonzero(~np.isfinite(lb))
    shift = np.where(np.isfinite(lb), lb, 0.0)
    A_cols = [A0]
    c_ext = [lp.c]
    if free.size:
        A_cols.append(-A0[:, free])
        c_ext.append(-lp.c[free])
    A1 = np.hstack(A_cols)
    c1 = np.concatenate(c_ext)
    b1 = b0 - A0 @ shift
    # finite upper bounds become rows on the shifted variable
    fin = np.flatnonzero(np.isfinite(ub))
    if fin.size:
        U = np.zeros((fin.size, A1.shape[1]))
        U[np.arange(fin.size), fin] = 1.0
        for k, var in enumerate(fin):
            if var in set(free.tolist()):
                U[k, n + int(np.flatnonzero(free == var)[0])] = -1.0
        A1 = np.vstack([A1, U])
        b1 = np.append(b1, ub[fin] - shift[fin])
        senses += ["<="] * fin.size
    nr, nx = A1.shape

    if nr == 0:
        if np.any(c1 > TOL):
            return LPResult("unbounded", np.inf, None, blocks=lp.blocks)
        x = shift.copy()
        return LPResult("optimal", float(lp.c @ x), x, blocks=lp.blocks)

    A1 = A1.copy()
    for i, s in enumerate(senses):
        if s == ">=":
            A1[i] *= -1.0
            b1[i] *= -1.0
            senses[i] = "<="
    slack_cols, art_rows, basis = [], [], np.empty(nr, dtype=np.int64)
    extra = []
    for i, s in enumerate(senses):
        if s == "<=":
            col = np.zeros(nr)
            if b1[i] >= 0:
                col[i] = 1.0
                extra.append(col)
                basis[i] = nx + len(extra) - 1
                continue
            A1[i] *= -1.0
            b1[i] *= -1.0
            col[i] = -1.0
            extra.append(col)
            art_rows.append(i)
        elif s == "=":
            if b1[i] < 0:
                A1[i] *= -1.0
                b1[i] *= -1.0
            art_rows.append(i)
        else:
            raise ValueError(f"unknown row sense {s!r}")
    n_struct = nx + len(extra)
    arts = []
    for i in art_rows:
        col = np.zeros(nr)
        col[i] = 1.0
        extra.append(col)
        basis[i] = nx + len(extra) - 1
        arts.append(basis[i])
    A = np.hstack([A1, np.column_stack(extra)]) if extra else A1
    ntot = A.shape[1]
    is_art = np.zeros(ntot, dtype=bool)
    is_art[arts] = True
    solver = _Simplex(A, b1, max_iter)

    if arts:
        c_ph1 = np.where(is_art, -1.0, 0.0)
        status, basis, xB = solver.run(c_ph1, basis, np.ones(ntot, dtype=bool))
        if status == "iteration-limit":
            return LPResult(status, np.nan, None, solver.iterations, lp.blocks)
        infeas = float(xB[is_art[basis]].sum())
        if infeas > 1e-7 * max(1.0, np.abs(b1).max()):
            return LPResult("infeasible", np.nan, None, solver.iterations, lp.blocks)
        # pivot remaining (zero-level) artificials out of the basis
        Binv = np.linalg.inv(A[:, basis])
        for i in np.flatnonzero(is_art[basis]):
            row = Binv[i] @ A[:, :n_struct]
            row[basis[basis < n_struct]] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                basis[i] = int(cand[0])
                Binv = np.linalg.inv(A[:, basis])

    c_ph2 = np.zeros(ntot)
    c_ph2[:nx] = c1
    status, basis, xB = solver.run(c_ph2, basis, ~is_art)
    if status != "optimal":
        obj = np.inf if status == "unbounded" else np.nan
        return LPResult(status, obj, None, solver.iterations, lp.blocks)
    xs = np.zeros(ntot)
    xs[basis] = np.linalg.solve(A[:, basis], b1)
    xs[np.abs(xs) < 1e-13] = 0.0
    x = xs[:n] + shift
    if free.size:
        x[free] -= xs[n:n + free.size]
    return LPResult("optimal", float(lp.c @ x), x, solver.iterations, lp.blocks)


# ------------------------------------------------------------ GDSP LP

def build_lp(red: ReducedProblem) -> LinearProgram:
    """Relaxation over ``(t, f, alpha)`` with ``<g, f> + t nu_S = 1``."""
    m = red.m
    if m == 0:
        raise InfeasibleError("empty reduced universe")
    ei, ej, ew = red.edges
    E = ew.size
    T, F0, A0 = 0, 1, 1 + m
    nv = 1 + m + E
    c = np.zeros(nv)
    c[T] = red.mu_S
    c[F0:F0 + m] = 2.0 * red.dS
    c[A0:] = 2.0 * ew

    rows, cols, vals, b, senses = [], [], [], [], []
    r = 0

    def add(cs, vs, rhs, sense):
        nonlocal r
        rows.extend([r] * len(cs))
        cols.extend(cs)
        vals.extend(vs)
        b.append(rhs)
        senses.append(sense)
        r += 1

    fidx = list(range(F0, F0 + m))
    for j in range(red.q):
        Mj = red.M[:, j]
        nz = np.flatnonzero(Mj)
        if red.k[j] > 0:
            add([T] + [F0 + int(i) for i in nz], [red.k[j]] + list(-Mj[nz]), 0.0, "<=")
        if np.isfinite(red.l[j]):
            add([F0 + int(i) for i in nz] + [T], list(Mj[nz]) + [-red.l[j]], 0.0, "<=")
    di, dj, _ = red.dpairs
    for u, v in zip(di.tolist(), dj.tolist()):
        add([F0 + u, F0 + v, T], [1.0, 1.0, -1.0], 0.0, "<=")
    for e in range(E):
        add([A0 + e, F0 + int(ei[e])], [1.0, -1.0], 0.0, "<=")
        add([A0 + e, F0 + int(ej[e])], [1.0, -1.0], 0.0, "<=")
    for i in range(m):
        add([F0 + i, T], [1.0, -1.0], 0.0, "<=")
    add(fidx + [T], list(red.g) + [red.nu_S], 1.0, "=")

    names = ("t",) + tuple(f"f{i}" for i in range(m)) + tuple(f"a{int(ei[e])}_{int(ej[e])}" for e in range(E))
    return LinearProgram(
        c=c, rows=np.array(rows, dtype=np.int64), cols=np.array(cols, dtype=np.int64),
        vals=np.array(vals, dtype=float), b=np.array(b, dtype=float), senses=tuple(senses),
        lb=np.zeros(nv), ub=np.full(nv, np.inf), names=names,
        blocks={"t": slice(T, T + 1), "f": slice(F0, F0 + m), "alpha": slice(A0, nv)},
    )


def lp_solution(red: ReducedProblem) -> LPResult:
    res = solve_lp(build_lp(red))
    if res.status == "infeasible":
        raise InfeasibleError("LP infeasible")
    if res.status != "optimal":
        raise RuntimeError(f"LP solve ended with status {res.status}")
    return res


def lp_upper_bound(red: ReducedProblem) -> float:
    """Optimal LP value; an upper bound on the GDSP optimum."""
    return lp_solution(red).objective


@dataclass
class RoundingResult:
    mask: Optional[np.ndarray]
    value: Optional[float]
    reason: str = ""

    def __bool__(self):
        return self.mask is not None


def lp_feasible_rounding(red: ReducedProblem, f, t: float) -> RoundingResult:
    """Threshold ``f / t`` and keep the densest set meeting every lower bound."""
    if not red.lower_bound_only:
        return RoundingResult(None, None, "rounding only valid for lower-bound tasks")
    f = np.asarray(f, dtype=float)
    y = f / t if t > 0 else f
    y = np.maximum(y, 0.0)
    if not y.any():
        y = np.ones(red.m)
    ch = chain(red, y)
    cuts = np.union1d(ch.cut_points(), [red.m])
    vol = ch.volM[cuts - 1]
    ok = np.all(vol >= red.k - 1e-9, axis=1) & (ch.assocS[cuts - 1] > 0)
    if not ok.any():
        return RoundingResult(None, None, "no threshold set satisfies the lower bounds")
    dens = np.where(ok, ch.assocS[cuts - 1] / (ch.volg[cuts - 1] + red.nu_S), -np.inf)
    top = dens.max()
    pos = int(np.flatnonzero(dens >= top - TIE_REL * abs(top))[0])
    return RoundingResult(ch.mask(int(cuts[pos]), red.m), float(dens[pos]))


def dump_lp(lp: LinearProgram, fh: IO[str]) -> None:
    """Plain-text dump: objective line, one constraint per line, bounds."""
    names = lp.names or tuple(f"x{i}" for i in range(lp.n_vars))

    def expr(cs, vs):
        return " ".join(f"{v:+.17g} {names[c]}" for c, v in zip(cs, vs)) or "0"

    nz = np.flatnonzero(lp.c)
    fh.write(f"max: {expr(nz, lp.c[nz])}\n")
    order = np.argsort(lp.rows, kind="stable")
    rows, cols, vals = lp.rows[order], lp.cols[order], lp.vals[order]
    starts = np.searchsorted(rows, np.arange(lp.n_rows + 1))
    for r in range(lp.n_rows):
        sl = slice(starts[r], starts[r + 1])
        fh.write(f"c{r}: {expr(cols[sl], vals[sl])} {lp.senses[r]} {lp.b[r]:.17g}\n")
    for i in range(lp.n_vars):
        lo, hi = lp.lb[i], lp.ub[i]
        fh.write(f"bound: {lo:.17g} <= {names[i]} <= {hi:.17g}\n")
