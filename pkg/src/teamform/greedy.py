"""Greedy peeling baseline for lower-bound tasks, with a Dinkelbach outer
loop for general vertex weights.

Peeling removes, one at a time, the vertex with the smallest attraction
score among those whose removal keeps every skill lower bound satisfiable,
and remembers the densest set seen along the way.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import InfeasibleError, ReducedProblem

log = logging.getLogger(__name__)

TIE = 1e-12


@dataclass
class PeelState:
    alive: np.ndarray
    degree: np.ndarray    # weighted degree inside the alive set
    volM: np.ndarray
    best_mask: np.ndarray
    best_density: float

    def check(self, red: ReducedProblem) -> None:
        x = self.alive.astype(float)
        assert np.allclose(self.volM, red.M[self.alive].sum(axis=0))
        assert np.allclose(self.degree[self.alive], (red.W @ x)[self.alive])


def _require_lower_only(red: ReducedProblem) -> None:
    if not red.lower_bound_only:
        raise ValueError("greedy baseline supports lower-bound skill constraints only")


def _peel(red: ReducedProblem, lam: float, debug: bool = False):
    """One peeling pass scored by ``2 (deg_alive + dS) - lam * g``.

    Returns the best (density-wise) set of the pass, its density and the
    best shifted objective ``assoc_S - lam (vol_g + nu_S)`` along the pass.
    """
    m = red.m
    W = red.W.tocsr()
    alive = np.ones(m, dtype=bool)
    deg = np.asarray(W.sum(axis=1)).ravel()
    volM = red.M.sum(axis=0)
    if np.any(volM < red.k - 1e-9):
        raise InfeasibleError("no feasible superset: V' violates a lower bound")
    internal = float(deg.sum())
    assocS = internal + 2.0 * red.dS.sum() + red.mu_S
    volg = float(red.g.sum())

    st = PeelState(alive, deg, volM, alive.copy(), -np.inf)
    best_shift, best_shift_mask = -np.inf, alive.copy()

    def record():
        nonlocal best_shift, best_shift_mask
        if assocS <= 0:
            return
        dens = assocS / (volg + red.nu_S)
        if not np.isfinite(st.best_density) or dens > st.best_density + TIE * abs(st.best_density) or (
                abs(dens - st.best_density) <= TIE * abs(st.best_density)
                and st.alive.sum() < st.best_mask.sum()):
            st.best_density = dens
            st.best_mask = st.alive.copy()
        shift = assocS - lam * (volg + red.nu_S)
        if shift > best_shift:
            best_shift, best_shift_mask = shift, st.alive.copy()

    record()
    while st.alive.sum() > 1:
        idx = np.flatnonzero(st.alive)
        removable = np.all(st.volM - red.M[idx] >= red.k - 1e-9, axis=1)
        if not removable.any():
            break
        idx = idx[removable]
        score = 2.0 * (st.degree[idx] + red.dS[idx]) - lam * red.g[idx]
        # ties: expensive vertices first, then lowest index
        order = np.lexsort((idx, -red.g[idx], score))
        v = int(idx[order[0]])
        st.alive[v] = False
        assocS -= 2.0 * (st.degree[v] + red.dS[v])
        volg -= red.g[v]
        st.volM = st.volM - red.M[v]
        row = W.getrow(v)
        st.degree[row.indices] -= row.data
        if debug:
            st.check(red)
        record()
    return st.best_mask, st.best_density, best_shift_mask


def greedy_lower_bound(red: ReducedProblem, debug: bool = False):
    """Peel by current-subgraph degree plus seed attraction; returns ``(mask, density)``."""
    _require_lower_only(red)
    mask, dens, _ = _peel(red, 0.0, debug)
    return mask, dens


def dinkelbach_greedy(red: ReducedProblem, max_rounds: int = 50, tol: float = 1e-9, debug: bool = False):
    """Dinkelbach iterations ``lam <- density(A_t)`` around greedy peeling.

    ``A_t`` is the peel-sequence set maximizing ``assoc_S - lam (vol_g + nu_S)``.
    Returns the densest feasible set seen across all rounds.
    """
    _require_lower_only(red)
    lam = 0.0
    best_mask, best = None, -np.inf
    for _ in range(max_rounds):
        mask, dens, shifted = _peel(red, lam, debug)
        if best_mask is None or dens > best + TIE * abs(best) or (
                abs(dens - best) <= TIE * abs(best) and mask.sum() < best_mask.sum()):
            best_mask, best = mask, dens
        x = shifted.astype(float)
        new = float(x @ (red.W @ x) + 2.0 * red.dS @ x + red.mu_S) / (float(red.g[shifted].sum()) + red.nu_S)
        if lam > 0 and abs(new - lam) <= tol * abs(lam):
            break
        lam = new
    return best_mask, best
