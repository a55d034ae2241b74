"""Exhaustive ground truth for small reduced problems.

All ``2^m - 1`` nonempty subsets are enumerated in blocks of bit masks,
with every set statistic computed by vectorized matrix products.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ReducedProblem
from .penalty import PenaltyConfig, group_weights

MAX_GDSP = 22
MAX_PENALIZED = 18
TABLE_MAX = 12
BLOCK_BITS = 14


@dataclass
class OracleResult:
    best_set: Optional[np.ndarray]
    best_value: float
    n_feasible: int
    table: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return self.best_set is not None


def _blocks(m: int):
    """Yield ``(codes, X)`` with ``X[r, i]`` the ``i``-th bit of ``codes[r]``."""
    total = 1 << m
    step = 1 << min(m, BLOCK_BITS)
    bits = np.arange(m, dtype=np.int64)
    for start in range(0, total, step):
        codes = np.arange(start, min(start + step, total), dtype=np.int64)
        yield codes, ((codes[:, None] >> bits) & 1).astype(float)


def _stats(red: ReducedProblem, X: np.ndarray):
    Wd = red.W.toarray()
    assocS = np.einsum("ri,ij,rj->r", X, Wd, X) + 2.0 * X @ red.dS + red.mu_S
    assocS[~X.any(axis=1)] = 0.0
    volg = X @ red.g
    volM = X @ red.M
    if red.has_distance:
        dmass = np.einsum("ri,ij,rj->r", X, red.D.toarray(), X)
    else:
        dmass = np.zeros(X.shape[0])
    return assocS, volg, volM, dmass


def _feasible(red, volM, dmass, tol=1e-9):
    ok = np.all(volM >= red.k - tol, axis=1)
    ok &= np.all(~red.has_upper | (volM <= np.where(red.has_upper, red.l, 0.0) + tol), axis=1)
    return ok & (dmass <= tol)


def _mask(code: int, m: int) -> np.ndarray:
    return ((code >> np.arange(m)) & 1).astype(bool)


def brute_force_gdsp(red: ReducedProblem) -> OracleResult:
    """Maximize ``assoc_S(A) / (vol_g(A) + nu_S)`` over feasible nonempty ``A``.

    Ties are broken towards the smaller set.
    """
    m = red.m
    if m > MAX_GDSP:
        raise ValueError(f"oracle refuses m = {m} > {MAX_GDSP}")
    table = np.full(1 << m, -np.inf) if m <= TABLE_MAX else None
    best_code, best_val, best_size, n_feas = None, -np.inf, 0, 0
    for codes, X in _blocks(m):
        assocS, volg, volM, dmass = _stats(red, X)
        ok = _feasible(red, volM, dmass) & (codes > 0) & (assocS > 0)
        n_feas += int(ok.sum())
        dens = np.where(ok, assocS / np.maximum(volg + red.nu_S, 1e-300), -np.inf)
        if table is not None:
            table[codes] = dens
        if ok.any():
            top = dens.max()
            hits = np.flatnonzero(dens >= top - 1e-12 * abs(top))
            sizes = X[hits].sum(axis=1)
            h = hits[np.argmin(sizes)]
            if best_code is None or top > best_val + 1e-12 * abs(best_val) or (
                    abs(top - best_val) <= 1e-12 * abs(best_val) and sizes.min() < best_size):
                best_code, best_val, best_size = int(codes[h]), float(top), int(sizes.min())
    if best_code is None:
        return OracleResult(None, -np.inf, 0, table)
    return OracleResult(_mask(best_code, m), best_val, n_feas, table)


def brute_force_penalized(red: ReducedProblem, cfg: PenaltyConfig) -> OracleResult:
    """Minimize the penalized discrete objective over nonempty ``A``.

    Sets with ``assoc_S(A) <= 0`` are skipped. ``n_feasible`` counts
    feasible sets with positive ``assoc_S``.
    """
    m = red.m
    if m > MAX_PENALIZED:
        raise ValueError(f"oracle refuses m = {m} > {MAX_PENALIZED}")
    gl, gu, gd = group_weights(red, cfg)
    lf = np.where(red.has_upper, red.l, 0.0)
    table = np.full(1 << m, np.inf) if m <= TABLE_MAX else None
    best_code, best_val, best_size, n_feas = None, np.inf, 0, 0
    for codes, X in _blocks(m):
        assocS, volg, volM, dmass = _stats(red, X)
        pen = np.maximum(0.0, volM - lf) @ gu + np.maximum(0.0, red.k - volM) @ gl + gd * dmass
        valid = (codes > 0) & (assocS > 0)
        n_feas += int((valid & _feasible(red, volM, dmass)).sum())
        val = np.where(valid, (volg + red.nu_S + pen) / np.where(valid, assocS, 1.0), np.inf)
        if table is not None:
            table[codes] = val
        if valid.any():
            low = val.min()
            hits = np.flatnonzero(val <= low + 1e-12 * abs(low))
            sizes = X[hits].sum(axis=1)
            h = hits[np.argmin(sizes)]
            if best_code is None or low < best_val - 1e-12 * abs(best_val) or (
                    abs(low - best_val) <= 1e-12 * abs(best_val) and sizes.min() < best_size):
                best_code, best_val, best_size = int(codes[h]), float(low), int(sizes.min())
    if best_code is None:
        return OracleResult(None, np.inf, n_feas, table)
    return OracleResult(_mask(best_code, m), best_val, n_feas, table)
