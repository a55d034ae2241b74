"""Exact penalty objective and its continuous (Lovasz) extension.

Penalty weights are grouped per constraint: one weight per skill lower
bound, one per skill upper bound and one for the distance constraint. The
layout of ``PenaltyConfig.gamma`` is ``[lower_0..lower_{q-1},
upper_0..upper_{q-1}, distance]``.

The continuous objective is written as a ratio of differences of convex,
positively one-homogeneous functions::

    Q(f) = (R1(f) - R2(f)) / (S1(f) - S2(f))

    R1(f) = <rho, f> + sigma * max(f)
    R2(f) = pen2^L(f)
    S1(f) = <d + dS, f> + mu_S * max(f)
    S2(f) = cut^L(f)

Set functions are evaluated along the nested chain of threshold sets of
``f`` using cumulative sums, so one evaluation of ``Q`` costs
``O(m log m + |E| + nnz(D) + m q)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ReducedProblem, as_mask, is_feasible_reduced, reduced_assoc

TIE_REL = 1e-12


class DegenerateDenominator(ValueError):
    """Raised when ``assoc_S`` (or its extension) is not positive."""


@dataclass(frozen=True)
class PenaltyConfig:
    gamma: np.ndarray
    theta: float = 1.0

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).reshape(-1)
        if np.any(g < 0):
            raise ValueError("penalty weights must be nonnegative")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def uniform(cls, red: ReducedProblem, gamma: float, theta: float = 1.0) -> "PenaltyConfig":
        return cls(np.full(2 * red.q + 1, float(gamma)), theta)

    @classmethod
    def zero(cls, red: ReducedProblem) -> "PenaltyConfig":
        return cls.uniform(red, 0.0)


def n_groups(red: ReducedProblem) -> int:
    return 2 * red.q + 1


def group_weights(red: ReducedProblem, cfg: PenaltyConfig):
    """Effective ``(gamma_lower, gamma_upper, gamma_dist)``; inactive groups get 0."""
    q = red.q
    if cfg.gamma.shape != (2 * q + 1,):
        raise ValueError(f"gamma must have length {2 * q + 1}, got {cfg.gamma.shape[0]}")
    gl = np.where(red.k > 0, cfg.gamma[:q], 0.0)
    gu = np.where(red.has_upper, cfg.gamma[q:2 * q], 0.0)
    gd = float(cfg.gamma[2 * q]) if red.has_distance else 0.0
    return gl, gu, gd


def _finite_l(red: ReducedProblem) -> np.ndarray:
    return np.where(red.has_upper, red.l, 0.0)


# -------------------------------------------------------------- set level

def _dist_mass(red: ReducedProblem, x: np.ndarray) -> float:
    return float(x @ (red.D @ x)) if red.has_distance else 0.0


def penalty(red: ReducedProblem, cfg: PenaltyConfig, A) -> float:
    """Weighted constraint violation of ``A``; zero for feasible and empty sets."""
    mask = as_mask(A, red.m)
    if not mask.any():
        return 0.0
    gl, gu, gd = group_weights(red, cfg)
    vol = red.M[mask].sum(axis=0)
    over = np.maximum(0.0, vol - _finite_l(red))
    under = np.maximum(0.0, red.k - vol)
    return float(gu @ over + gl @ under + gd * _dist_mass(red, mask.astype(float)))


def violated_groups(red: ReducedProblem, A, tol: float = 1e-9) -> np.ndarray:
    """Boolean vector over penalty groups that ``A`` violates."""
    mask = as_mask(A, red.m)
    q = red.q
    out = np.zeros(2 * q + 1, dtype=bool)
    vol = red.M[mask].sum(axis=0)
    out[:q] = vol < red.k - tol
    out[q:2 * q] = red.has_upper & (vol > _finite_l(red) + tol)
    out[2 * q] = red.has_distance and _dist_mass(red, mask.astype(float)) > tol
    return out


def pen2_set(red: ReducedProblem, cfg: PenaltyConfig, A) -> float:
    """Submodular part of the penalty, ``pen = pen1 - pen2``."""
    mask = as_mask(A, red.m)
    gl, gu, gd = group_weights(red, cfg)
    vol = red.M[mask].sum(axis=0)
    return float(gu @ np.minimum(_finite_l(red), vol) + gl @ np.minimum(red.k, vol)
                 - gd * _dist_mass(red, mask.astype(float)))


def discrete_objective(red: ReducedProblem, cfg: PenaltyConfig, A) -> float:
    """``(vol_g(A) + nu_S + pen(A)) / assoc_S(A)`` for nonempty ``A``."""
    mask = as_mask(A, red.m)
    if not mask.any():
        raise ValueError("discrete objective is undefined on the empty set")
    den = reduced_assoc(red, mask)
    if den <= 0:
        raise DegenerateDenominator("degenerate denominator: assoc_S(A) <= 0")
    return (float(red.g[mask].sum()) + red.nu_S + penalty(red, cfg, mask)) / den


def gamma_threshold(red: ReducedProblem, A0, theta: float) -> float:
    """Penalty weight above which every minimizer of the penalized ratio is
    feasible, computed from a feasible reference set ``A0``."""
    if A0 is None:
        raise ValueError("a feasible reference set is required")
    mask = as_mask(A0, red.m)
    if theta <= 0:
        raise ValueError("theta must be positive")
    if not mask.any() or not is_feasible_reduced(red, mask):
        raise ValueError("reference set must be nonempty and feasible")
    a = reduced_assoc(red, mask)
    if a <= 0:
        raise DegenerateDenominator("reference set has assoc_S <= 0")
    spvol = (float(red.g[mask].sum()) + red.nu_S) / a
    return red.total_degree / theta * spvol * (1.0 + 1e-6)


def _is_integral(a) -> bool:
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return bool(np.all(a == np.round(a)))


def default_theta(red: ReducedProblem) -> float:
    """Minimum positive infeasibility.

    For integral skill levels, bounds and distance excesses every violation
    is a positive integer, so 1 is exact. Otherwise the smallest positive
    per-constraint violation among singletons, complements of singletons
    and ``V'`` is used as an estimate.
    """
    D = red.D.data if red.has_distance else np.zeros(0)
    if _is_integral(red.M) and _is_integral(red.k) and _is_integral(red.l) and _is_integral(D):
        return 1.0
    m = red.m
    probes = [np.eye(m, dtype=bool), ~np.eye(m, dtype=bool), np.ones((1, m), dtype=bool)]
    best = np.inf
    lf = _finite_l(red)
    for block in probes:
        for mask in block:
            if not mask.any():
                continue
            vol = red.M[mask].sum(axis=0)
            v = np.concatenate([red.k - vol, np.where(red.has_upper, vol - lf, 0.0)])
            if red.has_distance:
                v = np.append(v, _dist_mass(red, mask.astype(float)))
            v = v[v > 1e-12]
            if v.size:
                best = min(best, float(v.min()))
    return best if np.isfinite(best) else 1.0


# ------------------------------------------------------------ chain level

def sort_order(f: np.ndarray) -> np.ndarray:
    """Ascending order by ``(value, index)``."""
    return np.lexsort((np.arange(f.size), f))


@dataclass
class Chain:
    """Set-function values on the prefixes ``P_s`` (first ``s`` vertices in
    descending order of ``f``), ``s = 1..m``."""

    desc: np.ndarray
    fdesc: np.ndarray
    volg: np.ndarray
    volM: np.ndarray
    assocS: np.ndarray
    dmass: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.arange(1, self.desc.size + 1)

    def cut_points(self) -> np.ndarray:
        """Prefix lengths that are genuine threshold sets ``{j : f_j >= f_i}``."""
        f = self.fdesc
        last = np.ones(f.size, dtype=bool)
        last[:-1] = f[:-1] != f[1:]
        return np.flatnonzero(last) + 1

    def lovasz(self, values: np.ndarray) -> float:
        """Lovasz extension of a set function given by its chain values."""
        f = self.fdesc
        step = f - np.append(f[1:], 0.0)
        return float(values @ step)

    def mask(self, s: int, m: int) -> np.ndarray:
        out = np.zeros(m, dtype=bool)
        out[self.desc[:s]] = True
        return out


def _pair_chain(rank: np.ndarray, pairs, m: int) -> np.ndarray:
    i, j, w = pairs
    if i.size == 0:
        return np.zeros(m)
    step = np.maximum(rank[i], rank[j])
    return np.cumsum(np.bincount(step, weights=2.0 * w, minlength=m))


def chain(red: ReducedProblem, f: np.ndarray) -> Chain:
    f = np.asarray(f, dtype=float)
    m = red.m
    desc = sort_order(f)[::-1]
    rank = np.empty(m, dtype=np.int64)
    rank[desc] = np.arange(m)
    internal = _pair_chain(rank, red.edges, m)
    assocS = internal + 2.0 * np.cumsum(red.dS[desc]) + red.mu_S
    dmass = _pair_chain(rank, red.dpairs, m) if red.has_distance else np.zeros(m)
    return Chain(desc, f[desc], np.cumsum(red.g[desc]), np.cumsum(red.M[desc], axis=0), assocS, dmass)


def chain_penalty(red: ReducedProblem, cfg: PenaltyConfig, ch: Chain) -> np.ndarray:
    gl, gu, gd = group_weights(red, cfg)
    over = np.maximum(0.0, ch.volM - _finite_l(red))
    under = np.maximum(0.0, red.k - ch.volM)
    return over @ gu + under @ gl + gd * ch.dmass


def chain_pen2(red: ReducedProblem, cfg: PenaltyConfig, ch: Chain) -> np.ndarray:
    gl, gu, gd = group_weights(red, cfg)
    return np.minimum(_finite_l(red), ch.volM) @ gu + np.minimum(red.k, ch.volM) @ gl - gd * ch.dmass


def chain_objective(red: ReducedProblem, cfg: PenaltyConfig, ch: Chain) -> np.ndarray:
    """Discrete objective on every prefix; ``inf`` where ``assoc_S <= 0``."""
    num = ch.volg + red.nu_S + chain_penalty(red, cfg, ch)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ch.assocS > 0, num / np.where(ch.assocS > 0, ch.assocS, 1.0), np.inf)


def chain_feasible(red: ReducedProblem, ch: Chain, tol: float = 1e-9) -> np.ndarray:
    ok = np.all(ch.volM >= red.k - tol, axis=1)
    ok &= np.all(~red.has_upper | (ch.volM <= _finite_l(red) + tol), axis=1)
    if red.has_distance:
        ok &= ch.dmass <= tol
    return ok


# -------------------------------------------------------- continuous level

@dataclass(frozen=True)
class DCParts:
    rho: np.ndarray
    sigma: float
    dD: np.ndarray


def dc_parts(red: ReducedProblem, cfg: PenaltyConfig) -> DCParts:
    gl, gu, _ = group_weights(red, cfg)
    rho = red.g + red.M @ gu
    sigma = red.nu_S + float(gl @ red.k)
    return DCParts(rho, sigma, red.dD)


def cut_lovasz(red: ReducedProblem, f: np.ndarray) -> float:
    i, j, w = red.edges
    return float(w @ np.abs(f[i] - f[j]))


def R1(red, cfg, f) -> float:
    parts = dc_parts(red, cfg)
    return float(parts.rho @ f) + parts.sigma * float(np.max(f))


def R2(red, cfg, f) -> float:
    ch = chain(red, f)
    return ch.lovasz(chain_pen2(red, cfg, ch))


def S1(red, f) -> float:
    return float((red.d + red.dS) @ f) + red.mu_S * float(np.max(f))


def S2(red, f) -> float:
    return cut_lovasz(red, f)


def continuous_objective(red: ReducedProblem, cfg: PenaltyConfig, f) -> float:
    """``Q(f)`` for nonnegative, nonzero ``f``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (red.m,):
        raise ValueError(f"f must have shape ({red.m},)")
    if np.any(f < 0) or not np.any(f > 0):
        raise ValueError("f must be nonnegative and nonzero")
    ch = chain(red, f)
    parts = dc_parts(red, cfg)
    fmax = ch.fdesc[0]
    num = float(parts.rho @ f) + parts.sigma * fmax - ch.lovasz(chain_pen2(red, cfg, ch))
    den = float((red.d + red.dS) @ f) + red.mu_S * fmax - cut_lovasz(red, f)
    if den <= 0:
        raise DegenerateDenominator("nonpositive denominator")
    return num / den


Q = continuous_objective


def lovasz_extension(R: Callable[[np.ndarray], float], f) -> float:
    """Generic Lovasz extension of a set function ``R`` (called on boolean
    masks, with ``R(empty) = 0``)."""
    f = np.asarray(f, dtype=float)
    m = f.size
    asc = sort_order(f)
    fs = f[asc]
    mask = np.ones(m, dtype=bool)
    total = R(mask.copy()) * fs[0]
    for i in range(1, m):
        mask[asc[i - 1]] = False
        if fs[i] != fs[i - 1]:
            total += R(mask.copy()) * (fs[i] - fs[i - 1])
    return float(total)


def lovasz_subgradient(R: Callable[[np.ndarray], float], f) -> np.ndarray:
    """Subgradient from the greedy chain: ``R(A_i) - R(A_{i+1})`` for the
    vertex at ascending position ``i``."""
    f = np.asarray(f, dtype=float)
    asc = sort_order(f)
    m = f.size
    mask = np.ones(m, dtype=bool)
    vals = np.empty(m + 1)
    for i in range(m):
        vals[i] = R(mask.copy())
        mask[asc[i]] = False
    vals[m] = 0.0
    out = np.empty(m)
    out[asc] = vals[:-1] - vals[1:]
    return out


# ------------------------------------------------------------ subgradients

def subgrad_s1(red: ReducedProblem, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    s = red.d + red.dS
    if red.mu_S:
        s = s.copy()
        s[int(np.argmax(f))] += red.mu_S
    return s


def _min_term_subgrad(vol_here: np.ndarray, vol_next: np.ndarray, bound: float, Mj: np.ndarray) -> np.ndarray:
    """Subgradient entries for ``min{bound, vol_Mj(A)}`` in ascending order."""
    return np.select(
        [vol_next > bound, vol_here >= bound, vol_here < bound],
        [0.0, bound - vol_next, Mj],
    )


def subgrad_r2(red: ReducedProblem, cfg: PenaltyConfig, f) -> np.ndarray:
    """Element of the subdifferential of ``R2 = pen2^L`` at ``f``."""
    f = np.asarray(f, dtype=float)
    m = red.m
    gl, gu, gd = group_weights(red, cfg)
    out = np.zeros(m)
    asc = sort_order(f)
    if np.any(gl > 0) or np.any(gu > 0):
        Ms = red.M[asc]
        # vol over A_i = {asc[i], ..., asc[m-1]} and A_{i+1}
        here = np.cumsum(Ms[::-1], axis=0)[::-1]
        nxt = np.vstack([here[1:], np.zeros((1, red.q))])
        for j in range(red.q):
            if gu[j] > 0:
                out[asc] += gu[j] * _min_term_subgrad(here[:, j], nxt[:, j], red.l[j], Ms[:, j])
            if gl[j] > 0:
                out[asc] += gl[j] * _min_term_subgrad(here[:, j], nxt[:, j], red.k[j], Ms[:, j])
    if gd > 0:
        i, j, Dij = red.dpairs
        s = np.sign(f[i] - f[j]) * Dij
        p = np.bincount(i, weights=s, minlength=m) - np.bincount(j, weights=s, minlength=m)
        out += gd * (p - red.dD)
    return out
