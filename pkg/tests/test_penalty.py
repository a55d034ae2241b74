import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from dataclasses import replace

from teamform.model import ProblemInstance, SkillBound, TaskSpec, is_feasible_reduced, reduce_subset
from teamform.penalty import (
    DegenerateDenominator, PenaltyConfig, R1, R2, S1, S2, chain, chain_objective, continuous_objective,
    default_theta, discrete_objective, gamma_threshold, lovasz_extension, lovasz_subgradient, pen2_set,
    penalty, subgrad_r2, subgrad_s1,
)
from teamform.oracle import brute_force_penalized

from gen import all_masks, feasible_reduced, random_graph, random_task, triangle


def one(red, gamma=1.0):
    return PenaltyConfig.uniform(red, gamma)


def with_distance(red, pairs):
    D = np.zeros((red.m, red.m))
    for u, v, x in pairs:
        D[u, v] = D[v, u] = x
    return replace(red, D=sp.csr_matrix(D))


def test_penalty_examples():
    inst = triangle(M=np.array([[1.0], [1], [0]]))
    red = reduce_subset(inst, TaskSpec((SkillBound(0, 2, 2),)))
    assert penalty(red, one(red), []) == 0
    assert penalty(red, one(red), [0]) == 1
    assert penalty(red, one(red), [0, 1]) == 0
    red = with_distance(reduce_subset(triangle(), TaskSpec()), [(0, 1, 1.0)])
    assert penalty(red, one(red), [0, 1]) == 2


def test_discrete_objective_examples():
    inst = triangle()
    red = reduce_subset(inst, TaskSpec())
    assert discrete_objective(red, PenaltyConfig.zero(red), [0, 1, 2]) == 0.5
    red = reduce_subset(inst, TaskSpec(seed=(0,)))
    assert discrete_objective(red, PenaltyConfig.zero(red), [0, 1]) == 0.5
    iso = reduce_subset(ProblemInstance.from_edges(3, [(0, 1, 1)]), TaskSpec())
    with pytest.raises(DegenerateDenominator):
        discrete_objective(iso, PenaltyConfig.zero(iso), [2])


def test_gamma_threshold_examples():
    red = reduce_subset(triangle(), TaskSpec())
    g = gamma_threshold(red, [0, 1, 2], 1.0)
    assert 3.0 < g < 3.0 * (1 + 1e-5)
    assert gamma_threshold(red, [0, 1, 2], 2.0) == pytest.approx(g / 2)
    assert gamma_threshold(red, [0, 1], 1.0) > g
    with pytest.raises(ValueError):
        gamma_threshold(red, None, 1.0)


def test_default_theta_integral():
    rng = np.random.default_rng(1)
    _, _, red = feasible_reduced(rng)
    assert default_theta(red) == 1.0


def test_lovasz_examples():
    R = lambda A: float(A.any())
    f = np.array([0.3, 0.9, 0.1])
    assert lovasz_extension(R, f) == pytest.approx(0.9)
    W = np.array([[0, 1.0], [1, 0]])
    cut = lambda A: float(W[np.ix_(A, ~A)].sum())
    assert lovasz_extension(cut, np.array([0.2, 0.7])) == pytest.approx(0.5)
    A = np.array([True, False, True])
    assert lovasz_extension(lambda X: float(X.sum() ** 2), A.astype(float)) == 4.0


def test_q_examples():
    red = reduce_subset(triangle(), TaskSpec())
    cfg = PenaltyConfig.zero(red)
    assert continuous_objective(red, cfg, np.ones(3)) == pytest.approx(0.5)
    f = np.array([0.2, 0.5, 0.9])
    assert continuous_objective(red, cfg, 3.7 * f) == pytest.approx(continuous_objective(red, cfg, f), rel=1e-12)
    with pytest.raises(ValueError):
        continuous_objective(red, cfg, np.zeros(3))


def test_subgrad_s1_examples():
    red = reduce_subset(triangle(), TaskSpec(seed=(0,)))
    assert subgrad_s1(red, np.array([0.4, 0.1])).tolist() == [3, 3]
    red4 = replace(red, mu_S=4.0)
    assert subgrad_s1(red4, np.array([0.1, 0.9])).tolist() == [3, 7]


def test_subgrad_r2_examples():
    inst = ProblemInstance.from_edges(2, [(0, 1, 1)], M=np.array([[1.0], [1]]))
    red = reduce_subset(inst, TaskSpec((SkillBound(0, 0, 1),)))
    cfg = PenaltyConfig(np.array([0.0, 1.0, 0.0]))
    assert subgrad_r2(red, cfg, np.array([0.3, 0.7])).tolist() == [0, 1]
    red = with_distance(reduce_subset(ProblemInstance.from_edges(2, [(0, 1, 1)]), TaskSpec()), [(0, 1, 1.0)])
    assert red.q == 0
    cfg = PenaltyConfig(np.array([1.0]))
    assert subgrad_r2(red, cfg, np.array([0.2, 0.5])).tolist() == [-2, 0]
    assert not subgrad_r2(red, PenaltyConfig.zero(red), np.array([0.2, 0.5])).any()


def _cases(n_cases, seed=0, **kw):
    rng = np.random.default_rng(seed)
    for _ in range(n_cases):
        inst, task, red = feasible_reduced(rng, **kw)
        q = red.q
        gamma = rng.uniform(0.0, 3.0, size=2 * q + 1)
        yield rng, red, PenaltyConfig(gamma)


@pytest.mark.parametrize("seed", range(3))
def test_penalty_zero_iff_feasible(seed):
    for _, red, _ in _cases(4, seed):
        cfg = one(red)
        for mask in all_masks(red.m):
            assert (penalty(red, cfg, mask) == 0) == is_feasible_reduced(red, mask)


@pytest.mark.parametrize("seed", range(3))
def test_q_on_indicators(seed):
    for _, red, cfg in _cases(4, seed):
        for mask in all_masks(red.m):
            try:
                want = discrete_objective(red, cfg, mask)
            except DegenerateDenominator:
                continue
            got = continuous_objective(red, cfg, mask.astype(float))
            assert got == pytest.approx(want, rel=1e-10, abs=1e-10)


def _set_functions(red, cfg):
    from teamform.model import reduced_assoc
    from teamform.penalty import dc_parts

    parts = dc_parts(red, cfg)
    W = red.W.toarray()
    return {
        "R1": (lambda A: float(parts.rho[A].sum()) + parts.sigma if A.any() else 0.0, lambda f: R1(red, cfg, f)),
        "R2": (lambda A: pen2_set(red, cfg, A), lambda f: R2(red, cfg, f)),
        "S1": (lambda A: float((red.d + red.dS)[A].sum()) + red.mu_S if A.any() else 0.0, lambda f: S1(red, f)),
        "S2": (lambda A: float(W[np.ix_(A, ~A)].sum()), lambda f: S2(red, f)),
        "assoc": (lambda A: reduced_assoc(red, A) if A.any() else 0.0,
                  lambda f: S1(red, f) - S2(red, f)),
    }


@pytest.mark.parametrize("seed", range(3))
def test_explicit_parts_match_generic_lovasz(seed):
    for rng, red, cfg in _cases(5, seed):
        fns = _set_functions(red, cfg)
        for _ in range(10):
            f = rng.random(red.m)
            for name, (R, ext) in fns.items():
                assert ext(f) == pytest.approx(lovasz_extension(R, f), rel=1e-9, abs=1e-9), name


@pytest.mark.parametrize("seed", range(3))
def test_dc_nonnegativity(seed):
    for rng, red, cfg in _cases(5, seed):
        for _ in range(20):
            f = rng.random(red.m) * (rng.random(red.m) < 0.8)
            if not f.any():
                continue
            assert R1(red, cfg, f) - R2(red, cfg, f) >= -1e-9
            assert S1(red, f) - S2(red, f) >= -1e-9


@pytest.mark.parametrize("seed", range(3))
def test_pen2_submodular(seed):
    for _, red, cfg in _cases(3, seed, n_range=(4, 8)):
        masks = np.vstack([np.zeros(red.m, dtype=bool), all_masks(red.m)])
        val = {m.tobytes(): pen2_set(red, cfg, m) for m in masks}
        for A, B in itertools.combinations(masks, 2):
            lhs = val[(A | B).tobytes()] + val[(A & B).tobytes()]
            assert lhs <= val[A.tobytes()] + val[B.tobytes()] + 1e-9


def _fd(fun, f, h=1e-6):
    out = np.empty(f.size)
    for i in range(f.size):
        e = np.zeros(f.size)
        e[i] = h
        out[i] = (fun(f + e) - fun(f - e)) / (2 * h)
    return out


@pytest.mark.parametrize("seed", range(3))
def test_subgradients_match_finite_differences(seed):
    for rng, red, cfg in _cases(4, seed):
        for _ in range(5):
            f = rng.permutation(red.m) / red.m + 0.1 + rng.random(red.m) * 1e-3
            assert np.abs(subgrad_s1(red, f) - _fd(lambda x: S1(red, x), f)).max() <= 1e-4
            assert np.abs(subgrad_r2(red, cfg, f) - _fd(lambda x: R2(red, cfg, x), f)).max() <= 1e-4


def test_subgradient_is_chain_subgradient():
    rng = np.random.default_rng(5)
    for _, red, cfg in _cases(5, 5):
        f = rng.random(red.m)
        want = lovasz_subgradient(lambda A: pen2_set(red, cfg, A), f)
        assert np.allclose(subgrad_r2(red, cfg, f), want, atol=1e-12)


def test_chain_objective_matches_discrete():
    for rng, red, cfg in _cases(4, 7):
        f = rng.random(red.m)
        ch = chain(red, f)
        vals = chain_objective(red, cfg, ch)
        for s in range(1, red.m + 1):
            A = ch.mask(s, red.m)
            try:
                want = discrete_objective(red, cfg, A)
            except DegenerateDenominator:
                assert np.isinf(vals[s - 1])
                continue
            assert vals[s - 1] == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_exact_penalty_threshold(seed):
    for _, red, _ in _cases(5, seed):
        from teamform.oracle import brute_force_gdsp

        best = brute_force_gdsp(red).best_set
        cfg = PenaltyConfig.uniform(red, gamma_threshold(red, best, default_theta(red)))
        res = brute_force_penalized(red, cfg)
        assert is_feasible_reduced(red, res.best_set)
