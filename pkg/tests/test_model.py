import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teamform.model import (
    INF, EmptyTeamError, InfeasibleError, ProblemInstance, SkillBound, TaskSpec, assoc, assoc_terms,
    expand_solution, feasibility_report, generalized_density, hop_distances, normalize_task, reduce_subset,
    reduced_density,
)

from gen import all_masks, random_graph, random_task, triangle


def test_density_triangle():
    assert generalized_density(triangle(), [0, 1, 2]) == 2.0
    assert generalized_density(triangle(g=[1, 1, 2]), [0, 2]) == pytest.approx(2 / 3)


def test_density_singleton_and_errors():
    inst = triangle()
    assert generalized_density(inst, [1]) == 0.0
    with pytest.raises(EmptyTeamError):
        generalized_density(inst, [])
    with pytest.raises(IndexError):
        generalized_density(inst, [5])


def test_instance_validation():
    with pytest.raises(ValueError):
        ProblemInstance.from_edges(2, [(0, 0, 1)])
    with pytest.raises(ValueError):
        ProblemInstance.from_edges(2, [(0, 1, 1)], g=[1, 0])
    with pytest.raises(ValueError):
        ProblemInstance.from_edges(2, [(0, 1, -1)])
    with pytest.raises(ValueError):
        ProblemInstance.from_edges(2, [(0, 1, 1)], labels=["a"])


def test_duplicate_edges_are_summed():
    inst = ProblemInstance.from_edges(2, [(0, 1, 1), (1, 0, 2)])
    assert inst.W[0, 1] == 3 and inst.W[1, 0] == 3


def test_assoc_terms_examples():
    inst = triangle()
    mu, nu, dS = assoc_terms(inst, [])
    assert (mu, nu) == (0, 0) and not dS.any()
    mu, nu, dS = assoc_terms(inst, [0])
    assert (mu, nu) == (0, 1) and dS.tolist() == [1, 1]
    mu, nu, dS = assoc_terms(inst, [0, 1])
    assert (mu, nu) == (2, 2) and dS.tolist() == [2]


def test_normalize_task():
    inst = ProblemInstance.from_edges(6, [(0, 1, 1)], c=[1, 2, 3, 4, 5, 6])
    t = normalize_task(inst, TaskSpec(size_bound=4))
    (b,) = t.skill_bounds
    assert b.vector(inst).tolist() == [1] * 6 and (b.lower, b.upper) == (0, 4)
    t = normalize_task(inst, TaskSpec(budget=255))
    assert t.skill_bounds[0].vector(inst).tolist() == [1, 2, 3, 4, 5, 6]
    assert t.skill_bounds[0].upper == 255
    plain = TaskSpec()
    assert normalize_task(inst, plain) is plain
    both = normalize_task(inst, TaskSpec(size_bound=4, budget=9))
    assert normalize_task(inst, both) == both


def test_task_validation():
    with pytest.raises(ValueError):
        SkillBound(0, 3, 2)
    with pytest.raises(ValueError):
        TaskSpec(seed=(0, 1, 2), size_bound=2)
    with pytest.raises(ValueError):
        TaskSpec(d0=-1)


def test_reduce_no_seed():
    inst = random_graph(np.random.default_rng(0), 6)
    task = TaskSpec((SkillBound(0, 1, 3),))
    red = reduce_subset(inst, task)
    assert red.m == 6 and red.D.nnz == 0
    assert red.k.tolist() == [1] and red.l.tolist() == [3]
    assert red.mu_S == 0 and red.nu_S == 0


def test_reduce_eliminates_far_vertices():
    inst = ProblemInstance.from_edges(4, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (2, 3, 1)])
    red = reduce_subset(inst, TaskSpec(seed=(0,), d0=1))
    assert red.index.tolist() == [1, 2]


def test_reduce_bound_update():
    M = np.array([[1.0], [1], [1], [0]])
    inst = ProblemInstance.from_edges(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)], M=M)
    red = reduce_subset(inst, TaskSpec((SkillBound(0, 3, 5),), seed=(0,)))
    assert red.k.tolist() == [2] and red.l.tolist() == [4]
    red = reduce_subset(inst, TaskSpec((SkillBound(0, 0.5, 5),), seed=(0,)))
    assert red.k.tolist() == [0] and red.k_raw.tolist() == [-0.5]


def test_reduce_infeasible_seed():
    M = np.array([[1.0], [1], [0]])
    inst = triangle(M=M)
    with pytest.raises(InfeasibleError, match="infeasible seed"):
        reduce_subset(inst, TaskSpec((SkillBound(0, 0, 1),), seed=(0, 1)))
    path = ProblemInstance.from_edges(3, [(0, 1, 1), (1, 2, 1)])
    with pytest.raises(InfeasibleError, match="infeasible seed"):
        reduce_subset(path, TaskSpec(seed=(0, 2), d0=1))


def test_reduce_empty_universe():
    inst = triangle(M=np.array([[1.0], [0], [0]]))
    with pytest.raises(InfeasibleError, match="empty reduced universe"):
        reduce_subset(inst, TaskSpec((SkillBound(0, 2),), seed=(0, 1, 2)))
    red = reduce_subset(inst, TaskSpec((SkillBound(0, 1),), seed=(0, 1, 2)))
    assert red.m == 0 and red.seed_feasible


def test_reduced_distance_matrix():
    path = ProblemInstance.from_edges(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    red = reduce_subset(path, TaskSpec(d0=1))
    D = red.D.toarray()
    assert np.allclose(D, D.T) and not np.diag(D).any()
    assert D[0, 2] == 1 and D[0, 3] == 2 and D[0, 1] == 0


def test_expand_examples():
    inst = triangle()
    red = reduce_subset(inst, TaskSpec(seed=(0,)))
    sol = expand_solution(red, [0, 1], inst, TaskSpec(seed=(0,)))
    assert sol.team == (0, 1, 2) and sol.density == 2.0 and sol.feasible
    red = reduce_subset(inst, TaskSpec())
    assert expand_solution(red, [1, 2], inst, TaskSpec()).team == (1, 2)


def test_expand_prefers_dense_seed():
    # S = {0, 1} with a heavy edge, V' = {2} only weakly attached
    inst = ProblemInstance.from_edges(3, [(0, 1, 10), (1, 2, 1)])
    task = TaskSpec(seed=(0, 1))
    red = reduce_subset(inst, task)
    assert red.seed_feasible
    sol = expand_solution(red, [0], inst, task)
    assert sol.team == (0, 1)
    assert sol.density == pytest.approx(10.0)


def test_feasibility_report_slack():
    M = np.array([[1.0], [1], [0]])
    inst = triangle(M=M)
    ok, rep = feasibility_report(inst, TaskSpec((SkillBound(0, 1, 1),), size_bound=2), [0, 1])
    assert not ok
    assert rep["0:skill0"]["upper_slack"] == -1
    assert rep["1:size"]["upper_slack"] == 0


def test_hop_distances():
    path = ProblemInstance.from_edges(3, [(0, 1, 1), (1, 2, 5)])
    assert hop_distances(path, [0])[0].tolist() == [0, 1, 2]
    iso = ProblemInstance.from_edges(3, [(0, 1, 1)])
    assert np.isinf(hop_distances(iso, [0])[0, 2])
    assert hop_distances(triangle(), [0])[0].tolist() == [0, 1, 1]


def test_solution_schema():
    inst = triangle()
    red = reduce_subset(inst, TaskSpec())
    d = expand_solution(red, [0, 1, 2], inst, TaskSpec(), "x").to_dict()
    assert d["schema"] == 1 and d["team"] == [0, 1, 2] and d["provenance"] == "x"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 10))
def test_assoc_cut_identity(seed, n):
    rng = np.random.default_rng(seed)
    inst = random_graph(rng, n, max_weight=5)
    C = rng.random(n) < 0.5
    W = inst.W.toarray()
    vol_d = inst.degrees[C].sum()
    cut = W[np.ix_(C, ~C)].sum()
    assert abs(assoc(inst, C) - (vol_d - cut)) <= 1e-12 * max(1.0, vol_d)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_density_relabel_invariant(seed):
    rng = np.random.default_rng(seed)
    inst = random_graph(rng, 8, max_weight=3, weights=True)
    perm = rng.permutation(8)
    inv = np.argsort(perm)
    W = inst.W.toarray()[np.ix_(perm, perm)]
    edges = [(i, j, W[i, j]) for i in range(8) for j in range(i + 1, 8) if W[i, j]]
    other = ProblemInstance.from_edges(8, edges, g=inst.g[perm])
    C = [0, 2, 3, 7]
    assert generalized_density(inst, C) == pytest.approx(generalized_density(other, inv[C]), rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_reduction_identity_exhaustive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 11))
    inst = random_graph(rng, n, max_weight=3, weights=True)
    S = tuple(int(s) for s in rng.choice(n, size=int(rng.integers(0, 3)), replace=False))
    d0 = 2.0 if seed % 2 else None
    task = TaskSpec(seed=S, d0=d0)
    try:
        red = reduce_subset(inst, task)
    except InfeasibleError:
        return
    for mask in all_masks(red.m):
        team = sorted(set(S) | set(red.index[mask].tolist()))
        assert reduced_density(red, mask) == pytest.approx(generalized_density(inst, team), rel=1e-12, abs=1e-12)
