"""Walk through every solver on small hand-built graphs.

Run: python3 demos/triangle_walkthrough.py
"""
import numpy as np

from teamform import ProblemInstance, SkillBound, TaskSpec, forte, reduce_subset
from teamform.greedy import dinkelbach_greedy
from teamform.lp import lp_feasible_rounding, lp_solution
from teamform.oracle import brute_force_gdsp
from teamform.penalty import PenaltyConfig, continuous_objective, default_theta, gamma_threshold

# %% A triangle: assoc counts ordered pairs, so density = 6 / 3 = 2
tri = ProblemInstance.from_edges(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)])
sol = forte(tri, TaskSpec())
print("triangle:", sol.team, "density", sol.density)

# %% The objective Q on the indicator of V is 1 / density
red = reduce_subset(tri, TaskSpec())
print("Q(1_V) =", continuous_objective(red, PenaltyConfig.zero(red), np.ones(3)))

# %% A triangle with a pendant heavy edge and one skill held by 0 and 1
inst = ProblemInstance.from_edges(4, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (2, 3, 3)],
                                  M=np.array([[1.0], [1], [0], [0]]))
task = TaskSpec((SkillBound(0, lower=2),))
red = reduce_subset(inst, task)
print("reduced problem: m =", red.m, "k =", red.k)

ora = brute_force_gdsp(red)
print("oracle:", np.flatnonzero(ora.best_set), "density", round(ora.best_value, 4))

mask, _ = dinkelbach_greedy(red)
print("greedy:", np.flatnonzero(mask))

lp = lp_solution(red)
rnd = lp_feasible_rounding(red, lp.block("f"), lp.block("t")[0])
print("LP bound", round(lp.objective, 4), "rounded team", np.flatnonzero(rnd.mask))

theta = default_theta(red)
print("exactness threshold for the oracle set: gamma >", round(gamma_threshold(red, ora.best_set, theta), 4))

sol = forte(inst, task)
print("forte:", sol.team, "density", round(sol.density, 4), "feasible", sol.feasible)
