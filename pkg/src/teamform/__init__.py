"""Dense team formation as a generalized densest subgraph problem."""
from .model import (
    EmptyTeamError, InfeasibleError, ProblemInstance, ReducedProblem, SkillBound, TaskSpec, TeamSolution,
    assoc, feasibility_report, generalized_density, normalize_task, reduce_subset,
)
from .penalty import PenaltyConfig, continuous_objective, gamma_threshold, penalty
from .ratiodca import GammaSchedule, RatioDCAConfig, forte, optimal_threshold, solve_inner
from .lp import lp_feasible_rounding, lp_solution, lp_upper_bound, solve_lp
from .greedy import dinkelbach_greedy, greedy_lower_bound
from .oracle import brute_force_gdsp, brute_force_penalized
from .harness import RankTable, air, bench, random_instance, random_task

__version__ = "0.1.0"

__all__ = [
    "EmptyTeamError", "InfeasibleError", "ProblemInstance", "ReducedProblem", "SkillBound", "TaskSpec",
    "TeamSolution", "assoc", "feasibility_report", "generalized_density", "normalize_task", "reduce_subset",
    "PenaltyConfig", "continuous_objective", "gamma_threshold", "penalty",
    "GammaSchedule", "RatioDCAConfig", "forte", "optimal_threshold", "solve_inner",
    "lp_feasible_rounding", "lp_solution", "lp_upper_bound", "solve_lp",
    "dinkelbach_greedy", "greedy_lower_bound", "brute_force_gdsp", "brute_force_penalized",
    "RankTable", "air", "bench", "random_instance", "random_task",
]
