"""A task with upper bounds, a seed member, a size cap and a distance limit.

Writes the input files to a temporary directory and runs the same
problem through the library and the command line.

Run: python3 demos/constrained_task.py
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from teamform import SkillBound, TaskSpec, feasibility_report, forte, random_instance
from teamform.io import load_problem, write_graph, write_skills
from teamform.harness import run_method

inst = random_instance(14, p=3, edge_prob=0.35, seed=12)
task = TaskSpec(
    skill_bounds=(SkillBound(0, lower=2, upper=3), SkillBound(1, lower=1), SkillBound(2, lower=0, upper=1)),
    seed=(0,), size_bound=6, d0=1,
)

# %% library calls
trace = []
sol = forte(inst, task, trace=trace)
print("forte team", sol.team, "density", round(sol.density, 4), "feasible", sol.feasible)
print("outer iterations", sol.metrics["outer_iterations"], "continuation rounds", sol.metrics["rounds"])
ok, detail = feasibility_report(inst, task, sol.team)
for name, row in detail.items():
    print(f"  {name}: {row}")

best = run_method("oracle", inst, task)
print("oracle team", best.team, "density", round(best.density, 4))

# lambda per outer iteration within the first RatioDCA run never increases
lams = [r["lambda"] for r in trace if r["round"] == 0 and r["start"] == "degree"]
print("first run lambda:", np.round(lams, 4))

# %% the same problem from files
with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    write_graph(inst, d / "g.tsv")
    write_skills(inst, d / "s.tsv")
    (d / "t.json").write_text(json.dumps({
        "skills": [{"index": 0, "lower": 2, "upper": 3}, {"index": 1, "lower": 1}, {"index": 2, "upper": 1}],
        "seed": [0], "size_bound": 6, "distance": {"d0": 1, "mode": "hops"},
    }))
    inst2, task2 = load_problem(d / "g.tsv", d / "s.tsv", d / "t.json")
    print("reloaded", inst2.n, "vertices,", len(task2.skill_bounds), "skill bounds")
    out = subprocess.run([sys.executable, "-m", "teamform.cli", "solve", "--graph", str(d / "g.tsv"),
                          "--skills", str(d / "s.tsv"), "--task", str(d / "t.json")],
                         capture_output=True, text=True)
    print("cli exit", out.returncode, "team", json.loads(out.stdout)["team"])
