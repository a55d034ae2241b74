"""Readers and writers for the graph, skill, task and rank file formats.

* graph: ``u<TAB>v<TAB>w`` per line, undirected, duplicate pairs summed
* skills: ``vertex<TAB>skill<TAB>level``
* costs / vertex weights / ranks: ``vertex<TAB>value``
* task: JSON, see :func:`read_task`

Vertex tokens that are all nonnegative integers are used as ids directly;
otherwise tokens become labels numbered in order of first appearance.
Blank lines and lines starting with ``#`` are skipped.
"""
from __future__ import annotations

import json
import math
import os
from typing import Optional

import numpy as np

from .model import INF, ProblemInstance, SkillBound, TaskSpec


class FormatError(ValueError):
    """Malformed input file; the message carries ``path:line``."""


def _rows(path, ncols):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split("\t") if "\t" in s else s.split()
            if len(parts) not in ncols:
                raise FormatError(f"{path}:{lineno}: expected {' or '.join(map(str, ncols))} fields, got {len(parts)}")
            yield lineno, parts


def _number(path, lineno, tok, what):
    try:
        val = float(tok)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: {what} {tok!r} is not a number") from None
    if not math.isfinite(val):
        raise FormatError(f"{path}:{lineno}: {what} must be finite")
    return val


class VertexIndex:
    def __init__(self, tokens):
        self.numeric = all(t.isdigit() for t in tokens)
        self.ids = {}
        self.labels = []
        if self.numeric:
            self.n = max((int(t) for t in tokens), default=-1) + 1
        else:
            self.n = 0
            for t in tokens:
                self._add(t)

    def _add(self, t):
        if t not in self.ids:
            self.ids[t] = len(self.labels)
            self.labels.append(t)
            self.n = len(self.labels)
        return self.ids[t]

    def get(self, t, create=True):
        t = str(t)
        if self.numeric:
            if not t.isdigit():
                raise KeyError(t)
            v = int(t)
            if v >= self.n:
                if not create:
                    raise KeyError(t)
                self.n = v + 1
            return v
        if t not in self.ids and not create:
            raise KeyError(t)
        return self._add(t)


def _vertex(index, path, lineno, tok, create=True):
    try:
        return index.get(tok, create)
    except KeyError:
        raise FormatError(f"{path}:{lineno}: unknown vertex {tok!r}") from None


def read_task(path: str, index: Optional[VertexIndex] = None, skill_ids: Optional[dict] = None):
    """Parse a task JSON file.

    Keys: ``skills`` (list of ``{index, lower, upper}``), ``seed`` (vertex
    list), ``size_bound``, ``budget`` (``{"B": value}``), ``costs_file``,
    ``distance`` (``{d0, mode: hops|matrix, matrix_file}``). File paths are
    relative to the task file. Returns ``(task, costs_file, matrix_file)``;
    the distance matrix is attached by :func:`load_problem`.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{path}:1: task must be a JSON object")
    base = os.path.dirname(os.path.abspath(path))
    bounds = []
    for k, s in enumerate(obj.get("skills", [])):
        try:
            idx = s["index"]
            if skill_ids is not None and not isinstance(idx, int):
                idx = skill_ids[str(idx)]
            elif isinstance(idx, str) and idx.isdigit():
                idx = int(idx)
            upper = s.get("upper")
            bounds.append(SkillBound(int(idx), float(s.get("lower", 0.0)),
                                     INF if upper is None else float(upper)))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"{path}:1: skills[{k}] is invalid ({e})") from None
    seed = obj.get("seed", [])
    if index is not None:
        try:
            seed = [index.get(str(s), create=False) for s in seed]
        except KeyError as e:
            raise FormatError(f"{path}:1: unknown seed vertex {e}") from None
    budget = obj.get("budget")
    B = INF
    if isinstance(budget, dict):
        B = float(budget.get("B", INF))
    elif budget is not None:
        B = float(budget)
    size = obj.get("size_bound")
    dist = obj.get("distance") or {}
    d0 = dist.get("d0")
    mode = dist.get("mode", "hops")
    matrix_file = dist.get("matrix_file")
    costs_file = obj.get("costs_file")
    if costs_file is not None:
        costs_file = os.path.join(base, costs_file)
    if matrix_file is not None:
        matrix_file = os.path.join(base, matrix_file)
    try:
        task = TaskSpec(skill_bounds=tuple(bounds), seed=tuple(int(s) for s in seed),
                        size_bound=INF if size is None else float(size), budget=B,
                        d0=None if d0 is None else float(d0),
                        distance_mode="hops" if mode == "matrix" else mode)
    except ValueError as e:
        raise FormatError(f"{path}:1: {e}") from None
    return task, costs_file, (matrix_file if mode == "matrix" else None)


def load_problem(graph: str, skills: Optional[str] = None, task: Optional[str] = None,
                 weights: Optional[str] = None, costs: Optional[str] = None):
    """Read all files into ``(ProblemInstance, TaskSpec or None)``."""
    edges_raw = list(_rows(graph, (2, 3)))
    skill_rows = list(_rows(skills, (3,))) if skills else []
    tokens = [t for _, r in edges_raw for t in r[:2]]
    index = VertexIndex(tokens + [r[0] for _, r in skill_rows])

    edges = []
    for lineno, r in edges_raw:
        u, v = _vertex(index, graph, lineno, r[0]), _vertex(index, graph, lineno, r[1])
        if u == v:
            raise FormatError(f"{graph}:{lineno}: self-loop on vertex {r[0]!r}")
        w = _number(graph, lineno, r[2], "weight") if len(r) == 3 else 1.0
        if w < 0:
            raise FormatError(f"{graph}:{lineno}: negative weight")
        edges.append((u, v, w))

    skill_tokens = [r[1] for _, r in skill_rows]
    numeric_skills = all(t.isdigit() for t in skill_tokens)
    skill_ids = {}
    if numeric_skills:
        p = max((int(t) for t in skill_tokens), default=-1) + 1
        names = None
    else:
        for t in skill_tokens:
            skill_ids.setdefault(t, len(skill_ids))
        p = len(skill_ids)
        names = tuple(skill_ids)
    entries = []
    for lineno, r in skill_rows:
        v = _vertex(index, skills, lineno, r[0])
        j = int(r[1]) if numeric_skills else skill_ids[r[1]]
        level = _number(skills, lineno, r[2], "skill level")
        if level < 0:
            raise FormatError(f"{skills}:{lineno}: negative skill level")
        entries.append((v, j, level))

    task_spec, costs_file, matrix_file = (None, None, None)
    if task:
        task_spec, costs_file, matrix_file = read_task(task, index, skill_ids if not numeric_skills else None)
    costs = costs or costs_file

    def vertex_values(path, what, default):
        vals = {}
        for lineno, r in _rows(path, (2,)):
            vals[_vertex(index, path, lineno, r[0], create=False)] = _number(path, lineno, r[1], what)
        out = np.full(index.n, default, dtype=float)
        for v, x in vals.items():
            out[v] = x
        return out

    n = index.n
    M = np.zeros((n, p))
    for v, j, level in entries:
        M[v, j] += level
    g = vertex_values(weights, "vertex weight", 1.0) if weights else np.ones(n)
    c = vertex_values(costs, "cost", 0.0) if costs else np.zeros(n)
    labels = None if index.numeric else tuple(index.labels)
    try:
        inst = ProblemInstance.from_edges(n, edges, g=g, M=M, c=c, labels=labels, skill_names=names)
    except ValueError as e:
        raise FormatError(f"{graph}: {e}") from None
    if task_spec is not None and matrix_file is not None:
        try:
            D = np.loadtxt(matrix_file, ndmin=2)
        except ValueError as e:
            raise FormatError(f"{matrix_file}: {e}") from None
        from dataclasses import replace
        task_spec = replace(task_spec, distance_mode="matrix", distance_matrix=D)
    return inst, task_spec


def read_ranks(path: str, inst: Optional[ProblemInstance] = None):
    from .harness import RankTable

    lookup = None
    if inst is not None and inst.labels is not None:
        lookup = {lab: i for i, lab in enumerate(inst.labels)}
    ranks = {}
    for lineno, r in _rows(path, (2,)):
        key = r[0]
        if lookup is not None:
            if key not in lookup:
                raise FormatError(f"{path}:{lineno}: unknown vertex {key!r}")
            v = lookup[key]
        elif key.isdigit():
            v = int(key)
        else:
            v = key
        rank = _number(path, lineno, r[1], "rank")
        if rank < 1 or rank != int(rank):
            raise FormatError(f"{path}:{lineno}: rank must be a positive integer")
        ranks[v] = int(rank)
    return RankTable(ranks)


def task_to_json(task: TaskSpec) -> dict:
    out = {
        "skills": [{"index": b.index, "lower": b.lower, "upper": None if math.isinf(b.upper) else b.upper}
                   for b in task.skill_bounds if b.index is not None],
        "seed": list(task.seed),
    }
    if math.isfinite(task.size_bound):
        out["size_bound"] = task.size_bound
    if math.isfinite(task.budget):
        out["budget"] = {"B": task.budget}
    if task.d0 is not None:
        out["distance"] = {"d0": task.d0, "mode": task.distance_mode}
    return out


def write_graph(inst: ProblemInstance, path: str) -> None:
    import scipy.sparse as sp

    U = sp.triu(inst.W, k=1).tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for u, v, w in sorted(zip(U.row.tolist(), U.col.tolist(), U.data.tolist())):
            fh.write(f"{u}\t{v}\t{w:.17g}\n")


def write_skills(inst: ProblemInstance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v, j in zip(*np.nonzero(inst.M)):
            fh.write(f"{v}\t{j}\t{inst.M[v, j]:.17g}\n")
