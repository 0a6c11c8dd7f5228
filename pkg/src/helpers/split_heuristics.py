#!/usr/bin/env python3

"""Constructive heuristics for static CARP: path scanning and Ulusoy's split."""

from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.helpers.errors import InfeasibleError, SplitError
from src.helpers.net_model import UNREACHABLE
from src.helpers.routing_core import Route, Solution, TaskTable

TaskSequence = List[int]


class ScanRule(IntEnum):
    """Tie-breaking rules of path scanning among equally near tasks."""

    MAX_RETURN = 1
    MIN_RETURN = 2
    MAX_YIELD = 3
    MIN_YIELD = 4
    HALF_LOAD = 5


def flatten(solution: Solution) -> TaskSequence:
    """Concatenate the routes' task lists, dropping route boundaries."""
    return [ref for route in solution.routes for ref in route.tasks]


def split_with_cost(
    sequence: Sequence[int], view
) -> Tuple[List[Tuple[int, ...]], float]:
    """Optimal split of a fixed task order into depot routes.

    Dynamic programming over the auxiliary DAG on positions 0..n: edge (i, j) exists when
    the block ``sequence[i:j]`` fits the capacity and weighs that block's route cost.

    Returns:
        The route task lists and the total cost

    Raises:
        SplitError: When a single task exceeds the capacity or no finite split exists
    """
    table: TaskTable = view.table
    rows = view.matrix.rows
    depot, capacity = view.depot, view.capacity
    entry, exit_, serve, demand = table.entry, table.exit, table.serve, table.demand
    n = len(sequence)
    for ref in sequence:
        if demand[ref] > capacity:
            raise SplitError(f"task {ref} demand {demand[ref]} exceeds capacity {capacity}")

    best = [UNREACHABLE] * (n + 1)
    pred = [-1] * (n + 1)
    best[0] = 0
    for i in range(n):
        if best[i] == UNREACHABLE:
            continue
        load = 0
        first = sequence[i]
        cost = rows[depot][entry[first]]
        previous_exit = None
        for j in range(i, n):
            ref = sequence[j]
            load += demand[ref]
            if load > capacity:
                break
            if previous_exit is not None:
                cost += rows[previous_exit][entry[ref]]
            cost += serve[ref]
            previous_exit = exit_[ref]
            candidate = best[i] + cost + rows[previous_exit][depot]
            if candidate < best[j + 1]:
                best[j + 1] = candidate
                pred[j + 1] = i
    if best[n] == UNREACHABLE:
        raise SplitError("no split with finite cost exists")

    routes: List[Tuple[int, ...]] = []
    j = n
    while j > 0:
        i = pred[j]
        routes.append(tuple(sequence[i:j]))
        j = i
    routes.reverse()
    return routes, best[n]


def ulusoy_split(sequence: Sequence[int], view) -> Solution:
    """Split a task sequence into capacity-feasible depot routes at minimum cost."""
    routes, _ = split_with_cost(sequence, view)
    depot = view.depot
    return Solution(tuple(Route(depot, tasks, depot) for tasks in routes))


def _yield_ratio(table: TaskTable, ref: int) -> float:
    serve = table.serve[ref]
    return table.demand[ref] / serve if serve else float(table.demand[ref])


def path_scanning(
    view, rule: ScanRule, rng: Optional[np.random.Generator] = None
) -> Solution:
    """Greedy nearest-task construction with one of the five classic tie-breaking rules.

    Each task is approached in the direction with the cheaper approach leg (lower entry
    vertex on ties). Residual ties after the rule go to the lowest task id, or to a random
    candidate when ``rng`` is given.

    Raises:
        InfeasibleError: When a task cannot be reached from the depot
        SplitError: When a task's demand exceeds the capacity
    """
    rule = ScanRule(rule)
    table: TaskTable = view.table
    rows = view.matrix.rows
    depot, capacity = view.depot, view.capacity
    remaining = set(table.task_ids)
    routes: List[Route] = []

    while remaining:
        load = 0
        position = depot
        tasks: List[int] = []
        while True:
            nearest_cost = UNREACHABLE
            nearest: List[int] = []
            for task_id in sorted(remaining):
                if load + table.demand[task_id] > capacity:
                    continue
                approach, _, ref = min(
                    (rows[position][table.entry[r]], table.entry[r], r)
                    for r in table.directions(task_id)
                )
                if approach < nearest_cost:
                    nearest_cost, nearest = approach, [ref]
                elif approach == nearest_cost and approach != UNREACHABLE:
                    nearest.append(ref)
            if not nearest:
                if any(load + table.demand[t] <= capacity for t in remaining):
                    raise InfeasibleError("remaining tasks are unreachable")
                break
            chosen = _apply_rule(rule, nearest, table, rows, depot, load, capacity, rng)
            tasks.append(chosen)
            load += table.demand[chosen]
            position = table.exit[chosen]
            remaining.discard(abs(chosen))
        if not tasks:
            worst = max(remaining, key=lambda t: table.demand[t])
            raise SplitError(f"task {worst} demand {table.demand[worst]} exceeds capacity")
        routes.append(Route(depot, tuple(tasks), depot))
    return Solution(tuple(routes))


def _apply_rule(rule, candidates, table, rows, depot, load, capacity, rng) -> int:
    if len(candidates) == 1:
        return candidates[0]
    if rule is ScanRule.HALF_LOAD:
        rule = ScanRule.MAX_RETURN if load < capacity / 2 else ScanRule.MIN_RETURN
    if rule in (ScanRule.MAX_RETURN, ScanRule.MIN_RETURN):
        scores = [rows[table.exit[ref]][depot] for ref in candidates]
    else:
        scores = [_yield_ratio(table, ref) for ref in candidates]
    target = max(scores) if rule in (ScanRule.MAX_RETURN, ScanRule.MAX_YIELD) else min(scores)
    tied = [ref for ref, score in zip(candidates, scores) if score == target]
    if rng is not None and len(tied) > 1:
        return tied[int(rng.integers(len(tied)))]
    return min(tied, key=abs)
