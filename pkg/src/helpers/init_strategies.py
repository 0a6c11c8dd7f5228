#!/usr/bin/env python3

"""Initialisation strategies for re-optimising a DCARP instance.

- ``restart``: random permutations plus path-scanning seeds, ignoring the previous schedule;
- ``transfer``: the previous best solution's surviving task order with greedy insertion of
  new tasks, re-split at the end;
- ``return_first``: the baseline that sends every outside vehicle home and solves the rest
  as a static problem.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.helpers.errors import UsageError
from src.helpers.logger import default_logger as logger
from src.helpers.routing_core import DcarpInstance, Route, Solution
from src.helpers.seeding import init_rng
from src.helpers.solvers import POPULATION_SOLVERS, SolverBudget, get_solver
from src.helpers.split_heuristics import ScanRule, path_scanning, ulusoy_split
from src.helpers.vt_transform import StaticView, build_static_view

RESTART = "restart"
TRANSFER = "transfer"
RETURN_FIRST = "return_first"
STRATEGIES = (RESTART, TRANSFER, RETURN_FIRST)

HEURISTIC_SEEDS = len(ScanRule)


def restart_init(view: StaticView, count: int, rng: np.random.Generator) -> List[Solution]:
    """``count - 5`` random permutations (at least one) split optimally, then path scanning
    under as many of the five rules as the remaining slots allow."""
    if count < 1:
        raise UsageError("restart_init needs count >= 1")
    table = view.table
    task_ids = table.task_ids
    random_count = max(1, count - HEURISTIC_SEEDS)
    population: List[Solution] = []
    for _ in range(random_count):
        order = [task_ids[int(i)] for i in rng.permutation(len(task_ids))]
        sequence = [
            ref if table.is_virtual(ref) or rng.random() < 0.5 else -ref for ref in order
        ]
        population.append(ulusoy_split(sequence, view))
    for rule in list(ScanRule)[: count - random_count]:
        population.append(path_scanning(view, rule))
    return population


def _route_sequences(solution: Solution) -> List[List[int]]:
    return [list(route.tasks) for route in solution.routes]


def sequence_transfer(prev_best: Solution, view: StaticView) -> Solution:
    """Carry the previous best task order into the new instance.

    ``prev_best`` is the executable solution that produced the instance. Tasks no longer
    required are dropped, each outside vehicle's virtual task takes the slot where its route
    resumes, and new tasks are inserted one by one (ascending id) at their cheapest position
    on the grand tour, depot at both ends. Ties go to the earliest position, then to the
    canonical direction.
    """
    table = view.table
    rows = view.matrix.rows
    depot = view.depot
    instance = view.instance

    # outside vehicles by the route index they were executing
    resumes: Dict[int, List[int]] = {}
    unplaced: List[int] = []
    for k, vehicle in enumerate(instance.outside_vehicles):
        vid = view.virtual_task_of(k).id
        if vehicle.route_index is None or vehicle.route_index >= len(prev_best.routes):
            unplaced.append(vid)
        else:
            resumes.setdefault(vehicle.route_index, []).append(vid)

    sequence: List[int] = []
    for index, tasks in enumerate(_route_sequences(prev_best)):
        sequence.extend(resumes.get(index, ()))
        sequence.extend(ref for ref in tasks if ref in table and not table.is_virtual(ref))
    sequence.extend(unplaced)

    present = {abs(ref) for ref in sequence}
    new_tasks = [t for t in table.task_ids if t not in present]
    for task_id in new_tasks:
        position, ref = _cheapest_insertion(sequence, task_id, table, rows, depot)
        sequence.insert(position, ref)
    logger.debug(
        f"transfer: kept {len(present)} refs, inserted {len(new_tasks)} new tasks"
    )
    return ulusoy_split(sequence, view)


def insertion_delta(sequence: Sequence[int], position: int, ref: int, table, rows, depot) -> float:
    """Cost increase of inserting ``ref`` before ``sequence[position]`` on the grand tour."""
    prev_exit = table.exit[sequence[position - 1]] if position > 0 else depot
    next_entry = table.entry[sequence[position]] if position < len(sequence) else depot
    return (
        rows[prev_exit][table.entry[ref]]
        + table.serve[ref]
        + rows[table.exit[ref]][next_entry]
        - rows[prev_exit][next_entry]
    )


def _cheapest_insertion(
    sequence: Sequence[int], task_id: int, table, rows, depot
) -> Tuple[int, int]:
    best: Optional[Tuple[float, int, int]] = None
    for position in range(len(sequence) + 1):
        for ref in table.directions(task_id):
            delta = insertion_delta(sequence, position, ref, table, rows, depot)
            if best is None or delta < best[0]:
                best = (delta, position, ref)
    return best[1], best[2]


def remaining_tasks_per_outside_vehicle(instance: DcarpInstance, prev_solution: Solution) -> float:
    """Average number of still-required tasks on the routes the outside vehicles were running."""
    vehicles = instance.outside_vehicles
    if not vehicles:
        return 0.0
    required = set(instance.tasks)
    total = 0
    for vehicle in vehicles:
        if vehicle.route_index is None or vehicle.route_index >= len(prev_solution.routes):
            continue
        route = prev_solution.routes[vehicle.route_index]
        total += sum(1 for ref in route.tasks if abs(ref) in required)
    return total / len(vehicles)


@dataclass
class ReturnFirstOutcome:
    """Executable return-first schedule and its cost."""

    solution: Solution
    cost: float
    evaluations: int = 0


def return_first_solve(
    instance: DcarpInstance, budget: SolverBudget, solver: str = "memetic"
) -> ReturnFirstOutcome:
    """Send every outside vehicle straight home, then solve the residue from the depot.

    The executable form keeps one empty route per outside vehicle (stop -> depot) ahead of
    the static routes, so its total cost equals the returned cost.
    """
    static = build_static_view(instance.without_outside_vehicles())
    solve = get_solver(solver)
    count = budget.population_size if solver in POPULATION_SOLVERS else 1
    init = restart_init(static, count, init_rng(budget.seed))
    outcome = solve(static, init, budget)
    homeward = sum(instance.matrix.mdc(v.stop, instance.depot) for v in instance.outside_vehicles)
    routes = [Route(v.stop, (), instance.depot) for v in instance.outside_vehicles]
    routes.extend(route for route in outcome.solution.routes if route.tasks)
    return ReturnFirstOutcome(Solution(tuple(routes)), homeward + outcome.cost, outcome.evaluations)


def return_first_cost(
    instance: DcarpInstance, budget: SolverBudget, solver: str = "memetic"
) -> float:
    """Cost of the return-first baseline on ``instance``."""
    return return_first_solve(instance, budget, solver).cost


def initial_solutions(
    strategy: str,
    view: StaticView,
    solver: str,
    budget: SolverBudget,
    previous: Optional[Solution] = None,
) -> List[Solution]:
    """Initial solutions for ``solver`` under ``strategy``.

    Population solvers get the transferred solution topped up with restart solutions;
    individual solvers get it alone. Without a previous solution transfer falls back to
    restart.
    """
    if strategy not in (RESTART, TRANSFER):
        raise UsageError(f"strategy {strategy!r} does not build initial solutions")
    rng = init_rng(budget.seed)
    count = budget.population_size if solver in POPULATION_SOLVERS else 1
    if strategy == RESTART or previous is None:
        return restart_init(view, count, rng)
    transferred = sequence_transfer(previous, view)
    if count == 1:
        return [transferred]
    return [transferred, *restart_init(view, count - 1, rng)]
