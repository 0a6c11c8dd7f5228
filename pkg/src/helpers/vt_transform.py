#!/usr/bin/env python3

"""Virtual-task transformation from a DCARP instance to a static CARP view.

Each outside vehicle k parked at ``v_k`` with remaining capacity ``q_k`` becomes a virtual
task served depot -> ``v_k`` with demand ``Q - q_k`` and serving cost ``mdc(depot, v_k)``.
Virtual tasks exist only in the task table; the road network never gets an arc for them, so
no deadheading path can use one. A static solver then sees every vehicle at the depot with
full capacity, and the constant ``A = sum_k mdc(depot, v_k)`` is subtracted from its cost.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, List, Tuple

from src.helpers.errors import InfeasibleError, IntegrityError
from src.helpers.net_model import CostMatrix, OutsideVehicle, UNREACHABLE
from src.helpers.routing_core import DcarpInstance, Route, Solution, Task, TaskTable, total_cost


@dataclass(frozen=True, eq=False)
class StaticView:
    """The virtual-task-augmented instance handed to static solvers."""

    instance: DcarpInstance
    virtual_tasks: Tuple[Task, ...]
    adjustment: int

    # All vehicles start at the depot with capacity Q in the static view.
    outside_vehicles: Tuple[OutsideVehicle, ...] = ()

    @property
    def matrix(self) -> CostMatrix:
        return self.instance.matrix

    @property
    def depot(self) -> int:
        return self.instance.depot

    @property
    def capacity(self) -> int:
        return self.instance.capacity

    @property
    def vehicles(self) -> int:
        return self.instance.vehicles

    @cached_property
    def table(self) -> TaskTable:
        return TaskTable([*self.instance.tasks.values(), *self.virtual_tasks])

    @cached_property
    def virtual_ids(self) -> FrozenSet[int]:
        return frozenset(task.id for task in self.virtual_tasks)

    @cached_property
    def owners(self) -> Dict[int, int]:
        """Virtual task id -> outside vehicle index."""
        return {task.id: task.owner for task in self.virtual_tasks}

    def virtual_task_of(self, vehicle: int) -> Task:
        return self.virtual_tasks[vehicle]

    @property
    def task_count(self) -> int:
        return len(self.table)


def virtual_task_base(instance: DcarpInstance) -> int:
    """First virtual id: above every edge id so real and virtual refs never collide."""
    return max(instance.network.edge_ids, default=0) + 1


def build_static_view(instance: DcarpInstance) -> StaticView:
    """Construct one virtual task per outside vehicle.

    Raises:
        InfeasibleError: When an outside vehicle's stop vertex is unreachable from the depot
    """
    depot, capacity = instance.depot, instance.capacity
    base = virtual_task_base(instance)
    virtual: List[Task] = []
    adjustment = 0
    for k, vehicle in enumerate(instance.outside_vehicles):
        to_stop = instance.matrix.mdc(depot, vehicle.stop)
        if to_stop == UNREACHABLE or instance.matrix.mdc(vehicle.stop, depot) == UNREACHABLE:
            raise InfeasibleError(
                f"outside vehicle {k} stop {vehicle.stop} unreachable from depot"
            )
        virtual.append(
            Task(
                id=base + k,
                entry=depot,
                exit=vehicle.stop,
                sc=to_stop,
                dm=capacity - vehicle.remaining,
                is_virtual=True,
                owner=k,
            )
        )
        adjustment += to_stop
    return StaticView(instance, tuple(virtual), adjustment)


def _check_virtual_coverage(solution: Solution, view: StaticView) -> Dict[int, int]:
    """Map each virtual id to the index of the route serving it."""
    where: Dict[int, int] = {}
    for index, route in enumerate(solution.routes):
        for ref in route.tasks:
            if ref in view.virtual_ids:
                if ref in where:
                    raise IntegrityError(f"virtual task v{ref} served by two routes")
                where[ref] = index
    missing = sorted(view.virtual_ids - set(where))
    if missing:
        names = ", ".join(f"v{vid}" for vid in missing)
        raise InfeasibleError(f"virtual tasks not served: {names}")
    return where


def adjusted_cost(solution: Solution, view: StaticView) -> float:
    """Adjusted objective ``total_cost(S) - A``.

    Raises:
        InfeasibleError: When a virtual task is missing
    """
    _check_virtual_coverage(solution, view)
    return total_cost(solution, view) - view.adjustment


def normalize_virtual_routes(solution: Solution, view: StaticView) -> Solution:
    """Split every route immediately before each non-leading virtual task.

    The piece before the split returns to the depot and the piece after starts there, so
    the total cost is unchanged (both legs meet at the depot, the virtual task's entry).
    """
    routes: List[Route] = []
    virtual = view.virtual_ids
    for route in solution.routes:
        current: List[int] = []
        start = route.start
        for ref in route.tasks:
            if ref in virtual and current:
                routes.append(Route(start, tuple(current), route.end))
                current, start = [], view.depot
            current.append(ref)
        routes.append(Route(start, tuple(current), route.end))
    return Solution(tuple(routes))


def to_executable(solution: Solution, view: StaticView) -> Solution:
    """Turn a normalized static solution into routes for the DCARP instance.

    Virtual-task routes become outside-vehicle routes from the stop vertex (ordered by
    vehicle); the other non-empty routes follow, starting at the depot.

    Raises:
        IntegrityError: When a virtual task is served twice or not at the head of a route
    """
    _check_virtual_coverage(solution, view)
    instance = view.instance
    outside: List[Route] = [None] * len(instance.outside_vehicles)  # type: ignore[list-item]
    depot_routes: List[Route] = []
    for route in solution.routes:
        leading = route.tasks[0] if route.tasks else None
        for position, ref in enumerate(route.tasks):
            if ref in view.virtual_ids and position > 0:
                raise IntegrityError(f"virtual task v{ref} is not leading its route")
        if leading is not None and leading in view.virtual_ids:
            owner = view.owners[leading]
            stop = instance.outside_vehicles[owner].stop
            outside[owner] = Route(stop, route.tasks[1:], instance.depot)
        elif route.tasks:
            depot_routes.append(Route(instance.depot, route.tasks, instance.depot))
    return Solution(tuple(outside) + tuple(depot_routes))


def executable_to_static(solution: Solution, view: StaticView) -> Solution:
    """Inverse of ``to_executable``: prefix each outside route with its virtual task."""
    instance = view.instance
    routes = []
    for index, route in enumerate(solution.routes):
        if index < len(instance.outside_vehicles):
            vid = view.virtual_task_of(index).id
            routes.append(Route(instance.depot, (vid, *route.tasks), instance.depot))
        else:
            routes.append(route)
    return Solution(tuple(routes))
