#!/usr/bin/env python3

"""Solutions, route-cost evaluation and feasibility checks for DCARP instances.

A route is ``(start, tasks, end)`` where ``tasks`` holds directed task references: for a real
task the signed arc id of the direction it is served in (``+e`` or ``-e``), for a virtual task
its positive virtual id. Evaluation always uses the stored direction.

Closed arcs only affect deadheading, through the cost matrix. A task on a CLOSED arc stays
servable at its base serving cost; only an unreachable deadheading leg makes a route infeasible.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from src.helpers.errors import InfeasibleError, InstanceFormatError, IntegrityError
from src.helpers.net_model import (
    UNREACHABLE,
    CostMatrix,
    OutsideVehicle,
    ParsedInstance,
    RoadNetwork,
    parse_instance,
    refresh_costs,
    serialize_instance,
    shortest_deadhead_matrix,
)

VIRTUAL_PREFIX = "v"


@dataclass(frozen=True)
class Task:
    """One service obligation.

    ``entry``/``exit`` describe the canonical direction; real tasks may also be served in
    the twin direction (exit -> entry). Virtual tasks are served depot -> stop only.
    """

    id: int
    entry: int
    exit: int
    sc: int
    dm: int
    is_virtual: bool = False
    owner: Optional[int] = None

    def references(self) -> Tuple[int, ...]:
        """Directed references that serve this task."""
        return (self.id,) if self.is_virtual else (self.id, -self.id)


class TaskTable:
    """Flat lookup tables keyed by directed task reference.

    Every evaluator works on these dicts, so a route is costed without touching the
    network objects.
    """

    def __init__(self, tasks: Iterable[Task]):
        self.tasks: Dict[int, Task] = {}
        self.entry: Dict[int, int] = {}
        self.exit: Dict[int, int] = {}
        self.serve: Dict[int, int] = {}
        self.demand: Dict[int, int] = {}
        for task in tasks:
            self.tasks[task.id] = task
            self.entry[task.id] = task.entry
            self.exit[task.id] = task.exit
            self.serve[task.id] = task.sc
            self.demand[task.id] = task.dm
            if not task.is_virtual:
                self.entry[-task.id] = task.exit
                self.exit[-task.id] = task.entry
                self.serve[-task.id] = task.sc
                self.demand[-task.id] = task.dm

    def __contains__(self, ref: int) -> bool:
        return ref in self.entry

    def __len__(self) -> int:
        return len(self.tasks)

    @staticmethod
    def identity(ref: int) -> int:
        """Task id of a directed reference (twins share one identity)."""
        return abs(ref)

    def is_virtual(self, ref: int) -> bool:
        return self.tasks[abs(ref)].is_virtual

    def directions(self, ref: int) -> Tuple[int, ...]:
        return self.tasks[abs(ref)].references()

    @property
    def task_ids(self) -> List[int]:
        return sorted(self.tasks)


@dataclass(frozen=True)
class Route:
    """A vehicle route ``(start, t1 ... tl, end)``; ``end`` is always the depot."""

    start: int
    tasks: Tuple[int, ...]
    end: int

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))

    def __len__(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True)
class Solution:
    """Ordered routes; the first N_ov routes belong to the outside vehicles, in order."""

    routes: Tuple[Route, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))

    @property
    def task_count(self) -> int:
        return sum(len(route) for route in self.routes)

    def signature(self) -> Tuple[Tuple[int, ...], ...]:
        """Route multiset, used to detect duplicate phenotypes."""
        return tuple(sorted((r.start, *r.tasks) for r in self.routes))


@dataclass(frozen=True, eq=False)
class DcarpInstance:
    """A frozen DCARP problem state I_m.

    The unserved task set is every edge of the network with positive demand.
    """

    network: RoadNetwork
    matrix: CostMatrix
    outside_vehicles: Tuple[OutsideVehicle, ...] = ()
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "outside_vehicles", tuple(self.outside_vehicles))
        capacity = self.network.capacity
        if len(self.outside_vehicles) > self.network.vehicles:
            raise IntegrityError("more outside vehicles than the fleet size")
        for k, vehicle in enumerate(self.outside_vehicles):
            if not 0 <= vehicle.remaining <= capacity:
                raise IntegrityError(f"outside vehicle {k} has remaining capacity out of range")
        depot = self.network.depot
        for edge_id in self.network.tasks:
            arc = self.network.edge(edge_id)
            for v in (arc.entry, arc.exit):
                if not (self.matrix.reachable(depot, v) and self.matrix.reachable(v, depot)):
                    raise IntegrityError(f"task {edge_id} endpoint {v} unreachable from depot")

    @classmethod
    def from_network(
        cls,
        network: RoadNetwork,
        outside_vehicles: Sequence[OutsideVehicle] = (),
        index: int = 0,
        matrix: Optional[CostMatrix] = None,
    ) -> "DcarpInstance":
        if matrix is None:
            matrix = shortest_deadhead_matrix(network)
        else:
            matrix = refresh_costs(network, matrix)
        return cls(network, matrix, tuple(outside_vehicles), index)

    @classmethod
    def from_parsed(cls, parsed: ParsedInstance) -> "DcarpInstance":
        return cls.from_network(parsed.network, parsed.outside_vehicles, parsed.index)

    @classmethod
    def from_text(cls, text: str) -> "DcarpInstance":
        return cls.from_parsed(parse_instance(text))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DcarpInstance":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        return serialize_instance(self.network, self.outside_vehicles, self.index)

    @property
    def depot(self) -> int:
        return self.network.depot

    @property
    def capacity(self) -> int:
        return self.network.capacity

    @property
    def vehicles(self) -> int:
        return self.network.vehicles

    @cached_property
    def tasks(self) -> Dict[int, Task]:
        tasks = {}
        for edge_id in self.network.tasks:
            arc = self.network.edge(edge_id)
            tasks[edge_id] = Task(edge_id, arc.entry, arc.exit, arc.serving_cost, arc.dm)
        return tasks

    @cached_property
    def table(self) -> TaskTable:
        return TaskTable(self.tasks.values())

    def without_outside_vehicles(self) -> "DcarpInstance":
        """Same network and tasks, every vehicle at the depot."""
        return DcarpInstance(self.network, self.matrix, (), self.index)


# ---------------------------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------------------------


def sequence_cost(
    rows: Sequence[Sequence[float]], table: TaskTable, start: int, refs: Sequence[int], end: int
) -> float:
    """Route cost without error reporting; an unreachable leg makes the total UNREACHABLE."""
    entry, exit_, serve = table.entry, table.exit, table.serve
    position = start
    cost = 0
    for ref in refs:
        cost += rows[position][entry[ref]] + serve[ref]
        position = exit_[ref]
    return cost + rows[position][end]


def route_cost(route: Route, problem) -> float:
    """Cost of ``route`` on a DcarpInstance or StaticView.

    Raises:
        InfeasibleError: When a deadheading leg is unreachable
    """
    rows, table = problem.matrix.rows, problem.table
    position = route.start
    cost = 0
    for ref in route.tasks:
        if ref not in table:
            raise IntegrityError(f"route references unknown task {format_ref(ref, table)}")
        leg = rows[position][table.entry[ref]]
        if leg == UNREACHABLE:
            raise InfeasibleError(f"unreachable leg {position} -> {table.entry[ref]}")
        cost += leg + table.serve[ref]
        position = table.exit[ref]
    leg = rows[position][route.end]
    if leg == UNREACHABLE:
        raise InfeasibleError(f"unreachable leg {position} -> {route.end}")
    return cost + leg


def total_cost(solution: Solution, problem) -> float:
    """Total cost: the sum of route costs."""
    return sum(route_cost(route, problem) for route in solution.routes)


def route_demand(route: Route, table: TaskTable) -> int:
    return sum(table.demand[ref] for ref in route.tasks)


class ViolationKind(str, Enum):
    MISSING_TASK = "missing task"
    DUPLICATED_TASK = "duplicated task"
    UNKNOWN_TASK = "unknown task"
    OUTSIDE_CAPACITY = "outside capacity"
    DEPOT_CAPACITY = "depot capacity"
    UNREACHABLE_LEG = "unreachable leg"
    BAD_ENDPOINT = "bad endpoint"
    MISSING_OUTSIDE_ROUTE = "missing outside route"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    route: Optional[int] = None
    vehicle: Optional[int] = None


@dataclass
class FeasibilityReport:
    """Violations found by ``check_feasibility``; empty means feasible."""

    violations: List[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.feasible

    def __len__(self) -> int:
        return len(self.violations)

    def of_kind(self, kind: ViolationKind) -> List[Violation]:
        return [v for v in self.violations if v.kind is kind]

    def add(self, kind: ViolationKind, message: str, route=None, vehicle=None) -> None:
        self.violations.append(Violation(kind, message, route, vehicle))


def check_feasibility(solution: Solution, problem) -> FeasibilityReport:
    """List every constraint violation of ``solution`` on ``problem``."""
    report = FeasibilityReport()
    table, rows = problem.table, problem.matrix.rows
    depot, capacity = problem.depot, problem.capacity
    outside: Sequence[OutsideVehicle] = problem.outside_vehicles

    if len(solution.routes) < len(outside):
        for k in range(len(solution.routes), len(outside)):
            report.add(ViolationKind.MISSING_OUTSIDE_ROUTE, f"no route for vehicle {k}", vehicle=k)

    counts: Dict[int, int] = {}
    for index, route in enumerate(solution.routes):
        is_outside = index < len(outside)
        expected_start = outside[index].stop if is_outside else depot
        limit = outside[index].remaining if is_outside else capacity
        if route.start != expected_start or route.end != depot:
            report.add(
                ViolationKind.BAD_ENDPOINT,
                f"route {index} runs {route.start}->{route.end}, "
                f"expected {expected_start}->{depot}",
                route=index,
            )
        load = 0
        position = route.start
        for ref in route.tasks:
            if ref not in table:
                report.add(ViolationKind.UNKNOWN_TASK, f"route {index} serves unknown {ref}", index)
                continue
            counts[abs(ref)] = counts.get(abs(ref), 0) + 1
            load += table.demand[ref]
            if rows[position][table.entry[ref]] == UNREACHABLE:
                report.add(
                    ViolationKind.UNREACHABLE_LEG,
                    f"route {index}: {position} -> {table.entry[ref]} unreachable",
                    index,
                )
            position = table.exit[ref]
        if rows[position][route.end] == UNREACHABLE:
            report.add(
                ViolationKind.UNREACHABLE_LEG, f"route {index}: {position} -> {route.end}", index
            )
        if load > limit:
            if is_outside:
                report.add(
                    ViolationKind.OUTSIDE_CAPACITY,
                    f"vehicle {index} carries {load} > remaining {limit}",
                    route=index,
                    vehicle=index,
                )
            else:
                report.add(
                    ViolationKind.DEPOT_CAPACITY, f"route {index} carries {load} > {limit}", index
                )

    for task_id in table.task_ids:
        seen = counts.get(task_id, 0)
        if seen == 0:
            report.add(ViolationKind.MISSING_TASK, f"task {task_id} is not served")
        elif seen > 1:
            report.add(ViolationKind.DUPLICATED_TASK, f"task {task_id} served {seen} times")
    return report


# ---------------------------------------------------------------------------------------------
# text form
# ---------------------------------------------------------------------------------------------


def format_ref(ref: int, table: Optional[TaskTable] = None) -> str:
    if table is not None and ref in table and table.is_virtual(ref):
        return f"{VIRTUAL_PREFIX}{ref}"
    return str(ref)


def format_solution(solution: Solution, table: Optional[TaskTable] = None) -> str:
    """One route per line: ``start | a1 a2 ... | depot``."""
    lines = []
    for route in solution.routes:
        refs = " ".join(format_ref(ref, table) for ref in route.tasks)
        lines.append(f"{route.start} | {refs} | {route.end}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_solution(text: str) -> Solution:
    """Inverse of ``format_solution``; ``v``-prefixed ids parse as virtual refs."""
    routes = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3:
            raise InstanceFormatError("solution lines are 'start | tasks | depot'", line_number)
        try:
            refs = tuple(int(tok.lstrip(VIRTUAL_PREFIX)) for tok in parts[1].split())
            routes.append(Route(int(parts[0]), refs, int(parts[2])))
        except ValueError:
            raise InstanceFormatError(f"bad solution line {line!r}", line_number) from None
    return Solution(tuple(routes))


def solution_from_lists(
    routes: Iterable[Sequence[int]], depot: int, starts: Optional[Mapping[int, int]] = None
) -> Solution:
    """Depot routes from plain task lists; ``starts`` overrides start vertices by index."""
    starts = starts or {}
    return Solution(
        tuple(Route(starts.get(i, depot), tuple(tasks), depot) for i, tasks in enumerate(routes))
    )
