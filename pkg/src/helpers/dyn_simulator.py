#!/usr/bin/env python3

"""Service simulator: execute a schedule, freeze it at a random instant, fire dynamic events.

Time runs at unit speed, so one cost unit takes one time unit. Outside vehicles resume their
routes at t=0, depot routes queue cheapest-first behind at most ``vehicles`` concurrent
vehicles. At the stop instant every active vehicle completes the arc it is on (serving or
deadheading) and halts at that arc's end vertex.

Events, in order: vehicle breakdowns, then the cost changer over every edge (closure,
congestion, reopening, recovery, worsening, easing), then the demand changer (demand
increase on tasks, new demand on served or non-required edges).
"""

import heapq
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Set, Tuple

import numpy as np

from src.helpers.errors import ConfigError, InfeasibleError, ScenarioComplete
from src.helpers.logger import default_logger as logger
from src.helpers.net_model import OutsideVehicle, RoadNetwork, TrafficState
from src.helpers.routing_core import DcarpInstance, Route, Solution, route_cost
from src.helpers.seeding import make_rng


class ServiceMode(str, Enum):
    """What vehicles do with their load."""

    COLLECTION = "collection"
    DELIVERY = "delivery"


CAPACITY_BANDS: Dict[str, Tuple[float, float]] = {
    "low": (0.0, 0.33),
    "medium": (0.34, 0.66),
    "high": (0.67, 1.0),
}
PROBABILITIES = ("p_event", "p_road", "p_bdrr", "p_crr", "p_crbb", "p_icd", "p_add")


@dataclass(frozen=True)
class EventConfig:
    """Probabilities and magnitudes of the dynamic events."""

    p_event: float = 0.5
    p_road: float = 0.1
    p_bdrr: float = 0.5
    p_crr: float = 0.3
    p_crbb: float = 0.6
    p_icd: float = 0.35
    p_add: float = 0.35
    n_break: int = 0
    mode: ServiceMode = ServiceMode.COLLECTION
    congestion: Tuple[float, float] = (0.1, 1.0)
    demand: Tuple[float, float] = (0.1, 0.5)
    seed: Optional[int] = None
    capacity_band: Optional[str] = None
    max_band_retries: int = 200

    def __post_init__(self):
        object.__setattr__(self, "mode", ServiceMode(self.mode))
        object.__setattr__(self, "congestion", tuple(self.congestion))
        object.__setattr__(self, "demand", tuple(self.demand))
        for name in PROBABILITIES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.n_break < 0:
            raise ConfigError("n_break must be nonnegative")
        for name in ("congestion", "demand"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise ConfigError(f"{name} bounds must satisfy 0 < low <= high")
        if self.capacity_band not in (None, *CAPACITY_BANDS):
            raise ConfigError(f"unknown capacity band {self.capacity_band!r}")

    @classmethod
    def quiet(cls, **overrides) -> "EventConfig":
        """All event probabilities zero: steps only remove served tasks."""
        values = {name: 0.0 for name in PROBABILITIES}
        values.update(overrides)
        return cls(**values)


class VehicleStatus(str, Enum):
    QUEUED = "queued"
    ACTIVE = "active"
    RETURNED = "returned"


@dataclass
class VehicleState:
    """One vehicle's progress on the route it was dispatched with."""

    route_index: int
    position: int
    remaining: int
    status: VehicleStatus = VehicleStatus.QUEUED
    dispatched_at: Optional[float] = None
    elapsed: float = 0.0
    last_arc: Optional[int] = None
    served: List[int] = field(default_factory=list)


@dataclass
class ExecutionState:
    """A solution frozen at ``clock``."""

    instance: DcarpInstance
    solution: Solution
    clock: float
    makespan: float
    vehicles: List[VehicleState]
    served: Set[int] = field(default_factory=set)
    queue: List[int] = field(default_factory=list)

    @property
    def active(self) -> List[VehicleState]:
        return [v for v in self.vehicles if v.status is VehicleStatus.ACTIVE]

    def halted(self) -> List[VehicleState]:
        """Active vehicles that become outside vehicles (a fresh vehicle at the depot does not)."""
        depot, capacity = self.instance.depot, self.instance.capacity
        return [
            v for v in self.active if not (v.position == depot and v.remaining == capacity)
        ]


# ---------------------------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------------------------


def _segments(route: Route, instance: DcarpInstance) -> Iterator[Tuple[int, float, bool]]:
    """(arc id, duration, is service) along ``route``, deadheading on shortest paths."""
    network, matrix = instance.network, instance.matrix

    def deadhead(a: int, b: int) -> Iterator[Tuple[int, float, bool]]:
        path = matrix.path(a, b)
        for x, y in zip(path, path[1:]):
            arc_id = network.traversal_arc(x, y)
            yield arc_id, network.arc(arc_id).dc, False

    position = route.start
    for ref in route.tasks:
        arc = network.arc(ref)
        yield from deadhead(position, arc.entry)
        yield ref, arc.serving_cost, True
        position = arc.exit
    yield from deadhead(position, route.end)


def _dispatch_times(solution: Solution, instance: DcarpInstance) -> Dict[int, float]:
    """Start time of every route: outside routes at 0, depot routes cheapest-first."""
    outside = len(instance.outside_vehicles)
    starts: Dict[int, float] = {}
    slots: List[float] = []
    for index in range(min(outside, len(solution.routes))):
        starts[index] = 0.0
        slots.append(route_cost(solution.routes[index], instance))
    slots.extend([0.0] * max(0, instance.vehicles - outside))
    heapq.heapify(slots)
    depot_routes = [
        (route_cost(route, instance), index)
        for index, route in enumerate(solution.routes)
        if index >= outside and route.tasks
    ]
    for cost, index in sorted(depot_routes):
        start = heapq.heappop(slots)
        starts[index] = start
        heapq.heappush(slots, start + cost)
    return starts


def makespan(solution: Solution, instance: DcarpInstance) -> float:
    """Time at which the last vehicle is back at the depot."""
    starts = _dispatch_times(solution, instance)
    return max(
        (start + route_cost(solution.routes[index], instance) for index, start in starts.items()),
        default=0.0,
    )


def execute_until(solution: Solution, instance: DcarpInstance, stop_time: float) -> ExecutionState:
    """Execute ``solution`` on ``instance`` and freeze it at ``stop_time``.

    Arcs started strictly before the stop instant are completed; ``stop_time`` beyond the
    makespan is clamped, leaving every task served.
    """
    horizon = makespan(solution, instance)
    if stop_time > horizon:
        logger.warning(f"stop time {stop_time} clamped to makespan {horizon}")
        stop_time = horizon
    finished = stop_time >= horizon
    starts = _dispatch_times(solution, instance)
    table = instance.table
    outside = instance.outside_vehicles
    state = ExecutionState(instance, solution, stop_time, horizon, [])

    for index, route in enumerate(solution.routes):
        if index not in starts:
            continue
        is_outside = index < len(outside)
        vehicle = VehicleState(
            route_index=index,
            position=route.start,
            remaining=outside[index].remaining if is_outside else instance.capacity,
            last_arc=outside[index].last_arc if is_outside else None,
        )
        start = starts[index]
        if not is_outside and start >= stop_time and not finished:
            state.queue.append(index)
            state.vehicles.append(vehicle)
            continue
        vehicle.status = VehicleStatus.ACTIVE
        vehicle.dispatched_at = start
        t = start
        complete = True
        for arc_id, duration, serves in _segments(route, instance):
            if t >= stop_time and not finished:
                complete = False
                break
            t += duration
            vehicle.position = instance.network.arc(arc_id).exit
            vehicle.last_arc = arc_id
            if serves:
                vehicle.served.append(abs(arc_id))
                vehicle.remaining -= table.demand[arc_id]
                state.served.add(abs(arc_id))
        vehicle.elapsed = t - start
        if complete:
            vehicle.status = VehicleStatus.RETURNED
        state.vehicles.append(vehicle)
    return state


def sample_stop_time(horizon: float, rng: np.random.Generator) -> float:
    """Uniform stop instant on the open interval (0, horizon).

    Raises:
        InfeasibleError: When the makespan is zero
    """
    if horizon <= 0:
        raise InfeasibleError("makespan is zero, nothing to interrupt")
    while True:
        value = float(rng.uniform(0.0, horizon))
        if value > 0.0:
            return value


# ---------------------------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------------------------


def _reachable_from_depot(network: RoadNetwork) -> Set[int]:
    adjacency = network.open_neighbours()
    seen = {network.depot}
    frontier = deque([network.depot])
    while frontier:
        v = frontier.popleft()
        for w in adjacency[v]:
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen


def _connected(network: RoadNetwork, required: Set[int]) -> bool:
    """Whether every required vertex shares the depot's component over open arcs."""
    return required <= _reachable_from_depot(network)


def _required_vertices(network: RoadNetwork, stops: List[int]) -> Set[int]:
    required = set(stops)
    for edge_id in network.tasks:
        arc = network.edge(edge_id)
        required.update((arc.entry, arc.exit))
    return required


def _delta(base: int, bounds: Tuple[float, float], rng: np.random.Generator) -> int:
    return max(1, int(round(rng.uniform(*bounds) * base)))


def _change_costs(
    network: RoadNetwork,
    stops: List[int],
    config: EventConfig,
    rng: np.random.Generator,
    counts: Counter,
) -> RoadNetwork:
    for edge_id in network.edge_ids:
        if rng.random() >= config.p_event:
            continue
        arc = network.edge(edge_id)
        if arc.state is TrafficState.NORMAL:
            if rng.random() < config.p_road:
                closed = network.with_edges({edge_id: {"dc": None, "state": TrafficState.CLOSED}})
                if _connected(closed, _required_vertices(closed, stops)):
                    network = closed
                    counts["closure"] += 1
                else:
                    # a rejected closure leaves the arc NORMAL
                    logger.warning(f"closure of edge {edge_id} would disconnect the depot, skipped")
                    counts["closure_skipped"] += 1
            else:
                c = _delta(arc.base_dc, config.congestion, rng)
                network = network.with_edges(
                    {edge_id: {"dc": arc.base_dc + c, "state": TrafficState.CONGESTED}}
                )
                counts["congestion"] += 1
        elif arc.state is TrafficState.CLOSED:
            if rng.random() < config.p_bdrr:
                network = network.with_edges(
                    {edge_id: {"dc": arc.base_dc, "state": TrafficState.NORMAL}}
                )
                counts["reopen"] += 1
        elif rng.random() < config.p_crr:
            network = network.with_edges(
                {edge_id: {"dc": arc.base_dc, "state": TrafficState.NORMAL}}
            )
            counts["recover"] += 1
        else:
            c = _delta(arc.base_dc, config.congestion, rng)
            if rng.random() < config.p_crbb:
                network = network.with_edges({edge_id: {"dc": arc.dc + c}})
                counts["worsen"] += 1
            else:
                eased = max(arc.base_dc, arc.dc - c)
                state = TrafficState.NORMAL if eased == arc.base_dc else TrafficState.CONGESTED
                network = network.with_edges({edge_id: {"dc": eased, "state": state}})
                counts["ease"] += 1
    return network


def _change_demands(
    network: RoadNetwork, config: EventConfig, rng: np.random.Generator, counts: Counter
) -> RoadNetwork:
    capacity = network.capacity
    reachable = _reachable_from_depot(network)
    updates: Dict[int, Dict[str, object]] = {}
    for edge_id in network.edge_ids:
        arc = network.edge(edge_id)
        if arc.dm > 0:
            if rng.random() < config.p_icd:
                d = _delta(capacity, config.demand, rng)
                updates[edge_id] = {"dm": min(capacity, arc.dm + d)}
                counts["demand_increase"] += 1
        elif rng.random() < config.p_add:
            d = _delta(capacity, config.demand, rng)
            if arc.entry in reachable and arc.exit in reachable:
                updates[edge_id] = {"dm": min(capacity, d)}
                counts["new_task"] += 1
    return network.with_edges(updates)


def simulate_events(
    state: ExecutionState,
    network: RoadNetwork,
    config: EventConfig,
    rng: np.random.Generator,
) -> Tuple[DcarpInstance, Counter]:
    """``apply_events`` that also returns how often each event fired."""
    instance = state.instance
    capacity = instance.capacity
    counts: Counter = Counter()
    network = network.with_edges({edge_id: {"dm": 0} for edge_id in sorted(state.served)})

    halted = state.halted()
    broken: Set[int] = set()
    n_break = min(config.n_break, len(halted))
    if n_break:
        picks = rng.choice(len(halted), size=n_break, replace=False)
        for pick in sorted(int(p) for p in picks):
            vehicle = halted[pick]
            broken.add(vehicle.route_index)
            counts["breakdown"] += 1
            load = capacity - vehicle.remaining
            if config.mode is ServiceMode.COLLECTION and vehicle.last_arc is not None and load:
                edge = network.edge(vehicle.last_arc)
                network = network.with_edges(
                    {edge.edge: {"dm": min(capacity, edge.dm + load)}}
                )
    survivors = [v for v in halted if v.route_index not in broken]
    stops = [v.position for v in survivors]

    network = _change_costs(network, stops, config, rng, counts)
    network = _change_demands(network, config, rng, counts)

    outside = tuple(
        OutsideVehicle(v.position, v.remaining, v.route_index, v.last_arc) for v in survivors
    )
    successor = DcarpInstance.from_network(network, outside, instance.index + 1, instance.matrix)
    return successor, counts


def apply_events(
    state: ExecutionState,
    network: RoadNetwork,
    config: EventConfig,
    rng: np.random.Generator,
) -> DcarpInstance:
    """Fire breakdowns, cost changes and demand changes; emit the next instance."""
    successor, counts = simulate_events(state, network, config, rng)
    summary = ", ".join(f"{name}={counts[name]}" for name in sorted(counts)) or "none"
    logger.info(
        f"instance {successor.index}: {len(successor.network.tasks)} tasks, "
        f"{len(successor.outside_vehicles)} outside vehicles, events: {summary}"
    )
    return successor


def _in_band(state: ExecutionState, band: str) -> bool:
    low, high = CAPACITY_BANDS[band]
    capacity = state.instance.capacity
    halted = state.halted()
    return bool(halted) and all(
        low * capacity <= v.remaining <= high * capacity for v in halted
    )


def step_scenario(
    instance: DcarpInstance,
    best_solution: Solution,
    config: EventConfig,
    rng: Optional[np.random.Generator] = None,
) -> DcarpInstance:
    """Execute the best solution, interrupt it at a random instant and apply events.

    With a capacity band configured, stop instants are redrawn until every halted vehicle's
    remaining capacity falls inside the band.

    Raises:
        ScenarioComplete: When ``instance`` has no task left
    """
    if not instance.network.tasks:
        raise ScenarioComplete(f"instance {instance.index} has no tasks left")
    rng = rng if rng is not None else make_rng(config.seed)
    horizon = makespan(best_solution, instance)
    state = execute_until(best_solution, instance, sample_stop_time(horizon, rng))
    if config.capacity_band is not None:
        attempts = 1
        while not _in_band(state, config.capacity_band) and attempts < config.max_band_retries:
            state = execute_until(best_solution, instance, sample_stop_time(horizon, rng))
            attempts += 1
        if not _in_band(state, config.capacity_band):
            logger.warning(
                f"no stop instant within {config.max_band_retries} draws puts every vehicle "
                f"in the {config.capacity_band} capacity band"
            )
    logger.debug(
        f"instance {instance.index}: stopped at {state.clock:.1f} of {horizon}, "
        f"{len(state.served)} tasks served"
    )
    return apply_events(state, instance.network, config, rng)
