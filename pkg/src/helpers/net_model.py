#!/usr/bin/env python3

"""Road network model, dcarp-text parsing and the all-pairs deadheading closure.

Undirected benchmark edges are stored as twin arc pairs. Edge ``e`` (1-based, file order)
owns arc ``+e`` (entry ``u``, exit ``v``) and arc ``-e`` (entry ``v``, exit ``u``); both twins
always carry the same demand, costs and traffic state, and serving either direction serves
the edge's task.
"""

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.helpers.errors import InstanceFormatError
from src.helpers.logger import default_logger as logger

UNREACHABLE = math.inf


class TrafficState(str, Enum):
    """Traffic state of an arc."""

    NORMAL = "NORMAL"
    CLOSED = "CLOSED"
    CONGESTED = "CONGESTED"


@dataclass(frozen=True)
class Arc:
    """A directed arc. ``dc`` is None exactly when the arc is CLOSED."""

    id: int
    entry: int
    exit: int
    dc: Optional[int]
    sc: int
    dm: int
    base_dc: int
    state: TrafficState = TrafficState.NORMAL

    @property
    def twin(self) -> int:
        return -self.id

    @property
    def edge(self) -> int:
        return abs(self.id)

    @property
    def closed(self) -> bool:
        return self.dc is None

    @property
    def serving_cost(self) -> int:
        """Serving cost under the current traffic state.

        Congestion slows service by the same amount it slows traversal; a closed arc keeps
        its base serving cost.
        """
        if self.dc is None:
            return self.sc
        return self.sc + (self.dc - self.base_dc)


@dataclass(frozen=True)
class OutsideVehicle:
    """A vehicle halted away from the depot.

    ``route_index`` is the index of the route it was executing in the solution that produced
    the instance; ``last_arc`` is the arc it completed last (where a breakdown leaves its load).
    """

    stop: int
    remaining: int
    route_index: Optional[int] = None
    last_arc: Optional[int] = None


@dataclass(frozen=True)
class RoadNetwork:
    """Immutable road network G=(V, A) with depot, fleet size and vehicle capacity."""

    vertices: Tuple[int, ...]
    arcs: Mapping[int, Arc]
    depot: int
    vehicles: int
    capacity: int
    name: str = ""

    def __post_init__(self):
        vertex_set = set(self.vertices)
        if len(vertex_set) != len(self.vertices):
            raise InstanceFormatError("duplicate vertex ids")
        if self.depot not in vertex_set:
            raise InstanceFormatError(f"depot {self.depot} is not a vertex")
        if self.capacity <= 0:
            raise InstanceFormatError("CAPACITY must be positive")
        if self.vehicles < 1:
            raise InstanceFormatError("VEHICLES must be at least 1")
        for arc in self.arcs.values():
            if arc.entry not in vertex_set or arc.exit not in vertex_set:
                raise InstanceFormatError(f"arc {arc.id} has an endpoint outside the vertex set")
            if -arc.id not in self.arcs:
                raise InstanceFormatError(f"arc {arc.id} has no twin")

    @property
    def size(self) -> int:
        """Matrix dimension: vertex ids index the cost matrix directly."""
        return max(self.vertices) + 1

    @cached_property
    def edge_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(a for a in self.arcs if a > 0))

    def arc(self, arc_id: int) -> Arc:
        return self.arcs[arc_id]

    def edge(self, edge_id: int) -> Arc:
        """The canonical (positive) arc of an edge."""
        return self.arcs[abs(edge_id)]

    @cached_property
    def tasks(self) -> Tuple[int, ...]:
        """Edge ids with positive demand (unserved tasks)."""
        return tuple(e for e in self.edge_ids if self.arcs[e].dm > 0)

    @cached_property
    def _arc_by_endpoints(self) -> Dict[Tuple[int, int], int]:
        index: Dict[Tuple[int, int], int] = {}
        for arc_id in sorted(self.arcs, key=lambda a: (abs(a), a < 0)):
            arc = self.arcs[arc_id]
            index.setdefault((arc.entry, arc.exit), arc_id)
        return index

    @cached_property
    def _cheapest_open_arc(self) -> Dict[Tuple[int, int], int]:
        best: Dict[Tuple[int, int], int] = {}
        for arc_id in sorted(self.arcs, key=lambda a: (abs(a), a < 0)):
            arc = self.arcs[arc_id]
            if arc.dc is None:
                continue
            key = (arc.entry, arc.exit)
            if key not in best or arc.dc < self.arcs[best[key]].dc:
                best[key] = arc_id
        return best

    def find_arc(self, entry: int, exit: int) -> Optional[int]:
        """Arc id running entry -> exit, lowest edge id first."""
        return self._arc_by_endpoints.get((entry, exit))

    def traversal_arc(self, entry: int, exit: int) -> Optional[int]:
        """Cheapest open arc entry -> exit, used to replay shortest paths."""
        return self._cheapest_open_arc.get((entry, exit))

    def with_edges(self, updates: Mapping[int, Mapping[str, object]]) -> "RoadNetwork":
        """Successor network with per-edge field updates applied to both twins."""
        if not updates:
            return self
        arcs = dict(self.arcs)
        for edge_id, changes in updates.items():
            for arc_id in (edge_id, -edge_id):
                arcs[arc_id] = replace(arcs[arc_id], **changes)
        return replace(self, arcs=arcs)

    def open_neighbours(self) -> Dict[int, List[int]]:
        """Adjacency over open arcs."""
        adjacency: Dict[int, List[int]] = {v: [] for v in self.vertices}
        for arc in self.arcs.values():
            if arc.dc is not None:
                adjacency[arc.entry].append(arc.exit)
        return adjacency


def make_edge_pair(
    edge_id: int,
    u: int,
    v: int,
    dc: int,
    dm: int = 0,
    sc: Optional[int] = None,
    state: TrafficState = TrafficState.NORMAL,
    current_dc: Optional[int] = None,
) -> Dict[int, Arc]:
    """Build the twin arcs of an undirected edge."""
    if state is TrafficState.CLOSED:
        current: Optional[int] = None
    elif state is TrafficState.CONGESTED:
        current = dc if current_dc is None else current_dc
    else:
        current = dc
    serve = dc if sc is None else sc
    forward = Arc(edge_id, u, v, current, serve, dm, dc, state)
    backward = Arc(-edge_id, v, u, current, serve, dm, dc, state)
    return {edge_id: forward, -edge_id: backward}


def build_network(
    vertex_count: int,
    depot: int,
    vehicles: int,
    capacity: int,
    edges: Iterable[Sequence[int]],
    name: str = "",
    first_vertex: int = 1,
) -> RoadNetwork:
    """Build a network from ``(u, v, dc[, dm[, sc]])`` tuples, numbering edges in order."""
    arcs: Dict[int, Arc] = {}
    for edge_id, row in enumerate(edges, start=1):
        u, v, dc = row[0], row[1], row[2]
        dm = row[3] if len(row) > 3 else 0
        sc = row[4] if len(row) > 4 else None
        arcs.update(make_edge_pair(edge_id, u, v, dc, dm, sc))
    vertices = tuple(range(first_vertex, first_vertex + vertex_count))
    return RoadNetwork(vertices, arcs, depot, vehicles, capacity, name)


# ---------------------------------------------------------------------------------------------
# dcarp-text format
# ---------------------------------------------------------------------------------------------

HEADER_KEYS = (
    "NAME",
    "VERTICES",
    "DEPOT",
    "VEHICLES",
    "CAPACITY",
    "EDGES_REQUIRED",
    "EDGES_NONREQUIRED",
    "INSTANCE",
    "OUTSIDE_VEHICLES",
)
SECTION_KEYS = ("LIST_REQ", "LIST_NONREQ", "LIST_OV", "ARC_STATES")
REQUIRED_HEADERS = ("VERTICES", "DEPOT", "VEHICLES", "CAPACITY")


@dataclass(frozen=True)
class ParsedInstance:
    """Result of parsing a dcarp-text document."""

    network: RoadNetwork
    outside_vehicles: Tuple[OutsideVehicle, ...] = ()
    index: int = 0

    @property
    def tasks(self) -> Tuple[int, ...]:
        return self.network.tasks


def _int_field(token: str, what: str, line_number: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise InstanceFormatError(f"{what} is not an integer: {token!r}", line_number) from None


@dataclass
class _ParseState:
    headers: Dict[str, str] = field(default_factory=dict)
    required: List[Tuple[int, List[str]]] = field(default_factory=list)
    nonrequired: List[Tuple[int, List[str]]] = field(default_factory=list)
    outside: List[Tuple[int, List[str]]] = field(default_factory=list)
    states: List[Tuple[int, List[str]]] = field(default_factory=list)


def _split_lines(text: str) -> _ParseState:
    state = _ParseState()
    section: Optional[str] = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.upper() == "END":
            break
        if ":" in line:
            key, _, value = line.partition(":")
            key = key.strip().upper()
            if key in SECTION_KEYS:
                section = key
                continue
            if key not in HEADER_KEYS:
                raise InstanceFormatError(f"malformed header key {key!r}", line_number)
            state.headers[key] = value.strip()
            section = None
            continue
        if section is None:
            raise InstanceFormatError(f"data line outside a section: {line!r}", line_number)
        tokens = line.split()
        target = {
            "LIST_REQ": state.required,
            "LIST_NONREQ": state.nonrequired,
            "LIST_OV": state.outside,
            "ARC_STATES": state.states,
        }[section]
        target.append((line_number, tokens))
    return state


def parse_instance(text: str) -> ParsedInstance:
    """Parse a dcarp-text document.

    Args:
        text: The document contents

    Returns:
        The parsed network, outside vehicles and instance index

    Raises:
        InstanceFormatError: On any format or constraint violation
    """
    state = _split_lines(text)
    headers = state.headers
    for key in REQUIRED_HEADERS:
        if key not in headers:
            raise InstanceFormatError(f"missing header {key}")
    vertex_count = _int_field(headers["VERTICES"], "VERTICES", 0)
    depot = _int_field(headers["DEPOT"], "DEPOT", 0)
    vehicles = _int_field(headers["VEHICLES"], "VEHICLES", 0)
    capacity = _int_field(headers["CAPACITY"], "CAPACITY", 0)
    if vertex_count < 1:
        raise InstanceFormatError("VERTICES must be at least 1")
    if not 1 <= depot <= vertex_count:
        raise InstanceFormatError(f"vertex index out of range: depot {depot}")
    if capacity <= 0:
        raise InstanceFormatError("CAPACITY must be positive")
    if vehicles < 1:
        raise InstanceFormatError("VEHICLES must be at least 1")

    def vertex(token: str, line_number: int) -> int:
        value = _int_field(token, "vertex", line_number)
        if not 1 <= value <= vertex_count:
            raise InstanceFormatError(f"vertex index out of range: {value}", line_number)
        return value

    def nonnegative(token: str, what: str, line_number: int) -> int:
        value = _int_field(token, what, line_number)
        if value < 0:
            raise InstanceFormatError(f"negative {what}: {value}", line_number)
        return value

    arcs: Dict[int, Arc] = {}
    seen_pairs: Dict[frozenset, int] = {}
    edge_id = 0

    def add_edge(line_number: int, u: int, v: int, dc: int, dm: int, sc: Optional[int]):
        nonlocal edge_id
        pair = frozenset((u, v))
        if pair in seen_pairs:
            raise InstanceFormatError(f"duplicate edge ({u}, {v})", line_number)
        if sc is not None and sc < dc:
            raise InstanceFormatError(
                f"serving cost {sc} below deadheading cost {dc} on ({u}, {v})", line_number
            )
        edge_id += 1
        seen_pairs[pair] = edge_id
        arcs.update(make_edge_pair(edge_id, u, v, dc, dm, sc))

    for line_number, tokens in state.required:
        if len(tokens) not in (4, 5):
            raise InstanceFormatError("LIST_REQ lines are 'u v dc dm [sc]'", line_number)
        u, v = vertex(tokens[0], line_number), vertex(tokens[1], line_number)
        dc = nonnegative(tokens[2], "cost", line_number)
        dm = nonnegative(tokens[3], "demand", line_number)
        if dm == 0:
            raise InstanceFormatError(f"required edge ({u}, {v}) has zero demand", line_number)
        sc = nonnegative(tokens[4], "serving cost", line_number) if len(tokens) == 5 else None
        add_edge(line_number, u, v, dc, dm, sc)

    for line_number, tokens in state.nonrequired:
        if len(tokens) not in (3, 4):
            raise InstanceFormatError("LIST_NONREQ lines are 'u v dc [sc]'", line_number)
        u, v = vertex(tokens[0], line_number), vertex(tokens[1], line_number)
        dc = nonnegative(tokens[2], "cost", line_number)
        sc = nonnegative(tokens[3], "serving cost", line_number) if len(tokens) == 4 else None
        add_edge(line_number, u, v, dc, 0, sc)

    for key, found in (
        ("EDGES_REQUIRED", len(state.required)),
        ("EDGES_NONREQUIRED", len(state.nonrequired)),
    ):
        if key in headers and _int_field(headers[key], key, 0) != found:
            raise InstanceFormatError(f"{key} says {headers[key]} but {found} edges are listed")

    network = RoadNetwork(
        tuple(range(1, vertex_count + 1)), arcs, depot, vehicles, capacity, headers.get("NAME", "")
    )

    updates: Dict[int, Dict[str, object]] = {}
    for line_number, tokens in state.states:
        if len(tokens) != 4:
            raise InstanceFormatError("ARC_STATES lines are 'u v state dc_current'", line_number)
        u, v = vertex(tokens[0], line_number), vertex(tokens[1], line_number)
        arc_id = network.find_arc(u, v)
        if arc_id is None:
            raise InstanceFormatError(f"ARC_STATES names unknown edge ({u}, {v})", line_number)
        try:
            traffic = TrafficState(tokens[2].upper())
        except ValueError:
            raise InstanceFormatError(f"unknown traffic state {tokens[2]!r}", line_number) from None
        base = network.arc(arc_id).base_dc
        if traffic is TrafficState.CLOSED:
            updates[abs(arc_id)] = {"state": traffic, "dc": None}
        else:
            current = nonnegative(tokens[3], "cost", line_number)
            if current < base:
                raise InstanceFormatError(
                    f"current cost {current} below base cost {base} on ({u}, {v})", line_number
                )
            updates[abs(arc_id)] = {"state": traffic, "dc": current}
    network = network.with_edges(updates)

    outside: List[OutsideVehicle] = []
    for line_number, tokens in state.outside:
        if len(tokens) not in (2, 3, 5):
            raise InstanceFormatError(
                "LIST_OV lines are 'stop_vertex remaining_capacity [route [u v]]'", line_number
            )
        stop = vertex(tokens[0], line_number)
        remaining = nonnegative(tokens[1], "remaining capacity", line_number)
        if remaining > capacity:
            raise InstanceFormatError(
                f"remaining capacity exceeds Q ({remaining} > {capacity})", line_number
            )
        route_index = None
        if len(tokens) > 2:
            route_index = nonnegative(tokens[2], "route index", line_number)
        last_arc = None
        if len(tokens) == 5:
            last_arc = network.find_arc(
                vertex(tokens[3], line_number), vertex(tokens[4], line_number)
            )
        outside.append(OutsideVehicle(stop, remaining, route_index, last_arc))
    if "OUTSIDE_VEHICLES" in headers:
        declared = _int_field(headers["OUTSIDE_VEHICLES"], "OUTSIDE_VEHICLES", 0)
        if declared != len(outside):
            raise InstanceFormatError(
                f"OUTSIDE_VEHICLES says {declared} but {len(outside)} vehicles are listed"
            )
    if len(outside) > vehicles:
        raise InstanceFormatError("more outside vehicles than VEHICLES")

    index = _int_field(headers["INSTANCE"], "INSTANCE", 0) if "INSTANCE" in headers else 0
    logger.debug(
        f"Parsed {network.name or 'instance'}: {vertex_count} vertices, "
        f"{len(network.edge_ids)} edges, {len(network.tasks)} tasks, {len(outside)} outside"
    )
    return ParsedInstance(network, tuple(outside), index)


def serialize_instance(
    network: RoadNetwork, outside_vehicles: Sequence[OutsideVehicle] = (), index: int = 0
) -> str:
    """Render a network (and optional DCARP state) as dcarp-text.

    Raises:
        InstanceFormatError: When vertex ids are not 1..VERTICES, which the format requires
    """
    if sorted(network.vertices) != list(range(1, len(network.vertices) + 1)):
        raise InstanceFormatError(
            f"dcarp-text numbers vertices 1..n, network {network.name!r} does not"
        )
    required = [network.edge(e) for e in network.edge_ids if network.edge(e).dm > 0]
    nonrequired = [network.edge(e) for e in network.edge_ids if network.edge(e).dm == 0]
    lines = [
        f"NAME : {network.name}",
        f"VERTICES : {len(network.vertices)}",
        f"DEPOT : {network.depot}",
        f"VEHICLES : {network.vehicles}",
        f"CAPACITY : {network.capacity}",
        f"EDGES_REQUIRED : {len(required)}",
        f"EDGES_NONREQUIRED : {len(nonrequired)}",
    ]
    if index:
        lines.append(f"INSTANCE : {index}")
    lines.append("LIST_REQ :")
    for arc in required:
        row = f"{arc.entry} {arc.exit} {arc.base_dc} {arc.dm}"
        lines.append(row if arc.sc == arc.base_dc else f"{row} {arc.sc}")
    lines.append("LIST_NONREQ :")
    for arc in nonrequired:
        row = f"{arc.entry} {arc.exit} {arc.base_dc}"
        lines.append(row if arc.sc == arc.base_dc else f"{row} {arc.sc}")
    if outside_vehicles:
        lines.append(f"OUTSIDE_VEHICLES : {len(outside_vehicles)}")
        lines.append("LIST_OV :")
        for vehicle in outside_vehicles:
            row = f"{vehicle.stop} {vehicle.remaining}"
            if vehicle.route_index is not None:
                row += f" {vehicle.route_index}"
                if vehicle.last_arc is not None:
                    last = network.arc(vehicle.last_arc)
                    row += f" {last.entry} {last.exit}"
            lines.append(row)
    changed = [
        network.edge(e)
        for e in network.edge_ids
        if network.edge(e).state is not TrafficState.NORMAL
    ]
    if changed:
        lines.append("ARC_STATES :")
        for arc in changed:
            current = "-" if arc.dc is None else str(arc.dc)
            lines.append(f"{arc.entry} {arc.exit} {arc.state.value} {current}")
    lines.append("END")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------------------------
# egl conversion
# ---------------------------------------------------------------------------------------------

_EGL_EDGE = re.compile(
    r"\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*coste\s+(\d+)(?:\s+demanda\s+(\d+))?", re.IGNORECASE
)
_EGL_HEADERS = {
    "NOMBRE": "NAME",
    "VERTICES": "VERTICES",
    "ARISTAS_REQ": "EDGES_REQUIRED",
    "ARISTAS_NOREQ": "EDGES_NONREQUIRED",
    "VEHICULOS": "VEHICLES",
    "CAPACIDAD": "CAPACITY",
    "DEPOSITO": "DEPOT",
}
_EGL_IGNORED = ("COMENTARIO", "TIPO_COSTES_ARISTAS", "COSTE_TOTAL_REQ")


def convert_egl(text: str) -> str:
    """Convert an egl/gdb-style benchmark file to dcarp-text."""
    headers: Dict[str, str] = {}
    required: List[Tuple[int, int, int, int]] = []
    nonrequired: List[Tuple[int, int, int]] = []
    section: Optional[str] = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.upper() == "END":
            continue
        match = _EGL_EDGE.search(line)
        if match:
            u, v, cost = int(match.group(1)), int(match.group(2)), int(match.group(3))
            demand = int(match.group(4) or 0)
            if section == "LISTA_ARISTAS_REQ":
                required.append((u, v, cost, demand))
            elif section == "LISTA_ARISTAS_NOREQ":
                nonrequired.append((u, v, cost))
            else:
                raise InstanceFormatError("edge line outside an edge list", line_number)
            continue
        if ":" not in line:
            raise InstanceFormatError(f"unrecognised line {line!r}", line_number)
        key, _, value = line.partition(":")
        key = key.strip().upper()
        if key in ("LISTA_ARISTAS_REQ", "LISTA_ARISTAS_NOREQ"):
            section = key
        elif key in _EGL_HEADERS:
            headers[_EGL_HEADERS[key]] = value.strip()
            section = None
        elif key not in _EGL_IGNORED:
            raise InstanceFormatError(f"malformed header key {key!r}", line_number)

    for key in ("VERTICES", "VEHICLES", "CAPACITY", "DEPOT"):
        if key not in headers:
            raise InstanceFormatError(f"egl file lacks {key}")

    lines = [f"NAME : {headers.get('NAME', '')}"]
    for key in ("VERTICES", "DEPOT", "VEHICLES", "CAPACITY"):
        lines.append(f"{key} : {headers[key]}")
    # zero-demand "required" edges are written as non-required
    served = [edge for edge in required if edge[3] > 0]
    idle = [edge[:3] for edge in required if edge[3] == 0] + nonrequired
    lines.append(f"EDGES_REQUIRED : {len(served)}")
    lines.append(f"EDGES_NONREQUIRED : {len(idle)}")
    lines.append("LIST_REQ :")
    lines.extend(f"{u} {v} {cost} {demand}" for u, v, cost, demand in served)
    lines.append("LIST_NONREQ :")
    lines.extend(f"{u} {v} {cost}" for u, v, cost in idle)
    lines.append("END")
    converted = "\n".join(lines) + "\n"
    parse_instance(converted)  # validates the result
    return converted


# ---------------------------------------------------------------------------------------------
# all-pairs minimal deadheading cost
# ---------------------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Dense minimal deadheading costs with first-hop successors for path replay.

    ``dist[a, b]`` is ``inf`` when b is unreachable from a; ``succ[a, b]`` is the vertex
    after ``a`` on a cheapest a->b path (-1 when unreachable). ``snapshot`` records the
    deadheading cost of every arc the matrix was computed from.
    """

    dist: np.ndarray
    succ: np.ndarray
    snapshot: Mapping[int, Optional[int]]

    @cached_property
    def rows(self) -> List[List[float]]:
        """Row lists of python numbers (int or inf) for tight loops."""
        return [[int(x) if x != np.inf else UNREACHABLE for x in row] for row in self.dist]

    def mdc(self, a: int, b: int) -> float:
        """Minimal deadheading cost a->b, or UNREACHABLE."""
        return self.rows[a][b]

    def reachable(self, a: int, b: int) -> bool:
        return self.dist[a, b] != np.inf

    def path(self, a: int, b: int) -> List[int]:
        """Vertex sequence of a cheapest a->b path (``[a]`` when a == b)."""
        if self.succ[a, b] < 0:
            raise ValueError(f"no path from {a} to {b}")
        path = [a]
        while a != b:
            a = int(self.succ[a, b])
            path.append(a)
        return path

    def same_costs(self, other: "CostMatrix") -> bool:
        return bool(np.array_equal(self.dist, other.dist))


def _deadhead_snapshot(network: RoadNetwork) -> Dict[int, Optional[int]]:
    return {arc_id: arc.dc for arc_id, arc in network.arcs.items()}


def _close(dist: np.ndarray, succ: np.ndarray, vertices: Iterable[int]) -> None:
    """Floyd-Warshall over ``vertices``, updating successors in place."""
    for k in vertices:
        via = dist[:, k, None] + dist[None, k, :]
        better = via < dist
        if not better.any():
            continue
        np.copyto(dist, via, where=better)
        np.copyto(succ, np.broadcast_to(succ[:, k, None], succ.shape), where=better)


def shortest_deadhead_matrix(network: RoadNetwork) -> CostMatrix:
    """All-pairs minimal deadheading costs; CLOSED arcs are skipped."""
    n = network.size
    dist = np.full((n, n), np.inf)
    succ = np.full((n, n), -1, dtype=np.int64)
    for v in network.vertices:
        dist[v, v] = 0.0
        succ[v, v] = v
    for arc in network.arcs.values():
        if arc.dc is None or arc.entry == arc.exit:
            continue
        if arc.dc < dist[arc.entry, arc.exit]:
            dist[arc.entry, arc.exit] = arc.dc
            succ[arc.entry, arc.exit] = arc.exit
    _close(dist, succ, network.vertices)
    return CostMatrix(dist, succ, _deadhead_snapshot(network))


def refresh_costs(network: RoadNetwork, matrix: CostMatrix) -> CostMatrix:
    """Bring ``matrix`` in line with the network's current deadheading costs.

    When every changed arc got cheaper (reopened or eased) the closure is updated
    incrementally through each changed arc; any increase or closure triggers a full
    recomputation. Either way the distances equal a from-scratch closure.
    """
    current = _deadhead_snapshot(network)
    if matrix.dist.shape[0] != network.size or set(current) != set(matrix.snapshot):
        return shortest_deadhead_matrix(network)
    changed = [arc_id for arc_id, dc in current.items() if matrix.snapshot[arc_id] != dc]
    if not changed:
        return matrix

    def cheaper(arc_id: int) -> bool:
        old, new = matrix.snapshot[arc_id], current[arc_id]
        return new is not None and (old is None or new < old)

    if not all(cheaper(arc_id) for arc_id in changed):
        logger.debug(f"Recomputing cost matrix after {len(changed)} arc changes")
        return shortest_deadhead_matrix(network)

    dist = matrix.dist.copy()
    succ = matrix.succ.copy()
    rows = np.arange(dist.shape[0])
    for arc_id in sorted(changed):
        arc = network.arc(arc_id)
        u, v, w = arc.entry, arc.exit, float(arc.dc)
        via = dist[:, u, None] + w + dist[None, v, :]
        better = via < dist
        if not better.any():
            continue
        first_hop = np.where(rows == u, v, succ[:, u])
        np.copyto(dist, via, where=better)
        np.copyto(succ, np.broadcast_to(first_hop[:, None], succ.shape), where=better)
    return CostMatrix(dist, succ, current)
