"""Test configuration for pytest."""

import itertools
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest

# Add the project root to the Python path for tests
project_root = str(Path(__file__).parent.parent)
if project_root not in sys.path:
    sys.path.insert(0, project_root)

# Add the src directory to the Python path
src_dir = os.path.join(project_root, "src")
if src_dir not in sys.path:
    sys.path.insert(0, src_dir)

from src.helpers.net_model import OutsideVehicle, RoadNetwork, build_network  # noqa: E402
from src.helpers.routing_core import DcarpInstance, sequence_cost  # noqa: E402
from src.helpers.split_heuristics import split_with_cost  # noqa: E402

# G4: depot 0; edge ids follow this order, so t12 is arc +2 and t23 is arc +3
G4_EDGES = (
    (0, 1, 2),
    (1, 2, 3, 3, 4),
    (2, 3, 1, 2, 3),
    (3, 0, 4),
    (0, 2, 6),
)
T12 = 2
T23 = 3


def make_g4(capacity: int = 10, vehicles: int = 2) -> RoadNetwork:
    """The four-vertex test network with two tasks (1-2 and 2-3)."""
    return build_network(4, 0, vehicles, capacity, G4_EDGES, name="G4", first_vertex=0)


def make_g4_instance(
    outside: Sequence[OutsideVehicle] = (), capacity: int = 10, vehicles: int = 2
) -> DcarpInstance:
    return DcarpInstance.from_network(make_g4(capacity, vehicles), outside)


def random_edges(
    rng: np.random.Generator,
    vertices: int,
    tasks: int,
    extra_edges: int = 3,
    max_demand: int = 5,
) -> List[Tuple[int, ...]]:
    """Connected random edge list on vertices 1..n: a random spanning tree plus extras.

    The first ``tasks`` edges get demand, and serving costs at or above the deadheading cost.
    """
    pairs = []
    order = [int(v) + 1 for v in rng.permutation(vertices)]
    for i in range(1, vertices):
        pairs.append((order[int(rng.integers(i))], order[i]))
    seen = {frozenset(p) for p in pairs}
    attempts = 0
    while len(pairs) < vertices - 1 + extra_edges and attempts < 100:
        attempts += 1
        u, v = (int(x) + 1 for x in rng.choice(vertices, size=2, replace=False))
        if frozenset((u, v)) not in seen:
            seen.add(frozenset((u, v)))
            pairs.append((u, v))
    edges = []
    for index, (u, v) in enumerate(pairs):
        dc = int(rng.integers(1, 10))
        if index < tasks:
            dm = int(rng.integers(1, max_demand + 1))
            edges.append((u, v, dc, dm, dc + int(rng.integers(0, 4))))
        else:
            edges.append((u, v, dc))
    return edges


def make_random_instance(
    seed: int,
    vertices: int = 6,
    tasks: int = 5,
    capacity: int = 10,
    vehicles: int = 3,
    outside: int = 0,
    extra_edges: int = 3,
) -> DcarpInstance:
    """Random connected instance; ``outside`` vehicles park at random vertices."""
    rng = np.random.default_rng(seed)
    tasks = min(tasks, vertices - 1 + extra_edges)
    edges = random_edges(rng, vertices, tasks, extra_edges)
    network = build_network(vertices, 1, max(vehicles, outside), capacity, edges, f"rand{seed}")
    vehicles_out: List[OutsideVehicle] = []
    for k in range(outside):
        stop = int(rng.integers(1, vertices + 1))
        remaining = int(rng.integers(0, capacity + 1))
        vehicles_out.append(OutsideVehicle(stop, remaining, route_index=k))
    return DcarpInstance.from_network(network, vehicles_out)


@pytest.fixture
def g4() -> RoadNetwork:
    return make_g4()


@pytest.fixture
def g4_instance() -> DcarpInstance:
    return make_g4_instance()


@pytest.fixture
def g4_outside_instance() -> DcarpInstance:
    """G4 with one outside vehicle parked at vertex 2 holding 6 units of spare capacity."""
    return make_g4_instance([OutsideVehicle(2, 6, route_index=0)])


def exhaustive_split_cost(sequence: Sequence[int], view) -> Optional[float]:
    """Brute force over all boundary subsets of a fixed task order."""
    n = len(sequence)
    rows, table = view.matrix.rows, view.table
    best = None
    for mask in range(1 << max(0, n - 1)):
        blocks, current = [], [sequence[0]] if n else []
        for i in range(1, n):
            if mask >> (i - 1) & 1:
                blocks.append(current)
                current = []
            current.append(sequence[i])
        if current:
            blocks.append(current)
        if any(sum(table.demand[r] for r in block) > view.capacity for block in blocks):
            continue
        cost = sum(sequence_cost(rows, table, view.depot, block, view.depot) for block in blocks)
        if best is None or cost < best:
            best = cost
    return best


def exhaustive_optimum(view) -> float:
    """Best adjusted cost over every task order and direction, each split optimally."""
    table = view.table
    best = math.inf
    for order in itertools.permutations(table.task_ids):
        for sequence in itertools.product(*(table.directions(t) for t in order)):
            _, cost = split_with_cost(list(sequence), view)
            best = min(best, cost)
    return best - view.adjustment
