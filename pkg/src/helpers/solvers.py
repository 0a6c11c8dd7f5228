#!/usr/bin/env python3

"""Static CARP meta-heuristics behind one solver interface.

Two solvers work on a ``StaticView`` (every vehicle at the depot, virtual tasks included):

- ``memetic_solve``: a population-based memetic algorithm (binary tournament, order
  crossover on task sequences, Ulusoy split, probabilistic local search, clone removal);
- ``descent_solve``: an individual-based best-improvement descent with a short tabu memory
  and perturbation restarts on stagnation.

Both keep a monotone incumbent and stop on a wall-clock limit, or on an evaluation count
when one is configured (deterministic mode).
"""

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from src.helpers.errors import SolverError, UsageError
from src.helpers.logger import default_logger as logger
from src.helpers.routing_core import Route, Solution, route_demand
from src.helpers.seeding import make_rng
from src.helpers.split_heuristics import flatten, split_with_cost

DEFAULT_POPULATION = 30
DEFAULT_LS_PROBABILITY = 0.2
DEFAULT_TOURNAMENT = 2
DEFAULT_TABU_TENURE = 10
DEFAULT_STAGNATION = 50


@dataclass(frozen=True)
class SolverBudget:
    """Run limits and parameters shared by both solvers."""

    time_limit: float = 60.0
    seed: Optional[int] = None
    population_size: int = DEFAULT_POPULATION
    local_search_probability: float = DEFAULT_LS_PROBABILITY
    tournament_size: int = DEFAULT_TOURNAMENT
    tabu_tenure: int = DEFAULT_TABU_TENURE
    stagnation_limit: int = DEFAULT_STAGNATION
    max_evaluations: Optional[int] = None

    def __post_init__(self):
        if self.time_limit <= 0:
            raise UsageError("solver time limit must be positive")
        if self.population_size < 1 or self.tournament_size < 1:
            raise UsageError("population and tournament sizes must be positive")
        if not 0.0 <= self.local_search_probability <= 1.0:
            raise UsageError("local search probability must lie in [0, 1]")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise UsageError("max_evaluations must be nonnegative")

    def with_seed(self, seed: Optional[int]) -> "SolverBudget":
        return replace(self, seed=seed)

    def with_time_limit(self, time_limit: float) -> "SolverBudget":
        return replace(self, time_limit=time_limit)


class BudgetClock:
    """Counts evaluations and watches the wall clock.

    With ``max_evaluations`` set the clock is ignored, which makes runs reproducible.
    """

    def __init__(self, time_limit: float, max_evaluations: Optional[int] = None):
        self.time_limit = time_limit
        self.max_evaluations = max_evaluations
        self.started = time.perf_counter()
        self.evaluations = 0

    @classmethod
    def from_budget(cls, budget: SolverBudget) -> "BudgetClock":
        return cls(budget.time_limit, budget.max_evaluations)

    @classmethod
    def unlimited(cls) -> "BudgetClock":
        return cls(float("inf"))

    def tick(self, count: int = 1) -> None:
        self.evaluations += count

    def exhausted(self) -> bool:
        if self.max_evaluations is not None:
            return self.evaluations >= self.max_evaluations
        return self.elapsed >= self.time_limit

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.started


@dataclass
class SolveOutcome:
    """Best static solution found, its adjusted cost and run statistics."""

    solution: Solution
    cost: float
    evaluations: int
    elapsed: float
    trajectory: List[float] = field(default_factory=list)


# ---------------------------------------------------------------------------------------------
# route caches and neighbourhood
# ---------------------------------------------------------------------------------------------


class _RouteCache:
    """Prefix/suffix costs of one depot route.

    ``prefix[i]`` is the cost from the depot through the first i tasks, ending at
    ``pos[i]``; ``suffix[j]`` serves tasks j.. from ``start[j]`` and returns to the depot.
    Joining ``tasks[:i]`` with ``tasks[j:]`` costs ``prefix[i] + d[pos[i]][start[j]] +
    suffix[j]``.
    """

    __slots__ = ("tasks", "prefix", "pos", "suffix", "start", "prefix_load", "load", "cost")

    def __init__(self, tasks: List[int], view):
        table, rows, depot = view.table, view.matrix.rows, view.depot
        entry, exit_, serve, demand = table.entry, table.exit, table.serve, table.demand
        n = len(tasks)
        self.tasks = tasks
        self.prefix = [0] * (n + 1)
        self.pos = [depot] * (n + 1)
        self.prefix_load = [0] * (n + 1)
        for i, ref in enumerate(tasks):
            self.prefix[i + 1] = self.prefix[i] + rows[self.pos[i]][entry[ref]] + serve[ref]
            self.pos[i + 1] = exit_[ref]
            self.prefix_load[i + 1] = self.prefix_load[i] + demand[ref]
        self.suffix = [0] * (n + 1)
        self.start = [depot] * (n + 1)
        for i in range(n - 1, -1, -1):
            ref = tasks[i]
            self.suffix[i] = serve[ref] + rows[exit_[ref]][self.start[i + 1]] + self.suffix[i + 1]
            self.start[i] = entry[ref]
        self.load = self.prefix_load[n]
        self.cost = self.prefix[n] + rows[self.pos[n]][depot]

    def joined(self, rows, i: int, j: int) -> float:
        """Cost of the route with ``tasks[i:j]`` cut out."""
        return self.prefix[i] + rows[self.pos[i]][self.start[j]] + self.suffix[j]


# move = (delta, kind, payload, moved task identities)
Move = Tuple[float, str, tuple, Tuple[int, ...]]


class RoutePlan:
    """Mutable working copy of a solution's depot routes for local search."""

    def __init__(self, routes: Sequence[Sequence[int]], view):
        self.view = view
        self.table = view.table
        self.rows = view.matrix.rows
        self.depot = view.depot
        self.capacity = view.capacity
        self.caches = [_RouteCache(list(r), view) for r in routes if r]

    @classmethod
    def from_solution(cls, solution: Solution, view) -> "RoutePlan":
        return cls([route.tasks for route in solution.routes], view)

    @property
    def cost(self) -> float:
        return sum(c.cost for c in self.caches)

    def to_solution(self) -> Solution:
        depot = self.depot
        return Solution(tuple(Route(depot, tuple(c.tasks), depot) for c in self.caches))

    def sequence(self) -> List[int]:
        return [ref for c in self.caches for ref in c.tasks]

    # -- neighbourhood ---------------------------------------------------------------------

    def moves(self, clock: BudgetClock) -> Iterator[Move]:
        """Every capacity-feasible move with its exact cost delta."""
        yield from self._insertions(clock)
        yield from self._double_insertions(clock)
        yield from self._swaps(clock)
        yield from self._two_opts(clock)

    def _insertion_targets(self, r: int, base: List[int], load: int):
        """(route, position, prev exit, next entry) slots for a block of demand ``load``."""
        rows_depot = self.depot
        for r2, cache in enumerate(self.caches):
            if r2 == r:
                prev = rows_depot
                for j in range(len(base) + 1):
                    nxt = self.table.entry[base[j]] if j < len(base) else rows_depot
                    yield r2, j, prev, nxt
                    if j < len(base):
                        prev = self.table.exit[base[j]]
            elif cache.load + load <= self.capacity:
                for j in range(len(cache.tasks) + 1):
                    yield r2, j, cache.pos[j], cache.start[j]

    def _slot(self, prev: int, ref: int, nxt: int) -> float:
        """Cost of reaching ``ref`` from ``prev``, serving it and reaching ``nxt``."""
        table, rows = self.table, self.rows
        return rows[prev][table.entry[ref]] + table.serve[ref] + rows[table.exit[ref]][nxt]

    def _insertions(self, clock: BudgetClock) -> Iterator[Move]:
        rows, table, depot = self.rows, self.table, self.depot
        for r, cache in enumerate(self.caches):
            n = len(cache.tasks)
            for i in range(n):
                ref = cache.tasks[i]
                base_delta = cache.joined(rows, i, i + 1) - cache.cost
                base = cache.tasks[:i] + cache.tasks[i + 1 :]
                directions = table.directions(ref)
                moved = (abs(ref),)
                count = 0
                for r2, j, prev, nxt in self._insertion_targets(r, base, table.demand[ref]):
                    for d in directions:
                        if r2 == r and j == i and d == ref:
                            continue
                        count += 1
                        delta = base_delta + self._slot(prev, d, nxt) - rows[prev][nxt]
                        yield delta, "insert", (r, i, r2, j, d), moved
                if n > 1:
                    for d in directions:
                        count += 1
                        delta = base_delta + self._slot(depot, d, depot)
                        yield delta, "insert", (r, i, -1, 0, d), moved
                clock.tick(count)

    def _double_insertions(self, clock: BudgetClock) -> Iterator[Move]:
        rows, table = self.rows, self.table
        for r, cache in enumerate(self.caches):
            n = len(cache.tasks)
            for i in range(n - 1):
                first, second = cache.tasks[i], cache.tasks[i + 1]
                base_delta = cache.joined(rows, i, i + 2) - cache.cost
                base = cache.tasks[:i] + cache.tasks[i + 2 :]
                demand = table.demand[first] + table.demand[second]
                blocks = []
                for d1 in table.directions(first):
                    for d2 in table.directions(second):
                        link = rows[table.exit[d1]][table.entry[d2]]
                        blocks.append((d1, d2, table.serve[d1] + link + table.serve[d2]))
                count = 0
                for r2, j, prev, nxt in self._insertion_targets(r, base, demand):
                    for d1, d2, inner in blocks:
                        if r2 == r and j == i and d1 == first and d2 == second:
                            continue
                        ins = rows[prev][table.entry[d1]] + inner + rows[table.exit[d2]][nxt]
                        count += 1
                        yield (
                            base_delta + ins - rows[prev][nxt],
                            "double",
                            (r, i, r2, j, d1, d2),
                            (abs(first), abs(second)),
                        )
                clock.tick(count)

    def _swaps(self, clock: BudgetClock) -> Iterator[Move]:
        table, capacity = self.table, self.capacity
        caches = self.caches
        for r1, c1 in enumerate(caches):
            for i, a in enumerate(c1.tasks):
                count = 0
                for r2 in range(r1, len(caches)):
                    c2 = caches[r2]
                    for j in range(i + 1 if r2 == r1 else 0, len(c2.tasks)):
                        b = c2.tasks[j]
                        moved = (abs(a), abs(b))
                        if r1 == r2:
                            for da in table.directions(a):
                                for db in table.directions(b):
                                    tasks = list(c1.tasks)
                                    tasks[i], tasks[j] = db, da
                                    count += 1
                                    delta = self._route_cost(tasks) - c1.cost
                                    yield delta, "swap", (r1, i, r2, j, db, da), moved
                            continue
                        if c1.load - table.demand[a] + table.demand[b] > capacity:
                            continue
                        if c2.load - table.demand[b] + table.demand[a] > capacity:
                            continue
                        prev1, next1 = c1.pos[i], c1.start[i + 1]
                        prev2, next2 = c2.pos[j], c2.start[j + 1]
                        new1, best_b = min(
                            (self._slot(prev1, d, next1), d) for d in table.directions(b)
                        )
                        new2, best_a = min(
                            (self._slot(prev2, d, next2), d) for d in table.directions(a)
                        )
                        old = self._slot(prev1, a, next1) + self._slot(prev2, b, next2)
                        count += 1
                        yield new1 + new2 - old, "swap", (r1, i, r2, j, best_b, best_a), moved
                clock.tick(count)

    def _two_opts(self, clock: BudgetClock) -> Iterator[Move]:
        rows, table, capacity = self.rows, self.table, self.capacity
        caches = self.caches
        # intra-route segment reversal; twin arcs share costs, so the closure is symmetric
        # and a reversed segment keeps its internal cost
        for r, c in enumerate(caches):
            n = len(c.tasks)
            count = 0
            for i in range(n - 1):
                if table.is_virtual(c.tasks[i]):
                    continue
                for j in range(i + 1, n):
                    if table.is_virtual(c.tasks[j]):
                        break
                    inner = c.prefix[j + 1] - c.prefix[i] - rows[c.pos[i]][c.start[i]]
                    first_entry = table.exit[c.tasks[j]]
                    last_exit = table.entry[c.tasks[i]]
                    new_cost = (
                        c.prefix[i]
                        + rows[c.pos[i]][first_entry]
                        + inner
                        + rows[last_exit][c.start[j + 1]]
                        + c.suffix[j + 1]
                    )
                    count += 1
                    yield new_cost - c.cost, "reverse", (r, i, j), tuple(
                        abs(t) for t in c.tasks[i : j + 1]
                    )
            clock.tick(count)
        # inter-route tail exchange
        for a in range(len(caches)):
            ca = caches[a]
            for b in range(a + 1, len(caches)):
                cb = caches[b]
                count = 0
                for i in range(len(ca.tasks) + 1):
                    for j in range(len(cb.tasks) + 1):
                        if (i == 0 and j == 0) or (i == len(ca.tasks) and j == len(cb.tasks)):
                            continue
                        load_a = ca.prefix_load[i] + cb.load - cb.prefix_load[j]
                        load_b = cb.prefix_load[j] + ca.load - ca.prefix_load[i]
                        if load_a > capacity or load_b > capacity:
                            continue
                        new_a = ca.prefix[i] + rows[ca.pos[i]][cb.start[j]] + cb.suffix[j]
                        new_b = cb.prefix[j] + rows[cb.pos[j]][ca.start[i]] + ca.suffix[i]
                        count += 1
                        moved = tuple(abs(t) for t in ca.tasks[i:]) + tuple(
                            abs(t) for t in cb.tasks[j:]
                        )
                        yield new_a + new_b - ca.cost - cb.cost, "cross", (a, i, b, j), moved
                clock.tick(count)

    def _route_cost(self, tasks: List[int]) -> float:
        rows, table, depot = self.rows, self.table, self.depot
        position, cost = depot, 0
        for ref in tasks:
            cost += rows[position][table.entry[ref]] + table.serve[ref]
            position = table.exit[ref]
        return cost + rows[position][depot]

    # -- application -----------------------------------------------------------------------

    def apply(self, kind: str, payload: tuple) -> None:
        routes = [list(c.tasks) for c in self.caches]
        if kind == "insert":
            r, i, r2, j, d = payload
            routes[r].pop(i)
            if r2 < 0:
                routes.append([d])
            else:
                routes[r2].insert(j, d)
        elif kind == "double":
            r, i, r2, j, d1, d2 = payload
            del routes[r][i : i + 2]
            routes[r2][j:j] = [d1, d2]
        elif kind == "swap":
            r1, i, r2, j, new_i, new_j = payload
            routes[r1][i] = new_i
            routes[r2][j] = new_j
        elif kind == "reverse":
            r, i, j = payload
            routes[r][i : j + 1] = [-t for t in reversed(routes[r][i : j + 1])]
        elif kind == "cross":
            a, i, b, j = payload
            tail_a, tail_b = routes[a][i:], routes[b][j:]
            routes[a] = routes[a][:i] + tail_b
            routes[b] = routes[b][:j] + tail_a
        else:
            raise ValueError(f"unknown move {kind}")
        self.caches = [_RouteCache(r, self.view) for r in routes if r]


def _best_move(
    plan: RoutePlan, clock: BudgetClock, admissible: Optional[Callable[[Move], bool]] = None
) -> Optional[Move]:
    best: Optional[Move] = None
    for move in plan.moves(clock):
        if admissible is not None and not admissible(move):
            continue
        if best is None or move[0] < best[0]:
            best = move
    return best


def local_search(solution: Solution, view, clock: Optional[BudgetClock] = None) -> Solution:
    """Best-improvement descent over insertion, double insertion, swap and 2-opt moves.

    Moved tasks are re-oriented to their cheaper direction. The result is feasible and
    never costs more than the input.
    """
    clock = clock or BudgetClock.unlimited()
    plan = RoutePlan.from_solution(solution, view)
    return _descend(plan, clock).to_solution()


def _descend(plan: RoutePlan, clock: BudgetClock) -> RoutePlan:
    while not clock.exhausted():
        move = _best_move(plan, clock)
        if move is None or move[0] >= 0:
            break
        plan.apply(move[1], move[2])
    return plan


# ---------------------------------------------------------------------------------------------
# memetic solver
# ---------------------------------------------------------------------------------------------


@dataclass
class _Individual:
    sequence: List[int]
    routes: List[Tuple[int, ...]]
    cost: float

    def signature(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(sorted(self.routes))


def _adjusted(view, raw_cost: float) -> float:
    return raw_cost - view.adjustment


def _repair(solution: Solution, view) -> _Individual:
    """Keep a capacity-feasible depot solution as is; otherwise re-split its order."""
    table = view.table
    routes = [tuple(r.tasks) for r in solution.routes if r.tasks]
    feasible = all(r.start == view.depot for r in solution.routes) and all(
        route_demand(r, table) <= view.capacity for r in solution.routes
    )
    if feasible:
        plan = RoutePlan(routes, view)
        return _Individual(flatten(solution), routes, _adjusted(view, plan.cost))
    sequence = flatten(solution)
    split_routes, raw = split_with_cost(sequence, view)
    return _Individual(sequence, split_routes, _adjusted(view, raw))


def order_crossover(
    first: Sequence[int], second: Sequence[int], rng: np.random.Generator
) -> List[int]:
    """OX on task identities: keep a slice of ``first``, fill the rest in ``second``'s order.

    Directions follow the parent each task comes from.
    """
    n = len(first)
    if n < 2:
        return list(first)
    a, b = sorted(int(x) for x in rng.choice(n + 1, size=2, replace=False))
    kept = list(first[a:b])
    taken = {abs(ref) for ref in kept}
    rest = [ref for ref in second if abs(ref) not in taken]
    return rest[:a] + kept + rest[a:]


def _tournament(population: List[_Individual], size: int, rng: np.random.Generator) -> _Individual:
    picks = rng.choice(len(population), size=min(size, len(population)), replace=False)
    return min((population[int(p)] for p in picks), key=lambda ind: ind.cost)


def memetic_solve(view, init: Sequence[Solution], budget: SolverBudget) -> SolveOutcome:
    """Population-based memetic search on a static view.

    Raises:
        SolverError: When ``init`` is empty
    """
    if not init:
        raise SolverError("memetic_solve needs at least one initial solution")
    rng = make_rng(budget.seed)
    clock = BudgetClock.from_budget(budget)

    population: List[_Individual] = []
    seen = set()
    for solution in init:
        individual = _repair(solution, view)
        key = (individual.cost, individual.signature())
        if key not in seen:
            seen.add(key)
            population.append(individual)
    population.sort(key=lambda ind: ind.cost)
    population = population[: budget.population_size]
    best = population[0]
    trajectory = [best.cost]
    logger.debug(f"memetic: {len(population)} initial individuals, best {best.cost}")

    # fewer than two tasks leave nothing to recombine
    while len(best.sequence) > 1 and not clock.exhausted():
        offspring: List[_Individual] = []
        for _ in range(budget.population_size):
            if clock.exhausted():
                break
            p1 = _tournament(population, budget.tournament_size, rng)
            p2 = _tournament(population, budget.tournament_size, rng)
            sequence = order_crossover(p1.sequence, p2.sequence, rng)
            routes, raw = split_with_cost(sequence, view)
            clock.tick()
            child = _Individual(sequence, routes, _adjusted(view, raw))
            if rng.random() < budget.local_search_probability:
                plan = _descend(RoutePlan(routes, view), clock)
                routes = [tuple(c.tasks) for c in plan.caches]
                child = _Individual(plan.sequence(), routes, _adjusted(view, plan.cost))
            key = (child.cost, child.signature())
            if key in seen:
                continue
            seen.add(key)
            offspring.append(child)
        merged = sorted(population + offspring, key=lambda ind: ind.cost)
        population = merged[: budget.population_size]
        seen = {(ind.cost, ind.signature()) for ind in population}
        if population[0].cost < best.cost:
            best = population[0]
        trajectory.append(best.cost)

    solution = Solution(tuple(Route(view.depot, r, view.depot) for r in best.routes))
    logger.debug(
        f"memetic: best {best.cost} after {clock.evaluations} evaluations "
        f"in {clock.elapsed:.2f}s"
    )
    return SolveOutcome(solution, best.cost, clock.evaluations, clock.elapsed, trajectory)


# ---------------------------------------------------------------------------------------------
# descent solver
# ---------------------------------------------------------------------------------------------


def _perturb(plan: RoutePlan, view, rng: np.random.Generator) -> RoutePlan:
    """Random position swaps on the grand tour followed by an optimal re-split."""
    sequence = plan.sequence()
    n = len(sequence)
    if n >= 2:
        for _ in range(max(2, n // 10)):
            i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
            sequence[i], sequence[j] = sequence[j], sequence[i]
    routes, _ = split_with_cost(sequence, view)
    return RoutePlan(routes, view)


def _tabu_filter(
    current: float, best_cost: float, tabu: Dict[int, int], iteration: int
) -> Callable[[Move], bool]:
    """Reject moves touching tabu tasks unless they beat the incumbent (aspiration)."""

    def admissible(move: Move) -> bool:
        if current + move[0] < best_cost:
            return True
        return all(tabu.get(t, -1) < iteration for t in move[3])

    return admissible


def descent_solve(view, init: Solution, budget: SolverBudget) -> SolveOutcome:
    """Individual-based best-improvement descent with tabu memory and restarts."""
    rng = make_rng(budget.seed)
    clock = BudgetClock.from_budget(budget)
    start = _repair(init, view)
    plan = RoutePlan(start.routes, view)
    best_cost = _adjusted(view, plan.cost)
    best_routes = [tuple(c.tasks) for c in plan.caches]
    trajectory = [best_cost]
    tabu: Dict[int, int] = {}
    iteration = 0
    stagnation = 0

    while not clock.exhausted():
        admissible = _tabu_filter(_adjusted(view, plan.cost), best_cost, tabu, iteration)
        move = _best_move(plan, clock, admissible)
        if move is None:
            if _best_move(plan, clock) is None:
                break
            plan = _perturb(plan, view, rng)
            tabu.clear()
            continue
        plan.apply(move[1], move[2])
        iteration += 1
        for task in move[3]:
            tabu[task] = iteration + budget.tabu_tenure
        current = _adjusted(view, plan.cost)
        if current < best_cost:
            best_cost = current
            best_routes = [tuple(c.tasks) for c in plan.caches]
            stagnation = 0
        else:
            stagnation += 1
        trajectory.append(best_cost)
        if stagnation >= budget.stagnation_limit:
            plan = _perturb(RoutePlan(best_routes, view), view, rng)
            tabu.clear()
            stagnation = 0

    solution = Solution(tuple(Route(view.depot, r, view.depot) for r in best_routes))
    logger.debug(
        f"descent: best {best_cost} after {iteration} iterations, "
        f"{clock.evaluations} evaluations"
    )
    return SolveOutcome(solution, best_cost, clock.evaluations, clock.elapsed, trajectory)


# ---------------------------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------------------------


def _descent_from_population(view, init: Sequence[Solution], budget: SolverBudget) -> SolveOutcome:
    if not init:
        raise SolverError("descent_solve needs an initial solution")
    best = min(init, key=lambda s: _repair(s, view).cost)
    return descent_solve(view, best, budget)


class Solver(Protocol):
    """Common call signature of every registered solver."""

    def __call__(
        self, view, init: Sequence[Solution], budget: SolverBudget
    ) -> SolveOutcome: ...


SOLVERS: Dict[str, Solver] = {
    "memetic": memetic_solve,
    "descent": _descent_from_population,
}
POPULATION_SOLVERS = frozenset({"memetic"})


def get_solver(name: str) -> Solver:
    """Look up a solver by name; every solver takes ``(view, init_solutions, budget)``."""
    try:
        return SOLVERS[name]
    except KeyError:
        known = ", ".join(sorted(SOLVERS))
        raise UsageError(f"unknown solver {name!r} (known: {known})") from None
