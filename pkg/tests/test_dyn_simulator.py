#!/usr/bin/env python3

import math
import unittest
from collections import Counter

import numpy as np
import pytest

from src.helpers.dyn_simulator import (
    EventConfig,
    ExecutionState,
    ServiceMode,
    VehicleStatus,
    apply_events,
    execute_until,
    makespan,
    sample_stop_time,
    simulate_events,
    step_scenario,
)
from src.helpers.errors import ConfigError, InfeasibleError, ScenarioComplete
from src.helpers.net_model import OutsideVehicle, TrafficState, build_network
from src.helpers.routing_core import DcarpInstance, Route, Solution
from src.helpers.seeding import make_rng
from src.helpers.split_heuristics import ScanRule, path_scanning
from src.helpers.vt_transform import build_static_view, normalize_virtual_routes, to_executable
from tests.conftest import T12, T23, make_g4_instance, make_random_instance

# timeline: [0,2) deadhead 0->1, [2,6) serve t12, [6,9) serve t23, [9,13) deadhead 3->0
ONE_ROUTE = Solution((Route(0, (T12, T23), 0),))
TWO_ROUTES = Solution((Route(0, (T12,), 0), Route(0, (T23,), 0)))
# tolerance of the frequency checks, in standard deviations
SIGMAS = 4


def best_executable(instance):
    view = build_static_view(instance)
    static = path_scanning(view, ScanRule.MAX_RETURN)
    return to_executable(normalize_virtual_routes(static, view), view)


class TestMakespan(unittest.TestCase):
    def test_single_route(self):
        self.assertEqual(makespan(ONE_ROUTE, make_g4_instance()), 13)

    def test_parallel_routes(self):
        self.assertEqual(makespan(TWO_ROUTES, make_g4_instance(capacity=4)), 12)

    def test_single_vehicle_queues(self):
        self.assertEqual(makespan(TWO_ROUTES, make_g4_instance(capacity=4, vehicles=1)), 23)

    def test_outside_route_holds_a_vehicle(self):
        solution = Solution((Route(1, (T23,), 0), Route(0, (T12,), 0)))
        outside = [OutsideVehicle(1, 2)]
        self.assertEqual(makespan(solution, make_g4_instance(outside)), 11)
        self.assertEqual(makespan(solution, make_g4_instance(outside, vehicles=1)), 21)

    def test_empty_solution(self):
        self.assertEqual(makespan(Solution(()), make_g4_instance()), 0.0)


class TestExecuteUntil(unittest.TestCase):
    def setUp(self):
        self.instance = make_g4_instance()

    def test_stop_during_second_service(self):
        state = execute_until(ONE_ROUTE, self.instance, 7)
        self.assertEqual(state.served, {T12, T23})
        (vehicle,) = state.vehicles
        self.assertEqual(vehicle.status, VehicleStatus.ACTIVE)
        self.assertEqual(vehicle.position, 3)
        self.assertEqual(vehicle.remaining, 10 - 5)
        self.assertEqual(vehicle.last_arc, T23)
        self.assertEqual(vehicle.served, [T12, T23])
        self.assertEqual(vehicle.elapsed, 9)

    def test_stop_on_first_deadhead(self):
        state = execute_until(ONE_ROUTE, self.instance, 1)
        (vehicle,) = state.halted()
        self.assertEqual((vehicle.position, vehicle.remaining), (1, 10))
        self.assertEqual(state.served, set())

    def test_stop_at_zero_leaves_everything_queued(self):
        state = execute_until(ONE_ROUTE, self.instance, 0)
        self.assertEqual(state.queue, [0])
        self.assertEqual(state.active, [])
        self.assertEqual(state.makespan, 13)

    def test_stop_beyond_makespan_is_clamped(self):
        state = execute_until(ONE_ROUTE, self.instance, 50)
        self.assertEqual(state.clock, 13)
        self.assertEqual(state.served, {T12, T23})
        self.assertEqual(state.vehicles[0].status, VehicleStatus.RETURNED)
        self.assertEqual(state.halted(), [])

    def test_queued_depot_route(self):
        instance = make_g4_instance(capacity=4, vehicles=1)
        state = execute_until(TWO_ROUTES, instance, 5)
        self.assertEqual(state.queue, [1])
        first = state.vehicles[0]
        self.assertEqual((first.position, first.remaining, first.last_arc), (2, 1, T12))
        self.assertEqual(state.served, {T12})

    def test_outside_vehicle_resumes_with_its_load(self):
        instance = make_g4_instance([OutsideVehicle(1, 6, route_index=0, last_arc=1)])
        solution = Solution((Route(1, (T12,), 0), Route(0, (T23,), 0)))
        state = execute_until(solution, instance, 1)
        outside = state.vehicles[0]
        # t12 started at 0 < 1, so it completes
        self.assertEqual((outside.position, outside.remaining), (2, 3))
        self.assertEqual(outside.dispatched_at, 0.0)


class TestSampleStopTime(unittest.TestCase):
    def test_open_interval(self):
        rng = np.random.default_rng(0)
        draws = [sample_stop_time(13, rng) for _ in range(1000)]
        self.assertTrue(all(0 < t < 13 for t in draws))

    def test_uniform_on_the_horizon(self):
        rng = np.random.default_rng(5)
        draws = 20000
        fractions = np.array([sample_stop_time(13, rng) / 13 for _ in range(draws)])
        self.assertLess(abs(fractions.mean() - 0.5), SIGMAS * math.sqrt(1 / 12 / draws))
        for q in (0.25, 0.5, 0.75):
            share = float((fractions < q).mean())
            self.assertLess(abs(share - q), SIGMAS * math.sqrt(q * (1 - q) / draws))

    def test_zero_makespan(self):
        with self.assertRaises(InfeasibleError):
            sample_stop_time(0, np.random.default_rng(0))


class TestEventConfig(unittest.TestCase):
    def test_defaults(self):
        config = EventConfig()
        self.assertEqual(config.p_event, 0.5)
        self.assertEqual(config.mode, ServiceMode.COLLECTION)

    def test_mode_from_string(self):
        self.assertIs(EventConfig(mode="delivery").mode, ServiceMode.DELIVERY)

    def test_invalid(self):
        for kwargs in (
            {"p_event": 1.5},
            {"p_add": -0.1},
            {"n_break": -1},
            {"congestion": (0.0, 1.0)},
            {"demand": (0.5, 0.1)},
            {"capacity_band": "huge"},
        ):
            with self.subTest(kwargs):
                with self.assertRaises(ConfigError):
                    EventConfig(**kwargs)

    def test_quiet(self):
        config = EventConfig.quiet(n_break=2)
        self.assertEqual((config.p_event, config.p_icd, config.p_add), (0.0, 0.0, 0.0))
        self.assertEqual(config.n_break, 2)


class TestApplyEvents(unittest.TestCase):
    def setUp(self):
        self.instance = make_g4_instance()
        self.state = execute_until(ONE_ROUTE, self.instance, 7)
        self.rng = np.random.default_rng(0)

    def events(self, config):
        return simulate_events(self.state, self.instance.network, config, self.rng)

    def test_quiet_only_removes_served_tasks(self):
        successor = apply_events(self.state, self.instance.network, EventConfig.quiet(), self.rng)
        self.assertEqual(successor.network.tasks, ())
        self.assertEqual(successor.index, 1)
        self.assertEqual(successor.outside_vehicles, (OutsideVehicle(3, 5, 0, T23),))
        self.assertIs(successor.matrix, self.instance.matrix)

    def test_breakdown_in_collection_mode(self):
        successor, counts = self.events(EventConfig.quiet(n_break=1))
        self.assertEqual(counts["breakdown"], 1)
        self.assertEqual(successor.outside_vehicles, ())
        # the load of the broken vehicle is left on the arc it served last
        self.assertEqual(successor.network.tasks, (T23,))
        self.assertEqual(successor.network.edge(T23).dm, 10 - 5)

    def test_breakdown_in_delivery_mode(self):
        successor, _ = self.events(EventConfig.quiet(n_break=1, mode="delivery"))
        self.assertEqual(successor.outside_vehicles, ())
        self.assertEqual(successor.network.tasks, ())

    def test_closures_keep_the_stop_connected(self):
        successor, counts = self.events(EventConfig.quiet(p_event=1.0, p_road=1.0))
        network = successor.network
        self.assertEqual({e for e in network.edge_ids if network.edge(e).closed}, {1, 2, 3, 5})
        self.assertEqual(counts["closure_skipped"], 1)
        self.assertEqual(successor.matrix.mdc(3, 0), 4)

    def test_congestion_everywhere(self):
        successor, counts = self.events(EventConfig.quiet(p_event=1.0))
        self.assertEqual(counts["congestion"], 5)
        for edge_id in successor.network.edge_ids:
            arc = successor.network.edge(edge_id)
            self.assertEqual(arc.state, TrafficState.CONGESTED)
            self.assertTrue(arc.base_dc < arc.dc <= 2 * arc.base_dc)

    def test_new_demand_on_every_idle_edge(self):
        successor, counts = self.events(EventConfig.quiet(p_add=1.0))
        self.assertEqual(counts["new_task"], 5)
        self.assertEqual(successor.network.tasks, (1, 2, 3, 4, 5))
        self.assertTrue(all(1 <= successor.network.edge(e).dm <= 5 for e in range(1, 6)))

    def test_demand_increase(self):
        state = execute_until(ONE_ROUTE, self.instance, 1)
        successor, counts = simulate_events(
            state, self.instance.network, EventConfig.quiet(p_icd=1.0), self.rng
        )
        self.assertEqual(counts["demand_increase"], 2)
        self.assertTrue(4 <= successor.network.edge(T12).dm <= 8)
        self.assertTrue(3 <= successor.network.edge(T23).dm <= 7)


class TestStepScenario(unittest.TestCase):
    def test_no_tasks_left(self):
        start = make_g4_instance()
        state = execute_until(ONE_ROUTE, start, 7)
        instance = apply_events(state, start.network, EventConfig.quiet(), np.random.default_rng(0))
        with self.assertRaises(ScenarioComplete):
            step_scenario(instance, Solution(()), EventConfig.quiet())

    def test_capacity_band(self):
        instance = make_g4_instance()
        config = EventConfig.quiet(capacity_band="medium")
        for seed in range(5):
            successor = step_scenario(instance, ONE_ROUTE, config, np.random.default_rng(seed))
            self.assertEqual(successor.outside_vehicles, (OutsideVehicle(3, 5, 0, T23),))

    def test_deterministic(self):
        instance = make_random_instance(6, vertices=8, tasks=7, capacity=12)
        solution = best_executable(instance)
        config = EventConfig(n_break=1, seed=11)
        first = step_scenario(instance, solution, config)
        second = step_scenario(instance, solution, config, make_rng(11))
        self.assertEqual(first.to_text(), second.to_text())


@pytest.mark.parametrize("seed", range(15))
def test_chain_keeps_arc_states_consistent(seed):
    instance = make_random_instance(seed, vertices=8, tasks=7, capacity=12, extra_edges=5)
    config = EventConfig(n_break=seed % 2, p_event=0.8, p_road=0.3)
    rng = np.random.default_rng(seed)
    capacity = instance.capacity
    previous = {e: instance.network.edge(e).state for e in instance.network.edge_ids}
    # load carried by each outside vehicle, keyed by its position in the outside list
    loads = {}
    for _ in range(4):
        if not instance.network.tasks:
            break
        solution = best_executable(instance)
        stop = sample_stop_time(makespan(solution, instance), rng)
        state = execute_until(solution, instance, stop)
        successor = apply_events(state, instance.network, config, rng)
        network = successor.network

        for edge_id in network.edge_ids:
            arc = network.edge(edge_id)
            assert (arc.state is TrafficState.CLOSED) == (arc.dc is None)
            if arc.state is TrafficState.NORMAL:
                assert arc.dc == arc.base_dc
            if arc.state is TrafficState.CONGESTED:
                assert arc.dc > arc.base_dc
            if previous[edge_id] is TrafficState.CLOSED:
                assert arc.state is not TrafficState.CONGESTED
            assert 0 <= arc.dm <= capacity
            assert network.arc(-edge_id).dm == arc.dm
            if edge_id not in state.served:
                assert arc.dm >= instance.network.edge(edge_id).dm

        outside_before = len(instance.outside_vehicles)
        carried = {}
        for vehicle in state.vehicles:
            before = loads[vehicle.route_index] if vehicle.route_index < outside_before else 0
            served = sum(instance.table.demand[e] for e in vehicle.served)
            carried[vehicle.route_index] = before + served
        for vehicle in successor.outside_vehicles:
            assert vehicle.remaining == capacity - carried[vehicle.route_index]
            assert successor.matrix.reachable(vehicle.stop, successor.depot)
        loads = {k: carried[v.route_index] for k, v in enumerate(successor.outside_vehicles)}

        previous = {e: network.edge(e).state for e in network.edge_ids}
        instance = successor


def grid_network(side: int, tasks: bool = False):
    """``side`` x ``side`` grid; with ``tasks`` every horizontal street has demand 2."""

    def vertex(r, c):
        return r * side + c + 1

    edges = []
    for r in range(side):
        for c in range(side):
            if c + 1 < side:
                edges.append((vertex(r, c), vertex(r, c + 1), 3 + (r + c) % 4, 2 if tasks else 0))
            if r + 1 < side:
                edges.append((vertex(r, c), vertex(r + 1, c), 2 + (r * c) % 5, 0))
    return build_network(side * side, 1, 4, 50, edges, name=f"grid{side}")


def tally(network, config, draws, seed=0):
    """Event counts summed over ``draws`` independent steps from the same state."""
    instance = DcarpInstance.from_network(network)
    state = ExecutionState(instance, Solution(()), 0.0, 0.0, [])
    rng = np.random.default_rng(seed)
    total = Counter()
    for _ in range(draws):
        _, counts = simulate_events(state, network, config, rng)
        total.update(counts)
    return total


def assert_binomial(count, trials, p):
    mean = trials * p
    spread = SIGMAS * math.sqrt(trials * p * (1 - p))
    assert abs(count - mean) <= spread, f"{count} outside {mean:.1f} ± {spread:.1f}"


def test_rejected_closures_on_a_tree_leave_arcs_normal():
    # a star whose every spoke is a task: any closure would cut a task off the depot
    spokes = [(1, v, 2, 1) for v in range(2, 12)]
    network = build_network(11, 1, 2, 20, spokes, name="star")
    counts = tally(network, EventConfig.quiet(p_event=1.0, p_road=1.0), draws=20)
    assert counts["congestion"] == 0
    assert counts["closure"] == 0
    assert counts["closure_skipped"] == 20 * 10


@pytest.mark.slow
def test_rejected_closures_keep_congestion_frequency():
    spokes = [(1, v, 2, 1) for v in range(2, 22)]
    network = build_network(21, 1, 2, 20, spokes, name="star")
    config = EventConfig.quiet(p_event=0.5, p_road=0.5)
    counts = tally(network, config, draws=1000)
    trials = 1000 * 20
    assert counts["closure"] == 0
    assert_binomial(counts["congestion"], trials, 0.5 * 0.5)
    assert_binomial(counts["closure_skipped"], trials, 0.5 * 0.5)


@pytest.mark.slow
def test_normal_arc_event_frequencies():
    network = grid_network(8)
    config = EventConfig(p_icd=0.0, p_add=0.0)
    draws = 1000
    counts = tally(network, config, draws)
    trials = draws * len(network.edge_ids)
    assert_binomial(counts["closure"], trials, config.p_event * config.p_road)
    assert_binomial(counts["congestion"], trials, config.p_event * (1 - config.p_road))
    assert counts["closure_skipped"] == 0


@pytest.mark.slow
def test_closed_and_congested_arc_event_frequencies():
    network = grid_network(8)
    updates = {}
    for edge_id in network.edge_ids:
        base = network.edge(edge_id).base_dc
        if edge_id % 2:
            updates[edge_id] = {"dc": None, "state": TrafficState.CLOSED}
        else:
            updates[edge_id] = {"dc": 2 * base, "state": TrafficState.CONGESTED}
    network = network.with_edges(updates)
    config = EventConfig(p_icd=0.0, p_add=0.0)
    draws = 1000
    counts = tally(network, config, draws)
    closed = draws * sum(1 for e in network.edge_ids if e % 2)
    congested = draws * sum(1 for e in network.edge_ids if e % 2 == 0)
    p_event, p_crr, p_crbb = config.p_event, config.p_crr, config.p_crbb
    assert_binomial(counts["reopen"], closed, p_event * config.p_bdrr)
    assert_binomial(counts["recover"], congested, p_event * p_crr)
    assert_binomial(counts["worsen"], congested, p_event * (1 - p_crr) * p_crbb)
    assert_binomial(counts["ease"], congested, p_event * (1 - p_crr) * (1 - p_crbb))
    assert counts["closure"] == counts["congestion"] == 0


@pytest.mark.slow
def test_demand_event_frequencies():
    network = grid_network(8, tasks=True)
    config = EventConfig.quiet(p_icd=0.35, p_add=0.35)
    draws = 1000
    counts = tally(network, config, draws)
    tasks = len(network.tasks)
    idle = len(network.edge_ids) - tasks
    assert tasks == idle == 56
    assert_binomial(counts["demand_increase"], draws * tasks, config.p_icd)
    assert_binomial(counts["new_task"], draws * idle, config.p_add)
