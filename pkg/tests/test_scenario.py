#!/usr/bin/env python3

import io
import json
import math
import os
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
import pytest
import yaml

from src.helpers.dyn_simulator import EventConfig, step_scenario
from src.helpers.errors import ConfigError, ScenarioComplete
from src.helpers.init_strategies import remaining_tasks_per_outside_vehicle
from src.helpers.net_model import OutsideVehicle, convert_egl
from src.helpers.routing_core import (
    DcarpInstance,
    Route,
    Solution,
    check_feasibility,
    total_cost,
)
from src.helpers.scenario import (
    DETERMINISTIC_EVALUATIONS,
    LOG_COLUMNS,
    SUMMARY_COLUMNS,
    ArmConfig,
    BudgetConfig,
    LogRow,
    OutputConfig,
    ScenarioConfig,
    gofvt_solve,
    read_instance_records,
    read_log,
    rows_to_csv,
    run_scenario,
    summarize,
    summary_to_csv,
    summary_to_text,
    win_rate_by_remaining,
    write_outputs,
)
from src.helpers.seeding import run_seed
from src.helpers.solvers import SolverBudget
from tests.conftest import T12, T23, make_g4, make_random_instance


def halfway_instance() -> DcarpInstance:
    network = make_g4().with_edges({T12: {"dm": 0}})
    return DcarpInstance.from_network(network, [OutsideVehicle(2, 7, route_index=0)])


def row(scenario, m, arm, run, cost, feasible=True):
    return LogRow(scenario, m, arm, run, 0, cost, 0, feasible)


class TestScenarioConfig(unittest.TestCase):
    def test_minimal(self):
        config = ScenarioConfig.from_dict({"instance": "net.dcarp"}, "/data")
        self.assertEqual(config.instance, Path("/data/net.dcarp"))
        self.assertEqual(config.instances, 5)
        self.assertEqual(config.arms, (ArmConfig("restart"),))
        self.assertEqual(config.solver, SolverBudget())
        self.assertEqual(config.events, EventConfig())
        self.assertEqual(config.output, OutputConfig())

    def test_full(self):
        data = {
            "instance": "/maps/egl.dcarp",
            "scenario_id": "egl-e1",
            "instances": 3,
            "runs": 4,
            "arms": [
                {"name": "vt", "strategy": "transfer"},
                {"name": "rf", "strategy": "return_first", "solver": "descent"},
            ],
            "baseline_arm": "rf",
            "solver": {"population_size": 10, "tabu_tenure": 5},
            "budget": {"small_map_seconds": 5, "max_evaluations": 100},
            "events": {"p_event": 0.2, "n_break": 1, "mode": "delivery"},
            "capacity_band": "high",
            "master_seed": 9,
            "output": {"log_csv": "out/log.csv"},
        }
        config = ScenarioConfig.from_dict(data, "/work")
        self.assertEqual(config.arms[1], ArmConfig("rf", "return_first", "descent"))
        self.assertEqual(config.solver.population_size, 10)
        self.assertEqual(config.budget, BudgetConfig(5, max_evaluations=100))
        self.assertEqual(config.events.capacity_band, "high")
        self.assertEqual(config.events.n_break, 1)
        self.assertEqual(config.output.log_csv, Path("/work/out/log.csv"))
        self.assertEqual(config.master_seed, 9)

    def test_arm_shorthand(self):
        config = ScenarioConfig.from_dict({"instance": "x", "arms": ["restart", "transfer"]})
        self.assertEqual(config.arms[1], ArmConfig("transfer", "transfer"))

    def test_invalid(self):
        cases = {
            "unknown key": {"instance": "x", "solvers": {}},
            "unknown section key": {"instance": "x", "solver": {"generations": 4}},
            "missing instance": {"runs": 2},
            "unknown strategy": {"instance": "x", "arms": [{"name": "a", "strategy": "warm"}]},
            "duplicate arm": {"instance": "x", "arms": ["restart", "restart"]},
            "undeclared baseline": {"instance": "x", "baseline_arm": "transfer"},
            "bad probability": {"instance": "x", "events": {"p_road": 2}},
            "bad runs": {"instance": "x", "runs": 0},
            "not a number": {"instance": "x", "instances": "many"},
        }
        for name, data in cases.items():
            with self.subTest(name):
                with self.assertRaises(ConfigError):
                    ScenarioConfig.from_dict(data)

    @mock.patch.dict(os.environ, {"DCARP_WORKERS": "3"})
    def test_workers_from_environment(self):
        self.assertEqual(ScenarioConfig.from_dict({"instance": "x"}).workers, 3)
        self.assertEqual(ScenarioConfig.from_dict({"instance": "x", "workers": 2}).workers, 2)

    def test_solver_budget(self):
        instance = make_random_instance(0)
        config = ScenarioConfig(Path("x"), budget=BudgetConfig(small_map_seconds=7))
        budget = config.solver_budget(instance, 42)
        self.assertEqual((budget.time_limit, budget.seed, budget.max_evaluations), (7, 42, None))
        deterministic = ScenarioConfig(Path("x"), deterministic=True).solver_budget(instance, 1)
        self.assertEqual(deterministic.max_evaluations, DETERMINISTIC_EVALUATIONS)

    def test_large_map_budget(self):
        budget = BudgetConfig(large_map_vertices=6)
        self.assertEqual(budget.seconds_for(make_random_instance(0, vertices=6)), 180.0)
        self.assertEqual(budget.seconds_for(make_random_instance(0, vertices=5)), 60.0)


def test_load(tmp_path):
    (tmp_path / "scenario.yaml").write_text(
        yaml.safe_dump({"instance": "maps/a.dcarp", "runs": 2}), encoding="utf-8"
    )
    config = ScenarioConfig.load(tmp_path / "scenario.yaml")
    assert config.instance == tmp_path / "maps" / "a.dcarp"
    assert config.runs == 2


@pytest.mark.parametrize(
    "content",
    ["instance: [unclosed", "- just\n- a list\n"],
)
def test_load_rejects_bad_documents(tmp_path, content):
    path = tmp_path / "scenario.yaml"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioConfig.load(tmp_path / "absent.yaml")


class TestGofvtSolve(unittest.TestCase):
    def setUp(self):
        self.instance = halfway_instance()
        self.previous = Solution((Route(0, (T12, T23), 0),))
        self.budget = SolverBudget(seed=0, population_size=6, max_evaluations=500)

    def test_transfer(self):
        result = gofvt_solve(self.instance, "transfer", "memetic", self.budget, self.previous)
        # the outside vehicle serves t23 from where it stopped and drives home
        self.assertEqual(result.solution.routes, (Route(2, (T23,), 0),))
        self.assertEqual(result.cost, 7)

    def test_restart_with_descent(self):
        result = gofvt_solve(self.instance, "restart", "descent", self.budget)
        self.assertEqual(result.cost, 7)
        self.assertEqual(result.solution.routes[0].start, 2)

    def test_return_first(self):
        result = gofvt_solve(self.instance, "return_first", "memetic", self.budget)
        self.assertEqual(result.cost, 17)
        self.assertEqual(result.solution.routes[0], Route(2, (), 0))


def write_scenario(tmp_path, **overrides):
    instance = make_random_instance(3, vertices=7, tasks=6, capacity=12, extra_edges=4)
    (tmp_path / "net.dcarp").write_text(instance.to_text(), encoding="utf-8")
    data = {
        "instance": "net.dcarp",
        "scenario_id": "rand3",
        "instances": 3,
        "runs": 2,
        "arms": [
            {"name": "restart"},
            {"name": "transfer", "strategy": "transfer"},
            {"name": "return_first", "strategy": "return_first", "solver": "descent"},
        ],
        "baseline_arm": "restart",
        "solver": {"population_size": 6},
        "budget": {"max_evaluations": 300},
        "events": {"p_event": 0.3, "p_add": 0.2},
        "master_seed": 1,
        "deterministic": True,
    }
    data.update(overrides)
    return ScenarioConfig.from_dict(data, tmp_path)


def test_single_instance_scenario(tmp_path):
    log = run_scenario(write_scenario(tmp_path, instances=1))
    assert len(log.instances) == 1
    assert len(log.rows) == 3 * 2
    assert all(r.m == 0 and r.feasible for r in log.rows)
    assert log.instances[0].remaining_per_vehicle == 0.0


def test_first_instance_is_shared_by_every_arm(tmp_path):
    arms = [{"name": "transfer", "strategy": "transfer"}, {"name": "restart", "solver": "descent"}]
    config = write_scenario(tmp_path, instances=1, arms=arms)
    log = run_scenario(config)
    instance = DcarpInstance.load(config.instance)
    for run in range(config.runs):
        seed = run_seed(config.master_seed, 0, 1, run)
        expected = gofvt_solve(instance, "restart", "descent", config.solver_budget(instance, seed))
        records = [r for r in log.records if r.row.run == run]
        assert [r.row.arm for r in records] == ["transfer", "restart"]
        for r in records:
            assert (r.row.cost, r.row.seed) == (expected.cost, seed)
            assert r.solution == expected.solution


def test_scenario_chain_is_fair_and_deterministic(tmp_path):
    config = write_scenario(tmp_path)
    first = run_scenario(config)
    second = run_scenario(config)
    assert first.to_csv_text() == second.to_csv_text()
    assert [i.text for i in first.instances] == [i.text for i in second.instances]

    reached = [record.m for record in first.instances]
    assert reached == list(range(len(reached)))
    for m in reached:
        arms = sorted(r.arm for r in first.rows if r.m == m)
        assert arms == sorted(["restart", "transfer", "return_first"] * 2)
    assert all(r.feasible and r.wall_ms == 0 for r in first.rows)


def test_write_outputs(tmp_path):
    config = write_scenario(
        tmp_path,
        instances=2,
        output={
            "log_csv": "out/log.csv",
            "summary_csv": "out/summary.csv",
            "solutions_jsonl": "out/solutions.jsonl",
            "instances_dir": "out/instances",
            "instances_csv": "out/instances.csv",
        },
    )
    log = run_scenario(config)
    write_outputs(log, config)
    out = tmp_path / "out"

    assert read_log(out / "log.csv") == log.rows
    summary_lines = (out / "summary.csv").read_text(encoding="utf-8").splitlines()
    assert summary_lines[0] == ",".join(SUMMARY_COLUMNS)
    solutions = (out / "solutions.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(solutions) == len(log.rows)
    assert all(json.loads(line)["solution"] for line in solutions)
    instance_files = sorted(p.name for p in (out / "instances").iterdir())
    assert instance_files == [f"rand3_m{i.m}.dcarp" for i in log.instances]
    remaining = read_instance_records(out / "instances.csv")
    assert remaining[("rand3", 0)] == 0.0


class TestLogCsv(unittest.TestCase):
    def test_failed_run_has_empty_cost(self):
        text = rows_to_csv([row("s", 0, "restart", 0, None, feasible=False)])
        self.assertEqual(text.splitlines()[1], "s,0,restart,0,0,,0,false")
        (parsed,) = read_log(io.StringIO(text))
        self.assertIsNone(parsed.cost)
        self.assertFalse(parsed.feasible)

    def test_fractional_cost(self):
        text = rows_to_csv([row("s", 1, "transfer", 2, 12.5)])
        self.assertIn(",12.500000,", text)

    def test_bad_header(self):
        with self.assertRaises(ConfigError):
            read_log(io.StringIO("scenario,m,arm\ns,0,a\n"))

    def test_header(self):
        self.assertEqual(rows_to_csv([]), ",".join(LOG_COLUMNS) + "\n")


class TestSummarize(unittest.TestCase):
    def test_single_run(self):
        (only,) = summarize([row("s", 0, "restart", 0, 40)])
        self.assertEqual((only.runs, only.mean, only.std, only.min), (1, 40.0, 0.0, 40.0))

    def test_sample_statistics(self):
        rows = [row("s", 2, "transfer", i, cost) for i, cost in enumerate((10, 12, 14, 16))]
        rows.append(row("s", 2, "transfer", 4, None, feasible=False))
        (summary,) = summarize(rows)
        self.assertEqual(summary.runs, 4)
        self.assertEqual(summary.mean, 13.0)
        self.assertAlmostEqual(summary.std, math.sqrt(20 / 3))
        self.assertEqual(summary.min, 10.0)

    def test_baseline_against_itself_draws(self):
        rows = [row(s, 1, "restart", 0, 20 + i) for i, s in enumerate("abc")]
        (summary,) = summarize(rows, baseline="restart")
        self.assertEqual((summary.wins, summary.draws, summary.losses), (0, 3, 0))

    def test_wins_draws_losses(self):
        rows = [
            row("a", 1, "restart", 0, 12),
            row("a", 1, "transfer", 0, 10),
            row("b", 1, "restart", 0, 15),
            row("b", 1, "transfer", 0, 15),
            row("c", 1, "restart", 0, 9),
            row("c", 1, "transfer", 0, 11),
        ]
        summary = summarize(rows, baseline="restart")
        self.assertEqual([s.arm for s in summary], ["restart", "transfer"])
        transfer = summary[1]
        self.assertEqual((transfer.wins, transfer.draws, transfer.losses), (1, 1, 1))

    def test_rendering(self):
        summary = summarize([row("a", 0, "restart", 0, 12), row("a", 0, "restart", 1, 14)])
        text = summary_to_text(summary, baseline="restart")
        self.assertIn("13.00 ± 1.41", text)
        self.assertIn("W-D-L vs restart", text)
        csv_lines = summary_to_csv(summary).splitlines()
        self.assertEqual(csv_lines[1], "0,restart,2,13.0000,1.4142,12,0,0,0")


def test_win_rate_by_remaining():
    rows = [
        row("a", 1, "restart", 0, 12),
        row("a", 1, "transfer", 0, 10),
        row("b", 1, "restart", 0, 15),
        row("b", 1, "transfer", 0, 15),
        row("c", 0, "restart", 0, 9),
        row("c", 0, "transfer", 0, 8),
    ]
    remaining = {("a", 1): 1.5, ("b", 1): 3.0, ("c", 0): 0.0}
    rates = win_rate_by_remaining(rows, remaining, "transfer", "restart")
    assert rates == {"<2": (1, 1), "2-4": (0, 1), ">4": (0, 0)}


@pytest.mark.slow
def test_transfer_wins_against_restart_by_remaining_tasks():
    rows, remaining, compared = [], {}, 0
    for seed in range(20):
        first = make_random_instance(seed, vertices=14, tasks=20, capacity=40, extra_edges=10)
        budget = SolverBudget(seed=seed, population_size=10, max_evaluations=1500)
        previous = gofvt_solve(first, "restart", "memetic", budget).solution
        try:
            second = step_scenario(first, previous, EventConfig(), np.random.default_rng(seed))
        except ScenarioComplete:
            continue
        if not second.network.tasks:
            continue
        scenario = f"rand{seed}"
        quick = SolverBudget(seed=seed, max_evaluations=200)
        for arm, prev in (("transfer", previous), ("restart", None)):
            result = gofvt_solve(second, arm, "descent", quick, prev)
            rows.append(LogRow(scenario, 1, arm, 0, seed, result.cost, 0, True))
        remaining[(scenario, 1)] = remaining_tasks_per_outside_vehicle(second, previous)
        compared += 1

    rates = win_rate_by_remaining(rows, remaining, "transfer", "restart")
    assert set(rates) == {"<2", "2-4", ">4"}
    assert sum(total for _, total in rates.values()) == compared > 0
    wins = sum(w for w, _ in rates.values())
    assert 2 * wins >= compared


# ten crossings, a ring of streets with demand plus five idle chords
EGL_DESK = """ NOMBRE : egl-desk
 COMENTARIO : ring with chords
 VERTICES : 10
 ARISTAS_REQ : 10
 ARISTAS_NOREQ : 5
 VEHICULOS : 3
 CAPACIDAD : 30
 TIPO_COSTES_ARISTAS : EXPLICITOS
 COSTE_TOTAL_REQ : 37
 LISTA_ARISTAS_REQ :
( 1, 2)  coste 4  demanda 3
( 2, 3)  coste 3  demanda 4
( 3, 4)  coste 5  demanda 2
( 4, 5)  coste 2  demanda 5
( 5, 6)  coste 6  demanda 3
( 6, 7)  coste 3  demanda 4
( 7, 8)  coste 4  demanda 2
( 8, 9)  coste 5  demanda 3
( 9, 10)  coste 2  demanda 4
( 10, 1)  coste 3  demanda 2
 LISTA_ARISTAS_NOREQ :
( 1, 5)  coste 7
( 2, 7)  coste 8
( 3, 8)  coste 6
( 4, 9)  coste 9
( 6, 10)  coste 5
 DEPOSITO :   1
"""


@pytest.mark.slow
def test_converted_egl_map_runs_five_instances(tmp_path):
    (tmp_path / "egl.dcarp").write_text(convert_egl(EGL_DESK), encoding="utf-8")
    data = {
        "instance": "egl.dcarp",
        "scenario_id": "egl-desk",
        "instances": 5,
        "runs": 1,
        "arms": [{"name": "restart"}, {"name": "transfer", "strategy": "transfer"}],
        "baseline_arm": "restart",
        "solver": {"population_size": 6},
        "budget": {"max_evaluations": 300},
        "master_seed": 4,
        "deterministic": True,
        "output": {"solutions_jsonl": "out/solutions.jsonl", "instances_dir": "out/instances"},
    }
    config = ScenarioConfig.from_dict(data, tmp_path)
    log = run_scenario(config)
    write_outputs(log, config)

    assert [i.m for i in log.instances] == [0, 1, 2, 3, 4]
    assert len(log.records) == 5 * 2
    for record in log.records:
        instance = DcarpInstance.from_text(log.instances[record.row.m].text)
        assert record.row.feasible
        assert check_feasibility(record.solution, instance)
        assert total_cost(record.solution, instance) == record.row.cost
    lines = (tmp_path / "out" / "solutions.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == len(log.records)
    assert len(list((tmp_path / "out" / "instances").glob("*.dcarp"))) == 5
