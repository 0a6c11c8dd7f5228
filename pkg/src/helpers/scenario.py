#!/usr/bin/env python3

"""Scenario harness: configuration, the solve-and-convert loop, scenario runs and reporting.

One scenario is a chain of instances. At every step each arm (strategy + solver) solves the
current instance ``runs`` times; the best solution over all arms and runs is executed by the
simulator to produce the next instance, so every arm always sees the same chain.
"""

import csv
import io
import json
import multiprocessing
import os
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from tabulate import tabulate

from src.helpers.dyn_simulator import EventConfig, step_scenario
from src.helpers.errors import (
    ConfigError,
    DcarpError,
    IntegrityError,
    ScenarioComplete,
    SolverError,
)
from src.helpers.init_strategies import (
    RESTART,
    RETURN_FIRST,
    STRATEGIES,
    initial_solutions,
    remaining_tasks_per_outside_vehicle,
    return_first_solve,
)
from src.helpers.logger import default_logger as logger
from src.helpers.routing_core import (
    DcarpInstance,
    Solution,
    check_feasibility,
    format_solution,
    total_cost,
)
from src.helpers.seeding import make_rng, run_seed, simulation_seed
from src.helpers.solvers import SOLVERS, SolverBudget, get_solver
from src.helpers.vt_transform import build_static_view, normalize_virtual_routes, to_executable

LOG_COLUMNS = ("scenario_id", "m", "arm", "run", "seed", "cost", "wall_ms", "feasible")
SUMMARY_COLUMNS = ("m", "arm", "runs", "mean", "std", "min", "wins", "draws", "losses")
INSTANCE_COLUMNS = ("scenario_id", "m", "tasks", "outside_vehicles", "remaining_per_vehicle")
REMAINING_BINS = (("<2", 0.0, 2.0), ("2-4", 2.0, 4.0), (">4", 4.0, float("inf")))
DETERMINISTIC_EVALUATIONS = 20000

# ---------------------------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ArmConfig:
    """One compared algorithm: an initialisation strategy with a solver."""

    name: str
    strategy: str = RESTART
    solver: str = "memetic"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"arm {self.name}: unknown strategy {self.strategy!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"arm {self.name}: unknown solver {self.solver!r}")


@dataclass(frozen=True)
class BudgetConfig:
    small_map_seconds: float = 60.0
    large_map_seconds: float = 180.0
    large_map_vertices: int = 100
    max_evaluations: Optional[int] = None

    def __post_init__(self):
        if self.small_map_seconds <= 0 or self.large_map_seconds <= 0:
            raise ConfigError("time budgets must be positive")
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ConfigError("max_evaluations must be positive")

    def seconds_for(self, instance: DcarpInstance) -> float:
        large = len(instance.network.vertices) >= self.large_map_vertices
        return self.large_map_seconds if large else self.small_map_seconds


@dataclass(frozen=True)
class OutputConfig:
    log_csv: Optional[Path] = None
    summary_csv: Optional[Path] = None
    solutions_jsonl: Optional[Path] = None
    instances_dir: Optional[Path] = None
    instances_csv: Optional[Path] = None


_SOLVER_KEYS = (
    "population_size",
    "local_search_probability",
    "tournament_size",
    "tabu_tenure",
    "stagnation_limit",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a scenario run needs, loaded from a YAML document."""

    instance: Path
    scenario_id: str = "scenario"
    instances: int = 5
    runs: int = 1
    arms: Tuple[ArmConfig, ...] = (ArmConfig("restart"),)
    baseline_arm: Optional[str] = None
    solver: SolverBudget = SolverBudget()
    budget: BudgetConfig = BudgetConfig()
    events: EventConfig = EventConfig()
    master_seed: int = 0
    deterministic: bool = False
    workers: int = 1
    output: OutputConfig = OutputConfig()

    def __post_init__(self):
        if self.instances < 1:
            raise ConfigError("instances (scenario length) must be at least 1")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not self.arms:
            raise ConfigError("at least one arm is required")
        names = [arm.name for arm in self.arms]
        if len(set(names)) != len(names):
            raise ConfigError("arm names must be unique")
        if self.baseline_arm is not None and self.baseline_arm not in names:
            raise ConfigError(f"baseline arm {self.baseline_arm!r} is not declared")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], base_dir: Union[str, Path] = "."
    ) -> "ScenarioConfig":
        """Build a config from parsed YAML; relative paths resolve against ``base_dir``.

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        base = Path(base_dir)
        known = {f.name for f in fields(cls)} | {"capacity_band"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        if "instance" not in data:
            raise ConfigError("configuration needs an 'instance' path")

        def path(value: Optional[str]) -> Optional[Path]:
            if value is None:
                return None
            p = Path(os.path.expanduser(str(value)))
            return p if p.is_absolute() else base / p

        try:
            arms = tuple(
                ArmConfig(**arm) if isinstance(arm, Mapping) else ArmConfig(str(arm), str(arm))
                for arm in data.get("arms", [{"name": RESTART}])
            )
            solver = SolverBudget(**_section(data, "solver", _SOLVER_KEYS))
            budget_keys = [f.name for f in fields(BudgetConfig)]
            budget = BudgetConfig(**_section(data, "budget", budget_keys))
            event_keys = [f.name for f in fields(EventConfig)]
            events_data = _section(data, "events", event_keys)
            if data.get("capacity_band") not in (None, "none"):
                events_data["capacity_band"] = data["capacity_band"]
            events = EventConfig(**events_data)
            output_data = _section(data, "output", [f.name for f in fields(OutputConfig)])
            output = OutputConfig(**{k: path(v) for k, v in output_data.items()})
            workers = data.get("workers", os.environ.get("DCARP_WORKERS", 1))
            return cls(
                instance=path(data["instance"]),
                scenario_id=str(data.get("scenario_id", "scenario")),
                instances=int(data.get("instances", 5)),
                runs=int(data.get("runs", 1)),
                arms=arms,
                baseline_arm=data.get("baseline_arm"),
                solver=solver,
                budget=budget,
                events=events,
                master_seed=int(data.get("master_seed", 0)),
                deterministic=bool(data.get("deterministic", False)),
                workers=int(workers),
                output=output,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration: {e}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read configuration {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"configuration {path} is not valid YAML: {e}") from e
        if not isinstance(data, Mapping):
            raise ConfigError(f"configuration {path} must be a mapping")
        return cls.from_dict(data, path.parent)

    def solver_budget(self, instance: DcarpInstance, seed: int) -> SolverBudget:
        """Per-run budget: map-size time limit, or an evaluation count when deterministic."""
        evaluations = self.budget.max_evaluations
        if self.deterministic and evaluations is None:
            evaluations = DETERMINISTIC_EVALUATIONS
        return replace(
            self.solver,
            time_limit=self.budget.seconds_for(instance),
            seed=seed,
            max_evaluations=evaluations,
        )


def _section(data: Mapping[str, Any], key: str, allowed: Iterable[str]) -> Dict[str, Any]:
    section = data.get(key) or {}
    if not isinstance(section, Mapping):
        raise ConfigError(f"'{key}' must be a mapping")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in '{key}': {', '.join(unknown)}")
    return dict(section)


# ---------------------------------------------------------------------------------------------
# solve and convert
# ---------------------------------------------------------------------------------------------


@dataclass
class GofvtResult:
    """Executable solution for a DCARP instance with its cost."""

    solution: Solution
    cost: float
    evaluations: int = 0


def gofvt_solve(
    instance: DcarpInstance,
    strategy: str,
    solver: str,
    budget: SolverBudget,
    previous: Optional[Solution] = None,
) -> GofvtResult:
    """Construct virtual tasks, initialise, optimise and convert back to executable routes.

    The returned cost is the total cost of the executable solution, which equals the static
    solver's adjusted cost.

    Raises:
        IntegrityError: When the converted solution fails validation
    """
    if strategy == RETURN_FIRST:
        outcome = return_first_solve(instance, budget, solver)
        executable, cost, evaluations = outcome.solution, outcome.cost, outcome.evaluations
    else:
        view = build_static_view(instance)
        init = initial_solutions(strategy, view, solver, budget, previous)
        result = get_solver(solver)(view, init, budget)
        executable = to_executable(normalize_virtual_routes(result.solution, view), view)
        cost, evaluations = result.cost, result.evaluations

    report = check_feasibility(executable, instance)
    if not report:
        details = "; ".join(v.message for v in report.violations[:3])
        raise IntegrityError(f"converted solution is infeasible: {details}")
    evaluated = total_cost(executable, instance)
    if evaluated != cost:
        raise IntegrityError(f"executable cost {evaluated} differs from solver cost {cost}")
    return GofvtResult(executable, evaluated, evaluations)


# ---------------------------------------------------------------------------------------------
# scenario runs
# ---------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class LogRow:
    scenario_id: str
    m: int
    arm: str
    run: int
    seed: int
    cost: Optional[float]
    wall_ms: int
    feasible: bool

    def as_csv(self) -> List[str]:
        cost = "" if self.cost is None else _number(self.cost)
        return [
            self.scenario_id,
            str(self.m),
            self.arm,
            str(self.run),
            str(self.seed),
            cost,
            str(self.wall_ms),
            "true" if self.feasible else "false",
        ]


def _number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:.6f}"


@dataclass
class RunRecord:
    row: LogRow
    arm_index: int
    solution: Optional[Solution] = None
    error: Optional[str] = None


@dataclass
class InstanceRecord:
    m: int
    text: str
    tasks: int
    outside_vehicles: int
    remaining_per_vehicle: float
    best_arm: Optional[str] = None


@dataclass
class ScenarioLog:
    """Rows, solutions and the instance chain of one scenario."""

    scenario_id: str
    records: List[RunRecord] = field(default_factory=list)
    instances: List[InstanceRecord] = field(default_factory=list)

    @property
    def rows(self) -> List[LogRow]:
        return [record.row for record in self.records]

    def to_csv_text(self) -> str:
        return rows_to_csv(self.rows)


@dataclass(frozen=True)
class _Job:
    scenario_id: str
    instance: DcarpInstance
    m: int
    arm_index: int
    arm: ArmConfig
    run: int
    seed: int
    budget: SolverBudget
    previous: Optional[Solution]
    deterministic: bool


def _solve_job(job: _Job) -> RunRecord:
    strategy = job.arm.strategy if job.m > 0 else RESTART
    started = time.perf_counter()
    try:
        result = gofvt_solve(job.instance, strategy, job.arm.solver, job.budget, job.previous)
    except DcarpError as e:
        logger.error(f"m={job.m} arm={job.arm.name} run={job.run} failed: {e}")
        row = LogRow(job.scenario_id, job.m, job.arm.name, job.run, job.seed, None, 0, False)
        return RunRecord(row, job.arm_index, None, str(e))
    wall_ms = 0 if job.deterministic else int(round((time.perf_counter() - started) * 1000))
    feasible = check_feasibility(result.solution, job.instance).feasible
    row = LogRow(
        job.scenario_id, job.m, job.arm.name, job.run, job.seed, result.cost, wall_ms, feasible
    )
    return RunRecord(row, job.arm_index, result.solution)


def _run_jobs(jobs: List[_Job], workers: int) -> List[RunRecord]:
    if workers <= 1 or len(jobs) <= 1:
        return [_solve_job(job) for job in jobs]
    with multiprocessing.Pool(processes=min(workers, len(jobs))) as pool:
        return pool.map(_solve_job, jobs)


def _best_record(records: Sequence[RunRecord]) -> Optional[RunRecord]:
    """Lowest cost; ties go to the earlier declared arm, then the earlier run."""
    usable = [r for r in records if r.solution is not None and r.row.feasible]
    if not usable:
        return None
    return min(usable, key=lambda r: (r.row.cost, r.arm_index, r.row.run))


def _starting_arm(config: ScenarioConfig) -> Tuple[int, ArmConfig]:
    """The arm whose solver solves I_0: the baseline if it restarts, else the first restart arm."""
    arms = list(enumerate(config.arms))
    for arm_index, arm in arms:
        if arm.name == config.baseline_arm and arm.strategy == RESTART:
            return arm_index, arm
    return next(((i, a) for i, a in arms if a.strategy == RESTART), arms[0])


def _share_records(records: Sequence[RunRecord], arms: Sequence[ArmConfig]) -> List[RunRecord]:
    """Copy each starting run to every arm, in declaration order."""
    return [
        RunRecord(replace(r.row, arm=arm.name), arm_index, r.solution, r.error)
        for arm_index, arm in enumerate(arms)
        for r in records
    ]


def run_scenario(config: ScenarioConfig) -> ScenarioLog:
    """Solve and simulate a chain of up to ``config.instances`` instances.

    Raises:
        SolverError: When every run on some instance fails
    """
    log = ScenarioLog(config.scenario_id)
    instance = DcarpInstance.load(config.instance)
    previous: Optional[Solution] = None

    for m in range(config.instances):
        remaining = (
            remaining_tasks_per_outside_vehicle(instance, previous) if previous is not None else 0.0
        )
        record = InstanceRecord(
            m,
            instance.to_text(),
            len(instance.network.tasks),
            len(instance.outside_vehicles),
            remaining,
        )
        log.instances.append(record)
        logger.info(
            f"{config.scenario_id} m={m}: {record.tasks} tasks, "
            f"{record.outside_vehicles} outside vehicles"
        )

        # I_0 is solved once per run by the restart arm and shared by every arm
        solving = list(enumerate(config.arms)) if m > 0 else [_starting_arm(config)]
        jobs = []
        for arm_index, arm in solving:
            for run in range(config.runs):
                seed = run_seed(config.master_seed, m, arm_index, run)
                jobs.append(
                    _Job(
                        config.scenario_id,
                        instance,
                        m,
                        arm_index,
                        arm,
                        run,
                        seed,
                        config.solver_budget(instance, seed),
                        previous,
                        config.deterministic,
                    )
                )
        records = _run_jobs(jobs, config.workers)
        if m == 0:
            records = _share_records(records, config.arms)
        log.records.extend(records)

        best = _best_record(records)
        if best is None:
            raise SolverError(f"every run failed on instance {m}")
        record.best_arm = best.row.arm
        logger.info(f"{config.scenario_id} m={m}: best {_number(best.row.cost)} by {best.row.arm}")
        if m == config.instances - 1:
            break

        rng = make_rng(simulation_seed(config.master_seed, m))
        try:
            successor = step_scenario(instance, best.solution, config.events, rng)
        except ScenarioComplete:
            break
        previous, instance = best.solution, successor
        if not instance.network.tasks:
            logger.info(f"{config.scenario_id}: every task served after instance {m}")
            break
    return log


def write_outputs(log: ScenarioLog, config: ScenarioConfig) -> None:
    """Write the log CSV, solutions JSONL, instance files and summaries configured."""
    output = config.output
    if output.log_csv is not None:
        _write(output.log_csv, log.to_csv_text())
    if output.solutions_jsonl is not None:
        lines = []
        for record in log.records:
            row = record.row
            lines.append(
                json.dumps(
                    {
                        "scenario_id": row.scenario_id,
                        "m": row.m,
                        "arm": row.arm,
                        "run": row.run,
                        "cost": row.cost,
                        "solution": None
                        if record.solution is None
                        else format_solution(record.solution),
                        "error": record.error,
                    },
                    sort_keys=True,
                )
            )
        _write(output.solutions_jsonl, "\n".join(lines) + "\n")
    if output.instances_dir is not None:
        output.instances_dir.mkdir(parents=True, exist_ok=True)
        for instance in log.instances:
            _write(output.instances_dir / f"{log.scenario_id}_m{instance.m}.dcarp", instance.text)
    if output.instances_csv is not None:
        _write(output.instances_csv, instances_to_csv(log))
    if output.summary_csv is not None:
        _write(output.summary_csv, summary_to_csv(summarize(log.rows, config.baseline_arm)))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.debug(f"Wrote {path}")


# ---------------------------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------------------------


def rows_to_csv(rows: Iterable[LogRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())
    return buffer.getvalue()


def instances_to_csv(log: ScenarioLog) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(INSTANCE_COLUMNS)
    for record in log.instances:
        writer.writerow(
            [
                log.scenario_id,
                record.m,
                record.tasks,
                record.outside_vehicles,
                f"{record.remaining_per_vehicle:.4f}",
            ]
        )
    return buffer.getvalue()


def read_log(source: Union[str, Path, io.TextIOBase]) -> List[LogRow]:
    """Parse a scenario log CSV.

    Raises:
        ConfigError: When the header does not match the log columns
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
        raise ConfigError(f"log header must be {','.join(LOG_COLUMNS)}")
    rows = []
    for raw in reader:
        rows.append(
            LogRow(
                raw["scenario_id"],
                int(raw["m"]),
                raw["arm"],
                int(raw["run"]),
                int(raw["seed"]),
                float(raw["cost"]) if raw["cost"] else None,
                int(raw["wall_ms"]),
                raw["feasible"].lower() == "true",
            )
        )
    return rows


def read_instance_records(path: Union[str, Path]) -> Dict[Tuple[str, int], float]:
    """(scenario_id, m) -> average remaining tasks per outside vehicle."""
    with open(path, newline="", encoding="utf-8") as handle:
        return {
            (raw["scenario_id"], int(raw["m"])): float(raw["remaining_per_vehicle"])
            for raw in csv.DictReader(handle)
        }


@dataclass(frozen=True)
class SummaryRow:
    m: int
    arm: str
    runs: int
    mean: float
    std: float
    min: float
    wins: int
    draws: int
    losses: int


def _means(rows: Iterable[LogRow]) -> Dict[Tuple[str, int, str], float]:
    grouped: Dict[Tuple[str, int, str], List[float]] = {}
    for row in rows:
        if row.feasible and row.cost is not None:
            grouped.setdefault((row.scenario_id, row.m, row.arm), []).append(row.cost)
    return {key: float(np.mean(values)) for key, values in grouped.items()}


def summarize(rows: Sequence[LogRow], baseline: Optional[str] = None) -> List[SummaryRow]:
    """Mean, standard deviation and minimum per (instance, arm), with win/draw/lose counts
    against ``baseline`` over scenarios (lower mean wins)."""
    costs: Dict[Tuple[int, str], List[float]] = {}
    order: List[str] = []
    for row in rows:
        if row.arm not in order:
            order.append(row.arm)
        if row.feasible and row.cost is not None:
            costs.setdefault((row.m, row.arm), []).append(row.cost)
    means = _means(rows)
    scenarios = sorted({row.scenario_id for row in rows})

    summary = []
    for m, arm in sorted(costs, key=lambda key: (key[0], order.index(key[1]))):
        values = np.asarray(costs[(m, arm)], dtype=float)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        wins = draws = losses = 0
        if baseline is not None:
            for scenario in scenarios:
                mine = means.get((scenario, m, arm))
                theirs = means.get((scenario, m, baseline))
                if mine is None or theirs is None:
                    continue
                if mine < theirs:
                    wins += 1
                elif mine == theirs:
                    draws += 1
                else:
                    losses += 1
        summary.append(
            SummaryRow(
                m=m,
                arm=arm,
                runs=len(values),
                mean=float(values.mean()),
                std=std,
                min=float(values.min()),
                wins=wins,
                draws=draws,
                losses=losses,
            )
        )
    return summary


def win_rate_by_remaining(
    rows: Sequence[LogRow],
    remaining: Mapping[Tuple[str, int], float],
    arm: str,
    baseline: str,
) -> Dict[str, Tuple[int, int]]:
    """Wins of ``arm`` over ``baseline`` per bin of average remaining tasks per outside
    vehicle, as (wins, compared) pairs. Instances without outside vehicles are skipped."""
    means = _means(rows)
    result = {name: (0, 0) for name, _, _ in REMAINING_BINS}
    for (scenario, m), value in sorted(remaining.items()):
        if m == 0:
            continue
        mine, theirs = means.get((scenario, m, arm)), means.get((scenario, m, baseline))
        if mine is None or theirs is None:
            continue
        for name, low, high in REMAINING_BINS:
            if low <= value < high:
                wins, total = result[name]
                result[name] = (wins + (mine < theirs), total + 1)
                break
    return result


def summary_to_csv(summary: Iterable[SummaryRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summary:
        mean, std = f"{s.mean:.4f}", f"{s.std:.4f}"
        writer.writerow([s.m, s.arm, s.runs, mean, std, _number(s.min), s.wins, s.draws, s.losses])
    return buffer.getvalue()


def summary_to_text(summary: Iterable[SummaryRow], baseline: Optional[str] = None) -> str:
    """Aligned table: ``mean ± std`` per instance and arm, with W-D-L against the baseline."""
    table = []
    for s in summary:
        wdl = f"{s.wins}-{s.draws}-{s.losses}" if baseline is not None else ""
        table.append([s.m, s.arm, s.runs, f"{s.mean:.2f} ± {s.std:.2f}", _number(s.min), wdl])
    headers = ["m", "arm", "runs", "mean ± std", "min", f"W-D-L vs {baseline}" if baseline else ""]
    return tabulate(table, headers=headers, tablefmt="simple")


def win_rate_to_text(rates: Mapping[str, Tuple[int, int]], arm: str, baseline: str) -> str:
    table = [
        [name, wins, total, f"{wins / total:.2f}" if total else "-"]
        for name, (wins, total) in rates.items()
    ]
    return tabulate(
        table, headers=["remaining/vehicle", f"{arm} wins", "compared", "rate"], tablefmt="simple"
    )

