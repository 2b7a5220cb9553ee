"""Scenario-based evaluation of both model families and of the configurator against the simulator's ground truth."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .configurator import CandidateGrid, evaluate_grid, job_cost, recommend
from .core import ClusterConfig, RuntimeTarget, encode_inputs
from .errors import C3OError, InvalidScenario
from .predictors import FAMILIES, OPTIMISTIC, PESSIMISTIC
from .repository import RuntimeDataset, ingest
from .selector import FAILED_PREDICTION_ERROR, select_and_train, train_family
from .simulator import (
    Choice,
    ContextRegion,
    GroundTruthSpec,
    ScenarioSpec,
    builtin_specs,
    generate_dataset,
    ground_truth_runtime,
    scenario_from_dict,
    scenario_to_dict,
)

REPORT_COLUMNS = (
    "scenario",
    "n_points",
    "mrae_pessimistic",
    "mrae_optimistic",
    "cv_chosen",
    "recommended",
    "oracle",
    "regret",
)


@dataclass(frozen=True)
class EvaluationScenario:
    """Training data, held-out queries and one configuration request, all drawn from one ground truth.

    Query accuracy is measured on the noise-free runtimes of ``queries``.
    The configuration request asks for the cheapest grid entry meeting a
    runtime target; without ``target_ms`` the target is the median
    ground-truth runtime over the grid.
    """

    name: str
    training: ScenarioSpec
    queries: ScenarioSpec
    job_data: Mapping[str, float]
    job_params: Mapping[str, float]
    grid_machines: tuple[str, ...] | None = None
    grid_nodes: tuple[int, ...] = tuple(range(2, 17))
    target_ms: float | None = None

    @property
    def spec(self) -> GroundTruthSpec:
        return self.training.spec


@dataclass(frozen=True)
class EvaluationResult:
    scenario: str
    n_points: int
    mrae: Mapping[str, float]
    cv_chosen: str
    recommended: ClusterConfig
    oracle: ClusterConfig
    regret: float
    target_ms: float
    cv_mrae: Mapping[str, float] = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_points": self.n_points,
            "mrae_pessimistic": self.mrae[PESSIMISTIC],
            "mrae_optimistic": self.mrae[OPTIMISTIC],
            "cv_chosen": self.cv_chosen,
            "recommended": f"{self.recommended.node_count}x{self.recommended.machine_type}",
            "oracle": f"{self.oracle.node_count}x{self.oracle.machine_type}",
            "regret": self.regret,
        }


def oracle_configuration(
    spec: GroundTruthSpec,
    machines: Sequence[str],
    node_counts: Sequence[int],
    data: Mapping[str, float],
    params: Mapping[str, float],
    target: RuntimeTarget | None,
) -> tuple[ClusterConfig, float]:
    """Exhaustive search over ground-truth runtimes; returns the optimal config and its true cost."""
    prices = {m.name: m.price_per_hour for m in spec.catalog}
    rows = []
    for machine in machines:
        for n in node_counts:
            config = ClusterConfig(machine, n)
            runtime = ground_truth_runtime(spec, config, data, params)
            cost = prices[machine] * n * runtime / 3_600_000.0
            rows.append((config, runtime, cost))
    feasible = [r for r in rows if target is None or r[1] * target.safety_margin <= target.max_runtime_ms]
    if feasible:
        best = min(feasible, key=lambda r: (r[2], r[1], r[0].node_count, r[0].machine_type))
    else:
        best = min(rows, key=lambda r: (r[1], r[2], r[0].node_count, r[0].machine_type))
    return best[0], best[2]


def query_mrae(model, spec: GroundTruthSpec, queries, catalog) -> float:
    """Mean relative error against ground truth; unpredictable queries count 1.0."""
    errors = []
    for config, data, params in queries:
        truth = ground_truth_runtime(spec, config, data, params)
        try:
            predicted = model.predict(encode_inputs(catalog, config, data, params))
        except C3OError:
            errors.append(FAILED_PREDICTION_ERROR)
            continue
        errors.append(abs(predicted - truth) / truth)
    return float(np.mean(errors))


def distinct_queries(records) -> list:
    seen, out = set(), []
    for r in records:
        if r.replicate_key not in seen:
            seen.add(r.replicate_key)
            out.append((r.config, dict(r.data_characteristics), dict(r.parameters)))
    return out


def evaluate_scenario(scenario: EvaluationScenario, folds: int = 5, min_points_for_cv: int = 5) -> EvaluationResult:
    spec = scenario.spec
    catalog = spec.catalog
    machine_names = tuple(m.name for m in catalog)
    dataset, _ = ingest(RuntimeDataset(spec.signature, catalog), generate_dataset(scenario.training))
    points = dataset.points()
    queries = distinct_queries(generate_dataset(scenario.queries))

    mrae = {f: query_mrae(train_family(f, points, machine_names=machine_names), spec, queries, catalog) for f in FAMILIES}
    model, report = select_and_train(points, folds=folds, min_points_for_cv=min_points_for_cv, machine_names=machine_names)

    grid_machines = scenario.grid_machines or tuple(spec.machine_factors)
    grid = CandidateGrid(tuple(spec.machine(m) for m in grid_machines), scenario.grid_nodes)
    target_ms = scenario.target_ms
    if target_ms is None:
        truths = [
            ground_truth_runtime(spec, ClusterConfig(m, n), scenario.job_data, scenario.job_params)
            for m in grid_machines
            for n in grid.node_counts
        ]
        target_ms = float(np.median(truths))
    target = RuntimeTarget(target_ms)

    evaluated = evaluate_grid(model, grid, scenario.job_data, scenario.job_params, catalog)
    rec = recommend(evaluated, target, model.family)
    oracle, oracle_cost = oracle_configuration(spec, grid_machines, grid.node_counts, scenario.job_data, scenario.job_params, target)
    true_rec_runtime = ground_truth_runtime(spec, rec.config, scenario.job_data, scenario.job_params)
    rec_cost = job_cost(spec.machine(rec.config.machine_type).price_per_hour, rec.config.node_count, true_rec_runtime)
    return EvaluationResult(
        scenario=scenario.name,
        n_points=len(points),
        mrae=mrae,
        cv_chosen=report.chosen,
        recommended=rec.config,
        oracle=oracle,
        regret=(rec_cost - oracle_cost) / oracle_cost,
        target_ms=target_ms,
        cv_mrae=dict(report.mrae),
    )


def evaluate_all(scenarios: Sequence[EvaluationScenario], **kwargs) -> list[EvaluationResult]:
    """Evaluate scenarios; results are sorted by scenario name."""
    return [evaluate_scenario(s, **kwargs) for s in sorted(scenarios, key=lambda s: s.name)]


# --- built-in scenario families --------------------------------------------

# discrete input levels inside each job's benchmark ranges
LEVELS = {
    "size_mb": {
        "sort": (10_000.0, 15_000.0, 20_000.0),
        "grep": (10_000.0, 15_000.0, 20_000.0),
        "sgd": (10_000.0, 20_000.0, 30_000.0),
        "kmeans": (10_000.0, 15_000.0, 20_000.0),
        "pagerank": (130.0, 280.0, 440.0),
    },
    "keyword_ratio": (0.01, 0.25, 0.5),
    "max_iterations": (10.0, 50.0, 100.0),
    "k_clusters": (3.0, 6.0, 9.0),
    "convergence_criterion": {"kmeans": (0.001,), "pagerank": (0.0001, 0.001, 0.01)},
}


def job_levels(spec: GroundTruthSpec) -> dict[str, tuple[float, ...]]:
    out = {}
    for key in spec.data_keys + spec.param_keys:
        levels = LEVELS[key]
        out[key] = levels[spec.job] if isinstance(levels, dict) else levels
    return out


def _middle_inputs(spec: GroundTruthSpec) -> tuple[dict, dict]:
    levels = job_levels(spec)
    mid = {k: v[len(v) // 2] for k, v in levels.items()}
    return {k: mid[k] for k in spec.data_keys}, {k: mid[k] for k in spec.param_keys}


def _factorial_context(spec, context_id, machines, nodes) -> ContextRegion:
    levels = job_levels(spec)
    return ContextRegion(
        context_id,
        count=1,
        machine_types=machines,
        node_counts=tuple(nodes),
        data={k: Choice(levels[k]) for k in spec.data_keys},
        parameters={k: Choice(levels[k]) for k in spec.param_keys},
        factorial=True,
    )


def extrapolation_scenario(job: str, seed: int, noise_cv: float = 0.05, train_nodes=(2, 3, 4), query_node: int = 12) -> EvaluationScenario:
    """Training only at small scale-outs; queries far beyond them."""
    spec = builtin_specs()[job]
    machines = tuple(spec.machine_factors)
    data, params = _middle_inputs(spec)
    return EvaluationScenario(
        name=f"extrapolate-{job}-s{seed}",
        training=ScenarioSpec(spec, (_factorial_context(spec, "small-scale", machines, train_nodes),), noise_cv, seed),
        queries=ScenarioSpec(spec, (_factorial_context(spec, "query", machines, (query_node,)),), 0.0, seed, replicates=1),
        job_data=data,
        job_params=params,
        grid_nodes=tuple(sorted(set(train_nodes) | {query_node})),
    )


def dense_scenario(job: str, seed: int, noise_cv: float = 0.05, nodes=tuple(range(2, 13))) -> EvaluationScenario:
    """Recurring configurations: the training grid with replicates covers every query."""
    spec = builtin_specs()[job]
    machines = tuple(spec.machine_factors)
    data, params = _middle_inputs(spec)
    return EvaluationScenario(
        name=f"dense-{job}-s{seed}",
        training=ScenarioSpec(spec, (_factorial_context(spec, "recurring", machines, nodes),), noise_cv, seed),
        queries=ScenarioSpec(spec, (_factorial_context(spec, "query", machines, nodes),), 0.0, seed, replicates=1),
        job_data=data,
        job_params=params,
        grid_nodes=tuple(nodes),
    )


def builtin_scenarios(seed: int = 0) -> list[EvaluationScenario]:
    out = []
    for job in builtin_specs():
        out.append(dense_scenario(job, seed))
        out.append(extrapolation_scenario(job, seed))
    return sorted(out, key=lambda s: s.name)


def evaluation_scenario_from_dict(obj: Mapping) -> EvaluationScenario:
    """Scenario file entry: ``name``, ``training`` and ``queries`` scenario objects, job inputs, optional grid and target."""
    try:
        training = scenario_from_dict(obj["training"])
        queries = scenario_from_dict(obj["queries"])
        name = str(obj["name"])
    except KeyError as exc:
        raise InvalidScenario(f"evaluation scenario missing {exc.args[0]!r}") from None
    if queries.spec.job != training.spec.job:
        raise InvalidScenario(f"{name}: training and queries use different jobs")
    default_data, default_params = _middle_inputs(training.spec)
    return EvaluationScenario(
        name=name,
        training=training,
        queries=queries,
        job_data={k: float(v) for k, v in obj.get("job_data", default_data).items()},
        job_params={k: float(v) for k, v in obj.get("job_params", default_params).items()},
        grid_machines=None if obj.get("grid_machines") is None else tuple(obj["grid_machines"]),
        grid_nodes=tuple(int(n) for n in obj.get("grid_nodes", range(2, 17))),
        target_ms=None if obj.get("target_ms") is None else float(obj["target_ms"]),
    )


def evaluation_scenario_to_dict(scenario: EvaluationScenario) -> dict:
    return {
        "name": scenario.name,
        "training": scenario_to_dict(scenario.training),
        "queries": scenario_to_dict(scenario.queries),
        "job_data": dict(scenario.job_data),
        "job_params": dict(scenario.job_params),
        "grid_machines": None if scenario.grid_machines is None else list(scenario.grid_machines),
        "grid_nodes": list(scenario.grid_nodes),
        "target_ms": scenario.target_ms,
    }


def load_evaluation_scenarios(path) -> list[EvaluationScenario]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    items = obj["scenarios"] if isinstance(obj, dict) else obj
    return [evaluation_scenario_from_dict(item) for item in items]


def results_csv(results: Sequence[EvaluationResult]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.row())
    return buf.getvalue()


def results_table(results: Sequence[EvaluationResult]) -> str:
    lines = [f"{'scenario':<26}{'n':>5}{'mrae_pess':>11}{'mrae_opt':>10}  {'chosen':<12}{'recommended':<16}{'oracle':<16}{'regret':>8}"]
    for r in results:
        row = r.row()
        lines.append(
            f"{row['scenario']:<26}{row['n_points']:>5}{row['mrae_pessimistic']:>11.4f}{row['mrae_optimistic']:>10.4f}  "
            f"{row['cv_chosen']:<12}{row['recommended']:<16}{row['oracle']:<16}{row['regret']:>8.4f}"
        )
    return "\n".join(lines)
