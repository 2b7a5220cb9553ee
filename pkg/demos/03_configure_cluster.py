"""Pick the cheapest cluster that finishes within a deadline, then check it against exhaustive search."""
from c3o.configurator import CandidateGrid, evaluate_grid, rank_machine_types, recommend
from c3o.core import RuntimeTarget
from c3o.evaluation import oracle_configuration
from c3o.repository import RuntimeDataset, ingest
from c3o.selector import select_and_train
from c3o.simulator import GroundTruthModel, default_scenario, generate_dataset

scenario = default_scenario("sgd", seed=0)
spec = scenario.spec
dataset, _ = ingest(RuntimeDataset(spec.signature, spec.catalog), generate_dataset(scenario))
model, report = select_and_train(dataset.points(), machine_names=tuple(m.name for m in spec.catalog))

data, params = {"size_mb": 20_000.0}, {"max_iterations": 40.0}
target = RuntimeTarget(90_000.0)
grid = CandidateGrid(tuple(spec.catalog))
rec = recommend(evaluate_grid(model, grid, data, params, spec.catalog), target, model.family)
lines = rec.to_table().splitlines()
print("\n".join(lines[:10]))
print(f"  ... {len(lines) - 10} more candidates")

oracle, cost = oracle_configuration(spec, [m.name for m in spec.catalog], grid.node_counts, data, params, target)
print(f"\nexhaustive search on the true runtimes: {oracle.machine_type} x{oracle.node_count} (${cost:.4f})")

# the memory cliff at two nodes reshuffles which machine type is cheapest there
ranking = rank_machine_types(evaluate_grid(GroundTruthModel(spec, spec.catalog), grid, data, params, spec.catalog))
print(f"machine ranking stable across scale-outs: {ranking.stable}; differs at n={list(ranking.unstable_node_counts)}")
