"""Train on shared runs and predict an unseen configuration.

Cross-validation picks between the similarity-based (pessimistic) and the
factor-based (optimistic) model; both are compared with the simulator's truth.
"""
from c3o.core import ClusterConfig, encode_inputs
from c3o.repository import RuntimeDataset, ingest
from c3o.selector import select_and_train, train_family
from c3o.simulator import default_scenario, generate_dataset, ground_truth_runtime

scenario = default_scenario("grep", seed=3)
spec = scenario.spec
dataset, _ = ingest(RuntimeDataset(spec.signature, spec.catalog), generate_dataset(scenario))
names = tuple(m.name for m in spec.catalog)

model, report = select_and_train(dataset.points(), machine_names=names)
print(f"{report.n_points} points, {report.folds}-fold CV error: " + ", ".join(f"{k}={v:.3f}" for k, v in report.mrae.items()))
print(f"selected: {report.chosen}")

config = ClusterConfig("r5.xlarge", 9)
data = {"size_mb": 17_500.0, "keyword_ratio": 0.1}
query = encode_inputs(spec.catalog, config, data, {})
truth = ground_truth_runtime(spec, config, data, {})
for family in ("pessimistic", "optimistic"):
    pred = train_family(family, dataset.points(), machine_names=names).predict(query)
    print(f"{family:<12} {pred / 1000:8.1f} s   (truth {truth / 1000:.1f} s, error {abs(pred - truth) / truth:.1%})")
