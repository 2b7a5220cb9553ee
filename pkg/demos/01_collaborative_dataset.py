"""Three organisations contribute runs of the same job; the shared dataset merges them.

Shows validation, duplicate handling and replicate collapsing on ingest, then a
coverage-preserving subset for a contributor who only wants to share a few runs.
"""
import json

from c3o.core import record_to_json
from c3o.repository import RuntimeDataset, coverage_sample, ingest
from c3o.simulator import default_scenario, generate_dataset

scenario = default_scenario("kmeans", seed=1)
records = generate_dataset(scenario)
by_org = {}
for r in records:
    by_org.setdefault(r.context_id, []).append(r)

shared = RuntimeDataset(scenario.spec.signature, scenario.spec.catalog)
for org, batch in sorted(by_org.items()):
    shared, report = ingest(shared, batch)
    print(f"{org}: +{report.accepted} records, {report.replicates_merged} replicates merged, {len(shared.collapsed)} configurations")

# a broken contribution is rejected record by record, never wholesale
negative = {**json.loads(record_to_json(records[1])), "runtime_ms": -3.0}
bad = [negative, {"runtime_ms": 12.0}]
shared, report = ingest(shared, [records[0], *bad])
print(f"re-upload: {report.duplicates} duplicate, {report.rejected} rejected ({', '.join(r.error for r in report.rejections)})")

subset = coverage_sample(shared, 10)
print("10 configurations that best cover the feature space:")
for p in subset:
    inputs = {k: round(v, 4) for k, v in zip(p.features.names, p.features.values) if k not in ("machine_type_index", "node_count")}
    print(f"  {p.config.machine_type:<11} n={p.config.node_count:<3} {inputs}")
