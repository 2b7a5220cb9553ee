"""When to trust which model: extrapolating to larger clusters versus recurring configurations."""
from c3o.evaluation import dense_scenario, evaluate_all, extrapolation_scenario, results_table

scenarios = [extrapolation_scenario(job, 0) for job in ("sort", "pagerank", "sgd")]
scenarios += [dense_scenario(job, 0) for job in ("grep", "kmeans")]
print(results_table(evaluate_all(scenarios)))
print("\nextrapolate-*: trained on 2-4 nodes, queried at 12; dense-*: every query configuration was seen before")
