"""Ground-truth coefficients of the built-in simulated jobs.

Absolute magnitudes are free choices. What is pinned down are the shapes:
runtime linear in input size, power-law (non-linear) parameter effects,
memory bottlenecks that triple the runtime while data per node exceeds half a
node's memory, a machine-type cost ranking that does not depend on the scale
out, a flat PageRank scale-out curve, and a Grep scale-out curve whose shape
depends on the share of lines containing the keyword.

Every derived test value is recomputed from these constants.
"""

IMPLEMENTATION_ID = "spark-2.4.4"
MB_PER_GB = 1000.0
EPOCH_START = 1_600_000_000
SUBMIT_INTERVAL_S = 60
DEFAULT_REPLICATES = 5
MAX_NOISE_CV = 0.5

# name, vcpus, memory_gb, price_per_hour (USD)
CATALOG = (
    ("m5.xlarge", 4, 16.0, 0.192),
    ("c5.2xlarge", 8, 16.0, 0.34),
    ("r5.xlarge", 4, 32.0, 0.252),
    ("m5.2xlarge", 8, 32.0, 0.384),
)

BOTTLENECK_MEMORY_FRACTION = 0.5
BOTTLENECK_PENALTY = 3.0

# scale-out curve coefficients (t0, t1, t2, t3) of t0 + t1/n + t2*log2(n) + t3*n
JOBS = {
    "sort": {
        "base_rate": 60_000.0,
        "scaleout": (0.04, 1.0, 0.01, 0.002),
        "size_range_mb": (10_000.0, 20_000.0),
        "machine_factors": {"m5.xlarge": 1.0, "c5.2xlarge": 0.66, "r5.xlarge": 0.80, "m5.2xlarge": 0.55},
        "param_curves": {},
        "data_ranges": {},
        "bottleneck": False,
        "table_count": 126,
    },
    "grep": {
        "base_rate": 40_000.0,
        "scaleout": (0.02, 1.0, 0.0, 0.001),
        # sequential write-back of matching lines, blended in by keyword_ratio
        "interaction": ("keyword_ratio", (0.6, 0.4, 0.0, 0.0)),
        "size_range_mb": (10_000.0, 20_000.0),
        "machine_factors": {"m5.xlarge": 1.0, "c5.2xlarge": 0.50, "r5.xlarge": 0.97, "m5.2xlarge": 0.53},
        "param_curves": {},
        "data_ranges": {"keyword_ratio": (0.0, 1.0)},
        "bottleneck": False,
        "table_count": 162,
    },
    "sgd": {
        "base_rate": 30_000.0,
        "scaleout": (0.05, 1.2, 0.02, 0.003),
        "size_range_mb": (10_000.0, 30_000.0),
        "machine_factors": {"m5.xlarge": 1.0, "c5.2xlarge": 0.50, "r5.xlarge": 0.88, "m5.2xlarge": 0.47},
        # reference, exponent, low, high, integer, log-uniform sampling
        "param_curves": {"max_iterations": (50.0, 0.7, 1.0, 100.0, True, False)},
        "data_ranges": {},
        "bottleneck": True,
        "table_count": 180,
    },
    "kmeans": {
        "base_rate": 35_000.0,
        "scaleout": (0.06, 1.0, 0.03, 0.002),
        "size_range_mb": (10_000.0, 20_000.0),
        "machine_factors": {"m5.xlarge": 1.0, "c5.2xlarge": 0.52, "r5.xlarge": 0.90, "m5.2xlarge": 0.48},
        "param_curves": {
            "k_clusters": (6.0, 0.6, 3.0, 9.0, True, False),
            "convergence_criterion": (0.001, -0.1, 0.001, 0.001, False, False),
        },
        "data_ranges": {},
        "bottleneck": True,
        "table_count": 180,
    },
    "pagerank": {
        "base_rate": 500_000.0,
        "scaleout": (1.0, 0.35, 0.0, 0.0),
        "size_range_mb": (130.0, 440.0),
        "machine_factors": {"m5.xlarge": 1.0, "c5.2xlarge": 0.75, "r5.xlarge": 0.70, "m5.2xlarge": 0.52},
        "param_curves": {"convergence_criterion": (0.001, -0.25, 0.0001, 0.01, False, True)},
        "data_ranges": {},
        "bottleneck": False,
        "table_count": 282,
    },
}

# collaborating contributors of the default scenarios: share of the job's
# experiment count, machine types (None = all), node counts
DEFAULT_CONTEXTS = (
    ("org-a", 0.4, None, (2, 4, 6, 8, 10, 12)),
    ("org-b", 0.3, ("m5.xlarge", "c5.2xlarge"), (2, 3, 4, 5, 6, 7, 8)),
    ("org-c", 0.3, ("r5.xlarge", "m5.2xlarge"), (4, 6, 8, 10, 12)),
)
