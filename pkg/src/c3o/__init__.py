"""Collaborative runtime prediction and cluster configuration for distributed dataflow jobs.

Organizations share runtime records of the same job; from those records
two model families (a correlation-weighted nearest-neighbour model and a
multiplicative factor model) predict runtimes for unseen configurations,
cross-validation picks between them, and a configurator returns the
cheapest cluster that meets a runtime target. A simulator with known
ground truth stands in for real cloud executions.
"""
from .configurator import CandidateGrid, Recommendation, evaluate_grid, rank_machine_types, recommend
from .core import (
    ClusterConfig,
    FeatureVector,
    JobSignature,
    MachineType,
    RuntimeRecord,
    RuntimeTarget,
    encode_inputs,
    load_records,
)
from .errors import C3OError
from .predictors import model_from_dict, model_to_dict, train_optimistic, train_pessimistic
from .repository import RuntimeDataset, correlation_weights, coverage_sample, ingest, load_dataset
from .selector import SelectionReport, cross_validate, select_and_train
from .simulator import builtin_catalog, builtin_specs, default_scenario, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "C3OError",
    "CandidateGrid",
    "ClusterConfig",
    "FeatureVector",
    "JobSignature",
    "MachineType",
    "Recommendation",
    "RuntimeDataset",
    "RuntimeRecord",
    "RuntimeTarget",
    "SelectionReport",
    "builtin_catalog",
    "builtin_specs",
    "correlation_weights",
    "coverage_sample",
    "cross_validate",
    "default_scenario",
    "encode_inputs",
    "evaluate_grid",
    "generate_dataset",
    "ingest",
    "load_dataset",
    "load_records",
    "model_from_dict",
    "model_to_dict",
    "rank_machine_types",
    "recommend",
    "select_and_train",
    "train_optimistic",
    "train_pessimistic",
]
