"""Cluster configurator: evaluate a candidate grid with a runtime model and pick the cheapest feasible configuration."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import ClusterConfig, MachineType, RuntimeTarget, encode_inputs
from .errors import C3OError, FeatureMismatch, NoPredictableCandidate, NotEnoughData

MS_PER_HOUR = 3_600_000.0
DEFAULT_NODE_COUNTS = tuple(range(2, 17))
CSV_COLUMNS = ("machine_type", "node_count", "predicted_runtime_ms", "predicted_cost_usd", "feasible")


@dataclass(frozen=True)
class CandidateGrid:
    machine_types: tuple[MachineType, ...]
    node_counts: tuple[int, ...] = DEFAULT_NODE_COUNTS

    def __post_init__(self):
        object.__setattr__(self, "machine_types", tuple(self.machine_types))
        object.__setattr__(self, "node_counts", tuple(int(n) for n in self.node_counts))
        if not self.machine_types or not self.node_counts:
            raise ValueError("candidate grid needs at least one machine type and one node count")
        if any(b <= a for a, b in zip(self.node_counts, self.node_counts[1:])) or self.node_counts[0] < 1:
            raise ValueError("node counts must be positive and strictly increasing")


@dataclass(frozen=True)
class Candidate:
    config: ClusterConfig
    price_per_hour: float
    predicted_runtime_ms: float | None
    predicted_cost_usd: float | None
    feasible: bool = False

    @property
    def predictable(self) -> bool:
        return self.predicted_runtime_ms is not None

    def to_dict(self) -> dict:
        return {
            "machine_type": self.config.machine_type,
            "node_count": self.config.node_count,
            "predicted_runtime_ms": self.predicted_runtime_ms,
            "predicted_cost_usd": self.predicted_cost_usd,
            "feasible": self.feasible,
            "unpredictable": not self.predictable,
        }


@dataclass(frozen=True)
class Recommendation:
    config: ClusterConfig
    predicted_runtime_ms: float
    predicted_cost_usd: float
    feasible: bool
    model_used: str
    alternatives: tuple[Candidate, ...] = ()
    reason: str | None = None  # why infeasible: "runtime" or "budget"

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "predicted_runtime_ms": self.predicted_runtime_ms,
            "predicted_cost_usd": self.predicted_cost_usd,
            "feasible": self.feasible,
            "reason": self.reason,
            "model_used": self.model_used,
            "alternatives": [c.to_dict() for c in self.alternatives],
        }

    def to_table(self) -> str:
        status = "feasible" if self.feasible else f"INFEASIBLE ({self.reason})"
        lines = [
            f"recommended: {self.config.node_count} x {self.config.machine_type}  [{status}, model={self.model_used}]",
            f"predicted runtime: {self.predicted_runtime_ms / 1000:.1f} s   predicted cost: ${self.predicted_cost_usd:.4f}",
            "",
            f"{'machine_type':<14}{'nodes':>6}{'runtime_s':>12}{'cost_usd':>11}  feasible",
        ]
        for c in self.alternatives:
            if c.predictable:
                lines.append(
                    f"{c.config.machine_type:<14}{c.config.node_count:>6}"
                    f"{c.predicted_runtime_ms / 1000:>12.1f}{c.predicted_cost_usd:>11.4f}  {'yes' if c.feasible else 'no'}"
                )
            else:
                lines.append(f"{c.config.machine_type:<14}{c.config.node_count:>6}{'-':>12}{'-':>11}  unpredictable")
        return "\n".join(lines)

    def alternatives_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in self.alternatives:
            writer.writerow(
                [c.config.machine_type, c.config.node_count, _blank(c.predicted_runtime_ms), _blank(c.predicted_cost_usd), c.feasible]
            )
        return buf.getvalue()


def _blank(value):
    return "" if value is None else repr(value)


def job_cost(price_per_hour: float, node_count: int, runtime_ms: float) -> float:
    """Fractional-hour cost of ``node_count`` machines for ``runtime_ms``."""
    return price_per_hour * node_count * runtime_ms / MS_PER_HOUR


def evaluate_grid(
    model,
    grid: CandidateGrid,
    data_characteristics: Mapping[str, float],
    parameters: Mapping[str, float],
    catalog: Sequence[MachineType],
) -> list[Candidate]:
    """Predict runtime and cost for every (machine type, node count) pair.

    ``catalog`` must be the catalog the model was trained with, since machine
    types are encoded by catalog position. Candidates the model cannot
    predict stay in the list with ``predicted_runtime_ms=None``.
    """
    out = []
    for machine in grid.machine_types:
        for nodes in grid.node_counts:
            config = ClusterConfig(machine.name, nodes)
            try:
                query = encode_inputs(catalog, config, data_characteristics, parameters)
            except C3OError:
                out.append(Candidate(config, machine.price_per_hour, None, None))
                continue
            if query.names != tuple(model.names):
                raise FeatureMismatch(f"job inputs give features {query.names}, model expects {tuple(model.names)}")
            try:
                runtime = model.predict(query)
            except FeatureMismatch:
                raise
            except C3OError:
                out.append(Candidate(config, machine.price_per_hour, None, None))
                continue
            out.append(Candidate(config, machine.price_per_hour, runtime, job_cost(machine.price_per_hour, nodes, runtime)))
    return out


def _cost_key(c: Candidate):
    return (c.predicted_cost_usd, c.predicted_runtime_ms, c.config.node_count, c.config.machine_type)


def recommend(
    evaluated: Sequence[Candidate],
    target: RuntimeTarget | None = None,
    model_used: str = "unknown",
    budget_usd: float | None = None,
) -> Recommendation:
    """Cheapest candidate meeting the runtime target (and budget, if given).

    Without a feasible candidate the fastest predictable one is returned with
    ``feasible=False``; ``reason`` is "budget" if some candidate met the
    runtime target but none the budget, else "runtime".
    """
    if not evaluated:
        raise NotEnoughData("no candidates to choose from")
    predictable = [c for c in evaluated if c.predictable]
    if not predictable:
        raise NoPredictableCandidate("the model cannot predict any candidate configuration")
    meets_target = [c for c in predictable if target is None or target.admits(c.predicted_runtime_ms)]
    feasible = [c for c in meets_target if budget_usd is None or c.predicted_cost_usd <= budget_usd]
    feasible_ids = {id(c) for c in feasible}
    marked = [
        Candidate(c.config, c.price_per_hour, c.predicted_runtime_ms, c.predicted_cost_usd, id(c) in feasible_ids)
        for c in evaluated
    ]
    alternatives = sorted(
        marked,
        key=lambda c: (not c.predictable, not c.feasible) + (_cost_key(c) if c.predictable else (0, 0, c.config.node_count, c.config.machine_type)),
    )
    if feasible:
        best = min(feasible, key=_cost_key)
        reason = None
    else:
        best = min(predictable, key=lambda c: (c.predicted_runtime_ms, c.predicted_cost_usd, c.config.node_count, c.config.machine_type))
        reason = "budget" if meets_target else "runtime"
    return Recommendation(
        config=best.config,
        predicted_runtime_ms=best.predicted_runtime_ms,
        predicted_cost_usd=best.predicted_cost_usd,
        feasible=bool(feasible),
        model_used=model_used,
        alternatives=tuple(alternatives),
        reason=reason,
    )


@dataclass(frozen=True)
class MachineRanking:
    per_node_count: Mapping[int, tuple[str, ...]]
    stable: bool
    unstable_node_counts: tuple[int, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "per_node_count": {str(n): list(r) for n, r in self.per_node_count.items()},
            "stable": self.stable,
            "unstable_node_counts": list(self.unstable_node_counts),
        }


def rank_machine_types(evaluated: Sequence[Candidate]) -> MachineRanking:
    """Order machine types by predicted cost at each node count.

    ``unstable_node_counts`` lists the node counts whose ranking differs from
    the most common one.
    """
    by_nodes: dict[int, list[Candidate]] = {}
    for c in evaluated:
        if c.predictable:
            by_nodes.setdefault(c.config.node_count, []).append(c)
    machines = {c.config.machine_type for group in by_nodes.values() for c in group}
    if len(machines) < 2:
        raise NotEnoughData("ranking needs at least two predictable machine types")
    ranking = {
        n: tuple(c.config.machine_type for c in sorted(group, key=lambda c: (c.predicted_cost_usd, c.config.machine_type)))
        for n, group in sorted(by_nodes.items())
    }
    counts = Counter(ranking.values())
    modal = max(counts, key=lambda r: (counts[r], -min(n for n, rr in ranking.items() if rr == r)))
    unstable = tuple(n for n, r in ranking.items() if r != modal)
    return MachineRanking(ranking, not unstable, unstable)
