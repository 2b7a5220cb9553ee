"""Runtime data manager: shared runtime records for one job signature.

A :class:`RuntimeDataset` keeps the raw records in ingestion order and a
collapsed view in which replicate executions of one configuration are merged
into a single training point carrying their median runtime.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import (
    MACHINE_FEATURE,
    ClusterConfig,
    FeatureVector,
    JobSignature,
    MachineType,
    RuntimeRecord,
    dump_records,
    encode_features,
    iter_jsonl,
    median_runtime,
    record_from_dict,
    validate_record,
)
from .errors import (
    C3OError,
    EmptyDataset,
    FeatureKeyMismatch,
    InvalidField,
    NotEnoughData,
    SignatureMismatch,
    UnknownMachineType,
)

log = logging.getLogger(__name__)

Point = tuple[FeatureVector, float]


@dataclass(frozen=True)
class CollapsedPoint:
    """All replicates of one configuration merged into a single training point."""

    features: FeatureVector
    runtime_ms: float
    config: ClusterConfig
    record_indices: tuple[int, ...]

    def as_point(self) -> Point:
        return self.features, self.runtime_ms


WEIGHT_DECIMALS = 12


@dataclass(frozen=True)
class CorrelationWeights:
    names: tuple[str, ...]
    weights: tuple[float, ...]

    def weight(self, name: str) -> float:
        return self.weights[self.names.index(name)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "CorrelationWeights":
        return cls(tuple(obj["names"]), tuple(float(w) for w in obj["weights"]))


@dataclass(frozen=True)
class Rejection:
    index: int
    error: str
    message: str


@dataclass
class IngestReport:
    accepted: int = 0
    duplicates: int = 0
    replicates_merged: int = 0
    rejections: list[Rejection] = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return len(self.rejections)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "duplicates": self.duplicates,
            "replicates_merged": self.replicates_merged,
            "rejections": [r.__dict__ for r in self.rejections],
        }


@dataclass(frozen=True)
class RuntimeDataset:
    """Immutable snapshot of the shared runtime data of one job signature.

    ``signature`` may be None for a fresh dataset; the first accepted record
    then fixes it.
    """

    signature: JobSignature | None
    catalog: tuple[MachineType, ...]
    records: tuple[RuntimeRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "catalog", tuple(self.catalog))
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)

    @property
    def feature_keys(self):
        return self.records[0].feature_keys if self.records else None

    @cached_property
    def collapsed(self) -> tuple[CollapsedPoint, ...]:
        groups: dict[tuple, list[int]] = {}
        for i, record in enumerate(self.records):
            groups.setdefault(record.replicate_key, []).append(i)
        points = []
        for indices in groups.values():
            first = self.records[indices[0]]
            runtime = median_runtime([self.records[i].runtime_ms for i in indices])
            points.append(CollapsedPoint(encode_features(first, self.catalog), runtime, first.config, tuple(indices)))
        return tuple(points)

    def points(self) -> list[Point]:
        return [p.as_point() for p in self.collapsed]


def ingest(dataset: RuntimeDataset, new_records: Iterable[RuntimeRecord | Mapping]) -> tuple[RuntimeDataset, IngestReport]:
    """Append valid, matching, non-duplicate records; never aborts on a bad record.

    ``new_records`` may hold parsed records or raw decoded JSON objects.
    """
    report = IngestReport()
    signature = dataset.signature
    keys = dataset.feature_keys
    records = list(dataset.records)
    seen = {r.identity_key for r in records}
    configs = {r.replicate_key for r in records}
    catalog_names = {m.name for m in dataset.catalog}

    for i, raw in enumerate(new_records):
        try:
            record = validate_record(raw) if isinstance(raw, RuntimeRecord) else record_from_dict(raw)
            if signature is not None and record.signature != signature:
                raise SignatureMismatch(f"expected {signature}, got {record.signature}")
            if record.config.machine_type not in catalog_names:
                raise UnknownMachineType(record.config.machine_type)
            if keys is not None and record.feature_keys != keys:
                raise FeatureKeyMismatch(
                    f"feature keys {_fmt_keys(record.feature_keys)} differ from dataset keys {_fmt_keys(keys)}"
                )
        except C3OError as exc:
            report.rejections.append(Rejection(i, type(exc).__name__, str(exc)))
            continue
        if record.identity_key in seen:
            report.duplicates += 1
            continue
        if record.replicate_key in configs:
            report.replicates_merged += 1
        signature = record.signature
        keys = record.feature_keys
        seen.add(record.identity_key)
        configs.add(record.replicate_key)
        records.append(record)
        report.accepted += 1
    if report.rejections:
        log.info("ingest rejected %d of %d records", report.rejected, report.rejected + report.accepted + report.duplicates)
    return RuntimeDataset(signature, dataset.catalog, tuple(records)), report


def _fmt_keys(keys) -> str:
    data, params = keys
    return f"data={sorted(data)} params={sorted(params)}"


def _pearson_abs(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if np.ptp(x) == 0 or np.ptp(y) == 0 or denom == 0:
        return 0.0
    return float(min(1.0, abs(np.dot(dx, dy)) / denom))


def _correlation_ratio(categories: np.ndarray, y: np.ndarray) -> float:
    # eta; equals |Pearson r| of the 0/1 coding when there are two categories
    labels = np.unique(categories)
    if len(labels) < 2 or np.ptp(y) == 0:
        return 0.0
    dy = y - y.mean()
    total = np.dot(dy, dy)
    between = sum(
        (categories == c).sum() * (y[categories == c].mean() - y.mean()) ** 2 for c in labels
    )
    return float(min(1.0, np.sqrt(between / total)))


def feature_weights(points: Sequence[Point]) -> CorrelationWeights:
    """|correlation| between each feature and the runtime over ``points``.

    Undefined correlations (constant feature or constant runtime, or fewer
    than two points) get weight 0. The machine-type index is categorical and
    uses the correlation ratio instead of Pearson's r.
    """
    if not points:
        raise NotEnoughData("no points")
    names = points[0][0].names
    if len(points) < 2:
        return CorrelationWeights(names, (0.0,) * len(names))
    X = np.array([p[0].values for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    weights = []
    for j, name in enumerate(names):
        if name == MACHINE_FEATURE:
            w = _correlation_ratio(X[:, j], y)
        else:
            w = _pearson_abs(X[:, j], y)
        # rounding drops float residue (1e-17 for a true zero) that would
        # otherwise make distances depend on the runtime scale
        weights.append(round(w, WEIGHT_DECIMALS))
    return CorrelationWeights(names, tuple(weights))


def correlation_weights(dataset: RuntimeDataset) -> CorrelationWeights:
    collapsed = dataset.collapsed
    if len(collapsed) < 2:
        raise NotEnoughData(f"need >= 2 distinct configurations, have {len(collapsed)}")
    return feature_weights(dataset.points())


def coverage_distances(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Pairwise unweighted distances in min-max normalized space.

    The machine-type index contributes 0/1 (same/different), never a magnitude.
    """
    X = np.array([v.values for v in vectors], dtype=float).reshape(len(vectors), -1)
    names = vectors[0].names
    span = np.ptp(X, axis=0)
    Z = np.where(span == 0, 0.5, (X - X.min(axis=0)) / np.where(span == 0, 1.0, span))
    sq = np.zeros((len(X), len(X)))
    for j, name in enumerate(names):
        col = X[:, j] if name == MACHINE_FEATURE else Z[:, j]
        diff = col[:, None] - col[None, :]
        sq += (diff != 0).astype(float) if name == MACHINE_FEATURE else diff**2
    return np.sqrt(sq)


def farthest_point_order(distances: np.ndarray, m: int, tol: float = 1e-12) -> list[int]:
    """Greedy k-center selection seeded at the medoid; ties go to the lowest index."""
    n = len(distances)
    totals = distances.sum(axis=1)
    seed = int(np.flatnonzero(totals <= totals.min() + tol * max(1.0, abs(totals.min())))[0])
    chosen = [seed]
    nearest = distances[seed].copy()
    while len(chosen) < min(m, n):
        best = nearest.max()
        nxt = int(np.flatnonzero(nearest >= best - tol * max(1.0, best))[0])
        chosen.append(nxt)
        nearest = np.minimum(nearest, distances[nxt])
    return chosen


def covering_radius(distances: np.ndarray, selected: Sequence[int]) -> float:
    return float(distances[:, list(selected)].min(axis=1).max())


def coverage_sample(dataset: RuntimeDataset, max_points: int) -> list[CollapsedPoint]:
    """At most ``max_points`` collapsed points spread over the feature space.

    Points come back in selection order (medoid first).
    """
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    collapsed = dataset.collapsed
    if not collapsed:
        raise EmptyDataset("dataset has no records")
    if max_points >= len(collapsed):
        return list(collapsed)
    distances = coverage_distances([p.features for p in collapsed])
    return [collapsed[i] for i in farthest_point_order(distances, max_points)]


def sample_records(dataset: RuntimeDataset, max_points: int) -> list[RuntimeRecord]:
    """Raw records behind a coverage sample, in ingestion order."""
    chosen = coverage_sample(dataset, max_points)
    indices = sorted(i for p in chosen for i in p.record_indices)
    return [dataset.records[i] for i in indices]


def query(
    dataset: RuntimeDataset,
    machine_type: str | None = None,
    node_range: tuple[int, int] | None = None,
    predicate: Callable[[CollapsedPoint], bool] | None = None,
) -> list[CollapsedPoint]:
    out = []
    for point in dataset.collapsed:
        if machine_type is not None and point.config.machine_type != machine_type:
            continue
        if node_range is not None and not node_range[0] <= point.config.node_count <= node_range[1]:
            continue
        if predicate is not None and not predicate(point):
            continue
        out.append(point)
    return out


def save_dataset(dataset: RuntimeDataset, directory: str | Path) -> Path:
    if dataset.signature is None:
        raise EmptyDataset("cannot name a file for a dataset without records")
    path = Path(directory) / dataset.signature.filename
    dump_records(dataset.records, path)
    return path


def load_dataset(
    path: str | Path,
    catalog: Sequence[MachineType],
    signature: JobSignature | None = None,
) -> tuple[RuntimeDataset, IngestReport]:
    """Read a JSONL file through :func:`ingest`; unparseable lines are reported, not fatal."""
    raws, bad = [], []
    for lineno, obj in iter_jsonl(path):
        if isinstance(obj, InvalidField):
            bad.append(Rejection(lineno - 1, "InvalidField", str(obj)))
        else:
            raws.append(obj)
    dataset, report = ingest(RuntimeDataset(signature, tuple(catalog)), raws)
    report.rejections[:0] = bad
    return dataset, report
