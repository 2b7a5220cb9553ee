"""Domain types, record validation, feature encoding and the JSONL record format.

Everything here is immutable and pure. A :class:`RuntimeRecord` is one
historical execution of a shared job; :func:`encode_features` turns it into
the numeric :class:`FeatureVector` the runtime models work on.
"""
from __future__ import annotations

import json
import math
import re
import statistics
from dataclasses import dataclass
from numbers import Integral, Real
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    HeterogeneousFeatures,
    InvalidField,
    UnknownMachineType,
)

MACHINE_FEATURE = "machine_type_index"
NODE_FEATURE = "node_count"
SIZE_KEY = "size_mb"
RECORD_KEYS = (
    "signature",
    "config",
    "data_characteristics",
    "parameters",
    "context_id",
    "runtime_ms",
    "submitted_at",
)

_NAME_RE = re.compile(r"[a-z0-9_-]+")
_BOUNDED_UNIT_KEYS = ("keyword_ratio",)


@dataclass(frozen=True)
class JobSignature:
    algorithm_name: str
    implementation_id: str

    @property
    def filename(self) -> str:
        """Storage file name for this signature's shared runtime data."""
        return f"{self.algorithm_name}__{self.implementation_id}.jsonl"

    def to_dict(self) -> dict:
        return {"algorithm_name": self.algorithm_name, "implementation_id": self.implementation_id}


@dataclass(frozen=True)
class MachineType:
    name: str
    vcpus: int
    memory_gb: float
    price_per_hour: float

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise InvalidField("name", "must be a non-empty string")
        if isinstance(self.vcpus, bool) or not isinstance(self.vcpus, Integral) or self.vcpus < 1:
            raise InvalidField("vcpus", "must be a positive integer")
        for attr in ("memory_gb", "price_per_hour"):
            value = getattr(self, attr)
            if not _is_number(value) or not math.isfinite(value) or value <= 0:
                raise InvalidField(attr, "must be > 0")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vcpus": self.vcpus,
            "memory_gb": self.memory_gb,
            "price_per_hour": self.price_per_hour,
        }


@dataclass(frozen=True)
class ClusterConfig:
    machine_type: str
    node_count: int

    def to_dict(self) -> dict:
        return {"machine_type": self.machine_type, "node_count": self.node_count}


@dataclass(frozen=True, eq=True)
class RuntimeRecord:
    """One historical execution of a shared dataflow job."""

    signature: JobSignature
    config: ClusterConfig
    data_characteristics: Mapping[str, float]
    parameters: Mapping[str, float]
    context_id: str
    runtime_ms: float
    submitted_at: int

    def __post_init__(self):
        object.__setattr__(self, "data_characteristics", MappingProxyType(dict(self.data_characteristics)))
        object.__setattr__(self, "parameters", MappingProxyType(dict(self.parameters)))

    def __hash__(self):
        return hash(self.identity_key)

    @property
    def identity_key(self) -> tuple:
        """All fields; equal keys mean an exact duplicate."""
        return self.replicate_key + (self.context_id, self.runtime_ms, self.submitted_at)

    @property
    def replicate_key(self) -> tuple:
        """Fields that define a configuration; equal keys mean replicate executions."""
        return (
            self.signature,
            self.config,
            tuple(sorted(self.data_characteristics.items())),
            tuple(sorted(self.parameters.items())),
        )

    @property
    def feature_keys(self) -> tuple[frozenset, frozenset]:
        return frozenset(self.data_characteristics), frozenset(self.parameters)

    def to_dict(self) -> dict:
        return {
            "signature": self.signature.to_dict(),
            "config": self.config.to_dict(),
            "data_characteristics": dict(self.data_characteristics),
            "parameters": dict(self.parameters),
            "context_id": self.context_id,
            "runtime_ms": self.runtime_ms,
            "submitted_at": self.submitted_at,
        }


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.names) != len(self.values):
            raise HeterogeneousFeatures(f"{len(self.names)} names but {len(self.values)} values")
        if len(set(self.names)) != len(self.names):
            raise HeterogeneousFeatures(f"duplicate feature names in {self.names}")
        for name, value in zip(self.names, self.values):
            if not math.isfinite(value):
                raise InvalidField(name, "not finite")

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "values": list(self.values)}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "FeatureVector":
        return cls(tuple(obj["names"]), tuple(obj["values"]))


@dataclass(frozen=True)
class RuntimeTarget:
    max_runtime_ms: float
    safety_margin: float = 1.0

    def __post_init__(self):
        if not _is_number(self.max_runtime_ms) or not math.isfinite(self.max_runtime_ms) or self.max_runtime_ms <= 0:
            raise InvalidField("max_runtime_ms", "must be > 0")
        if not _is_number(self.safety_margin) or not math.isfinite(self.safety_margin) or self.safety_margin < 1:
            raise InvalidField("safety_margin", "must be >= 1")

    def admits(self, runtime_ms: float) -> bool:
        return runtime_ms * self.safety_margin <= self.max_runtime_ms


@dataclass(frozen=True)
class NormalizationTable:
    """Per-feature min/max from a training set; maps features affinely onto [0, 1]."""

    names: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def _check(self, vector: FeatureVector):
        if vector.names != self.names:
            raise HeterogeneousFeatures(f"expected features {self.names}, got {vector.names}")

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.mins)
        hi = np.asarray(self.maxs)
        span = hi - lo
        constant = span == 0
        with np.errstate(over="ignore"):  # a query far outside a tiny span maps to +-inf
            out = (np.asarray(values, dtype=float) - lo) / np.where(constant, 1.0, span)
        return np.where(constant, 0.5, out)

    def apply(self, vector: FeatureVector) -> FeatureVector:
        self._check(vector)
        return FeatureVector(self.names, tuple(self.apply_array(vector.as_array())))

    def invert(self, vector: FeatureVector) -> FeatureVector:
        """Map normalized values back; constant features return their single value."""
        self._check(vector)
        lo = np.asarray(self.mins)
        span = np.asarray(self.maxs) - lo
        raw = np.where(span == 0, lo, lo + vector.as_array() * span)
        return FeatureVector(self.names, tuple(raw))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "NormalizationTable":
        return cls(tuple(obj["names"]), tuple(obj["mins"]), tuple(obj["maxs"]))


def _is_number(value: Any) -> bool:
    return isinstance(value, Real) and not isinstance(value, bool)


def _check_name(path: str, value: Any, pattern: re.Pattern | None = None):
    if not isinstance(value, str) or not value:
        raise InvalidField(path, "must be a non-empty string")
    if pattern is not None and not pattern.fullmatch(value):
        raise InvalidField(path, f"must match {pattern.pattern}")


def _check_number_map(prefix: str, mapping: Mapping[str, Any]):
    for key, value in mapping.items():
        if not isinstance(key, str) or not key:
            raise InvalidField(prefix, "keys must be non-empty strings")
        path = f"{prefix}.{key}"
        if not _is_number(value):
            raise InvalidField(path, "must be a number")
        if not math.isfinite(value):
            raise InvalidField(path, "not finite")


def validate_record(raw: RuntimeRecord) -> RuntimeRecord:
    """Return ``raw`` unchanged if every record invariant holds, else raise InvalidField."""
    _check_name("signature.algorithm_name", raw.signature.algorithm_name, _NAME_RE)
    _check_name("signature.implementation_id", raw.signature.implementation_id)
    _check_name("config.machine_type", raw.config.machine_type)
    nodes = raw.config.node_count
    if isinstance(nodes, bool) or not isinstance(nodes, Integral):
        raise InvalidField("config.node_count", "must be an integer")
    if nodes < 1:
        raise InvalidField("config.node_count", "must be >= 1")

    data, params = raw.data_characteristics, raw.parameters
    _check_number_map("data_characteristics", data)
    _check_number_map("parameters", params)
    if SIZE_KEY not in data:
        raise InvalidField(f"data_characteristics.{SIZE_KEY}", "missing")
    if data[SIZE_KEY] <= 0:
        raise InvalidField(f"data_characteristics.{SIZE_KEY}", "must be > 0")
    for key in _BOUNDED_UNIT_KEYS:
        if key in data and not 0 <= data[key] <= 1:
            raise InvalidField(f"data_characteristics.{key}", "must be in [0, 1]")
    for key in set(data) | set(params):
        if key in (MACHINE_FEATURE, NODE_FEATURE):
            raise InvalidField(key, "reserved feature name")
    overlap = set(data) & set(params)
    if overlap:
        key = sorted(overlap)[0]
        raise InvalidField(f"parameters.{key}", "also present in data_characteristics")

    _check_name("context_id", raw.context_id)
    if not _is_number(raw.runtime_ms):
        raise InvalidField("runtime_ms", "must be a number")
    if not math.isfinite(raw.runtime_ms):
        raise InvalidField("runtime_ms", "not finite")
    if raw.runtime_ms <= 0:
        raise InvalidField("runtime_ms", "must be > 0")
    if isinstance(raw.submitted_at, bool) or not isinstance(raw.submitted_at, Integral):
        raise InvalidField("submitted_at", "must be an integer")
    return raw


def _require(obj: Mapping, key: str, path: str, kind: type):
    if not isinstance(obj, Mapping) or key not in obj:
        raise InvalidField(path, "missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise InvalidField(path, f"must be of type {kind.__name__}")
    return value


def record_from_dict(obj: Mapping) -> RuntimeRecord:
    """Parse one decoded JSONL object into a validated record."""
    if not isinstance(obj, Mapping):
        raise InvalidField("<record>", "must be a JSON object")
    extra = set(obj) - set(RECORD_KEYS)
    if extra:
        raise InvalidField(sorted(extra)[0], "unexpected key")
    sig = _require(obj, "signature", "signature", Mapping)
    cfg = _require(obj, "config", "config", Mapping)
    data = _require(obj, "data_characteristics", "data_characteristics", Mapping)
    params = _require(obj, "parameters", "parameters", Mapping)
    record = RuntimeRecord(
        signature=JobSignature(
            _require(sig, "algorithm_name", "signature.algorithm_name", str),
            _require(sig, "implementation_id", "signature.implementation_id", str),
        ),
        config=ClusterConfig(
            _require(cfg, "machine_type", "config.machine_type", str),
            _require(cfg, "node_count", "config.node_count", object),
        ),
        data_characteristics={k: _as_float(v) for k, v in data.items()},
        parameters={k: _as_float(v) for k, v in params.items()},
        context_id=_require(obj, "context_id", "context_id", str),
        runtime_ms=_as_float(_require(obj, "runtime_ms", "runtime_ms", object)),
        submitted_at=_require(obj, "submitted_at", "submitted_at", object),
    )
    return validate_record(record)


def _as_float(value):
    # leave non-numbers alone so validation reports them with their path
    return float(value) if _is_number(value) else value


def feature_names(data_keys: Iterable[str], param_keys: Iterable[str]) -> tuple[str, ...]:
    return (MACHINE_FEATURE, NODE_FEATURE) + tuple(sorted(data_keys)) + tuple(sorted(param_keys))


def machine_index(catalog: Sequence[MachineType], name: str) -> int:
    for i, machine in enumerate(catalog):
        if machine.name == name:
            return i
    raise UnknownMachineType(name)


def encode_inputs(
    catalog: Sequence[MachineType],
    config: ClusterConfig,
    data_characteristics: Mapping[str, float],
    parameters: Mapping[str, float],
) -> FeatureVector:
    index = machine_index(catalog, config.machine_type)
    names = feature_names(data_characteristics, parameters)
    merged = {**data_characteristics, **parameters}
    values = (float(index), float(config.node_count)) + tuple(float(merged[k]) for k in names[2:])
    return FeatureVector(names, values)


def encode_features(record: RuntimeRecord, catalog: Sequence[MachineType]) -> FeatureVector:
    """Encode a record as machine index, node count, data keys, then parameter keys."""
    return encode_inputs(catalog, record.config, record.data_characteristics, record.parameters)


def normalize_features(
    vectors: Sequence[FeatureVector],
) -> tuple[list[FeatureVector], NormalizationTable]:
    """Min-max normalize ``vectors`` jointly; constant features map to 0.5.

    The returned table normalizes later queries identically. Query values
    outside the training range are not clamped.
    """
    if not vectors:
        raise EmptyInput("no feature vectors to normalize")
    names = vectors[0].names
    for vector in vectors[1:]:
        if vector.names != names:
            raise HeterogeneousFeatures(f"feature names differ: {names} vs {vector.names}")
    matrix = np.array([v.values for v in vectors], dtype=float).reshape(len(vectors), len(names))
    table = NormalizationTable(names, tuple(matrix.min(axis=0)), tuple(matrix.max(axis=0)))
    normalized = table.apply_array(matrix)
    return [FeatureVector(names, tuple(row)) for row in normalized], table


def median_runtime(replicates: Sequence[float]) -> float:
    if len(replicates) == 0:
        raise EmptyInput("median of no replicates")
    return float(statistics.median(replicates))


# --- JSON / JSONL ---------------------------------------------------------


def record_to_json(record: RuntimeRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, Any]]:
    """Yield ``(line_number, decoded object or InvalidField)`` for each non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, InvalidField(f"line {lineno}", f"invalid JSON: {exc.msg}")


def load_records(path: str | Path) -> list[RuntimeRecord]:
    """Read a JSONL file, raising InvalidField on the first bad line."""
    records = []
    for lineno, obj in iter_jsonl(path):
        if isinstance(obj, InvalidField):
            raise obj
        try:
            records.append(record_from_dict(obj))
        except InvalidField as exc:
            raise InvalidField(f"line {lineno}: {exc.path}", exc.reason) from None
    return records


def dump_records(records: Iterable[RuntimeRecord], path: str | Path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(record_to_json(record))
            fh.write("\n")


def catalog_from_list(items: Sequence[Mapping]) -> list[MachineType]:
    catalog, seen = [], set()
    for i, item in enumerate(items):
        try:
            machine = MachineType(item["name"], item["vcpus"], item["memory_gb"], item["price_per_hour"])
        except KeyError as exc:
            raise InvalidField(f"catalog[{i}].{exc.args[0]}", "missing") from None
        except InvalidField as exc:
            raise InvalidField(f"catalog[{i}].{exc.path}", exc.reason) from None
        if machine.name in seen:
            raise InvalidField(f"catalog[{i}].name", "duplicate machine type")
        seen.add(machine.name)
        catalog.append(machine)
    return catalog


def load_catalog(path: str | Path) -> list[MachineType]:
    with open(path, encoding="utf-8") as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise InvalidField("catalog", "must be a JSON array")
    return catalog_from_list(items)


def dump_catalog(catalog: Sequence[MachineType], path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([m.to_dict() for m in catalog], fh, indent=2)
        fh.write("\n")
