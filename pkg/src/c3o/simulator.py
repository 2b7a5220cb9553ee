"""Synthetic ground truth for the five benchmark jobs and collaborative datasets drawn from it.

The closed-form runtime is::

    base_rate * size_gb * prod(param curves) * machine factor * s(n) * penalty

where ``s`` is the scale-out curve (for Grep a blend of a parallel and a
sequential curve weighted by ``keyword_ratio``) and ``penalty`` applies while
the data per node exceeds the usable memory of the machine type.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import constants as C
from .core import (
    MACHINE_FEATURE,
    NODE_FEATURE,
    SIZE_KEY,
    ClusterConfig,
    FeatureVector,
    JobSignature,
    MachineType,
    RuntimeRecord,
    dump_records,
    feature_names,
)
from .errors import InvalidField, InvalidScenario, UnknownMachineType
from .predictors import scaleout_curve

GROUND_TRUTH = "ground_truth"


@dataclass(frozen=True)
class PowerCurve:
    """Runtime multiplier ``(value / reference) ** exponent`` on the range ``[low, high]``."""

    reference: float
    exponent: float
    low: float
    high: float
    integer: bool = False
    log_scale: bool = False

    def __call__(self, value: float) -> float:
        return (value / self.reference) ** self.exponent


@dataclass(frozen=True)
class Bottleneck:
    memory_fraction: float
    penalty: float

    def active(self, size_gb: float, nodes: int, machine: MachineType) -> bool:
        return size_gb / nodes > self.memory_fraction * machine.memory_gb


@dataclass(frozen=True)
class ScaleoutInteraction:
    """Blend ``(1 - v) * s_main(n) + v * s_alt(n)`` with ``v`` read from ``feature``."""

    feature: str
    alt_params: tuple[float, float, float, float]


@dataclass(frozen=True)
class GroundTruthSpec:
    job: str
    catalog: tuple[MachineType, ...]
    machine_factors: Mapping[str, float]
    base_rate: float
    scaleout_params: tuple[float, float, float, float]
    size_range_mb: tuple[float, float]
    param_curves: Mapping[str, PowerCurve] = field(default_factory=dict)
    data_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    bottleneck: Bottleneck | None = None
    interaction: ScaleoutInteraction | None = None
    implementation_id: str = C.IMPLEMENTATION_ID

    def __post_init__(self):
        if self.base_rate <= 0:
            raise InvalidScenario("base_rate must be > 0")
        names = {m.name for m in self.catalog}
        for name, factor in self.machine_factors.items():
            if name not in names:
                raise InvalidScenario(f"machine factor for {name!r} not in catalog")
            if factor <= 0:
                raise InvalidScenario(f"machine factor for {name!r} must be > 0")
        curves = [self.scaleout_params] + ([self.interaction.alt_params] if self.interaction else [])
        for theta in curves:
            if min(theta) < 0 or scaleout_curve(theta, 1.0) <= 0:
                raise InvalidScenario(f"scale-out coefficients {theta} must be non-negative with s(1) > 0")
        if self.bottleneck is not None:
            if self.bottleneck.penalty <= 1:
                raise InvalidScenario("bottleneck penalty must be > 1")
            for theta in curves:
                ratio = self.bottleneck.penalty * scaleout_curve(theta, 2.0) / scaleout_curve(theta, 4.0)
                if ratio <= 2:
                    raise InvalidScenario("bottleneck penalty too small for a speed-up > 2 from n=2 to n=4")

    @property
    def signature(self) -> JobSignature:
        return JobSignature(self.job, self.implementation_id)

    @property
    def data_keys(self) -> tuple[str, ...]:
        return tuple(sorted({SIZE_KEY, *self.data_ranges}))

    @property
    def param_keys(self) -> tuple[str, ...]:
        return tuple(sorted(self.param_curves))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return feature_names(self.data_keys, self.param_keys)

    def machine(self, name: str) -> MachineType:
        for m in self.catalog:
            if m.name == name:
                return m
        raise UnknownMachineType(name)

    def scaleout(self, nodes: float, data: Mapping[str, float]) -> float:
        s = float(scaleout_curve(self.scaleout_params, nodes))
        if self.interaction is not None:
            v = data[self.interaction.feature]
            s = (1.0 - v) * s + v * float(scaleout_curve(self.interaction.alt_params, nodes))
        return s


def ground_truth_runtime(
    spec: GroundTruthSpec,
    config: ClusterConfig,
    data_characteristics: Mapping[str, float],
    parameters: Mapping[str, float],
) -> float:
    """Noise-free runtime in ms of ``spec``'s job on ``config``."""
    if config.machine_type not in spec.machine_factors:
        raise UnknownMachineType(config.machine_type)
    machine = spec.machine(config.machine_type)
    for key in spec.data_keys:
        if key not in data_characteristics:
            raise InvalidField(f"data_characteristics.{key}", "missing")
    size_gb = data_characteristics[SIZE_KEY] / C.MB_PER_GB
    runtime = spec.base_rate * size_gb * spec.machine_factors[config.machine_type]
    for name, curve in spec.param_curves.items():
        if name not in parameters:
            raise InvalidField(f"parameters.{name}", "missing")
        runtime *= curve(parameters[name])
    runtime *= spec.scaleout(config.node_count, data_characteristics)
    if spec.bottleneck is not None and spec.bottleneck.active(size_gb, config.node_count, machine):
        runtime *= spec.bottleneck.penalty
    return float(runtime)


@dataclass(frozen=True, eq=False)
class GroundTruthModel:
    """Exposes the closed-form truth through the trained-model ``predict`` contract."""

    spec: GroundTruthSpec
    catalog: tuple[MachineType, ...]

    family = GROUND_TRUTH

    @property
    def names(self) -> tuple[str, ...]:
        return self.spec.feature_names

    def decode(self, query: FeatureVector) -> tuple[ClusterConfig, dict, dict]:
        machine = self.catalog[int(query[MACHINE_FEATURE])].name
        config = ClusterConfig(machine, int(query[NODE_FEATURE]))
        data = {k: query[k] for k in self.spec.data_keys}
        params = {k: query[k] for k in self.spec.param_keys}
        return config, data, params

    def predict(self, query: FeatureVector) -> float:
        return ground_truth_runtime(self.spec, *self.decode(query))


def builtin_catalog() -> list[MachineType]:
    return [MachineType(*row) for row in C.CATALOG]


def builtin_specs() -> dict[str, GroundTruthSpec]:
    """The five benchmark jobs with the fixed coefficients from :mod:`c3o.constants`."""
    catalog = tuple(builtin_catalog())
    specs = {}
    for job, cfg in C.JOBS.items():
        interaction = None
        if "interaction" in cfg:
            feature, alt = cfg["interaction"]
            interaction = ScaleoutInteraction(feature, tuple(alt))
        specs[job] = GroundTruthSpec(
            job=job,
            catalog=catalog,
            machine_factors=dict(cfg["machine_factors"]),
            base_rate=cfg["base_rate"],
            scaleout_params=tuple(cfg["scaleout"]),
            size_range_mb=tuple(cfg["size_range_mb"]),
            param_curves={k: PowerCurve(*v) for k, v in cfg["param_curves"].items()},
            data_ranges=dict(cfg["data_ranges"]),
            bottleneck=Bottleneck(C.BOTTLENECK_MEMORY_FRACTION, C.BOTTLENECK_PENALTY) if cfg["bottleneck"] else None,
            interaction=interaction,
        )
    return specs


# --- scenarios -------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float
    integer: bool = False
    log_scale: bool = False

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.integer:
            return rng.integers(int(math.ceil(self.low)), int(math.floor(self.high)) + 1, size).astype(float)
        if self.log_scale:
            return np.exp(rng.uniform(math.log(self.low), math.log(self.high), size))
        return rng.uniform(self.low, self.high, size)

    def bounds(self) -> tuple[float, float]:
        return self.low, self.high

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "integer": self.integer, "log_scale": self.log_scale}


@dataclass(frozen=True)
class Choice:
    values: tuple[float, ...]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(np.asarray(self.values, dtype=float), size)

    def bounds(self) -> tuple[float, float]:
        return min(self.values), max(self.values)

    def to_dict(self) -> dict:
        return {"values": list(self.values)}


Region = Uniform | Choice


def region_from_dict(obj: Mapping) -> Region:
    if "values" in obj:
        if not obj["values"]:
            raise InvalidScenario("empty value list")
        return Choice(tuple(float(v) for v in obj["values"]))
    try:
        return Uniform(float(obj["low"]), float(obj["high"]), bool(obj.get("integer", False)), bool(obj.get("log_scale", False)))
    except KeyError as exc:
        raise InvalidScenario(f"range needs 'values' or 'low'/'high', missing {exc.args[0]}") from None


@dataclass(frozen=True)
class ContextRegion:
    """One contributor: how many configurations it ran and from which feature region."""

    context_id: str
    count: int
    machine_types: tuple[str, ...] | None = None
    node_counts: tuple[int, ...] = tuple(range(2, 13))
    data: Mapping[str, Region] = field(default_factory=dict)
    parameters: Mapping[str, Region] = field(default_factory=dict)
    factorial: bool = False  # enumerate every combination instead of sampling ``count``

    def to_dict(self) -> dict:
        return {
            "context_id": self.context_id,
            "count": self.count,
            "factorial": self.factorial,
            "machine_types": None if self.machine_types is None else list(self.machine_types),
            "node_counts": list(self.node_counts),
            "data_characteristics": {k: r.to_dict() for k, r in self.data.items()},
            "parameters": {k: r.to_dict() for k, r in self.parameters.items()},
        }


@dataclass(frozen=True)
class ScenarioSpec:
    spec: GroundTruthSpec
    contexts: tuple[ContextRegion, ...]
    noise_cv: float = 0.0
    seed: int = 0
    replicates: int = C.DEFAULT_REPLICATES


def default_region(spec: GroundTruthSpec, key: str) -> Region:
    if key == SIZE_KEY:
        return Uniform(*spec.size_range_mb)
    if key in spec.data_ranges:
        return Uniform(*spec.data_ranges[key])
    curve = spec.param_curves[key]
    return Uniform(curve.low, curve.high, curve.integer, curve.log_scale)


def _allowed_bounds(spec: GroundTruthSpec, key: str) -> tuple[float, float]:
    return default_region(spec, key).bounds()


def validate_scenario(scenario: ScenarioSpec) -> ScenarioSpec:
    spec = scenario.spec
    if not 0 <= scenario.noise_cv < C.MAX_NOISE_CV:
        raise InvalidScenario(f"noise_cv must be in [0, {C.MAX_NOISE_CV}), got {scenario.noise_cv}")
    if scenario.replicates < 1:
        raise InvalidScenario("replicates must be >= 1")
    if not scenario.contexts:
        raise InvalidScenario("scenario has no contexts")
    for ctx in scenario.contexts:
        where = f"context {ctx.context_id!r}"
        if not ctx.context_id:
            raise InvalidScenario("context_id must be non-empty")
        if ctx.count < 1:
            raise InvalidScenario(f"{where}: count must be >= 1")
        for name in ctx.machine_types or ():
            if name not in spec.machine_factors:
                raise InvalidScenario(f"{where}: unknown machine type {name!r}")
        if not ctx.node_counts or min(ctx.node_counts) < 1:
            raise InvalidScenario(f"{where}: node counts must be >= 1")
        if ctx.factorial:
            for key in spec.data_keys + spec.param_keys:
                region = {**ctx.data, **ctx.parameters}.get(key)
                if not isinstance(region, Choice) and default_region(spec, key).bounds()[0] != default_region(spec, key).bounds()[1]:
                    raise InvalidScenario(f"{where}: factorial design needs explicit values for {key}")
        for group, keys in ((ctx.data, spec.data_keys), (ctx.parameters, spec.param_keys)):
            for key, region in group.items():
                if key not in keys:
                    raise InvalidScenario(f"{where}: {spec.job} has no feature {key!r}")
                lo, hi = region.bounds()
                allowed_lo, allowed_hi = _allowed_bounds(spec, key)
                if lo < allowed_lo or hi > allowed_hi or lo > hi:
                    raise InvalidScenario(f"{where}: {key} range [{lo}, {hi}] outside [{allowed_lo}, {allowed_hi}]")
    return scenario


def _context_configs(spec: GroundTruthSpec, ctx: ContextRegion, rng: np.random.Generator, all_machines):
    machine_pool = tuple(ctx.machine_types or all_machines)
    keys = spec.data_keys + spec.param_keys
    regions = {k: {**ctx.data, **ctx.parameters}.get(k, default_region(spec, k)) for k in keys}
    if ctx.factorial:
        levels = [regions[k].values if isinstance(regions[k], Choice) else (regions[k].low,) for k in keys]
        rows = [
            (str(m), int(n), dict(zip(keys, combo)))
            for m in machine_pool
            for n in ctx.node_counts
            for combo in itertools.product(*levels)
        ]
    else:
        machines = rng.choice(np.array(machine_pool), ctx.count)
        nodes = rng.choice(np.asarray(ctx.node_counts), ctx.count)
        draws = {k: regions[k].sample(rng, ctx.count) for k in keys}
        rows = [(str(machines[i]), int(nodes[i]), {k: draws[k][i] for k in keys}) for i in range(ctx.count)]
    for machine, nodes, values in rows:
        d = {k: float(values[k]) for k in spec.data_keys}
        p = {k: float(values[k]) for k in spec.param_keys}
        yield ClusterConfig(machine, nodes), d, p


def _noise_sigma(cv: float) -> float:
    return math.sqrt(math.log1p(cv * cv))


def generate_dataset(scenario: ScenarioSpec) -> list[RuntimeRecord]:
    """Sample configurations per context and emit noisy replicate records.

    Deterministic given the scenario seed: every context draws from its own
    child of the seed sequence, and records are emitted in context order.
    """
    validate_scenario(scenario)
    spec = scenario.spec
    sigma = _noise_sigma(scenario.noise_cv)
    streams = np.random.SeedSequence(scenario.seed).spawn(len(scenario.contexts))
    all_machines = tuple(m.name for m in spec.catalog if m.name in spec.machine_factors)
    records = []
    for ctx, stream in zip(scenario.contexts, streams):
        rng = np.random.default_rng(stream)
        for config, d, p in _context_configs(spec, ctx, rng, all_machines):
            truth = ground_truth_runtime(spec, config, d, p)
            noise = rng.lognormal(0.0, sigma, scenario.replicates) if sigma > 0 else np.ones(scenario.replicates)
            for factor in noise:
                records.append(
                    RuntimeRecord(
                        signature=spec.signature,
                        config=config,
                        data_characteristics=d,
                        parameters=p,
                        context_id=ctx.context_id,
                        runtime_ms=float(truth * factor),
                        submitted_at=C.EPOCH_START + len(records) * C.SUBMIT_INTERVAL_S,
                    )
                )
    return records


def default_scenario(job: str, seed: int = 0, noise_cv: float = 0.05) -> ScenarioSpec:
    """Three collaborating contexts that together run as many configurations as the job's benchmark count."""
    specs = builtin_specs()
    if job not in specs:
        raise InvalidScenario(f"unknown builtin {job!r}; choose one of {', '.join(sorted(specs))}")
    total = C.JOBS[job]["table_count"]
    contexts, remaining = [], total
    for i, (cid, share, machines, nodes) in enumerate(C.DEFAULT_CONTEXTS):
        count = remaining if i == len(C.DEFAULT_CONTEXTS) - 1 else int(round(share * total))
        remaining -= count
        contexts.append(ContextRegion(cid, count, machines, nodes))
    return ScenarioSpec(specs[job], tuple(contexts), noise_cv=noise_cv, seed=seed)


def scenario_from_dict(obj: Mapping[str, Any]) -> ScenarioSpec:
    specs = builtin_specs()
    job = obj.get("builtin")
    if job not in specs:
        raise InvalidScenario(f"unknown builtin {job!r}; choose one of {', '.join(sorted(specs))}")
    if "contexts" not in obj:
        base = default_scenario(job)
        contexts = base.contexts
    else:
        contexts = tuple(
            ContextRegion(
                context_id=str(c["context_id"]),
                count=int(c["count"]),
                machine_types=None if c.get("machine_types") is None else tuple(c["machine_types"]),
                node_counts=tuple(int(n) for n in c.get("node_counts", range(2, 13))),
                data={k: region_from_dict(v) for k, v in c.get("data_characteristics", {}).items()},
                parameters={k: region_from_dict(v) for k, v in c.get("parameters", {}).items()},
                factorial=bool(c.get("factorial", False)),
            )
            for c in obj["contexts"]
        )
    scenario = ScenarioSpec(
        spec=specs[job],
        contexts=contexts,
        noise_cv=float(obj.get("noise_cv", 0.05)),
        seed=int(obj.get("seed", 0)),
        replicates=int(obj.get("replicates", C.DEFAULT_REPLICATES)),
    )
    return validate_scenario(scenario)


def scenario_to_dict(scenario: ScenarioSpec) -> dict:
    return {
        "builtin": scenario.spec.job,
        "noise_cv": scenario.noise_cv,
        "seed": scenario.seed,
        "replicates": scenario.replicates,
        "contexts": [c.to_dict() for c in scenario.contexts],
    }


def load_scenario(path: str | Path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def write_dataset(scenario: ScenarioSpec, path: str | Path) -> list[RuntimeRecord]:
    records = generate_dataset(scenario)
    dump_records(records, path)
    return records


def without_bottleneck(spec: GroundTruthSpec) -> GroundTruthSpec:
    return replace(spec, bottleneck=None)
