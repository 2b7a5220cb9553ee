"""Command-line interface: ``c3o generate|ingest|sample|predict|configure|evaluate``.

Exit codes: 0 success, 1 internal error, 2 usage error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import evaluation
from .configurator import DEFAULT_NODE_COUNTS, CandidateGrid, evaluate_grid, rank_machine_types, recommend
from .core import ClusterConfig, RuntimeTarget, dump_records, encode_inputs, load_catalog
from .errors import C3OError, NotEnoughData
from .predictors import DEFAULT_K, model_to_dict
from .repository import RuntimeDataset, ingest, load_dataset, sample_records
from .selector import select_and_train
from .simulator import builtin_catalog, builtin_specs, default_scenario, load_scenario, write_dataset

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3
DATA_DIR_ENV = "C3O_DATA_DIR"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class CliConfig:
    data_dir: Path | None
    catalog_path: Path | None
    k: int = DEFAULT_K
    folds: int = 5
    min_points_for_cv: int = 5
    node_counts: tuple[int, ...] = DEFAULT_NODE_COUNTS
    safety_margin: float = 1.0
    output_format: str = "table"

    def __post_init__(self):
        if self.k < 1:
            raise UsageError("--k must be >= 1")
        if self.folds < 2:
            raise UsageError("--folds must be >= 2")
        if self.min_points_for_cv < 2:
            raise UsageError("--min-points-for-cv must be >= 2")
        if self.safety_margin < 1:
            raise UsageError("--margin must be >= 1")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        env_dir = os.environ.get(DATA_DIR_ENV)
        data_dir = env_dir or args.data_dir
        return cls(
            data_dir=Path(data_dir) if data_dir else None,
            catalog_path=Path(args.catalog) if args.catalog else None,
            k=getattr(args, "k", DEFAULT_K),
            folds=getattr(args, "folds", 5),
            min_points_for_cv=getattr(args, "min_points_for_cv", 5),
            node_counts=getattr(args, "nodes_grid", None) or DEFAULT_NODE_COUNTS,
            safety_margin=getattr(args, "margin", 1.0),
            output_format=getattr(args, "format", None) or "table",
        )

    def catalog(self):
        return builtin_catalog() if self.catalog_path is None else load_catalog(self.catalog_path)

    def resolve(self, path: str) -> Path:
        """Relative paths that do not exist in the working directory are looked up in the data directory."""
        p = Path(path)
        if not p.is_absolute() and not p.exists() and self.data_dir is not None:
            return self.data_dir / p
        return p


def _key_values(items: Sequence[str] | None, flag: str) -> dict[str, float]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{flag} expects KEY=VALUE, got {item!r}")
        try:
            out[key] = float(value)
        except ValueError:
            raise UsageError(f"{flag} {key}: {value!r} is not a number") from None
    return out


def _node_grid(text: str) -> tuple[int, ...]:
    """``2-16`` or ``2,4,8``."""
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-", 1))
            nodes = tuple(range(lo, hi + 1))
        else:
            nodes = tuple(int(x) for x in text.split(","))
        if not nodes:
            raise ValueError
        return nodes
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid node grid {text!r}") from None


def _load(cfg: CliConfig, path: str) -> RuntimeDataset:
    dataset, report = load_dataset(cfg.resolve(path), cfg.catalog())
    if not dataset.collapsed:
        reasons = "; ".join(f"{r.error}: {r.message}" for r in report.rejections[:3])
        raise NotEnoughData("dataset is empty" + (f" ({reasons})" if reasons else ""))
    return dataset


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# --- commands ---------------------------------------------------------------


def cmd_generate(args, cfg: CliConfig) -> int:
    if args.scenario:
        scenario = load_scenario(cfg.resolve(args.scenario))
        if args.seed is not None:
            scenario = type(scenario)(scenario.spec, scenario.contexts, scenario.noise_cv, args.seed, scenario.replicates)
    else:
        if args.builtin not in builtin_specs():
            raise UsageError(f"unknown builtin {args.builtin!r}; choose one of {', '.join(sorted(builtin_specs()))}")
        scenario = default_scenario(args.builtin, seed=args.seed or 0, noise_cv=args.noise_cv)
    if args.output:
        out = Path(args.output)
    elif cfg.data_dir is not None:
        out = cfg.data_dir / scenario.spec.signature.filename
    else:
        raise UsageError("no output: pass -o or set --data-dir / C3O_DATA_DIR")
    out.parent.mkdir(parents=True, exist_ok=True)
    records = write_dataset(scenario, out)
    print(f"wrote {len(records)} records to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args, cfg: CliConfig) -> int:
    catalog = cfg.catalog()
    incoming, incoming_report = load_dataset(cfg.resolve(args.input), catalog)
    if args.into:
        target = Path(args.into)
    elif cfg.data_dir is not None and incoming.signature is not None:
        target = cfg.data_dir / incoming.signature.filename
    else:
        raise UsageError("no target dataset: pass --into or set --data-dir / C3O_DATA_DIR")
    if target.exists():
        dataset, _ = load_dataset(target, catalog)
    else:
        dataset = RuntimeDataset(None, catalog)
    # records rejected while parsing the input never reach the second ingest
    dataset, report = ingest(dataset, incoming.records)
    report.rejections[:0] = incoming_report.rejections
    summary = report.to_dict()
    summary["duplicates"] += incoming_report.duplicates
    if dataset.signature is not None:
        target.parent.mkdir(parents=True, exist_ok=True)
        dump_records(dataset.records, target)
        summary["dataset"] = str(target)
    _print_json(summary)
    return EXIT_OK


def cmd_sample(args, cfg: CliConfig) -> int:
    if args.max_points < 1:
        raise UsageError("--max-points must be >= 1")
    dataset = _load(cfg, args.input)
    records = sample_records(dataset, args.max_points)
    dump_records(records, args.output)
    n_points = len({r.replicate_key for r in records})
    print(f"sampled {n_points} of {len(dataset.collapsed)} configurations ({len(records)} records) to {args.output}", file=sys.stderr)
    return EXIT_OK


def _train(cfg: CliConfig, dataset: RuntimeDataset):
    return select_and_train(
        dataset.points(),
        folds=cfg.folds,
        min_points_for_cv=cfg.min_points_for_cv,
        k=cfg.k,
        machine_names=tuple(m.name for m in dataset.catalog),
    )


def _job_inputs(args, dataset: RuntimeDataset) -> tuple[dict, dict]:
    data = _key_values(args.data_char, "--data-char")
    params = _key_values(args.param, "--param")
    data_keys, param_keys = dataset.feature_keys
    missing = sorted((data_keys - set(data)) | (param_keys - set(params)))
    extra = sorted((set(data) - data_keys) | (set(params) - param_keys))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected {', '.join(extra)}")
        hint = f"dataset expects --data-char {sorted(data_keys)} and --param {sorted(param_keys)}"
        raise UsageError(f"job inputs: {'; '.join(parts)} ({hint})")
    return data, params


def cmd_predict(args, cfg: CliConfig) -> int:
    dataset = _load(cfg, args.input)
    data, params = _job_inputs(args, dataset)
    model, report = _train(cfg, dataset)
    query = encode_inputs(dataset.catalog, ClusterConfig(args.machine, args.nodes), data, params)
    runtime = model.predict(query)
    if args.save_model:
        with open(args.save_model, "w", encoding="utf-8") as fh:
            json.dump(model_to_dict(model), fh)
    if cfg.output_format == "json":
        _print_json({"predicted_runtime_ms": runtime, "model": model.family, "report": report.to_dict()})
        return EXIT_OK
    print(repr(runtime))
    if args.explain:
        print(report.to_json())
    return EXIT_OK


def cmd_configure(args, cfg: CliConfig) -> int:
    dataset = _load(cfg, args.input)
    data, params = _job_inputs(args, dataset)
    machines = args.machines.split(",") if args.machines else [m.name for m in dataset.catalog]
    by_name = {m.name: m for m in dataset.catalog}
    unknown = [m for m in machines if m not in by_name]
    if unknown:
        raise UsageError(f"unknown machine types {unknown}; catalog has {sorted(by_name)}")
    try:
        grid = CandidateGrid(tuple(by_name[m] for m in machines), cfg.node_counts)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model, report = _train(cfg, dataset)
    evaluated = evaluate_grid(model, grid, data, params, dataset.catalog)
    target = RuntimeTarget(args.target_ms, cfg.safety_margin) if args.target_ms is not None else None
    rec = recommend(evaluated, target, model.family, budget_usd=args.budget_usd)
    if cfg.output_format == "json":
        out = rec.to_dict()
        out["selection"] = report.to_dict()
        if args.rank:
            out["ranking"] = rank_machine_types(evaluated).to_dict()
        _print_json(out)
    elif cfg.output_format == "csv":
        sys.stdout.write(rec.alternatives_csv())
    else:
        print(rec.to_table())
        if args.rank:
            ranking = rank_machine_types(evaluated)
            print(f"\nmachine-type ranking stable: {ranking.stable}")
            for n, order in ranking.per_node_count.items():
                print(f"  n={n:<3} {' < '.join(order)}")
    return EXIT_OK


def cmd_evaluate(args, cfg: CliConfig) -> int:
    if args.scenarios:
        scenarios = evaluation.load_evaluation_scenarios(cfg.resolve(args.scenarios))
    else:
        scenarios = evaluation.builtin_scenarios(args.seed)
    results = evaluation.evaluate_all(scenarios, folds=cfg.folds, min_points_for_cv=cfg.min_points_for_cv)
    if cfg.output_format == "csv":
        sys.stdout.write(evaluation.results_csv(results))
    elif cfg.output_format == "json":
        _print_json([r.row() for r in results])
    else:
        print(evaluation.results_table(results))
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--k", type=int, default=DEFAULT_K, help="neighbours of the pessimistic model (default %(default)s)")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds (default %(default)s)")
    p.add_argument("--min-points-for-cv", type=int, default=5, help="below this many points skip CV and use the optimistic model")


def _add_job_flags(p: argparse.ArgumentParser):
    p.add_argument("input", help="dataset JSONL file")
    p.add_argument("--data-char", action="append", metavar="KEY=VALUE", help="data characteristic of the job (repeatable)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="job parameter (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="c3o", description="Collaborative runtime prediction and cluster configuration.")
    parser.add_argument("--data-dir", help=f"directory of shared datasets (env {DATA_DIR_ENV} overrides)")
    parser.add_argument("--catalog", help="machine catalog JSON (default: built-in catalog)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a simulated runtime dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", help=f"one of {', '.join(sorted(builtin_specs()))}")
    src.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise-cv", type=float, default=0.05, help="replicate noise for --builtin (default %(default)s)")
    p.add_argument("-o", "--output", help="output JSONL (default: <data-dir>/<algorithm>__<implementation>.jsonl)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="merge a contributed JSONL file into a shared dataset")
    p.add_argument("input")
    p.add_argument("--into", help="dataset file to update (default: derived from the job signature in --data-dir)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="write a coverage-maximizing subset of a dataset")
    p.add_argument("input")
    p.add_argument("--max-points", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("predict", help="predict the runtime of one configuration")
    _add_job_flags(p)
    p.add_argument("--machine", required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--explain", action="store_true", help="also print the model selection report as JSON")
    p.add_argument("--save-model", help="write the trained model as JSON")
    p.add_argument("--format", choices=("json", "table"), default="table")
    _add_model_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("configure", help="recommend the cheapest configuration meeting a runtime target")
    _add_job_flags(p)
    p.add_argument("--target-ms", type=float, help="maximum acceptable runtime")
    p.add_argument("--budget-usd", type=float, help="maximum acceptable cost")
    p.add_argument("--margin", type=float, default=1.0, help="safety factor applied to predicted runtimes (>= 1)")
    p.add_argument("--machines", help="comma-separated machine types (default: whole catalog)")
    p.add_argument("--nodes-grid", type=_node_grid, help="node counts, e.g. 2-16 or 2,4,8 (default 2-16)")
    p.add_argument("--rank", action="store_true", help="also rank machine types per node count")
    p.add_argument("--format", choices=("json", "table", "csv"), default="table")
    _add_model_flags(p)
    p.set_defaults(func=cmd_configure)

    p = sub.add_parser("evaluate", help="compare both model families and the configurator against ground truth")
    p.add_argument("--scenarios", help="evaluation scenario JSON (default: built-in set)")
    p.add_argument("--seed", type=int, default=0, help="seed of the built-in set")
    p.add_argument("--format", choices=("json", "table", "csv"), default="table")
    _add_model_flags(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        cfg = CliConfig.from_args(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"c3o: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (C3OError, OSError, json.JSONDecodeError) as exc:
        print(f"c3o: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"c3o: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
