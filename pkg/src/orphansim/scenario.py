"""Scenario files, replicate execution, pool-size sweeps and report comparison.

A scenario is a TOML document; every key is listed in ``SCHEMA`` and anything
else is rejected.  Replicate ``i`` of a scenario runs with seed
``base_seed + i`` for both the workload and the network.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .metrics import (
    CAUSES, SCHEMA_VERSION, RunReport, SchemaMismatchError, pool_size_summary, reports_to_csv,
)
from .netsim import ChurnEvent, ConfigError, SimConfig, Simulation, ValueSpec
from .txmodel import LogNormalSpec, ParentCountDist, Workload, WorkloadConfig, WorkloadError, build_workload

SCENARIO_SCHEMA_VERSION = 1
DEFAULT_SWEEP_VALUES = (20, 50, 100, 500, 1000)
SEED_ENV = "ORPHANSIM_SEED"


class ScenarioError(Exception):
    """Base class for problems with a scenario file."""


class ScenarioNotFoundError(ScenarioError):
    pass


class ScenarioSchemaError(ScenarioError):
    """Unknown key, wrong type, or unparseable TOML."""


class ScenarioValueError(ScenarioError):
    """Well-typed value that violates an invariant."""


# -- schema --------------------------------------------------------------------

_NUM = (int, float)
_DIST = {"kind": str, "value": _NUM, "low": _NUM, "high": _NUM, "mean": _NUM,
         "values": list, "weights": list}

SCHEMA: dict[str, Any] = {
    "schema_version": int,
    "name": str,
    "description": str,
    "replicates": int,
    "base_seed": int,
    "output_dir": str,
    "workload": {
        "file": str,
        "tx_count": int,
        "tx_rate": _NUM,
        "nonstandard_fraction": _NUM,
        "unconfirmed_parent_prob": _NUM,
        "parent_window": int,
        "parent_size_bias": _NUM,
        "parent_count": {"mean": _NUM, "multi_fraction": _NUM},
        "fee_rate": {"mean": _NUM, "std": _NUM},
        "size": {"mean": _NUM, "std": _NUM, "low": _NUM, "high": _NUM},
    },
    "network": {
        "node_count": int,
        "mean_degree": _NUM,
        "block_interval": _NUM,
        "max_block_txs": int,
        "run_duration": _NUM,
        "memory_sample_interval": _NUM,
        "arch": str,
        "latency": _DIST,
        "inv_trickle": _DIST,
        "churn": [{"time": _NUM, "node": int, "peer": int, "action": str}],
    },
    "relay": {
        "min_fee_rate": (int, float, list, dict),
        "punish_duration": _NUM,
        "request_timeout": _NUM,
    },
    "orphan_pool": {
        "max_size": (int, list),
        "expiry": _NUM,
        "sweep_interval": _NUM,
        "max_orphan_size": int,
    },
    "sweep": {
        "parameter": str,
        "values": list,
        "layout": str,
    },
}


def _check(doc: dict, schema: dict, prefix: str = "") -> None:
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ScenarioSchemaError(f"unknown key {path!r}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ScenarioSchemaError(f"{path!r} must be a table")
            _check(value, expected, path + ".")
        elif isinstance(expected, list):
            if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
                raise ScenarioSchemaError(f"{path!r} must be an array of tables")
            for i, item in enumerate(value):
                _check(item, expected[0], f"{path}[{i}].")
        else:
            types = expected if isinstance(expected, tuple) else (expected,)
            # TOML booleans are ints to Python; never accept them for numbers
            if isinstance(value, bool) or not isinstance(value, types):
                names = "/".join(t.__name__ for t in types)
                raise ScenarioSchemaError(f"{path!r} must be {names}, got {value!r}")


# -- parsed scenario -----------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    parameter: str = "orphan_pool.max_size"
    values: tuple = DEFAULT_SWEEP_VALUES
    # per_node: all values coexist in one network, assigned round-robin;
    # per_run: one network per value, every node configured alike
    layout: str = "per_node"

    def __post_init__(self):
        if not self.values:
            raise ScenarioValueError("sweep.values must be non-empty")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0
               for v in self.values):
            raise ScenarioValueError(f"sweep.values must be positive numbers, got {self.values}")
        if self.layout not in ("per_node", "per_run"):
            raise ScenarioValueError(f"sweep.layout must be per_node or per_run, got {self.layout!r}")
        _lookup(SCHEMA, self.parameter)
        if self.layout == "per_node" and self.parameter != "orphan_pool.max_size":
            raise ScenarioValueError("sweep.layout per_node only applies to orphan_pool.max_size")


def _lookup(schema: dict, dotted: str):
    node: Any = schema
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ScenarioValueError(f"sweep.parameter {dotted!r} is not a scenario key")
        node = node[part]
    if isinstance(node, (dict, list)):
        raise ScenarioValueError(f"sweep.parameter {dotted!r} names a table, not a value")
    return node


@dataclass(frozen=True)
class Scenario:
    name: str
    workload: WorkloadConfig
    sim: SimConfig
    replicates: int = 1
    base_seed: int = 0
    output_dir: Path | None = None
    sweep: SweepSpec = field(default_factory=SweepSpec)
    description: str = ""
    workload_file: Path | None = None
    # run_duration unset: run until the last announcement plus three blocks
    auto_duration: bool = True
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def pool_sizes(self) -> list[int]:
        return self.sim.node_pool_sizes()

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.replicates)]

    def with_seed(self, base_seed: int) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        raw["base_seed"] = base_seed
        return from_dict(raw, self._base_dir)

    @property
    def _base_dir(self) -> Path:
        return Path(self.raw.get("__dir__", "."))


def _dist(d: dict | None, default: ValueSpec | None, path: str) -> ValueSpec | None:
    if d is None:
        return default
    args = dict(d)
    if "kind" not in args:
        raise ScenarioValueError(f"{path}.kind is required")
    for k in ("values", "weights"):
        if k in args:
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in args[k]):
                raise ScenarioSchemaError(f"{path}.{k} must list numbers")
            args[k] = tuple(float(v) for v in args[k])
    try:
        return ValueSpec(**args)
    except ConfigError as e:
        raise ScenarioValueError(f"{path}: {e}") from None


def _positive(value, path: str, strict: bool = True):
    if value is not None and (value <= 0 if strict else value < 0):
        rel = "positive" if strict else "non-negative"
        raise ScenarioValueError(f"{path} must be {rel}, got {value!r}")
    return value


def from_dict(doc: dict, base_dir: str | Path = ".") -> Scenario:
    """Validate a decoded scenario document and build a :class:`Scenario`."""
    doc = {k: v for k, v in doc.items() if k != "__dir__"}
    _check(doc, SCHEMA)
    version = doc.get("schema_version", SCENARIO_SCHEMA_VERSION)
    if version != SCENARIO_SCHEMA_VERSION:
        raise ScenarioValueError(
            f"schema_version {version} unsupported (expected {SCENARIO_SCHEMA_VERSION})"
        )
    if "name" not in doc:
        raise ScenarioSchemaError("missing required key 'name'")
    name = doc["name"]
    if not name or any(c in name for c in "/\\\0"):
        raise ScenarioValueError(f"name must be a non-empty file-name-safe string, got {name!r}")
    replicates = doc.get("replicates", 1)
    if replicates < 1:
        raise ScenarioValueError(f"replicates must be >= 1, got {replicates}")
    base_seed = doc.get("base_seed", 0)
    if not 0 <= base_seed or base_seed + replicates - 1 >= 2**64:
        raise ScenarioValueError(f"base_seed must be an unsigned 64-bit integer, got {base_seed}")
    base_dir = Path(base_dir)

    wl = doc.get("workload", {})
    net = doc.get("network", {})
    relay = doc.get("relay", {})
    pool = doc.get("orphan_pool", {})

    # workload
    wkw: dict[str, Any] = {k: wl[k] for k in (
        "tx_count", "tx_rate", "nonstandard_fraction", "unconfirmed_parent_prob",
        "parent_window", "parent_size_bias") if k in wl}
    if "parent_count" in wl:
        wkw["parent_count"] = _build(ParentCountDist, wl["parent_count"], "workload.parent_count")
    if "fee_rate" in wl:
        wkw["fee_rate"] = _build(LogNormalSpec, wl["fee_rate"], "workload.fee_rate")
    if "size" in wl:
        base = WorkloadConfig().size
        sz = {"low": base.low, "high": base.high, **wl["size"]}
        wkw["size"] = _build(LogNormalSpec, sz, "workload.size")
    wkw["seed"] = base_seed
    workload = _build(WorkloadConfig, wkw, "workload")
    workload_file = None
    if "file" in wl:
        workload_file = (base_dir / wl["file"]).resolve()
        if not workload_file.is_file():
            raise ScenarioValueError(f"workload.file {str(workload_file)!r} does not exist")

    # network, relay and pool
    node_count = net.get("node_count", 50)
    if node_count < 2:
        raise ScenarioValueError(f"network.node_count must be >= 2, got {node_count}")
    for key in ("block_interval", "run_duration", "memory_sample_interval", "max_block_txs"):
        _positive(net.get(key), f"network.{key}")
    for key in ("punish_duration", "request_timeout"):
        _positive(relay.get(key), f"relay.{key}", strict=False)
    for key in ("expiry", "max_orphan_size"):
        _positive(pool.get(key), f"orphan_pool.{key}")
    _positive(pool.get("sweep_interval"), "orphan_pool.sweep_interval", strict=False)

    max_size = pool.get("max_size", 100)
    if isinstance(max_size, list):
        if len(max_size) != node_count:
            raise ScenarioValueError(
                f"orphan_pool.max_size lists {len(max_size)} values, node_count is {node_count}"
            )
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in max_size):
            raise ScenarioSchemaError("orphan_pool.max_size must list integers")
        max_size = tuple(max_size)
    for v in (max_size if isinstance(max_size, tuple) else (max_size,)):
        if v < 1:
            raise ScenarioValueError(f"orphan_pool.max_size must be >= 1, got {v}")

    fee = relay.get("min_fee_rate", 1.0)
    if isinstance(fee, dict):
        fee = _dist(fee, None, "relay.min_fee_rate")
    elif isinstance(fee, list):
        if len(fee) != node_count:
            raise ScenarioValueError(
                f"relay.min_fee_rate lists {len(fee)} values, node_count is {node_count}"
            )
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in fee):
            raise ScenarioSchemaError("relay.min_fee_rate must list numbers")
        fee = tuple(float(v) for v in fee)
    else:
        fee = ValueSpec("constant", value=float(fee))

    churn = tuple(
        _build(ChurnEvent, ev, f"network.churn[{i}]") for i, ev in enumerate(net.get("churn", []))
    )
    skw: dict[str, Any] = {k: net[k] for k in (
        "mean_degree", "block_interval", "max_block_txs", "run_duration",
        "memory_sample_interval", "arch") if k in net}
    if skw.get("arch", "64-bit") not in ("64-bit", "32-bit"):
        raise ScenarioValueError(f"network.arch must be 64-bit or 32-bit, got {skw['arch']!r}")
    skw.update({k: relay[k] for k in ("punish_duration", "request_timeout") if k in relay})
    skw.update({k: pool[k] for k in ("expiry", "sweep_interval", "max_orphan_size") if k in pool})
    skw.update(
        node_count=node_count,
        latency=_dist(net.get("latency"), SimConfig().latency, "network.latency"),
        inv_trickle=_dist(net.get("inv_trickle"), None, "network.inv_trickle"),
        churn=churn, min_fee_rate=fee, pool_sizes=max_size, seed=base_seed,
    )
    sim = _build(SimConfig, skw, "network")

    sw = doc.get("sweep", {})
    values = sw.get("values", list(DEFAULT_SWEEP_VALUES))
    sweep = SweepSpec(sw.get("parameter", "orphan_pool.max_size"), tuple(values),
                      sw.get("layout", "per_node"))
    if sweep.layout == "per_node" and len(sweep.values) > node_count:
        raise ScenarioValueError(
            f"sweep.values has {len(sweep.values)} entries, more than node_count={node_count}"
        )

    raw = copy.deepcopy(doc)
    raw["__dir__"] = str(base_dir)
    out = doc.get("output_dir")
    return Scenario(
        name=name, workload=workload, sim=sim, replicates=replicates, base_seed=base_seed,
        output_dir=(base_dir / out) if out else None, sweep=sweep,
        description=doc.get("description", ""), workload_file=workload_file,
        auto_duration="run_duration" not in net, raw=raw,
    )


def _build(cls, kwargs: dict, path: str):
    try:
        return cls(**kwargs)
    except (ConfigError, WorkloadError, ValueError, TypeError) as e:
        raise ScenarioValueError(f"{path}: {e}") from None


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioNotFoundError(f"scenario file {str(path)!r} not found")
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioSchemaError(f"{path}: invalid TOML: {e}") from None
    return from_dict(doc, path.parent)


def scenario_summary(s: Scenario) -> dict:
    """Plain-data view of a parsed scenario, printed by ``validate``."""
    sizes = s.pool_sizes
    return {
        "name": s.name,
        "replicates": s.replicates,
        "seeds": s.seeds,
        "node_count": s.sim.node_count,
        "tx_count": None if s.workload_file else s.workload.tx_count,
        "workload_file": str(s.workload_file) if s.workload_file else None,
        "pool_sizes": sorted(set(sizes)),
        "expiry_s": s.sim.expiry,
        "block_interval_s": s.sim.block_interval,
        "run_duration_s": "auto" if s.auto_duration else s.sim.run_duration,
        "sweep": {"parameter": s.sweep.parameter, "values": list(s.sweep.values),
                  "layout": s.sweep.layout},
    }


# -- execution -----------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    """One simulation: a scenario variant and the seed to run it with."""

    scenario: Scenario
    seed: int
    label: str  # file stem, unique within an output directory


@dataclass
class RunOutcome:
    label: str
    seed: int
    report: RunReport
    files: dict[str, Path]
    wall_clock_s: float


def _workload_for(s: Scenario, seed: int) -> Workload:
    if s.workload_file is not None:
        return Workload.load(s.workload_file)
    return build_workload(replace(s.workload, seed=seed), s.sim.node_count)


def execute(spec: RunSpec, out_dir: Path | None, audit: bool = True) -> RunOutcome:
    """Run one simulation and write its report (and audit log) under ``out_dir``."""
    s = spec.scenario
    t0 = time.perf_counter()
    workload = _workload_for(s, spec.seed)
    sim_cfg = s.sim
    overrides: dict[str, Any] = {"seed": spec.seed}
    if s.auto_duration:
        last = workload.announce_times[-1] if len(workload) else 0.0
        overrides["run_duration"] = last + 3 * sim_cfg.block_interval
    sim_cfg = replace(sim_cfg, **overrides)

    files: dict[str, Path] = {}
    if out_dir is not None and audit:
        files["audit"] = out_dir / f"{spec.label}.audit.jsonl"
        with open(files["audit"], "w") as fh:
            report = Simulation(sim_cfg, workload, fh, scenario=s.name).run()
    else:
        report = Simulation(sim_cfg, workload, scenario=s.name).run()
    if out_dir is not None:
        files["report"] = out_dir / f"{spec.label}.report.json"
        files["report"].write_text(report.to_json())
    return RunOutcome(spec.label, spec.seed, report, files, time.perf_counter() - t0)


def _execute_star(args):
    return execute(*args)


def _run_all(specs: Sequence[RunSpec], out_dir: Path | None, jobs: int, audit: bool):
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    args = [(spec, out_dir, audit) for spec in specs]
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(specs))) as ex:
            return list(ex.map(_execute_star, args))
    return [execute(*a) for a in args]


def _write_sidecar(out_dir: Path, name: str, outcomes: Sequence[RunOutcome], jobs: int) -> Path:
    """Wall-clock metadata lives here so reports stay byte-reproducible."""
    path = out_dir / f"{name}.timing.json"
    path.write_text(json.dumps({
        "schema_version": SCHEMA_VERSION,
        "jobs": jobs,
        "python": platform.python_version(),
        "runs": [{"label": o.label, "seed": o.seed, "wall_clock_s": round(o.wall_clock_s, 3)}
                 for o in outcomes],
    }, indent=1) + "\n")
    return path


@dataclass
class ScenarioResult:
    scenario: Scenario
    outcomes: list[RunOutcome]
    files: dict[str, Path]

    @property
    def reports(self) -> list[RunReport]:
        return [o.report for o in self.outcomes]


def run_scenario(
    s: Scenario, out_dir: str | Path | None = None, jobs: int = 1, audit: bool = True,
) -> ScenarioResult:
    """Run every replicate of ``s`` and write reports, merged CSV and timing sidecar.

    With ``out_dir`` and ``s.output_dir`` both unset nothing is written.
    """
    out = Path(out_dir) if out_dir is not None else s.output_dir
    specs = [RunSpec(s, seed, f"{s.name}.seed{seed}") for seed in s.seeds]
    outcomes = _run_all(specs, out, jobs, audit)
    files: dict[str, Path] = {}
    if out is not None:
        files["csv"] = out / f"{s.name}.reports.csv"
        files["csv"].write_text(reports_to_csv(o.report for o in outcomes))
        files["timing"] = _write_sidecar(out, s.name, outcomes, jobs)
    return ScenarioResult(s, outcomes, files)


def _variant(s: Scenario, parameter: str, value) -> Scenario:
    raw = copy.deepcopy(s.raw)
    node = raw
    *parents, leaf = parameter.split(".")
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value
    return from_dict(raw, s._base_dir)


def sweep_variants(s: Scenario) -> list[tuple[Any, Scenario]]:
    """Scenarios a sweep runs: one per value for ``per_run``, one for ``per_node``."""
    sw = s.sweep
    if sw.layout == "per_node":
        n = s.sim.node_count
        sizes = [int(sw.values[i % len(sw.values)]) for i in range(n)]
        return [(None, _variant(s, "orphan_pool.max_size", sizes))]
    return [(v, _variant(s, sw.parameter, v)) for v in sw.values]


def run_sweep(
    s: Scenario, out_dir: str | Path | None = None, jobs: int = 1, audit: bool = True,
) -> ScenarioResult:
    """Run the scenario's sweep for every replicate seed and write the sweep tables."""
    out = Path(out_dir) if out_dir is not None else s.output_dir
    specs = []
    leaf = s.sweep.parameter.rsplit(".", 1)[-1]
    for value, variant in sweep_variants(s):
        tag = "" if value is None else f".{leaf}-{value}"
        specs.extend(RunSpec(variant, seed, f"{s.name}{tag}.seed{seed}") for seed in s.seeds)
    outcomes = _run_all(specs, out, jobs, audit)
    files: dict[str, Path] = {}
    if out is not None:
        reports = [o.report for o in outcomes]
        files["csv"] = out / f"{s.name}.reports.csv"
        files["csv"].write_text(reports_to_csv(reports))
        for kind, text in sweep_tables(reports).items():
            files[kind] = out / f"{s.name}.{kind}.csv"
            files[kind].write_text(text)
        files["timing"] = _write_sidecar(out, s.name, outcomes, jobs)
    return ScenarioResult(s, outcomes, files)


# -- tables ----------------------------------------------------------------------

def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def sweep_tables(reports: Sequence[RunReport]) -> dict[str, str]:
    """Per-seed, per-pool-size tables: removal causes, additions, overhead, characterization."""
    causes, additions, overhead, memory, character = [], [], [], [], []
    for rep in reports:
        summary = pool_size_summary(rep)
        ref = summary.get(100)
        base = ref["unique_orphans"] / ref["nodes"] if ref else 0.0
        for size, row in summary.items():
            for c in CAUSES:
                causes.append((rep.seed, size, c, row["removal_counts"][c],
                               _fmt(row["removal_fractions"][c])))
            per_node_u = row["unique_orphans"] / row["nodes"]
            per_node_t = row["total_orphan_additions"] / row["nodes"]
            additions.append((rep.seed, size, row["nodes"], row["unique_orphans"],
                              row["total_orphan_additions"], _fmt(row["addition_ratio"]),
                              _fmt(per_node_u / base if base else math.nan),
                              _fmt(per_node_t / base if base else math.nan),
                              _fmt(row["orphan_rate"])))
            overhead.append((rep.seed, size, row["unique_bytes"], row["duplicate_bytes"],
                             _fmt(row["duplicate_fraction"]), _fmt(row["duplicate_per_unique"])))
        for s in rep.nodes:
            if s.memory_overhead_series:
                totals = [m["total_bytes"] for m in s.memory_overhead_series]
                memory.append((rep.seed, s.max_orphan_pool, s.node,
                               _fmt(sum(totals) / len(totals)), max(totals)))
        summ = rep.summaries()
        for population in ("all_transactions", "missing_parents"):
            for metric, d in summ[population].items():
                character.append((rep.seed, population, metric, d["count"], _fmt_opt(d["mean"]),
                                  _fmt_opt(d["quantiles"].get("0.5"))))
    return {
        "removal_causes": _csv(("seed", "max_orphan_pool", "cause", "count", "fraction"), causes),
        "duplicate_additions": _csv(
            ("seed", "max_orphan_pool", "nodes", "unique", "total", "total_per_unique",
             "unique_normalized", "total_normalized", "orphan_rate"), additions),
        "network_overhead": _csv(
            ("seed", "max_orphan_pool", "unique_bytes", "duplicate_bytes",
             "duplicate_fraction", "duplicate_per_unique"), overhead),
        "memory_overhead": _csv(
            ("seed", "max_orphan_pool", "node", "mean_total_bytes", "max_total_bytes"), memory),
        "characterization": _csv(
            ("seed", "population", "metric", "count", "mean", "median"), character),
    }


def _fmt_opt(v):
    return "" if v is None else _fmt(v)


COMPARE_COLUMNS = (
    ("source", "seed", "max_orphan_pool", "node")
    + tuple(f"fraction_{c}" for c in CAUSES)
    + ("removals", "unique_orphans", "total_orphan_additions",
       "unique_normalized", "total_normalized", "duplicate_fraction",
       "memory_mean_total_bytes", "memory_max_total_bytes")
)


def compare_reports(paths: Sequence[str | Path]) -> str:
    """Cross-report table with one row per (pool size, node) of every report.

    Additions are normalized to the mean unique-orphan count of the pool-100
    nodes over all inputs; that column is empty when no input has such a node.
    """
    if len(paths) < 2:
        raise ScenarioValueError("compare needs at least two report files")
    loaded = []
    for p in paths:
        with open(p) as fh:
            d = json.load(fh)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatchError(
                f"{p}: schema_version {d.get('schema_version')!r}, expected {SCHEMA_VERSION}"
            )
        loaded.append((str(p), RunReport.from_dict(d)))
    ref = [s.unique_orphans for _, r in loaded for s in r.nodes if s.max_orphan_pool == 100]
    base = sum(ref) / len(ref) if ref else 0.0

    rows = []
    for src, rep in loaded:
        for s in sorted(rep.nodes, key=lambda n: (n.max_orphan_pool, n.node)):
            removals = s.total_removals
            fractions = [s.removal_counts[c] / removals if removals else 0.0 for c in CAUSES]
            added = s.total_orphan_additions
            dup = (added - s.unique_orphans) / added if added else 0.0
            totals = [m["total_bytes"] for m in s.memory_overhead_series]
            rows.append((
                src, rep.seed, s.max_orphan_pool, s.node, *fractions, removals,
                s.unique_orphans, added,
                _fmt(s.unique_orphans / base) if base else "",
                _fmt(added / base) if base else "",
                dup,
                _fmt(sum(totals) / len(totals)) if totals else 0.0,
                max(totals) if totals else 0,
            ))
    return _csv(COMPARE_COLUMNS, rows)


def resolve_seed(cli_seed: int | None, env: dict | None = None) -> int | None:
    """Seed override: command line first, then the environment, else ``None``."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ if env is None else env
    text = env.get(SEED_ENV)
    if text is None or text == "":
        return None
    try:
        seed = int(text, 10)
    except ValueError:
        raise ScenarioValueError(f"{SEED_ENV}={text!r} is not an integer") from None
    if not 0 <= seed < 2**64:
        raise ScenarioValueError(f"{SEED_ENV}={seed} outside the unsigned 64-bit range")
    return seed
