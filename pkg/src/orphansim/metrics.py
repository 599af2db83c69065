"""Run reports, orphan accounting and distribution statistics."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .orphan_pool import RemovalCause

SCHEMA_VERSION = 1
HASH_BYTES = 32
# inv hash + getdata hash per orphan receipt; transport overhead excluded
BYTES_PER_ORPHAN_RECEIPT = 2 * HASH_BYTES

CAUSES = tuple(c.value for c in RemovalCause)


class AuditIntegrityError(ValueError):
    pass


class SchemaMismatchError(ValueError):
    pass


@dataclass
class NodeStats:
    node: int
    max_orphan_pool: int
    min_fee_rate: float
    removal_counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(CAUSES, 0))
    unique_orphans: int = 0
    total_orphan_additions: int = 0
    txs_received: int = 0
    orphans_confirmed_in_blocks: int = 0
    memory_overhead_series: list[dict] = field(default_factory=list)
    parents_orphan: Counter = field(default_factory=Counter)
    parents_nonorphan: Counter = field(default_factory=Counter)
    missing_parent_fee: list[int] = field(default_factory=list)
    missing_parent_size: list[int] = field(default_factory=list)
    missing_parent_fee_rate: list[float] = field(default_factory=list)
    bytes_received: dict[str, int] = field(
        default_factory=lambda: {"inv": 0, "getdata": 0, "tx": 0, "block": 0}
    )
    _added: set = field(default_factory=set, repr=False, compare=False)
    # per-node missing-parent summaries carried over from a loaded report
    loaded_missing: dict | None = field(default=None, repr=False)

    @property
    def orphan_bytes_unique(self) -> int:
        return BYTES_PER_ORPHAN_RECEIPT * self.unique_orphans

    @property
    def orphan_bytes_duplicate(self) -> int:
        return BYTES_PER_ORPHAN_RECEIPT * (self.total_orphan_additions - self.unique_orphans)

    @property
    def total_removals(self) -> int:
        return sum(self.removal_counts.values())

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "max_orphan_pool": self.max_orphan_pool,
            "min_fee_rate": self.min_fee_rate,
            "removal_counts": dict(self.removal_counts),
            "unique_orphans": self.unique_orphans,
            "total_orphan_additions": self.total_orphan_additions,
            "orphan_bytes_unique": self.orphan_bytes_unique,
            "orphan_bytes_duplicate": self.orphan_bytes_duplicate,
            "txs_received": self.txs_received,
            "orphans_confirmed_in_blocks": self.orphans_confirmed_in_blocks,
            "bytes_received": dict(self.bytes_received),
            "memory_overhead_series": self.memory_overhead_series,
            "parents_orphan_hist": {str(k): v for k, v in sorted(self.parents_orphan.items())},
            "parents_nonorphan_hist": {
                str(k): v for k, v in sorted(self.parents_nonorphan.items())
            },
            "missing_parents": self._missing_summary(),
        }

    def _missing_summary(self) -> dict:
        if self.loaded_missing is not None and not self.missing_parent_fee:
            return self.loaded_missing
        return {
            "fee_sat": _summary(self.missing_parent_fee).to_dict(),
            "size_bytes": _summary(self.missing_parent_size).to_dict(),
            "fee_rate": _summary(self.missing_parent_fee_rate).to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NodeStats":
        s = cls(d["node"], d["max_orphan_pool"], d["min_fee_rate"])
        s.removal_counts = {c: int(d["removal_counts"].get(c, 0)) for c in CAUSES}
        s.unique_orphans = d["unique_orphans"]
        s.total_orphan_additions = d["total_orphan_additions"]
        s.txs_received = d["txs_received"]
        s.orphans_confirmed_in_blocks = d["orphans_confirmed_in_blocks"]
        s.bytes_received = dict(d["bytes_received"])
        s.memory_overhead_series = list(d["memory_overhead_series"])
        s.parents_orphan = Counter({int(k): v for k, v in d["parents_orphan_hist"].items()})
        s.parents_nonorphan = Counter(
            {int(k): v for k, v in d["parents_nonorphan_hist"].items()}
        )
        s.loaded_missing = d.get("missing_parents")
        return s


@dataclass
class RunReport:
    seed: int
    nodes: list[NodeStats]
    all_tx_fee: list[int] = field(default_factory=list)
    all_tx_size: list[int] = field(default_factory=list)
    all_tx_fee_rate: list[float] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    scenario: str = ""
    schema_version: int = SCHEMA_VERSION
    # distribution summaries of a report loaded from JSON, whose raw samples
    # are not serialized
    loaded_summaries: dict | None = None

    def node(self, i: int) -> NodeStats:
        return self.nodes[i]

    def missing_parent_samples(self, attr: str, nodes: Iterable[int] | None = None) -> list:
        ids = range(len(self.nodes)) if nodes is None else nodes
        out: list = []
        for i in ids:
            out.extend(getattr(self.nodes[i], f"missing_parent_{attr}"))
        return out

    def summaries(self) -> dict:
        """Fee, size and fee-rate summaries of all and of missing-parent transactions."""
        if self.loaded_summaries is not None and not self.all_tx_fee:
            return self.loaded_summaries
        return {
            "all_transactions": {
                "fee_sat": _summary(self.all_tx_fee).to_dict(),
                "size_bytes": _summary(self.all_tx_size).to_dict(),
                "fee_rate": _summary(self.all_tx_fee_rate).to_dict(),
            },
            "missing_parents": {
                "fee_sat": _summary(self.missing_parent_samples("fee")).to_dict(),
                "size_bytes": _summary(self.missing_parent_samples("size")).to_dict(),
                "fee_rate": _summary(self.missing_parent_samples("fee_rate")).to_dict(),
            },
        }

    def to_dict(self) -> dict:
        d = {
            "schema_version": self.schema_version,
            "scenario": self.scenario,
            "seed": self.seed,
            "counters": dict(sorted(self.counters.items())),
            "nodes": [n.to_dict() for n in self.nodes],
        }
        d.update(self.summaries())
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaMismatchError(
                f"report schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        return cls(
            d["seed"], [NodeStats.from_dict(n) for n in d["nodes"]],
            counters=dict(d.get("counters", {})), scenario=d.get("scenario", ""),
            loaded_summaries={k: d[k] for k in ("all_transactions", "missing_parents")
                              if k in d},
        )

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- orphan accounting --------------------------------------------------------

def record_orphan_event(report: RunReport, node: int, event: Mapping) -> RunReport:
    """Fold one audit record into ``report`` (mutated in place and returned)."""
    stats = report.nodes[node]
    kind = event["event"]
    txid = event["txid"]
    if kind == "orphan_add":
        stats.total_orphan_additions += 1
        if txid not in stats._added:
            stats._added.add(txid)
            stats.unique_orphans += 1
    elif kind == "orphan_erase":
        if txid not in stats._added:
            raise AuditIntegrityError(f"node {node}: erase of never-added orphan {txid}")
        cause = str(event["cause"])
        if cause not in stats.removal_counts:
            raise AuditIntegrityError(f"unknown removal cause {cause!r}")
        stats.removal_counts[cause] += 1
    else:
        raise AuditIntegrityError(f"unknown audit event {kind!r}")
    return report


def fold_audit(lines: Iterable[str], report: RunReport) -> RunReport:
    """Replay JSONL audit lines into ``report``; header lines are skipped."""
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("event") == "audit_header":
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise SchemaMismatchError(f"audit schema_version {rec.get('schema_version')!r}")
            continue
        record_orphan_event(report, rec["node"], rec)
    return report


def removal_breakdown(report: RunReport, node: int) -> dict[str, float]:
    return _fractions(report.nodes[node].removal_counts, f"node {node}")


def _fractions(counts: Mapping[str, int], what: str) -> dict[str, float]:
    total = sum(counts.values())
    if total == 0:
        raise ValueError(f"{what}: no removals recorded, fractions undefined")
    return {c: counts.get(c, 0) / total for c in CAUSES}


def _overhead(unique: int, total: int) -> dict:
    ub = BYTES_PER_ORPHAN_RECEIPT * unique
    db = BYTES_PER_ORPHAN_RECEIPT * (total - unique)
    return {
        "unique_bytes": ub,
        "duplicate_bytes": db,
        "duplicate_fraction": db / (ub + db) if ub + db else 0.0,
        "duplicate_per_unique": db / ub if ub else 0.0,
    }


def network_overhead(report: RunReport, node: int) -> dict:
    s = report.nodes[node]
    return _overhead(s.unique_orphans, s.total_orphan_additions)


def group_by_pool_size(report: RunReport) -> dict[int, list[NodeStats]]:
    groups: dict[int, list[NodeStats]] = {}
    for s in report.nodes:
        groups.setdefault(s.max_orphan_pool, []).append(s)
    return dict(sorted(groups.items()))


def pool_size_summary(report: RunReport) -> dict[int, dict]:
    """Per pool size, aggregate counts over the nodes configured with it."""
    out = {}
    for size, members in group_by_pool_size(report).items():
        counts = dict.fromkeys(CAUSES, 0)
        for s in members:
            for c, v in s.removal_counts.items():
                counts[c] += v
        unique = sum(s.unique_orphans for s in members)
        total = sum(s.total_orphan_additions for s in members)
        received = sum(s.txs_received for s in members)
        row = {
            "nodes": len(members),
            "removal_counts": counts,
            "removal_fractions": _fractions(counts, f"pool {size}") if any(counts.values())
            else dict.fromkeys(CAUSES, 0.0),
            "unique_orphans": unique,
            "total_orphan_additions": total,
            "addition_ratio": total / unique if unique else 1.0,
            "orphan_rate": unique / received if received else 0.0,
            "orphans_confirmed_fraction":
                sum(s.orphans_confirmed_in_blocks for s in members) / unique if unique else 0.0,
        }
        row.update(_overhead(unique, total))
        out[size] = row
    return out


def merge_pool_counts(reports: Iterable[RunReport]) -> dict[int, dict]:
    """Sum removal and addition counts per pool size over several runs.

    Plain integer sums, so the result does not depend on the order of ``reports``.
    """
    out: dict[int, dict] = {}
    for rep in reports:
        for s in rep.nodes:
            row = out.setdefault(s.max_orphan_pool, {
                "nodes": 0, "removal_counts": dict.fromkeys(CAUSES, 0),
                "unique_orphans": 0, "total_orphan_additions": 0,
            })
            row["nodes"] += 1
            row["unique_orphans"] += s.unique_orphans
            row["total_orphan_additions"] += s.total_orphan_additions
            for c, v in s.removal_counts.items():
                row["removal_counts"][c] += v
    return dict(sorted(out.items()))


# -- distributions ------------------------------------------------------------

@dataclass(frozen=True)
class DistributionSummary:
    count: int
    mean: float
    std: float
    min: float
    max: float
    quantiles: dict[float, float]

    def to_dict(self) -> dict:
        # NaN is not valid JSON; empty samples serialize their moments as null
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "count": self.count, "mean": clean(self.mean), "std": clean(self.std),
            "min": clean(self.min), "max": clean(self.max),
            "quantiles": {str(q): v for q, v in self.quantiles.items()},
        }


DEFAULT_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.8, 0.95)


def summarize(samples: Sequence[float], quantiles=DEFAULT_QUANTILES) -> DistributionSummary:
    """Population statistics; quantiles use the nearest-rank definition."""
    require_samples(samples)
    n = len(samples)
    x = np.sort(np.asarray(samples, dtype=float))
    qs = {q: float(x[max(math.ceil(q * n), 1) - 1]) for q in quantiles}
    return DistributionSummary(n, float(x.mean()), float(x.std()), float(x[0]), float(x[-1]), qs)


EMPTY_SUMMARY = DistributionSummary(0, math.nan, math.nan, math.nan, math.nan, {})


def _summary(samples: Sequence[float]) -> DistributionSummary:
    """Like ``summarize`` but empty samples give a null summary instead of raising."""
    return summarize(samples) if len(samples) else EMPTY_SUMMARY


def require_samples(samples: Sequence) -> None:
    if len(samples) == 0:
        raise ValueError("empty sample")


def ccdf(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical P(X > v) at each distinct sample value v, ascending."""
    require_samples(samples)
    x = np.sort(np.asarray(samples))
    values, counts = np.unique(x, return_counts=True)
    n = len(x)
    above = n - np.cumsum(counts)
    return [(v.item(), int(a) / n) for v, a in zip(values, above)]


def cdf(samples: Sequence[float]) -> list[tuple[float, float]]:
    return [(v, 1.0 - p) for v, p in ccdf(samples)]


def write_distribution_csv(points: Sequence[tuple[float, float]], fh, header=("value", "p")) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(points)


# -- CSV export ---------------------------------------------------------------

CSV_COLUMNS = ("seed", "node", "max_orphan_pool", "family", "metric", "value")


def report_rows(report: RunReport):
    for s in report.nodes:
        base = (report.seed, s.node, s.max_orphan_pool)
        for c in CAUSES:
            yield base + ("removal_counts", c, s.removal_counts[c])
        yield base + ("additions", "unique", s.unique_orphans)
        yield base + ("additions", "total", s.total_orphan_additions)
        ov = _overhead(s.unique_orphans, s.total_orphan_additions)
        for k in ("unique_bytes", "duplicate_bytes", "duplicate_fraction", "duplicate_per_unique"):
            yield base + ("network_overhead", k, ov[k])
        yield base + ("traffic", "txs_received", s.txs_received)
        for k, v in s.bytes_received.items():
            yield base + ("traffic", f"{k}_bytes", v)
        yield base + ("blocks", "orphans_confirmed_in_blocks", s.orphans_confirmed_in_blocks)
        if s.memory_overhead_series:
            totals = [m["total_bytes"] for m in s.memory_overhead_series]
            yield base + ("memory_overhead", "mean_total_bytes", sum(totals) / len(totals))
            yield base + ("memory_overhead", "max_total_bytes", max(totals))


def reports_to_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        w.writerows(report_rows(rep))
    return buf.getvalue()
