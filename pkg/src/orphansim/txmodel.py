"""Transactions and synthetic workload generation.

A workload is a topologically ordered list of transactions together with the
time and node at which each one is first announced.  Marginal statistics are
calibrated to measurements of live Bitcoin traffic: about 2.2 parents per
transaction (a quarter of them with more than one), a mean size of 480 bytes
and a mean fee rate of 21.7 sat/byte.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TxId = bytes

MIN_TX_SIZE = 85
MAX_TX_SIZE = 240_208


class WorkloadError(ValueError):
    """Raised for invalid workload configuration or input."""


def moment_match_lognormal(target_mean: float, target_std: float) -> tuple[float, float]:
    """Return ``(mu, sigma)`` of the log-normal with the given mean and std."""
    if not (target_mean > 0 and target_std > 0):
        raise WorkloadError(
            f"log-normal moments must be positive, got mean={target_mean!r}, std={target_std!r}"
        )
    sigma2 = math.log1p((target_std / target_mean) ** 2)
    mu = math.log(target_mean) - sigma2 / 2.0
    return mu, math.sqrt(sigma2)


@dataclass(frozen=True)
class ParentCountDist:
    """Number of inputs per transaction, supported on {1, 2, ...}.

    With ``multi_fraction`` unset this is a plain geometric distribution with
    the given mean.  Otherwise it is a hurdle model: one parent with
    probability ``1 - multi_fraction``, else ``2 + G`` where ``G`` is geometric
    on {0, 1, ...} sized so the overall mean is ``mean``.
    """

    mean: float = 2.20
    multi_fraction: float | None = 0.25

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.mean >= 1.0):
            raise WorkloadError(f"parent_count.mean must be >= 1, got {self.mean!r}")
        q = self.multi_fraction
        if q is not None:
            if not 0.0 <= q <= 1.0:
                raise WorkloadError(f"parent_count.multi_fraction must be in [0, 1], got {q!r}")
            if q > 0 and self.mean < 1.0 + q:
                raise WorkloadError(
                    f"parent_count.mean={self.mean} too small for multi_fraction={q}"
                )
            if q == 0 and self.mean != 1.0:
                raise WorkloadError("parent_count.multi_fraction=0 requires mean=1")

    def sample(self, rng: np.random.Generator) -> int:
        q = self.multi_fraction
        if q is None:
            return int(rng.geometric(1.0 / self.mean))
        if q == 0.0 or rng.random() >= q:
            return 1
        tail_mean = (self.mean - 1.0 - q) / q
        return 2 + int(rng.geometric(1.0 / (1.0 + tail_mean))) - 1


@dataclass(frozen=True)
class LogNormalSpec:
    """Log-normal matched to ``mean``/``std``, optionally clamped to [low, high]."""

    mean: float
    std: float
    low: float | None = None
    high: float | None = None

    def __post_init__(self):
        for name in ("mean", "std"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise WorkloadError(f"{name} must be finite and positive, got {v!r}")
        if self.low is not None and self.high is not None and self.low > self.high:
            raise WorkloadError(f"low={self.low} exceeds high={self.high}")

    @property
    def params(self) -> tuple[float, float]:
        return moment_match_lognormal(self.mean, self.std)

    def sample(self, rng: np.random.Generator) -> float:
        mu, sigma = self.params
        x = float(rng.lognormal(mu, sigma))
        if self.low is not None and x < self.low:
            x = self.low
        if self.high is not None and x > self.high:
            x = self.high
        return x


@dataclass(frozen=True)
class WorkloadConfig:
    tx_count: int = 100_000
    tx_rate: float = 20.0  # announcements per second, Poisson
    parent_count: ParentCountDist = field(default_factory=ParentCountDist)
    fee_rate: LogNormalSpec = field(default_factory=lambda: LogNormalSpec(21.73, 47.13))
    size: LogNormalSpec = field(
        default_factory=lambda: LogNormalSpec(480.31, 2120.40, MIN_TX_SIZE, MAX_TX_SIZE)
    )
    nonstandard_fraction: float = 0.0
    # probability that an input spends a recent workload transaction instead
    # of an already-confirmed output
    unconfirmed_parent_prob: float = 0.05
    parent_window: int = 1000
    # recent parents are drawn with weight size ** parent_size_bias
    parent_size_bias: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.tx_count, int) or self.tx_count < 0:
            raise WorkloadError(f"tx_count must be a non-negative integer, got {self.tx_count!r}")
        if not (math.isfinite(self.tx_rate) and self.tx_rate > 0):
            raise WorkloadError(f"tx_rate must be positive, got {self.tx_rate!r}")
        for name in ("nonstandard_fraction", "unconfirmed_parent_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise WorkloadError(f"{name} must be in [0, 1], got {v!r}")
        if self.parent_window < 1:
            raise WorkloadError(f"parent_window must be >= 1, got {self.parent_window!r}")
        if not (math.isfinite(self.parent_size_bias) and self.parent_size_bias >= 0):
            raise WorkloadError(f"parent_size_bias must be >= 0, got {self.parent_size_bias!r}")
        if not 0 <= self.seed < 2**64:
            raise WorkloadError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True, slots=True)
class Transaction:
    id: TxId
    size_bytes: int
    fee_sat: int
    parents: tuple[TxId, ...]
    standard: bool = True

    def __post_init__(self):
        if len(self.id) != 32:
            raise WorkloadError("transaction id must be 32 bytes")
        if self.size_bytes < MIN_TX_SIZE:
            raise WorkloadError(f"size_bytes must be >= {MIN_TX_SIZE}, got {self.size_bytes}")
        if self.fee_sat < 0:
            raise WorkloadError(f"fee_sat must be >= 0, got {self.fee_sat}")
        if not self.parents:
            raise WorkloadError("a relayed transaction needs at least one parent")

    @property
    def fee_rate(self) -> float:
        return self.fee_sat / self.size_bytes

    def __repr__(self):
        return f"Transaction({self.id.hex()[:12]}, size={self.size_bytes}, fee={self.fee_sat})"


def fee_per_byte(tx: Transaction) -> float:
    """Fee in satoshis per byte, without truncation."""
    return tx.fee_sat / tx.size_bytes


def sample_transaction(
    cfg: WorkloadConfig,
    available_parents: Sequence[TxId],
    rng: np.random.Generator,
    weights: Sequence[float] | None = None,
) -> Transaction:
    """Draw one transaction.

    Each input independently spends one of ``available_parents`` (with
    probability ``cfg.unconfirmed_parent_prob``, chosen with probability
    proportional to ``weights``) or else a freshly minted, already-confirmed
    output.  Repeated picks of the same parent are kept.
    """
    if len(available_parents) == 0:
        raise WorkloadError("available_parents must be non-empty")
    n = cfg.parent_count.sample(rng)
    u = cfg.unconfirmed_parent_prob
    from_recent = rng.random(n) < u if u < 1.0 else np.ones(n, dtype=bool)
    k = int(from_recent.sum())
    if k:
        if weights is None:
            picks = rng.integers(len(available_parents), size=k)
        else:
            cum = np.cumsum(weights)
            picks = np.searchsorted(cum, rng.random(k) * cum[-1], side="right")
        recent = iter(available_parents[int(i)] for i in picks)
    parents = tuple(next(recent) if flag else rng.bytes(32) for flag in from_recent)
    size = int(round(cfg.size.sample(rng)))
    size = max(size, MIN_TX_SIZE)
    fee = int(round(cfg.fee_rate.sample(rng) * size))
    standard = not (rng.random() < cfg.nonstandard_fraction)
    return Transaction(rng.bytes(32), size, fee, parents, standard)


@dataclass
class Workload:
    txs: list[Transaction]
    announce_times: list[float]
    origin_nodes: list[int]
    preconfirmed: frozenset[TxId] = frozenset()

    def __post_init__(self):
        if not (len(self.txs) == len(self.announce_times) == len(self.origin_nodes)):
            raise WorkloadError("txs, announce_times and origin_nodes differ in length")
        if not self.preconfirmed:
            own = {tx.id for tx in self.txs}
            self.preconfirmed = frozenset(p for tx in self.txs for p in tx.parents if p not in own)

    def __len__(self):
        return len(self.txs)

    def check_topological(self) -> None:
        """Raise if some parent is neither pre-confirmed nor listed earlier."""
        known = set(self.preconfirmed)
        for i, tx in enumerate(self.txs):
            for p in tx.parents:
                if p not in known:
                    raise WorkloadError(f"tx #{i} references unknown parent {p.hex()}")
            known.add(tx.id)

    def to_jsonl(self) -> str:
        lines = []
        for tx, t, origin in zip(self.txs, self.announce_times, self.origin_nodes):
            lines.append(json.dumps({
                "id": tx.id.hex(),
                "size_bytes": tx.size_bytes,
                "fee_sat": tx.fee_sat,
                "parents": [p.hex() for p in tx.parents],
                "standard": tx.standard,
                "announce_time_s": t,
                "origin_node": origin,
            }))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, lines: Iterable[str]) -> "Workload":
        txs, times, origins = [], [], []
        expected = {"id", "size_bytes", "fee_sat", "parents", "standard",
                    "announce_time_s", "origin_node"}
        for n, line in enumerate(lines, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if set(rec) != expected:
                raise WorkloadError(f"line {n}: fields {sorted(rec)} != {sorted(expected)}")
            txs.append(Transaction(
                bytes.fromhex(rec["id"]), rec["size_bytes"], rec["fee_sat"],
                tuple(bytes.fromhex(p) for p in rec["parents"]), rec["standard"],
            ))
            times.append(float(rec["announce_time_s"]))
            origins.append(int(rec["origin_node"]))
        wl = cls(txs, times, origins)
        wl.check_topological()
        return wl

    @classmethod
    def load(cls, path: str | Path) -> "Workload":
        with open(path) as fh:
            return cls.from_jsonl(fh)


def build_workload(cfg: WorkloadConfig, node_count: int) -> Workload:
    """Generate a seeded, topologically ordered workload."""
    if cfg.tx_count < 1:
        raise WorkloadError("empty workload: tx_count must be >= 1")
    if node_count < 1:
        raise WorkloadError(f"node_count must be >= 1, got {node_count}")
    rng = np.random.default_rng(cfg.seed)
    genesis = rng.bytes(32)
    window: deque[TxId] = deque([genesis], maxlen=cfg.parent_window)
    wts: deque[float] = deque([1.0], maxlen=cfg.parent_window)
    bias = cfg.parent_size_bias

    txs: list[Transaction] = []
    own: set[TxId] = set()
    preconfirmed = {genesis}
    gaps = rng.exponential(1.0 / cfg.tx_rate, size=cfg.tx_count)
    times = np.cumsum(gaps).tolist()
    origins = rng.integers(node_count, size=cfg.tx_count).tolist()
    for _ in range(cfg.tx_count):
        tx = sample_transaction(cfg, window, rng, wts if bias else None)
        for p in tx.parents:
            if p not in own:
                preconfirmed.add(p)
        txs.append(tx)
        own.add(tx.id)
        window.append(tx.id)
        wts.append(tx.size_bytes ** bias)
    return Workload(txs, times, origins, frozenset(preconfirmed))


def workload_config_dict(cfg: WorkloadConfig) -> dict:
    return asdict(cfg)
