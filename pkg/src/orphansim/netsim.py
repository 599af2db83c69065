"""Deterministic discrete-event network simulation.

Events are processed in ``(time, sequence)`` order from a single heap, so a
run is a pure function of its configuration and workload.  Every message a
node emits is delivered after an independently sampled link latency; blocks
are built by an oracle miner that sees every injected transaction, including
those that relay policy keeps out of node mempools.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

from .metrics import NodeStats, RunReport, record_orphan_event
from .node import LOCAL, Block, GetData, Inv, Ledger, Node, TxMsg
from .orphan_pool import (
    DEFAULT_EXPIRY, DEFAULT_MAX_ORPHAN_SIZE, DEFAULT_MAX_ORPHANS,
    DEFAULT_SWEEP_INTERVAL, OrphanPool,
)
from .txmodel import Transaction, TxId, Workload

AUDIT_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ValueSpec:
    """A scalar distribution: constant, uniform, exponential or weighted choice.

    ``exponential`` draws ``low + Exp(mean - low)`` so ``low`` acts as a floor.
    """

    kind: str = "constant"
    value: float = 0.0
    low: float = 0.0
    high: float = 0.0
    mean: float = 0.0
    values: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()

    KINDS = ("constant", "uniform", "exponential", "choice")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"distribution kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.kind == "uniform" and not self.low <= self.high:
            raise ConfigError(f"uniform needs low <= high, got {self.low}, {self.high}")
        if self.kind == "exponential" and not self.mean > self.low:
            raise ConfigError(f"exponential needs mean > low, got mean={self.mean}")
        if self.kind == "choice":
            if not self.values:
                raise ConfigError("choice needs a non-empty values list")
            if self.weights and len(self.weights) != len(self.values):
                raise ConfigError("choice weights and values differ in length")
        for v in (self.value, self.low, self.high, self.mean, *self.values, *self.weights):
            if not math.isfinite(v):
                raise ConfigError("distribution parameters must be finite")

    def sampler(self, rng: random.Random) -> Callable[[], float]:
        if self.kind == "constant":
            v = self.value
            return lambda: v
        if self.kind == "uniform":
            lo, hi = self.low, self.high
            return lambda: rng.uniform(lo, hi)
        if self.kind == "exponential":
            lo, rate = self.low, 1.0 / (self.mean - self.low)
            return lambda: lo + rng.expovariate(rate)
        vals, wts = list(self.values), list(self.weights) or None
        return lambda: rng.choices(vals, wts)[0]

    def minimum(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind in ("uniform", "exponential"):
            return self.low
        return min(self.values)


@dataclass(frozen=True)
class ChurnEvent:
    time: float
    node: int
    peer: int
    action: str  # "disconnect" | "reconnect"

    def __post_init__(self):
        if self.action not in ("disconnect", "reconnect"):
            raise ConfigError(f"churn action must be disconnect|reconnect, got {self.action!r}")


@dataclass(frozen=True)
class SimConfig:
    node_count: int = 50
    mean_degree: float = 6.0
    latency: ValueSpec = ValueSpec("uniform", low=0.05, high=0.5)
    # Inv batching: announcements queued on a link are flushed together after
    # a delay drawn from this spec (Poisson trickle); None sends each at once.
    inv_trickle: ValueSpec | None = None
    block_interval: float = 600.0
    max_block_txs: int | None = None
    churn: tuple[ChurnEvent, ...] = ()
    # per-node relay policy: one spec sampled per node, or an explicit list
    min_fee_rate: ValueSpec | tuple[float, ...] = ValueSpec("constant", value=1.0)
    pool_sizes: int | tuple[int, ...] = DEFAULT_MAX_ORPHANS
    expiry: float = DEFAULT_EXPIRY
    sweep_interval: float = DEFAULT_SWEEP_INTERVAL
    max_orphan_size: int = DEFAULT_MAX_ORPHAN_SIZE
    punish_duration: float = 60.0
    request_timeout: float = 60.0
    run_duration: float = 7200.0
    memory_sample_interval: float = 60.0
    arch: str = "64-bit"
    seed: int = 0

    def __post_init__(self):
        if self.node_count < 2:
            raise ConfigError(f"node_count must be >= 2, got {self.node_count}")
        if not 1 <= self.mean_degree <= self.node_count - 1:
            raise ConfigError(
                f"mean_degree must be in [1, node_count - 1], got {self.mean_degree}"
            )
        if not self.run_duration > 0:
            raise ConfigError(f"run_duration must be positive, got {self.run_duration}")
        if not self.block_interval > 0:
            raise ConfigError(f"block_interval must be positive, got {self.block_interval}")
        if self.latency.minimum() <= 0:
            raise ConfigError("latencies must be strictly positive")
        if self.inv_trickle is not None and self.inv_trickle.minimum() < 0:
            raise ConfigError("inv_trickle delays must be non-negative")
        if self.max_block_txs is not None and self.max_block_txs < 1:
            raise ConfigError("max_block_txs must be positive")
        sizes = self.pool_sizes
        if isinstance(sizes, tuple):
            if len(sizes) != self.node_count:
                raise ConfigError(
                    f"pool_sizes lists {len(sizes)} nodes, node_count is {self.node_count}"
                )
        else:
            sizes = (sizes,)
        if any(s < 1 for s in sizes):
            raise ConfigError("orphan pool sizes must be positive")
        fees = self.min_fee_rate
        if isinstance(fees, tuple):
            if len(fees) != self.node_count:
                raise ConfigError(
                    f"min_fee_rate lists {len(fees)} nodes, node_count is {self.node_count}"
                )
            if any(f < 0 for f in fees):
                raise ConfigError("min_fee_rate must be non-negative")
        elif fees.minimum() < 0:
            raise ConfigError("min_fee_rate must be non-negative")
        for ev in self.churn:
            if not (0 <= ev.node < self.node_count and 0 <= ev.peer < self.node_count):
                raise ConfigError(f"churn event references unknown node: {ev}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def node_pool_sizes(self) -> list[int]:
        if isinstance(self.pool_sizes, tuple):
            return list(self.pool_sizes)
        return [self.pool_sizes] * self.node_count

    def node_fee_rates(self) -> list[float]:
        if isinstance(self.min_fee_rate, tuple):
            return list(self.min_fee_rate)
        draw = self.min_fee_rate.sampler(random.Random(f"fees:{self.seed}"))
        return [draw() for _ in range(self.node_count)]


@dataclass(frozen=True)
class Topology:
    node_count: int
    adjacency: tuple[frozenset[int], ...]
    seed: int

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.adjacency) for j in sorted(nbrs) if i < j]

    @property
    def mean_degree(self) -> float:
        return sum(len(a) for a in self.adjacency) / self.node_count

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            for j in self.adjacency[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.node_count


def build_topology(cfg: SimConfig, max_tries: int = 1000) -> Topology:
    """Erdős–Rényi graph with the configured mean degree, retried until connected."""
    n = cfg.node_count
    if cfg.mean_degree < 2 * (n - 1) / n:
        # below a spanning tree's mean degree no graph is connected
        raise ConfigError(
            f"mean_degree={cfg.mean_degree} cannot connect {n} nodes "
            f"(needs at least {2 * (n - 1) / n:.3f})"
        )
    p = cfg.mean_degree / (n - 1)
    rng = random.Random(f"topology:{cfg.seed}")
    for _ in range(max_tries):
        adj = [set() for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    adj[i].add(j)
                    adj[j].add(i)
        topo = Topology(n, tuple(frozenset(a) for a in adj), cfg.seed)
        if topo.is_connected():
            return topo
    raise ConfigError(
        f"no connected graph found for node_count={n}, mean_degree={cfg.mean_degree}"
    )


def next_block(
    candidates: Iterable[Transaction],
    confirmed,
    max_block_txs: int | None = None,
    height: int = 1,
) -> Block:
    """Oracle miner.

    Walks unconfirmed candidates by fee rate (descending, ties by id) and
    takes each one together with its not-yet-selected unconfirmed ancestors
    when the whole package fits.  Nonstandard transactions are never mined,
    and neither is a package with an ancestor the miner cannot use.
    """
    view = {tx.id: tx for tx in candidates if tx.standard and tx.id not in confirmed}
    cap = math.inf if max_block_txs is None else max_block_txs
    selected: set[TxId] = set()
    block: list[Transaction] = []
    for tx in sorted(view.values(), key=lambda t: (-t.fee_rate, t.id)):
        if len(block) >= cap:
            break
        if tx.id in selected:
            continue
        package = _package(tx, view, confirmed, selected)
        if package is None or len(block) + len(package) > cap:
            continue
        block.extend(package)
        selected.update(t.id for t in package)
    return Block(height, tuple(block))


def _package(tx, view, confirmed, selected) -> list[Transaction] | None:
    """Unselected unconfirmed ancestors of ``tx`` plus ``tx``, parents first."""
    order: list[Transaction] = []
    visited = {tx.id}
    stack = [(tx, iter(tx.parents))]
    while stack:
        cur, parents = stack[-1]
        for p in parents:
            if p in visited or p in selected or p in confirmed:
                continue
            ptx = view.get(p)
            if ptx is None:
                return None
            visited.add(p)
            stack.append((ptx, iter(ptx.parents)))
            break
        else:
            stack.pop()
            order.append(cur)
    return order


# event kinds
_DELIVER, _BLOCK_ARRIVE, _INJECT, _BLOCK_GEN, _CHURN, _SAMPLE, _FLUSH = range(7)


class _Collector:
    """Observer attached to every node; fills the per-node report entries."""

    SEEN, ORPHANED, MISSING = 1, 2, 4

    def __init__(self, workload: Workload, stats: list[NodeStats]):
        self.index = {tx.id: i for i, tx in enumerate(workload.txs)}
        self.txs = workload.txs
        self.stats = stats
        self.flags = [bytearray(len(workload.txs)) for _ in stats]
        self.orphaned: list[list[int]] = [[] for _ in stats]

    def on_receive(self, node, tx):
        i = self.index[tx.id]
        f = self.flags[node.id]
        if not f[i] & self.SEEN:
            f[i] |= self.SEEN
            self.stats[node.id].txs_received += 1

    def on_orphan(self, node, tx, missing):
        f = self.flags[node.id]
        st = self.stats[node.id]
        i = self.index[tx.id]
        if f[i] & self.ORPHANED:
            return
        f[i] |= self.ORPHANED
        self.orphaned[node.id].append(i)
        st.parents_orphan[len(tx.parents)] += 1
        for p in missing:
            j = self.index.get(p)
            if j is None or f[j] & self.MISSING:
                continue
            f[j] |= self.MISSING
            ptx = self.txs[j]
            st.missing_parent_fee.append(ptx.fee_sat)
            st.missing_parent_size.append(ptx.size_bytes)
            st.missing_parent_fee_rate.append(ptx.fee_rate)

    def on_accept(self, node, tx, was_orphan):
        if not self.flags[node.id][self.index[tx.id]] & self.ORPHANED:
            self.stats[node.id].parents_nonorphan[len(tx.parents)] += 1


class Simulation:
    """One run over an owned event queue; ``run()`` drains it and builds the report.

    When ``audit`` is given, every orphan-pool add/erase is written to it as
    one JSON line.
    """

    def __init__(
        self,
        cfg: SimConfig,
        workload: Workload,
        audit: TextIO | None = None,
        topology: Topology | None = None,
        scenario: str = "",
    ):
        n = cfg.node_count
        if any(not 0 <= o < n for o in workload.origin_nodes):
            raise ConfigError("workload origin node outside the network")
        self.topology = topology if topology is not None else build_topology(cfg)
        if self.topology.node_count != n:
            raise ConfigError("topology size differs from node_count")
        self.cfg = cfg
        self.workload = workload

        pool_sizes = cfg.node_pool_sizes()
        fee_rates = cfg.node_fee_rates()
        stats = [NodeStats(i, pool_sizes[i], fee_rates[i]) for i in range(n)]
        report = RunReport(
            seed=cfg.seed, nodes=stats, scenario=scenario,
            all_tx_fee=[tx.fee_sat for tx in workload.txs],
            all_tx_size=[tx.size_bytes for tx in workload.txs],
            all_tx_fee_rate=[tx.fee_rate for tx in workload.txs],
        )
        self.report = report

        if audit is not None:
            audit.write(json.dumps({"event": "audit_header",
                                    "schema_version": AUDIT_SCHEMA_VERSION,
                                    "scenario": scenario, "seed": cfg.seed}) + "\n")
            dumps = json.dumps

            def sink(rec):
                record_orphan_event(report, rec["node"], rec)
                audit.write(dumps(rec) + "\n")
        else:
            def sink(rec):
                record_orphan_event(report, rec["node"], rec)

        self.ledger = Ledger(workload.preconfirmed)
        self.collector = _Collector(workload, stats)
        self.nodes: list[Node] = []
        for i in range(n):
            pool = OrphanPool(pool_sizes[i], cfg.expiry, cfg.sweep_interval,
                              cfg.max_orphan_size, seed=f"pool:{cfg.seed}:{i}")
            node = Node(i, pool, min_fee_rate=fee_rates[i], ledger=self.ledger,
                        peers=sorted(self.topology.adjacency[i]),
                        punish_duration=cfg.punish_duration,
                        request_timeout=cfg.request_timeout, audit=sink)
            node.observer = self.collector
            self.nodes.append(node)
        self.blocks: list[Block] = []

    def run(self) -> RunReport:
        cfg = self.cfg
        nodes = self.nodes
        stats = self.report.nodes
        ledger = self.ledger
        n = cfg.node_count
        latency = cfg.latency.sampler(random.Random(f"latency:{cfg.seed}"))
        trickle = None
        if cfg.inv_trickle is not None:
            trickle = cfg.inv_trickle.sampler(random.Random(f"trickle:{cfg.seed}"))
        inv_queue: dict[tuple[int, int], list[TxId]] = {}
        heap: list = []
        push = heapq.heappush
        pop = heapq.heappop
        seq = 0

        txs = self.workload.txs
        times = self.workload.announce_times
        origins = self.workload.origin_nodes
        if txs:
            push(heap, (times[0], seq, _INJECT, 0, None, None))
            seq += 1
        push(heap, (cfg.block_interval, seq, _BLOCK_GEN, None, None, None))
        seq += 1
        push(heap, (cfg.memory_sample_interval, seq, _SAMPLE, None, None, None))
        seq += 1
        for ev in sorted(cfg.churn, key=lambda e: e.time):
            push(heap, (ev.time, seq, _CHURN, ev.node, ev.peer, ev.action))
            seq += 1

        miner_view: dict[TxId, Transaction] = {}
        height = 0
        last_block_arrival = [0.0] * n
        b_inv = [0] * n
        b_getdata = [0] * n
        b_tx = [0] * n
        b_block = [0] * n
        dropped = injected = 0
        n_inv = n_getdata = n_tx = n_events = 0
        end = cfg.run_duration

        while heap:
            item = pop(heap)
            now = item[0]
            if now > end:
                break
            n_events += 1
            kind = item[2]
            if kind == _DELIVER:
                src, me, msg = item[3], item[4], item[5]
                node = nodes[me]
                if src not in node.peers:
                    dropped += 1
                    continue
                t = type(msg)
                if t is Inv:
                    n_inv += 1
                    b_inv[me] += 32 * len(msg.txids)
                    out = node.handle_inv(msg.txids, src, now)
                elif t is GetData:
                    n_getdata += 1
                    b_getdata[me] += 32 * len(msg.txids)
                    out = node.handle_getdata(msg.txids, src)
                else:
                    n_tx += 1
                    b_tx[me] += msg.tx.size_bytes
                    out = node.handle_tx(msg.tx, src, now)
            elif kind == _BLOCK_ARRIVE:
                me, block = item[3], item[5]
                b_block[me] += sum(tx.size_bytes for tx in block.txs)
                out = nodes[me].handle_block(block, now)
            elif kind == _INJECT:
                i = item[3]
                tx = txs[i]
                me = origins[i]
                miner_view[tx.id] = tx
                injected += 1
                out = nodes[me].handle_tx(tx, LOCAL, now)
                if i + 1 < len(txs):
                    push(heap, (times[i + 1], seq, _INJECT, i + 1, None, None))
                    seq += 1
            elif kind == _BLOCK_GEN:
                height += 1
                block = next_block(miner_view.values(), ledger.height_of,
                                   cfg.max_block_txs, height)
                ledger.record(block)
                self.blocks.append(block)
                for tx in block.txs:
                    del miner_view[tx.id]
                for j in range(n):
                    at = max(now + latency(), last_block_arrival[j])
                    last_block_arrival[j] = at
                    push(heap, (at, seq, _BLOCK_ARRIVE, j, None, block))
                    seq += 1
                push(heap, (now + cfg.block_interval, seq, _BLOCK_GEN, None, None, None))
                seq += 1
                continue
            elif kind == _CHURN:
                a, b, action = item[3], item[4], item[5]
                if action == "disconnect":
                    nodes[a].on_peer_disconnect(b, now)
                    nodes[b].on_peer_disconnect(a, now)
                else:
                    nodes[a].on_peer_connect(b)
                    nodes[b].on_peer_connect(a)
                continue
            elif kind == _FLUSH:
                me, peer = item[3], item[4]
                ids = inv_queue.pop((me, peer))
                push(heap, (now + latency(), seq, _DELIVER, me, peer, Inv(tuple(ids))))
                seq += 1
                continue
            else:  # _SAMPLE
                for j, node in enumerate(nodes):
                    m = node.pool.memory_overhead(cfg.arch).as_dict()
                    m["time_s"] = now
                    m["orphans"] = len(node.pool)
                    stats[j].memory_overhead_series.append(m)
                push(heap, (now + cfg.memory_sample_interval, seq, _SAMPLE, None, None, None))
                seq += 1
                continue

            for peer, msg in out:
                if trickle is not None and type(msg) is Inv:
                    queued = inv_queue.get((me, peer))
                    if queued is not None:
                        queued.extend(msg.txids)
                        continue
                    inv_queue[(me, peer)] = list(msg.txids)
                    push(heap, (now + trickle(), seq, _FLUSH, me, peer, None))
                else:
                    push(heap, (now + latency(), seq, _DELIVER, me, peer, msg))
                seq += 1

        self.report.counters = {
            "events": n_events, "inv": n_inv, "getdata": n_getdata, "tx": n_tx,
            "blocks": height, "injected": injected, "dropped_link_down": dropped,
        }
        for j, node in enumerate(nodes):
            st = stats[j]
            st.bytes_received.update(inv=b_inv[j], getdata=b_getdata[j], tx=b_tx[j],
                                     block=b_block[j])
            st.orphans_confirmed_in_blocks = sum(
                1 for i in self.collector.orphaned[j] if txs[i].id in node.confirmed
            )
        return self.report


def run(
    cfg: SimConfig,
    workload: Workload,
    audit: TextIO | None = None,
    topology: Topology | None = None,
    scenario: str = "",
) -> RunReport:
    """Simulate ``workload`` on the configured network and return its report."""
    return Simulation(cfg, workload, audit, topology, scenario).run()
