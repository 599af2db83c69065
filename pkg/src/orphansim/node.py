"""Per-node transaction relay and orphan handling.

Handlers take an incoming message and return the messages the node sends in
response as ``(destination peer, message)`` pairs; the caller is responsible
for delivering them.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .orphan_pool import AddResult, OrphanPool, PeerId, RemovalCause
from .txmodel import Transaction, TxId

LOCAL = -1  # pseudo-peer for transactions submitted by the node's own wallet
DEFAULT_PUNISH_DURATION = 60.0
DEFAULT_REQUEST_TIMEOUT = 60.0


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    txs: tuple[Transaction, ...]


@dataclass(frozen=True, slots=True)
class Inv:
    txids: tuple[TxId, ...]

    def __post_init__(self):
        if not self.txids:
            raise ValueError("inv must carry at least one id")


@dataclass(frozen=True, slots=True)
class GetData:
    txids: tuple[TxId, ...]

    def __post_init__(self):
        if not self.txids:
            raise ValueError("getdata must carry at least one id")


@dataclass(frozen=True, slots=True)
class TxMsg:
    tx: Transaction


@dataclass(frozen=True, slots=True)
class BlockMsg:
    block: Block


WireMessage = Inv | GetData | TxMsg | BlockMsg
Outbox = list[tuple[PeerId, WireMessage]]


class Verdict(Enum):
    VALID = "Valid"
    ORPHAN = "Orphan"
    INVALID = "Invalid"


@dataclass(frozen=True)
class ValidationResult:
    verdict: Verdict
    missing_parents: tuple[TxId, ...] = ()
    reason: str | None = None  # "low_fee" | "nonstandard"


VALID = ValidationResult(Verdict.VALID)


class Ledger:
    """Confirmed transactions by block height.

    One instance may be shared by every node of a simulation: a node treats
    a transaction as confirmed only once it has processed the block holding it.
    """

    def __init__(self, preconfirmed=()):
        self.height_of: dict[TxId, int] = dict.fromkeys(preconfirmed, 0)
        self.txs: dict[TxId, Transaction] = {}

    def record(self, block: Block) -> None:
        for tx in block.txs:
            if self.height_of.setdefault(tx.id, block.height) == block.height:
                self.txs[tx.id] = tx


class ConfirmedView:
    """Set-like view of a ledger as seen by one node."""

    __slots__ = ("_ledger", "_node")

    def __init__(self, ledger: Ledger, node: "Node"):
        self._ledger = ledger
        self._node = node

    def __contains__(self, txid) -> bool:
        h = self._ledger.height_of.get(txid)
        return h is not None and h <= self._node.height

    def __iter__(self):
        height = self._node.height
        return (t for t, h in self._ledger.height_of.items() if h <= height)

    def __len__(self):
        return sum(1 for _ in self)


@dataclass
class PeerState:
    punished_until: float = float("-inf")


class Node:
    def __init__(
        self,
        node_id: int,
        pool: OrphanPool | None = None,
        *,
        min_fee_rate: float = 0.0,
        ledger: Ledger | None = None,
        peers=(),
        punish_duration: float = DEFAULT_PUNISH_DURATION,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        audit: Callable[[dict], None] | None = None,
    ):
        if min_fee_rate < 0:
            raise ValueError(f"min_fee_rate must be >= 0, got {min_fee_rate}")
        self.id = node_id
        self.min_fee_rate = min_fee_rate
        self.ledger = ledger if ledger is not None else Ledger()
        self.height = 0
        self.confirmed = ConfirmedView(self.ledger, self)
        self.mempool: dict[TxId, Transaction] = {}
        self.peers: dict[PeerId, PeerState] = {p: PeerState() for p in peers}
        self.pending: dict[TxId, tuple[PeerId, float]] = {}
        self.punish_duration = punish_duration
        self.request_timeout = request_timeout
        self.audit = audit
        self.now = 0.0

        self.pool = pool if pool is not None else OrphanPool()
        self.pool.listener = self._on_pool_event

        # optional hook object with on_receive/on_orphan/on_accept methods
        self.observer = None

    def __repr__(self):
        return f"Node({self.id}, mempool={len(self.mempool)}, orphans={len(self.pool)})"

    # -- helpers -------------------------------------------------------------

    def _on_pool_event(self, event, txid, peer, cause):
        if self.audit is not None:
            rec = {"time_s": self.now, "node": self.id, "event": event,
                   "txid": txid.hex(), "peer": peer}
            if cause is not None:
                rec["cause"] = cause.value
            self.audit(rec)

    def has(self, txid: TxId) -> bool:
        return txid in self.mempool or txid in self.confirmed

    def is_punished(self, peer: PeerId, now: float) -> bool:
        state = self.peers.get(peer)
        return state is not None and now < state.punished_until

    def punish(self, peer: PeerId, now: float) -> None:
        state = self.peers.get(peer)
        if state is not None:
            state.punished_until = now + self.punish_duration

    def _announce(self, txid: TxId, skip: PeerId) -> Outbox:
        inv = Inv((txid,))
        return [(p, inv) for p in self.peers if p != skip]

    # -- validation ----------------------------------------------------------

    def validate_tx(self, tx: Transaction) -> ValidationResult:
        # Missing parents come first: fee and input standardness cannot be
        # evaluated until every spent output is known.
        missing = []
        for p in tx.parents:
            if p not in self.mempool and p not in self.confirmed and p not in missing:
                missing.append(p)
        if missing:
            return ValidationResult(Verdict.ORPHAN, tuple(missing))
        if not tx.standard:
            return ValidationResult(Verdict.INVALID, reason="nonstandard")
        if tx.fee_sat < self.min_fee_rate * tx.size_bytes:
            return ValidationResult(Verdict.INVALID, reason="low_fee")
        return VALID

    # -- message handlers ----------------------------------------------------

    def _accept(self, tx: Transaction, was_orphan: bool) -> None:
        self.mempool[tx.id] = tx
        if self.observer is not None:
            self.observer.on_accept(self, tx, was_orphan)

    def handle_tx(self, tx: Transaction, from_peer: PeerId, now: float) -> Outbox:
        self.now = now
        self.pending.pop(tx.id, None)
        if self.observer is not None:
            self.observer.on_receive(self, tx)
        if from_peer != LOCAL and self.is_punished(from_peer, now):
            return []
        if tx.id in self.pool.entries or self.has(tx.id):
            return []

        result = self.validate_tx(tx)
        if result.verdict is Verdict.VALID:
            self._accept(tx, False)
            out = self._announce(tx.id, from_peer)
            for txid, sender in self._resolve(tx.id, now):
                out.extend(self._announce(txid, sender))
            return out
        if result.verdict is Verdict.ORPHAN:
            if self.pool.add_orphan(tx, from_peer, now) is not AddResult.ADDED:
                return []
            if self.observer is not None:
                self.observer.on_orphan(self, tx, result.missing_parents)
            if from_peer == LOCAL:
                return []
            for p in result.missing_parents:
                self.pending[p] = (from_peer, now)
            return [(from_peer, GetData(result.missing_parents))]
        # invalid on first sight
        return []

    def _resolve(self, accepted: TxId, now: float) -> list[tuple[TxId, PeerId]]:
        """Work-list resolution of orphans unblocked by ``accepted``.

        Returns ``(txid, sender)`` for every orphan moved to the mempool, in
        processing order.
        """
        pool = self.pool
        work = deque([accepted])
        done: list[tuple[TxId, PeerId]] = []
        while work:
            parent = work.popleft()
            spenders = pool.parent_links.get(parent)
            if not spenders:
                continue
            for oid in sorted(spenders):
                entry = pool.entries.get(oid)
                if entry is None:
                    continue
                result = self.validate_tx(entry.tx)
                if result.verdict is Verdict.ORPHAN:
                    continue
                sender = entry.from_peer
                if result.verdict is Verdict.VALID:
                    pool.erase_orphan(oid, RemovalCause.PARENTS_RECEIVED)
                    self._accept(entry.tx, True)
                    work.append(oid)
                    done.append((oid, sender))
                else:
                    pool.erase_orphan(oid, RemovalCause.INVALID)
                    self.punish(sender, now)
        return done

    def process_resolved_orphans(self, accepted: TxId, now: float) -> list[TxId]:
        self.now = now
        return [txid for txid, _ in self._resolve(accepted, now)]

    def handle_block(self, block: Block, now: float) -> Outbox:
        self.now = now
        if block.height != self.height + 1:
            raise ScenarioError(
                f"node {self.id}: block height {block.height} after {self.height}"
            )
        self.ledger.record(block)
        self.height = block.height
        for tx in block.txs:
            self.mempool.pop(tx.id, None)
            self.pending.pop(tx.id, None)
            self.pool.erase_orphan(tx.id, RemovalCause.PARENTS_IN_BLOCK)
        out: Outbox = []
        for tx in block.txs:
            for txid, sender in self._resolve(tx.id, now):
                out.extend(self._announce(txid, sender))
        return out

    def handle_inv(self, txids, from_peer: PeerId, now: float = 0.0) -> Outbox:
        want = []
        pending = self.pending
        for t in txids:
            if t in self.mempool or t in self.pool.entries or t in self.confirmed:
                continue
            req = pending.get(t)
            if req is not None and now - req[1] < self.request_timeout:
                continue
            pending[t] = (from_peer, now)
            want.append(t)
        if not want:
            return []
        return [(from_peer, GetData(tuple(want)))]

    def handle_getdata(self, txids, from_peer: PeerId) -> Outbox:
        out: Outbox = []
        for t in txids:
            tx = self.mempool.get(t)
            if tx is None and t in self.confirmed:
                tx = self.ledger.txs.get(t)
            if tx is not None:
                out.append((from_peer, TxMsg(tx)))
        return out

    def on_peer_disconnect(self, peer: PeerId, now: float | None = None) -> int:
        if now is not None:
            self.now = now
        if peer not in self.peers:
            return 0
        del self.peers[peer]
        return self.pool.erase_for_peer(peer)

    def on_peer_connect(self, peer: PeerId) -> None:
        self.peers.setdefault(peer, PeerState())
