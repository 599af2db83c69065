"""Bounded orphan-transaction store.

Mirrors the three structures a Bitcoin node keeps for orphans: the entry map
keyed by transaction id, the index from each missing parent to the orphans
spending it, and a dense list used to pick a uniformly random victim when the
pool overflows.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable

from .txmodel import Transaction, TxId

DEFAULT_MAX_ORPHANS = 100
DEFAULT_EXPIRY = 20 * 60.0
DEFAULT_SWEEP_INTERVAL = 5 * 60.0
DEFAULT_MAX_ORPHAN_SIZE = 100_000

PeerId = Hashable


class RemovalCause(str, Enum):
    PARENTS_RECEIVED = "ParentsReceived"
    PARENTS_IN_BLOCK = "ParentsInBlock"
    POOL_FULL = "PoolFull"
    TIMEOUT = "Timeout"
    INVALID = "Invalid"
    PEER_DISCONNECTED = "PeerDisconnected"

    def __str__(self):
        return self.value


class AddResult(Enum):
    ADDED = "Added"
    ALREADY_PRESENT = "AlreadyPresent"
    TOO_LARGE = "TooLarge"


@dataclass(slots=True)
class OrphanEntry:
    tx: Transaction
    from_peer: PeerId
    expires_at: float
    list_pos: int


@dataclass(frozen=True)
class OverheadBreakdown:
    entry_bytes: int
    parent_link_bytes: int
    eviction_list_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.entry_bytes + self.parent_link_bytes + self.eviction_list_bytes

    def as_dict(self) -> dict:
        return {
            "entry_bytes": self.entry_bytes,
            "parent_link_bytes": self.parent_link_bytes,
            "eviction_list_bytes": self.eviction_list_bytes,
            "total_bytes": self.total_bytes,
        }


# (per entry, parent-link key, per spender pointer, eviction-list slot)
_ARCH_SIZES = {
    "64-bit": (72, 36, 8, 8),
    "32-bit": (60, 36, 4, 4),
}

Listener = Callable[[str, TxId, PeerId, "RemovalCause | None"], None]


class OrphanPool:
    def __init__(
        self,
        max_size: int = DEFAULT_MAX_ORPHANS,
        expiry: float = DEFAULT_EXPIRY,
        sweep_interval: float = DEFAULT_SWEEP_INTERVAL,
        max_orphan_size: int = DEFAULT_MAX_ORPHAN_SIZE,
        seed: int = 0,
        listener: Listener | None = None,
    ):
        if max_size < 1:
            raise ValueError(f"max_size must be positive, got {max_size}")
        if expiry <= 0 or sweep_interval < 0:
            raise ValueError("expiry must be positive and sweep_interval non-negative")
        self.max_size = max_size
        self.expiry = expiry
        self.sweep_interval = sweep_interval
        self.max_orphan_size = max_orphan_size
        self.next_sweep_at = 0.0
        self.rng = random.Random(seed)
        self.listener = listener

        self.entries: dict[TxId, OrphanEntry] = {}
        self.parent_links: dict[TxId, set[TxId]] = {}
        self.eviction_list: list[TxId] = []
        self.removals: Counter[RemovalCause] = Counter()

    def __len__(self):
        return len(self.entries)

    def __contains__(self, txid):
        return txid in self.entries

    def add_orphan(self, tx: Transaction, from_peer: PeerId, now: float) -> AddResult:
        if tx.id in self.entries:
            return AddResult.ALREADY_PRESENT
        if tx.size_bytes > self.max_orphan_size:
            return AddResult.TOO_LARGE
        if now >= self.next_sweep_at:
            self.expire_orphans(now)

        self.entries[tx.id] = OrphanEntry(tx, from_peer, now + self.expiry, len(self.eviction_list))
        self.eviction_list.append(tx.id)
        for parent in set(tx.parents):
            self.parent_links.setdefault(parent, set()).add(tx.id)
        if self.listener is not None:
            self.listener("orphan_add", tx.id, from_peer, None)

        self.limit_orphans()
        return AddResult.ADDED

    def erase_orphan(self, txid: TxId, cause: RemovalCause) -> bool:
        entry = self.entries.pop(txid, None)
        if entry is None:
            return False
        for parent in set(entry.tx.parents):
            spenders = self.parent_links.get(parent)
            if spenders is not None:
                spenders.discard(txid)
                if not spenders:
                    del self.parent_links[parent]
        # swap-remove keeps the eviction list dense
        last = self.eviction_list.pop()
        if last != txid:
            self.eviction_list[entry.list_pos] = last
            self.entries[last].list_pos = entry.list_pos
        self.removals[cause] += 1
        if self.listener is not None:
            self.listener("orphan_erase", txid, entry.from_peer, cause)
        return True

    def limit_orphans(self) -> int:
        evicted = 0
        while len(self.entries) > self.max_size:
            victim = self.eviction_list[self.rng.randrange(len(self.eviction_list))]
            self.erase_orphan(victim, RemovalCause.POOL_FULL)
            evicted += 1
        return evicted

    def expire_orphans(self, now: float) -> list[TxId]:
        if now < self.next_sweep_at:
            return []
        expired = [txid for txid, e in self.entries.items() if e.expires_at <= now]
        for txid in expired:
            self.erase_orphan(txid, RemovalCause.TIMEOUT)
        self.next_sweep_at = now + self.sweep_interval
        return expired

    def erase_for_peer(self, peer: PeerId) -> int:
        doomed = [txid for txid, e in self.entries.items() if e.from_peer == peer]
        for txid in doomed:
            self.erase_orphan(txid, RemovalCause.PEER_DISCONNECTED)
        return len(doomed)

    def orphans_spending(self, parent: TxId) -> frozenset[TxId]:
        return frozenset(self.parent_links.get(parent, ()))

    def memory_overhead(self, arch: str = "64-bit") -> OverheadBreakdown:
        try:
            per_entry, link_key, link_ptr, slot = _ARCH_SIZES[arch]
        except KeyError:
            raise ValueError(f"arch must be one of {sorted(_ARCH_SIZES)}, got {arch!r}") from None
        n = len(self.entries)
        links = sum(link_key + link_ptr * len(s) for s in self.parent_links.values())
        return OverheadBreakdown(n * per_entry, links, n * slot)

    def check_consistency(self) -> None:
        """Rebuild every index from ``entries`` and assert it matches."""
        assert len(self.entries) <= self.max_size
        assert len(self.eviction_list) == len(self.entries)
        assert set(self.eviction_list) == set(self.entries)
        for pos, txid in enumerate(self.eviction_list):
            assert self.entries[txid].list_pos == pos
        rebuilt: dict[TxId, set[TxId]] = {}
        for txid, e in self.entries.items():
            for p in e.tx.parents:
                rebuilt.setdefault(p, set()).add(txid)
        assert rebuilt == self.parent_links
