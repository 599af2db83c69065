"""
What an orphan pool costs in memory
===================================

The pool keeps three structures: the entry map, the missing-parent index and
the dense list used for random eviction.  Only their bookkeeping is counted;
transaction bytes would be held in the mempool anyway.
"""
import numpy as np

from orphansim import OrphanPool, Transaction

rng = np.random.default_rng(0)


def orphan(i, parents):
    return Transaction(rng.bytes(32), 300, 300, tuple(parents))


# 1000 orphans, each waiting on its own parent: the textbook case.
pool = OrphanPool(max_size=1000)
for i in range(1000):
    pool.add_orphan(orphan(i, [rng.bytes(32)]), from_peer=0, now=0.0)

for arch in ("64-bit", "32-bit"):
    m = pool.memory_overhead(arch)
    print(f"{arch}: entries {m.entry_bytes:>7,}  parent index {m.parent_link_bytes:>7,}  "
          f"eviction list {m.eviction_list_bytes:>6,}  total {m.total_bytes:>7,} bytes")

# Sharing parents shrinks the index: each distinct parent costs 36 bytes plus
# one pointer per waiting orphan.
print("\nsiblings per parent -> parent-index bytes (64-bit, 1000 orphans)")
for siblings in (1, 2, 5, 10, 100):
    shared = OrphanPool(max_size=1000)
    parents = [rng.bytes(32) for _ in range(1000 // siblings)]
    for i in range(1000):
        shared.add_orphan(orphan(i, [parents[i // siblings]]), from_peer=0, now=0.0)
    print(f"  {siblings:>4}  {shared.memory_overhead().parent_link_bytes:>7,}")
