"""
The life of one orphan
======================

Two nodes, three transactions.  A child reaches node 1 before its parent
does, waits in the orphan pool, and is released the moment the parent
arrives.  The audit stream printed at the end is the same JSONL every run
writes to ``*.audit.jsonl``.
"""
import hashlib
import io
import json

from orphansim import SimConfig, Simulation, Transaction, ValueSpec
from orphansim.txmodel import Workload


def txid(label):
    return hashlib.sha256(label.encode()).digest()


confirmed_coin = txid("an output confirmed long ago")

# parent P spends a confirmed output; child C spends P; D is unrelated
P = Transaction(txid("P"), size_bytes=250, fee_sat=2500, parents=(confirmed_coin,))
C = Transaction(txid("C"), size_bytes=300, fee_sat=6000, parents=(P.id,))
D = Transaction(txid("D"), size_bytes=200, fee_sat=400, parents=(confirmed_coin,))

# P and D appear at node 0; C is handed to node 1's wallet 10 ms later,
# long before P can make the inv -> getdata -> tx round trip (0.3 s here).
workload = Workload([P, C, D], announce_times=[0.0, 0.01, 0.02], origin_nodes=[0, 1, 0])

cfg = SimConfig(
    node_count=2, mean_degree=1,
    latency=ValueSpec("constant", value=0.1),
    min_fee_rate=(1.0, 1.0),
    block_interval=600.0, run_duration=5.0,
)

audit = io.StringIO()
sim = Simulation(cfg, workload, audit=audit, scenario="lifecycle")
report = sim.run()

print("audit stream")
for line in audit.getvalue().splitlines():
    rec = json.loads(line)
    if rec["event"] != "audit_header":
        rec["txid"] = rec["txid"][:8]
    print("  ", rec)

node1 = sim.nodes[1]
print("\nnode 1 mempool holds P, C, D:", all(t.id in node1.mempool for t in (P, C, D)))
print("node 1 removal counts:", {k: v for k, v in report.nodes[1].removal_counts.items() if v})
print("messages delivered:", report.counters)
