"""
Who goes missing?
=================

Parents that nodes fail to deliver are the ones their relay policy rejected,
so they pay less per byte than the average transaction.  This demo runs a
mid-sized network and compares the two populations with empirical CCDFs.
"""
import numpy as np

from orphansim import SimConfig, ValueSpec, WorkloadConfig, build_workload, run
from orphansim.metrics import ccdf, summarize

nodes = 20
workload = build_workload(
    WorkloadConfig(tx_count=20_000, tx_rate=25.0, unconfirmed_parent_prob=0.5,
                   parent_window=4000, seed=5),
    nodes,
)
cfg = SimConfig(
    node_count=nodes, mean_degree=8, block_interval=300.0,
    run_duration=workload.announce_times[-1] + 900.0,
    min_fee_rate=ValueSpec("choice", values=(1.0, 2.0, 3.0, 5.0)),
    inv_trickle=ValueSpec("exponential", mean=2.0),
    seed=5,
)
report = run(cfg, workload)

everything = report.all_tx_fee_rate
missing = report.missing_parent_samples("fee_rate")
for label, xs in (("all transactions", everything), ("missing parents", missing)):
    s = summarize(xs)
    print(f"{label:>17}: n={s.count:>6}  mean {s.mean:6.2f}  median {s.quantiles[0.5]:6.2f}"
          f"  80th pct {s.quantiles[0.8]:6.2f} sat/byte")


def tail(xs, v):
    """P(X > v) read off the empirical CCDF."""
    points = ccdf(xs)
    values = np.array([p[0] for p in points])
    i = np.searchsorted(values, v, side="right") - 1
    return 1.0 if i < 0 else points[i][1]


print("\nP(fee rate > x)")
print("      x   all   missing")
for x in (1, 2, 5, 10, 20, 50):
    print(f"  {x:>5}  {tail(everything, x):.3f}  {tail(missing, x):.3f}")

sizes = report.missing_parent_samples("size")
print(f"\nmean size: missing parents {np.mean(sizes):.0f} B, "
      f"all transactions {np.mean(report.all_tx_size):.0f} B")
