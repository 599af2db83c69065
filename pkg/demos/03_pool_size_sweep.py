"""
Pool size against eviction, duplicates and overhead
===================================================

Runs a scenario's pool-size sweep and prints, per seed, how orphans leave the
pool and how often they come back.  The default is the quick smoke scenario;
pass ``--full`` for the 50-node, 10^5-transaction analog (about two minutes
per seed on one core).

    python demos/03_pool_size_sweep.py [--full]
"""
import sys
from pathlib import Path

from orphansim import pool_size_summary
from orphansim.scenario import parse_scenario, run_sweep

here = Path(__file__).resolve().parent.parent / "scenarios"
name = "paper_analog.toml" if "--full" in sys.argv else "smoke.toml"
scenario = parse_scenario(here / name)
print(f"{scenario.name}: {scenario.sim.node_count} nodes, "
      f"{scenario.workload.tx_count} transactions, seeds {scenario.seeds}\n")

result = run_sweep(scenario, out_dir=None, audit=False)

for report in result.reports:
    summary = pool_size_summary(report)
    print(f"seed {report.seed}")
    print("   pool  PoolFull  Timeout  Parents*  total/unique  duplicate share")
    for size, row in summary.items():
        f = row["removal_fractions"]
        parents = f["ParentsReceived"] + f["ParentsInBlock"]
        print(f"  {size:>5}  {f['PoolFull']:>8.3f}  {f['Timeout']:>7.3f}  {parents:>8.3f}"
              f"  {row['addition_ratio']:>12.2f}  {row['duplicate_fraction']:>15.3f}")
    print()

print("* resolved by a received parent or by a block")
