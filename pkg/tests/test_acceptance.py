"""Acceptance suite: twelve criteria, each reported on its own line at the end of the run.

The trend criteria share one execution of ``scenarios/paper_analog.toml``
(50 nodes, 10^5 transactions, pool sizes 20 to 1000 side by side, three
seeds).  On a single core this takes about five minutes.
"""
import copy
import filecmp
import random
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from helpers import ROOT, tx
from orphansim.cli import main
from orphansim.metrics import NodeStats, RunReport, network_overhead, pool_size_summary
from orphansim.node import Ledger, Node
from orphansim.orphan_pool import AddResult, OrphanPool, RemovalCause
from orphansim.scenario import from_dict, parse_scenario, run_sweep
from orphansim.txmodel import build_workload

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SIZES = [20, 50, 100, 500, 1000]


def criterion(number, title):
    return pytest.mark.criterion(number, title)


@pytest.fixture(scope="session")
def analog(tmp_path_factory):
    s = parse_scenario(SCENARIOS / "paper_analog.toml")
    out = tmp_path_factory.mktemp("paper_analog")
    result = run_sweep(s, out)
    return s, out, result


@pytest.fixture(scope="session")
def by_seed(analog):
    _, _, result = analog
    return {rep.seed: pool_size_summary(rep) for rep in result.reports}


def fmt(values):
    return " ".join(f"{v:.4g}" for v in values)


# -- 1, 2: pool invariants under random operations ---------------------------------------------

def rebuilt_links(pool):
    links = {}
    for oid, entry in pool.entries.items():
        for p in entry.tx.parents:
            links.setdefault(p, set()).add(oid)
    return links


@pytest.fixture(scope="module")
def random_ops():
    """Run 10^6 random pool operations; return (ops, cap violations, inconsistent batches)."""
    rng = random.Random(2718)
    txs = [tx(f"acc{i}", parents=tuple(f"par{rng.randrange(80)}" for _ in range(rng.randint(1, 4))),
              size=rng.choice((300, 300, 300, 200_000)))
           for i in range(500)]
    ops = over_cap = bad_batches = batches = 0
    while ops < 1_000_000:
        pool = OrphanPool(max_size=rng.choice((1, 3, 10, 50, 100)), expiry=rng.choice((20.0, 1200.0)),
                          sweep_interval=rng.choice((0.0, 5.0, 300.0)), seed=rng.random())
        now = 0.0
        for _ in range(25_000):
            now += rng.random()
            r = rng.random()
            if r < 0.55:
                pool.add_orphan(rng.choice(txs), rng.randrange(10), now)
            elif r < 0.8:
                pool.erase_orphan(rng.choice(txs).id, rng.choice(list(RemovalCause)))
            elif r < 0.9:
                pool.expire_orphans(now)
            elif r < 0.97:
                pool.erase_for_peer(rng.randrange(10))
            else:
                pool.max_size = rng.choice((1, 3, 10, 50, 100))
                pool.limit_orphans()
            ops += 1
            over_cap += len(pool.entries) > pool.max_size
            if ops % 1000 == 0:
                batches += 1
                dense = pool.eviction_list
                ok = (sorted(dense) == sorted(pool.entries)
                      and all(pool.entries[t].list_pos == i for i, t in enumerate(dense))
                      and rebuilt_links(pool) == pool.parent_links)
                bad_batches += not ok
    return ops, over_cap, bad_batches, batches


@criterion(1, "pool occupancy never exceeds max_size over >=10^6 random operations")
def test_pool_cap(random_ops, record_property):
    ops, over_cap, _, _ = random_ops
    record_property("measured", f"{ops} operations, {over_cap} over the cap")
    assert ops >= 1_000_000
    assert over_cap == 0


@criterion(2, "parent_links and eviction_list equal brute-force rebuilds after every batch")
def test_structural_consistency(random_ops, record_property):
    _, _, bad, batches = random_ops
    record_property("measured", f"{batches} batches checked, {bad} inconsistent")
    assert batches >= 1000
    assert bad == 0


# -- 3, 4: exact accounting ---------------------------------------------------------------------

@criterion(3, "memory model: 1000 unshared orphans cost 72,000 / 44,000 / 8,000 bytes")
def test_memory_formula(record_property):
    pool = OrphanPool(max_size=1000)
    for i in range(1000):
        assert pool.add_orphan(tx(f"mem{i}", parents=(f"mp{i}",)), 0, 0.0) is AddResult.ADDED
    m = pool.memory_overhead("64-bit")
    record_property("measured", f"{m.entry_bytes} / {m.parent_link_bytes} / {m.eviction_list_bytes}")
    assert (m.entry_bytes, m.parent_link_bytes, m.eviction_list_bytes) == (72_000, 44_000, 8_000)


@criterion(4, "orphan bytes are 64 per addition; unique=1, total=3 gives 2/3 duplicate")
def test_byte_accounting(analog, record_property):
    rep = RunReport(0, [NodeStats(0, 100, 1.0)])
    rep.nodes[0].unique_orphans, rep.nodes[0].total_orphan_additions = 1, 3
    assert network_overhead(rep, 0)["duplicate_fraction"] == 2 / 3
    checked = 0
    for run in analog[2].reports:
        for s in run.nodes:
            assert s.orphan_bytes_unique + s.orphan_bytes_duplicate == 64 * s.total_orphan_additions
            assert s.orphan_bytes_unique == 64 * s.unique_orphans
            checked += 1
    record_property("measured", f"{checked} node reports checked")


# -- 5: resolution oracle ----------------------------------------------------------------------

def closure(delivered, floor):
    accepted = {ROOT}
    changed = True
    while changed:
        changed = False
        for t in delivered:
            if t.id not in accepted and t.standard and t.fee_sat >= floor * t.size_bytes \
                    and all(p in accepted for p in t.parents):
                accepted.add(t.id)
                changed = True
    return accepted - {ROOT}


@criterion(5, "accepted set equals the topological closure of the delivery log on 120 DAGs")
def test_resolution_oracle(record_property):
    mismatches = 0
    for seed in range(120):
        rng = random.Random(seed)
        txs = []
        for i in range(rng.randint(1, 50)):
            parents = tuple(rng.choice(txs).id if txs and rng.random() < 0.7 else ROOT
                            for _ in range(rng.randint(1, 3)))
            txs.append(tx(f"acc-dag{seed}:{i}", parents=parents, size=200,
                          fee=rng.choice((100, 1000, 1000)), standard=rng.random() > 0.05))
        log = [t for t in txs if rng.random() < 0.85]
        rng.shuffle(log)
        node = Node(0, OrphanPool(max_size=10**6, expiry=1e12), min_fee_rate=2.0,
                    ledger=Ledger([ROOT]), peers=(1, 2, 3), punish_duration=0.0)
        for step, t in enumerate(log):
            node.handle_tx(t, rng.choice((1, 2, 3)), float(step))
        mismatches += set(node.mempool) != closure(log, 2.0)
    record_property("measured", f"120 DAGs, {mismatches} mismatches")
    assert mismatches == 0


# -- 6, 7, 8: sweep trends ---------------------------------------------------------------------

@criterion(6, "PoolFull fraction non-increasing and Timeout non-decreasing in pool size; "
              "no PoolFull at 1000 in some seed")
def test_eviction_cause_trend(by_seed, record_property):
    zero_at_1000 = False
    for seed, summ in sorted(by_seed.items()):
        full = [summ[s]["removal_fractions"]["PoolFull"] for s in SIZES]
        timeout = [summ[s]["removal_fractions"]["Timeout"] for s in SIZES]
        record_property("measured", f"seed {seed}: PoolFull {fmt(full)} | Timeout {fmt(timeout)}")
        assert all(a >= b for a, b in zip(full, full[1:])), (seed, full)
        assert all(a <= b for a, b in zip(timeout, timeout[1:])), (seed, timeout)
        zero_at_1000 |= summ[1000]["removal_counts"]["PoolFull"] == 0
    assert zero_at_1000


@criterion(7, "total/unique additions at pool 20 at least 2x pool 1000; non-increasing "
              "with at most one adjacent inversion")
def test_duplicate_addition_trend(by_seed, record_property):
    for seed, summ in sorted(by_seed.items()):
        ratio = [summ[s]["addition_ratio"] for s in SIZES]
        record_property("measured", f"seed {seed}: total/unique {fmt(ratio)}")
        assert ratio[0] >= 2 * ratio[-1], (seed, ratio)
        inversions = sum(b > a for a, b in zip(ratio, ratio[1:]))
        assert inversions <= 1, (seed, ratio)


@criterion(8, "duplicate_fraction at pool 100 exceeds 5x the pool-1000 value")
def test_overhead_trend(by_seed, record_property):
    for seed, summ in sorted(by_seed.items()):
        d100 = summ[100]["duplicate_fraction"]
        d1000 = summ[1000]["duplicate_fraction"]
        record_property("measured", f"seed {seed}: {d100:.4f} vs {d1000:.4f}")
        assert d100 > 5 * d1000, (seed, d100, d1000)


# -- 9, 10: calibration and characterization ------------------------------------------------------

@criterion(9, "workload means within 10% of 2.20 parents / 480.31 B / 21.73 sat/B; "
              "orphan rate at pool 100 in [0.5%, 8%]")
def test_calibration(analog, by_seed, record_property):
    s = analog[0]
    for seed in s.seeds:
        wl = build_workload(s.with_seed(seed).workload, s.sim.node_count)
        assert len(wl) >= 100_000
        parents = np.mean([len(t.parents) for t in wl.txs])
        size = np.mean([t.size_bytes for t in wl.txs])
        rate = np.mean([t.fee_rate for t in wl.txs])
        orphan_rate = by_seed[seed][100]["orphan_rate"]
        record_property("measured", f"seed {seed}: parents {parents:.3f}, size {size:.1f}, "
                                    f"fee rate {rate:.2f}, orphan rate {orphan_rate:.4f}")
        assert parents == pytest.approx(2.20, rel=0.10)
        assert size == pytest.approx(480.31, rel=0.10)
        assert rate == pytest.approx(21.73, rel=0.10)
        assert 0.005 <= orphan_rate <= 0.08


@criterion(10, "missing parents have a lower mean fee rate and a larger mean size than all "
               "transactions")
def test_characterization(analog, record_property):
    for rep in analog[2].reports:
        summ = rep.summaries()
        miss, every = summ["missing_parents"], summ["all_transactions"]
        record_property("measured", f"seed {rep.seed}: fee rate {miss['fee_rate']['mean']:.2f} vs "
                                    f"{every['fee_rate']['mean']:.2f}, size "
                                    f"{miss['size_bytes']['mean']:.1f} vs {every['size_bytes']['mean']:.1f}")
        assert miss["fee_rate"]["mean"] < every["fee_rate"]["mean"]
        assert miss["size_bytes"]["mean"] > every["size_bytes"]["mean"]


# -- 11: determinism --------------------------------------------------------------------------------

@criterion(11, "equal seeds give byte-identical audit logs and reports")
def test_determinism(analog, tmp_path, record_property):
    s, out, result = analog
    raw = copy.deepcopy(s.raw)
    raw["replicates"] = 1
    again = run_sweep(from_dict(raw, s._base_dir), tmp_path / "again")
    first = next(o for o in result.outcomes if o.seed == s.base_seed)
    (rerun,) = again.outcomes
    compared = 0
    for kind in ("audit", "report"):
        assert filecmp.cmp(first.files[kind], rerun.files[kind], shallow=False)
        compared += 1

    smoke = SCENARIOS / "smoke.toml"
    dirs = [tmp_path / "smoke1", tmp_path / "smoke2"]
    for d in dirs:
        assert main(["run", "--scenario", str(smoke), "--out", str(d)]) == 0
    names = sorted(p.name for p in dirs[0].iterdir() if not p.name.endswith(".timing.json"))
    for name in names:
        assert filecmp.cmp(dirs[0] / name, dirs[1] / name, shallow=False), name
        compared += 1
    wall = [o.wall_clock_s for o in result.outcomes]
    record_property("measured", f"{compared} file pairs identical; paper-analog runs took "
                                f"{fmt(wall)} s")


# -- 12: eviction uniformity ----------------------------------------------------------------------------

@criterion(12, "10^4 forced evictions over 10 residents: each slot within 3 sigma of 1/10")
def test_eviction_uniformity(record_property):
    trials, k = 10_000, 10
    pool = OrphanPool(max_size=k, seed=99)
    residents = [tx(f"uni{i}") for i in range(k)]
    for t in residents:
        pool.add_orphan(t, 0, 0.0)
    slot = {t.id: i for i, t in enumerate(residents)}
    counts = [0] * k
    for _ in range(trials):
        before = set(pool.entries)
        pool.max_size = k - 1
        pool.limit_orphans()
        (gone,) = before - set(pool.entries)
        counts[slot[gone]] += 1
        pool.max_size = k
        pool.add_orphan(residents[slot[gone]], 0, 0.0)
    sigma = (trials * 0.1 * 0.9) ** 0.5
    record_property("measured", f"counts {counts}, bound 1000 +/- {3 * sigma:.0f}, "
                                f"chi-square p={stats.chisquare(counts).pvalue:.3f}")
    assert all(abs(c - 1000) <= 3 * sigma for c in counts)
