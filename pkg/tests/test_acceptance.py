"""Release gate: every headline guarantee as one test with pinned tolerances.

Run ``pytest tests/test_acceptance.py -v`` for one pass/fail line per
criterion.  Tolerances are frozen here on purpose -- loosening one is a
release decision, not a refactor.  The whole gate is sized for a laptop:
the fuzz criterion is budgeted under five minutes and the scaling-trend
criterion under ten.
"""
import math
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from shardnode.analysis import (
    GrindTarget,
    PerfParams,
    affected_fraction,
    bpt_intra,
    capacity,
    grind_transactions,
    miner_alpha,
    slowdown_under_attack,
)
from shardnode.fuzz import run_fuzz
from shardnode.node import NodeConfig, genesis_utxo
from shardnode.runtime import Router, add_node
from shardnode.sharding import gen_salt
from shardnode.sim import SimConfig, measure_capacity, measure_intra_bw, run_simulation

from chains import ScriptedPeer, make_chain, replay, seed_records, utxo_bytes
from oracles import mc_hit_fraction, mc_occupied_fraction


def test_criterion_1_three_validators_agree_on_10k_fuzzed_blocks():
    started = time.monotonic()
    report = run_fuzz(
        10_000, seed=7, max_txs=200, shard_counts=(1, 2, 3, 4, 8),
        adversarial_rate=0.3,
    )
    elapsed = time.monotonic() - started
    assert report.iterations == 10_000
    assert report.accepted + report.rejected == 10_000
    assert report.accepted > 0 and report.rejected > 0
    assert report.divergences == (), report.divergences[:3]
    assert elapsed < 300.0, f"fuzz gate took {elapsed:.0f}s"


def test_criterion_2_partition_hit_probability_closed_form_and_sampler():
    assert affected_fraction(2, 3) == 0.9375
    rng = np.random.default_rng(2)
    trials = 10**6
    for n in range(1, 33):
        for k in range(1, 6):
            p = affected_fraction(n, k)
            got = mc_hit_fraction(n, k + 1, trials, rng)
            sigma = math.sqrt(p * (1.0 - p) / trials)
            assert abs(got - p) <= 3.0 * sigma, (n, k, got, p)


def test_criterion_3_miner_share_headline_inverse_and_sampler():
    assert 0.0070 <= miner_alpha(32, 300, 0.9) <= 0.0082
    rng = np.random.default_rng(3)
    for n in range(2, 33):
        for s in (300, 600):
            a = miner_alpha(n, s, 0.9)
            seats = a * n * s
            recovered = 1.0 - ((n - 1) / n) ** seats
            assert abs(recovered - 0.9) < 1e-9
            got = mc_occupied_fraction(n, round(seats), 20_000, rng)
            assert got == pytest.approx(0.9, rel=0.05), (n, s, got)


def test_criterion_4_simulated_capacity_tracks_model_and_scales():
    shard_counts = (1, 2, 4, 8, 16, 32)
    bw_values = (40e6, 160e6, math.inf)
    measured = {
        (ell, bw): tps
        for ell, bw, tps in measure_capacity(shard_counts, bw_values)
    }
    for (ell, bw), tps in measured.items():
        model = capacity(PerfParams(shard_count=ell, total_bw=bw))
        assert tps == pytest.approx(model, rel=0.10), (ell, bw, tps, model)
    ratio = measured[(8, math.inf)] / measured[(1, math.inf)]
    assert 7.2 <= ratio <= 8.0, ratio


def test_criterion_5_intra_bandwidth_dip_recovery_and_bpt_model():
    target_seconds = 10.0
    rows = measure_intra_bw((1, 2, 8), (256e3, 5e6),
                            target_seconds=target_seconds)
    tps = {(ell, bw): t for ell, bw, _, t in rows}
    assert tps[(2, 256e3)] < tps[(1, 256e3)], "no dip at starved interconnect"
    assert tps[(8, 5e6)] > tps[(1, 5e6)], "no recovery at healthy interconnect"
    for ell, bw, bpt, t in rows:
        model = bpt_intra(PerfParams(
            block_size=t * target_seconds * 250.0,
            shard_count=ell,
            intra_bw=bw,
        ))
        assert bpt == pytest.approx(model, rel=0.15), (ell, bw, bpt, model)


def test_criterion_6_grinding_cost_and_targeted_slowdown():
    rng = random.Random(6)
    count = 1000
    for ell, k in ((2, 1), (2, 3), (4, 2)):
        targets = {
            i: GrindTarget(gen_salt(rng), ell, 0) for i in range(k)
        }
        _, attempts = grind_transactions(targets, count)
        mean = attempts / count
        p = float(ell) ** -k
        sigma_mean = math.sqrt((1.0 - p) / p**2 / count)
        assert abs(mean - ell**k) <= 3.0 * sigma_mean, (ell, k, mean)

    report = slowdown_under_attack(4, block_txs=10_000)
    assert report.targeted >= 0.9 * 4, report.targeted
    assert report.bystander <= 1.1, report.bystander


def test_criterion_7_reorgs_match_unified_replay_without_sibling_traffic():
    for case in range(1000):
        rng = random.Random(0x7000 + case)
        genesis = genesis_utxo(seed_records(rng, 24))
        router = Router()
        node = add_node(
            router,
            NodeConfig(node_id=2, shard_count=rng.choice((1, 2, 3)),
                       salt=gen_salt(rng)),
            genesis,
        )
        peer = ScriptedPeer(node_id=9, salt=gen_salt(rng))
        router.register(peer, peer.address)
        router.register(peer, peer.shard_address)
        router.post(peer.address, node.coordinator.address, peer.hello())
        router.run()

        sizes = lambda depth: [rng.randint(1, 3) for _ in range(depth)]
        shared, shared_states = make_chain(
            rng, genesis.as_dict(), node.cfg.genesis_hash, 0,
            sizes(rng.randint(1, 2)),
        )
        fork_state = shared_states[-1]
        prev, height = shared[-1].block_hash, len(shared)
        depth_lose = rng.randint(1, 4)
        depth_win = rng.randint(depth_lose + 1, 5)
        lose, _ = make_chain(rng, fork_state, prev, height, sizes(depth_lose))
        win, _ = make_chain(rng, fork_state, prev, height, sizes(depth_win))

        peer.set_branch(shared + lose)
        peer.announce(router, node.coordinator.address)
        router.run()
        assert node.chain() == [b.block_hash for b in shared + lose], case

        peer.set_branch(shared + win)
        peer.announce(router, node.coordinator.address)
        router.run(until=lambda: bool(node.coordinator.rollback_acks))
        intra_before = router.intra_shard_counts[node.cfg.node_id]
        router.run(until=lambda: not node.coordinator.rollback_acks)
        assert router.intra_shard_counts[node.cfg.node_id] == intra_before, case
        router.run()

        assert node.chain() == [b.block_hash for b in shared + win], case
        expect = replay(shared + win, genesis.as_dict())
        assert utxo_bytes(node.union_utxo()) == utxo_bytes(expect), case


SIM_INI = """\
[simulation]
node_count = 12
peers_per_node = 4
total_bw = inf
latency = 0.0
block_txs = 600
duration = 120
seed = 3
"""


def _run_cli(args, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "shardnode.cli", *map(str, args)],
        cwd=cwd, capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def test_criterion_8_rerun_with_same_seed_is_byte_identical(tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text(SIM_INI)
    for sub in ("first", "second"):
        d = tmp_path / sub
        d.mkdir()
        _run_cli(["simulate", "--config", cfg, "--out", "blocks.csv",
                  "--summary-out", "summary.csv"], cwd=d)
        _run_cli(["fuzz-equivalence", "--iterations", 200, "--seed", 8,
                  "--out", "fuzz.csv"], cwd=d)
    for name in ("blocks.csv", "summary.csv", "fuzz.csv"):
        first = (tmp_path / "first" / name).read_bytes()
        second = (tmp_path / "second" / name).read_bytes()
        assert first == second, name


def test_criterion_9_throughput_scales_with_shards_at_network_scale():
    started = time.monotonic()
    # offered load per tier keeps gossip below saturation at finite bandwidth
    tiers = ((40e6, 8_000), (160e6, 30_000), (math.inf, 140_000))
    by_tier = {}
    for bw, block_txs in tiers:
        tps = []
        for ell in (1, 2, 4, 8):
            metrics = run_simulation(SimConfig(
                node_count=100,
                shards_per_node=ell,
                peers_per_node=8,
                total_bw=bw,
                block_txs=block_txs,
                keyblock_interval=600.0,
                microblock_interval=10.0,
                duration=600.0,
                seed=9,
            ))
            tps.append(metrics.throughput_tps)
        for lo, hi in zip(tps, tps[1:]):
            assert hi >= lo, (bw, tps)
        by_tier[bw] = tps
    top = by_tier[math.inf]
    assert top[-1] / top[0] >= 4.0, top
    elapsed = time.monotonic() - started
    assert elapsed < 600.0, f"scaling gate took {elapsed:.0f}s"
