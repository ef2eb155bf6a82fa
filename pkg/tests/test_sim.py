import math
from collections import Counter

import numpy as np
import pytest

from shardnode.analysis import PerfParams, bpt_intra, capacity
from shardnode.sharding import shard_of
from shardnode.sim import (
    Engine,
    InvalidConfigError,
    Metrics,
    Network,
    SimConfig,
    derive_seed_bytes,
    derive_seed_int,
    measure_capacity,
    measure_intra_bw,
    processing_time_for_hashes,
    run_simulation,
    sampled_shard_loads,
    single_hop_time,
)


class TestEngine:
    def test_time_order_with_insertion_ties(self):
        engine = Engine()
        seen = []
        engine.at(2.0, lambda: seen.append("b"))
        engine.at(1.0, lambda: seen.append("a"))
        engine.at(2.0, lambda: seen.append("c"))  # same time: insertion order
        engine.run()
        assert seen == ["a", "b", "c"]
        assert engine.now == 2.0

    def test_horizon_cuts_and_advances_clock(self):
        engine = Engine()
        seen = []
        engine.at(1.0, lambda: seen.append(1))
        engine.at(5.0, lambda: seen.append(5))
        engine.run(horizon=3.0)
        assert seen == [1]
        assert engine.now == 3.0

    def test_no_scheduling_into_the_past(self):
        engine = Engine()
        engine.at(4.0, lambda: engine.at(1.0, lambda: None))
        with pytest.raises(ValueError):
            engine.run()

    def test_events_can_spawn_events(self):
        engine = Engine()
        seen = []
        engine.at(1.0, lambda: engine.after(1.0, lambda: seen.append(engine.now)))
        engine.run()
        assert seen == [2.0]


class TestNetwork:
    def _pair(self, bw_bits=8e6):
        engine = Engine()
        net = Network(engine)
        net.add_endpoint("a", bw_bits)
        net.add_endpoint("b", bw_bits)
        return engine, net

    def test_lone_transfer_gets_full_bandwidth(self):
        engine, net = self._pair(8e6)  # 1 MB/s
        done = []
        net.transfer("a", "b", 2_000_000, 0.0, lambda: done.append(engine.now))
        engine.run()
        assert done == [pytest.approx(2.0, rel=1e-12)]

    def test_latency_delays_start(self):
        engine, net = self._pair(8e6)
        done = []
        net.transfer("a", "b", 1_000_000, 0.25, lambda: done.append(engine.now))
        engine.run()
        assert done == [pytest.approx(1.25, rel=1e-12)]

    def test_zero_bytes_completes_after_latency_only(self):
        engine, net = self._pair()
        done = []
        net.transfer("a", "b", 0, 0.5, lambda: done.append(engine.now))
        engine.run()
        assert done == [0.5]

    def test_sender_bandwidth_is_shared(self):
        engine = Engine()
        net = Network(engine)
        net.add_endpoint("src", 8e6)  # 1 MB/s shared
        net.add_endpoint("d1", math.inf)
        net.add_endpoint("d2", math.inf)
        done = {}
        net.transfer("src", "d1", 1_000_000, 0.0, lambda: done.setdefault("d1", engine.now))
        net.transfer("src", "d2", 1_000_000, 0.0, lambda: done.setdefault("d2", engine.now))
        engine.run()
        # both run at 0.5 MB/s throughout
        assert done["d1"] == pytest.approx(2.0, rel=1e-9)
        assert done["d2"] == pytest.approx(2.0, rel=1e-9)

    def test_late_joiner_slows_the_first_transfer(self):
        engine = Engine()
        net = Network(engine)
        net.add_endpoint("src", 8e6)
        net.add_endpoint("d1", math.inf)
        net.add_endpoint("d2", math.inf)
        done = {}
        net.transfer("src", "d1", 2_000_000, 0.0, lambda: done.setdefault("d1", engine.now))
        # joins at t=1: first transfer has 1 MB left, now at 0.5 MB/s
        engine.at(1.0, lambda: net.transfer(
            "src", "d2", 1_000_000, 0.0, lambda: done.setdefault("d2", engine.now)))
        engine.run()
        assert done["d1"] == pytest.approx(3.0, rel=1e-9)
        assert done["d2"] == pytest.approx(3.0, rel=1e-9)

    def test_finisher_releases_bandwidth(self):
        engine = Engine()
        net = Network(engine)
        net.add_endpoint("src", 8e6)
        net.add_endpoint("d1", math.inf)
        net.add_endpoint("d2", math.inf)
        done = {}
        net.transfer("src", "d1", 500_000, 0.0, lambda: done.setdefault("d1", engine.now))
        net.transfer("src", "d2", 1_500_000, 0.0, lambda: done.setdefault("d2", engine.now))
        engine.run()
        # shared 0.5 MB/s until t=1 (small one done), then full rate
        assert done["d1"] == pytest.approx(1.0, rel=1e-9)
        assert done["d2"] == pytest.approx(2.0, rel=1e-9)

    def test_infinite_bandwidth_is_instant(self):
        engine = Engine()
        net = Network(engine)
        net.add_endpoint("a", math.inf)
        net.add_endpoint("b", math.inf)
        done = []
        net.transfer("a", "b", 10**9, 0.0, lambda: done.append(engine.now))
        engine.run()
        assert done == [0.0]

    def test_unknown_endpoint_rejected(self):
        engine, net = self._pair()
        with pytest.raises(KeyError):
            net.transfer("a", "nope", 1, 0.0, lambda: None)


class TestCostModel:
    def test_explicit_hashes_match_manual_split(self):
        salt = derive_seed_bytes("cost-salt")
        hashes = [derive_seed_bytes(f"tx:{i}") for i in range(500)]
        counts = Counter(shard_of(h, salt, 4) for h in hashes)
        got = processing_time_for_hashes(hashes, salt, shard_count=4, shard_tps=1700)
        assert got == max(counts.values()) / 1700

    def test_empty_block_is_free(self):
        salt = derive_seed_bytes("s")
        assert processing_time_for_hashes([], salt, shard_count=3, shard_tps=100) == 0

    def test_sampled_loads_sum(self):
        rng = np.random.default_rng(3)
        loads = sampled_shard_loads(10_000, 8, rng)
        assert loads.sum() == 10_000
        assert len(loads) == 8

    def test_seed_labels_are_stable(self):
        assert derive_seed_bytes("x") == derive_seed_bytes("x")
        assert derive_seed_int("x") != derive_seed_int("y")


class TestSingleHop:
    def test_one_shard_matches_closed_form_exactly(self):
        # single shard: no placement noise, so the components are analytic
        n, bw, tps, tx = 20_000, 40e6, 1700.0, 250.0
        got = single_hop_time(n, shard_count=1, shard_tps=tps, tx_size=tx, bw=bw)
        expected = n * tx / (bw / 8) + n / tps
        assert got == pytest.approx(expected, rel=1e-12)

    def test_latency_shifts_arrival(self):
        base = single_hop_time(1000, bw=math.inf)
        delayed = single_hop_time(1000, bw=math.inf, latency=0.4)
        assert delayed == pytest.approx(base + 0.4, rel=1e-9)

    def test_more_shards_cut_processing(self):
        slow = single_hop_time(40_000, shard_count=1, bw=math.inf)
        fast = single_hop_time(40_000, shard_count=8, bw=math.inf)
        assert fast < slow / 6  # max-load noise keeps it shy of exactly 8x

    def test_intra_bandwidth_charges_sibling_traffic(self):
        free = single_hop_time(20_000, shard_count=2, bw=math.inf)
        taxed = single_hop_time(20_000, shard_count=2, bw=math.inf, intra_bw=256_000)
        assert taxed > free * 2


class TestMeasureCapacity:
    def test_matches_model_within_tolerance(self):
        points = measure_capacity([1, 8], [40e6, math.inf], seed=5)
        for ell, bw, got in points:
            want = capacity(PerfParams(shard_count=ell, total_bw=bw))
            assert got == pytest.approx(want, rel=0.10), (ell, bw)

    def test_doubling_shards_doubles_unbound_capacity(self):
        points = dict()
        for ell, bw, got in measure_capacity([2, 4], [math.inf], seed=6):
            points[ell] = got
        assert points[4] / points[2] == pytest.approx(2.0, rel=0.05)

    def test_many_shards_plateau_at_link_rate(self):
        [(ell, bw, got)] = measure_capacity([1024], [40e6], seed=7)
        assert got == pytest.approx((40e6 / 8) / 250, rel=0.05)


class TestMeasureIntraBw:
    def test_single_shard_untouched_by_intra_limit(self):
        rows = measure_intra_bw([1], [256_000, 5e6, math.inf], seed=8)
        tps = {bw: got for _, bw, _, got in rows}
        assert tps[256_000] == tps[5e6] == tps[math.inf]

    def test_starved_links_punish_two_shards(self):
        rows = {(ell, bw): tps for ell, bw, _, tps in
                measure_intra_bw([1, 2], [256_000], seed=9)}
        assert rows[(2, 256_000)] < rows[(1, 256_000)]

    def test_roomy_links_reward_eight_shards(self):
        rows = {(ell, bw): tps for ell, bw, _, tps in
                measure_intra_bw([1, 8], [5e6], seed=10)}
        assert rows[(8, 5e6)] > rows[(1, 5e6)]

    def test_bpt_tracks_model(self):
        for ell, bw, bpt, tps in measure_intra_bw([1, 2, 8], [256_000, 5e6], seed=11):
            block_bytes = tps * 10.0 * 250.0  # the budget-sized block
            want = bpt_intra(PerfParams(
                block_size=block_bytes, shard_count=ell, intra_bw=bw))
            assert bpt == pytest.approx(want, rel=0.15), (ell, bw)


class TestRunSimulation:
    def _small_cfg(self, **kw):
        defaults = dict(
            node_count=20,
            peers_per_node=4,
            total_bw=math.inf,
            latency=0.0,
            block_txs=2000,
            keyblock_interval=10_000.0,
            microblock_interval=10.0,
            duration=60.0,
            seed=42,
        )
        defaults.update(kw)
        return SimConfig(**defaults)

    def test_identical_seed_identical_metrics(self):
        cfg = self._small_cfg()
        assert run_simulation(cfg) == run_simulation(cfg)

    def test_different_seed_changes_something(self):
        a = run_simulation(self._small_cfg(seed=1))
        b = run_simulation(self._small_cfg(seed=2))
        assert a != b

    def test_conservation(self):
        m = run_simulation(self._small_cfg())
        assert m.total_txs_confirmed <= m.total_txs_generated
        assert m.throughput_tps == m.total_txs_confirmed / 60.0

    def test_line_topology_propagation_is_processing_depth(self):
        # zero latency, infinite bandwidth: the only cost left is validation
        cfg = SimConfig(
            node_count=3,
            peers_per_node=1,
            total_bw=math.inf,
            latency=0.0,
            shards_per_node=1,
            block_txs=1700 * 3,  # Bpt exactly 3 s per node
            keyblock_interval=10_000.0,
            microblock_interval=10.0,
            duration=20.0,
            seed=0,
        )
        m = run_simulation(cfg, topology=[(0, 1), (1, 2)])
        micro = [b for b in m.blocks if b.kind == "micro"][0]
        depth_from = {0: [0, 1, 2], 1: [1, 0, 1], 2: [2, 1, 0]}[micro.generator]
        expected = sorted(3.0 * d for d in depth_from)
        assert micro.validated_nodes == 3
        assert micro.arrival_p50 == pytest.approx(expected[1], rel=1e-9)
        assert micro.arrival_p99 == pytest.approx(expected[2], rel=1e-9)
        assert micro.mean_bpt == pytest.approx(3.0, rel=1e-9)

    def test_throughput_counts_majority_validated_only(self):
        # starve the network so late blocks cannot reach a majority in time
        cfg = self._small_cfg(total_bw=2e6, block_txs=20_000, duration=60.0)
        m = run_simulation(cfg)
        assert m.total_txs_confirmed < m.total_txs_generated

    def test_config_validation(self):
        with pytest.raises(InvalidConfigError):
            self._small_cfg(node_count=1)
        with pytest.raises(InvalidConfigError):
            self._small_cfg(peers_per_node=0)
        with pytest.raises(InvalidConfigError):
            self._small_cfg(block_txs=0)
        with pytest.raises(InvalidConfigError):
            self._small_cfg(latency=-0.1)
        with pytest.raises(InvalidConfigError):
            self._small_cfg(duration=0)

    def test_rows_match_headers(self):
        m = run_simulation(self._small_cfg())
        for row in m.block_rows():
            assert len(row) == len(Metrics.BLOCK_HEADER)
        assert len(m.summary_row()) == len(Metrics.SUMMARY_HEADER)
        assert m.fork_count >= 0

    def test_more_shards_do_not_hurt(self):
        # the load is chosen to exceed single-shard capacity, so extra
        # shards must translate into more confirmed transactions
        results = {}
        for ell in (1, 4):
            cfg = self._small_cfg(
                node_count=12,
                peers_per_node=3,
                shards_per_node=ell,
                block_txs=60_000,
                duration=120.0,
            )
            results[ell] = run_simulation(cfg).throughput_tps
        assert results[4] > results[1]
