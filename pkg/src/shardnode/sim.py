"""Deterministic event-driven network simulator for sharded-validation nodes.

The simulator works at the cost-model level: blocks carry a transaction
count (or an explicit list of transaction ids), and each simulated node
charges itself the validation and transfer times those transactions would
cost, without running the actual ledger rules.  That keeps runs with
hundreds of thousands of transactions per block tractable while preserving
exactly the quantities the throughput models predict: transmission time on
shared links, per-shard validation load, and sibling-output traffic.

Three entry points matter:

* :func:`single_hop_time` — one block crossing one link into one node;
  the building block for capacity measurements.
* :func:`measure_capacity` / :func:`measure_intra_bw` — sweep shard count
  against external or intra-node bandwidth, estimating sustainable
  throughput by linear regression of block time against block size.
* :func:`run_simulation` — a many-node gossip network under a
  leader/microblock workload, reporting propagation and throughput metrics.

Determinism contract: every random choice derives from the run's seed via
labeled SHA-256 hashing (:func:`derive_seed_int`), the event queue breaks
time ties by insertion order, and no iteration ever walks an unordered
container.  Identical configuration implies identical metrics, bit for bit.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .sharding import shard_of

__all__ = [
    "BlockRecord",
    "Engine",
    "InvalidConfigError",
    "Metrics",
    "Network",
    "SimConfig",
    "derive_seed_bytes",
    "derive_seed_int",
    "measure_capacity",
    "measure_intra_bw",
    "processing_time_for_hashes",
    "run_simulation",
    "sampled_shard_loads",
    "single_hop_time",
]


class InvalidConfigError(ValueError):
    """A simulation configuration field is out of its legal range."""


def derive_seed_bytes(label: str) -> bytes:
    """32 deterministic bytes from a label; the root of all run randomness."""
    return hashlib.sha256(label.encode()).digest()


def derive_seed_int(label: str) -> int:
    return int.from_bytes(derive_seed_bytes(label)[:8], "big")


def _rng(label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed_int(label))


# ---------------------------------------------------------------------------
# Event engine


class Engine:
    """A minimal discrete-event loop: (time, insertion seq) ordered heap."""

    def __init__(self) -> None:
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0

    def at(self, time: float, fn: Callable[[], None]) -> None:
        if time < self.now:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._heap, (time, self._seq, fn))
        self._seq += 1

    def after(self, delay: float, fn: Callable[[], None]) -> None:
        self.at(self.now + delay, fn)

    def run(self, horizon: float = math.inf) -> None:
        while self._heap and self._heap[0][0] <= horizon:
            time, _, fn = heapq.heappop(self._heap)
            self.now = time
            fn()
        if horizon < math.inf:
            self.now = max(self.now, horizon)


class _Transfer:
    __slots__ = ("src", "dst", "remaining", "rate", "updated_at", "gen", "done", "on_done")

    def __init__(self, src, dst, nbytes: float, on_done) -> None:
        self.src = src
        self.dst = dst
        self.remaining = float(nbytes)
        self.rate = 0.0
        self.updated_at = 0.0
        self.gen = 0
        self.done = False
        self.on_done = on_done


class Network:
    """Point-to-point transfers with per-endpoint processor sharing.

    Each endpoint has a bandwidth budget split equally among its concurrently
    active transfers; a transfer's instantaneous rate is the smaller of its
    two endpoints' shares.  Whenever the active set at an endpoint changes,
    the affected transfers are settled at their old rate and rescheduled —
    stale completion events are recognized by a generation counter.
    """

    def __init__(self, engine: Engine) -> None:
        self.engine = engine
        self._bw: dict[object, float] = {}
        self._active: dict[object, list[_Transfer]] = {}

    def add_endpoint(self, name: object, bw_bits: float) -> None:
        if bw_bits <= 0:
            raise ValueError("bandwidth must be positive")
        self._bw[name] = bw_bits / 8.0  # bytes per second internally
        self._active[name] = []

    def ensure_endpoint(self, name: object, bw_bits: float) -> None:
        if name not in self._bw:
            self.add_endpoint(name, bw_bits)

    def transfer(self, src, dst, nbytes: float, latency: float, on_done) -> None:
        if src not in self._bw or dst not in self._bw:
            raise KeyError("transfer endpoint not registered")
        t = _Transfer(src, dst, nbytes, on_done)

        def begin() -> None:
            if t.remaining <= 0:
                t.done = True
                t.on_done()
                return
            self._active[src].append(t)
            self._active[dst].append(t)
            t.updated_at = self.engine.now
            self._rebalance((src, dst))

        self.engine.after(latency, begin)

    def _share(self, endpoint) -> float:
        n = len(self._active[endpoint])
        bw = self._bw[endpoint]
        if math.isinf(bw):
            return math.inf
        return bw / n if n else bw

    def _settle(self, t: _Transfer) -> None:
        elapsed = self.engine.now - t.updated_at
        if elapsed > 0 and t.rate > 0:
            t.remaining = max(0.0, t.remaining - elapsed * t.rate)
        t.updated_at = self.engine.now

    def _rebalance(self, endpoints: Iterable[object]) -> None:
        touched: list[_Transfer] = []
        seen: set[int] = set()
        for ep in endpoints:
            for t in self._active[ep]:
                if id(t) not in seen:
                    seen.add(id(t))
                    touched.append(t)
        for t in touched:
            if t.done:
                continue  # completed by a nested rebalance in this loop
            self._settle(t)
            t.rate = min(self._share(t.src), self._share(t.dst))
            t.gen += 1
            if math.isinf(t.rate):
                self._complete_now(t)
                continue
            eta = self.engine.now + (t.remaining / t.rate if t.rate > 0 else math.inf)
            gen = t.gen
            self.engine.at(eta, lambda t=t, gen=gen: self._on_deadline(t, gen))

    def _on_deadline(self, t: _Transfer, gen: int) -> None:
        if t.done or t.gen != gen:
            return  # superseded by a rebalance since this was scheduled
        self._settle(t)
        self._complete_now(t)

    def _complete_now(self, t: _Transfer) -> None:
        if t.done:
            return
        t.done = True
        t.remaining = 0.0
        self._active[t.src].remove(t)
        self._active[t.dst].remove(t)
        self._rebalance((t.src, t.dst))
        t.on_done()


# ---------------------------------------------------------------------------
# Shard cost models


def processing_time_for_hashes(
    hashes: Sequence[bytes],
    salt: bytes,
    *,
    shard_count: int,
    shard_tps: float,
) -> float:
    """Validation time for a block given explicit transaction ids.

    Each shard validates its slice in parallel; the block is done when the
    slowest shard is, so the cost is the largest slice divided by the
    per-shard validation rate.
    """
    if shard_count < 1:
        raise ValueError("need at least one shard")
    counts = [0] * shard_count
    for h in hashes:
        counts[shard_of(h, salt, shard_count)] += 1
    return max(counts, default=0) / shard_tps


def sampled_shard_loads(
    tx_count: int, shard_count: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-shard transaction counts for a block of anonymous transactions."""
    if tx_count < 0:
        raise ValueError("negative transaction count")
    return rng.multinomial(tx_count, [1.0 / shard_count] * shard_count)


@dataclass(frozen=True, slots=True)
class _CostParams:
    shard_count: int
    shard_tps: float
    intra_bw: float  # bits/s per shard link
    tx_out_size: float  # bytes exchanged per remotely resolved transaction


def _process_block(
    engine: Engine,
    net: Network,
    params: _CostParams,
    loads: Sequence[int],
    rng: np.random.Generator,
    link_prefix: object,
    on_done: Callable[[float], None],
) -> None:
    """Validate one block: per-shard compute plus sibling-output transfers.

    Every shard owns a dedicated intra-node link; the outputs it must pull
    from siblings ride that link as one batched transfer.  The block is
    validated when all shards finish; `on_done` receives the elapsed time.
    """
    start = engine.now
    ell = params.shard_count
    pending = {"n": ell}

    def shard_finished() -> None:
        pending["n"] -= 1
        if pending["n"] == 0:
            on_done(engine.now - start)

    remote_fraction = (ell - 1) / ell
    for sid in range(ell):
        compute = loads[sid] / params.shard_tps
        if math.isinf(params.intra_bw) or ell == 1:
            engine.after(compute, shard_finished)
            continue
        remote = int(rng.binomial(loads[sid], remote_fraction)) if loads[sid] else 0
        nbytes = remote * params.tx_out_size
        a, b = (link_prefix, sid, "near"), (link_prefix, sid, "far")
        net.ensure_endpoint(a, params.intra_bw)
        net.ensure_endpoint(b, math.inf)
        engine.after(
            compute,
            lambda a=a, b=b, nbytes=nbytes: net.transfer(a, b, nbytes, 0.0, shard_finished),
        )


# ---------------------------------------------------------------------------
# Single-hop measurements (capacity and intra-bandwidth sweeps)


def single_hop_time(
    tx_count: int,
    *,
    shard_count: int = 1,
    shard_tps: float = 1700.0,
    tx_size: float = 250.0,
    bw: float = math.inf,
    intra_bw: float = math.inf,
    tx_out_size: float = 152.0,
    latency: float = 0.0,
    seed: str = "hop",
) -> float:
    """Time for one block to cross one link and be validated by one node."""
    engine = Engine()
    net = Network(engine)
    net.add_endpoint("sender", bw)
    net.add_endpoint("receiver", bw)
    rng = _rng(f"{seed}:{tx_count}:{shard_count}")
    loads = sampled_shard_loads(tx_count, shard_count, rng)
    params = _CostParams(shard_count, shard_tps, intra_bw, tx_out_size)
    done_at = {}

    def validated(elapsed: float) -> None:
        done_at["t"] = engine.now

    def body_arrived() -> None:
        _process_block(engine, net, params, loads, rng, "intra", validated)

    net.transfer("sender", "receiver", tx_count * tx_size, latency, body_arrived)
    engine.run()
    return done_at["t"]


def _regress_block_budget(
    time_of: Callable[[int], float], target_seconds: float
) -> float:
    """Largest block (in txs) fitting the time budget, by linear regression.

    Probes two block sizes to aim the grid, then fits elapsed time against
    block size over five points around the budget and solves the fit for
    the target.
    """
    n0, n1 = 2_000, 20_000
    t0, t1 = time_of(n0), time_of(n1)
    slope = (t1 - t0) / (n1 - n0)
    intercept = t0 - slope * n0
    estimate = (target_seconds - intercept) / slope
    grid = [max(100, int(round(estimate * f))) for f in (0.6, 0.8, 1.0, 1.2, 1.4)]
    times = [time_of(n) for n in grid]
    b, a = np.polyfit(np.array(grid, dtype=float), np.array(times), 1)
    return (target_seconds - a) / b


def measure_capacity(
    shard_counts: Sequence[int],
    bw_values: Sequence[float],
    *,
    shard_tps: float = 1700.0,
    tx_size: float = 250.0,
    target_seconds: float = 10.0,
    seed: int = 0,
) -> list[tuple[int, float, float]]:
    """Sustainable throughput per (shard count, external bandwidth) point.

    For each configuration, finds the block size whose single-hop time is
    the target interval and reports it as transactions per second.
    """
    rows = []
    for bw in bw_values:
        for ell in shard_counts:
            def t(n: int, ell=ell, bw=bw) -> float:
                return single_hop_time(
                    n,
                    shard_count=ell,
                    shard_tps=shard_tps,
                    tx_size=tx_size,
                    bw=bw,
                    seed=f"cap:{seed}:{ell}:{bw}",
                )

            budget = _regress_block_budget(t, target_seconds)
            rows.append((ell, bw, budget / target_seconds))
    return rows


def measure_intra_bw(
    shard_counts: Sequence[int],
    intra_bw_values: Sequence[float],
    *,
    shard_tps: float = 1700.0,
    tx_size: float = 250.0,
    tx_out_size: float = 152.0,
    target_seconds: float = 10.0,
    seed: int = 0,
) -> list[tuple[int, float, float, float]]:
    """Throughput and block processing time under intra-node link limits.

    Rows are (shards, intra bandwidth, processing seconds for the budget
    block, throughput tx/s).  External bandwidth is unconstrained so the
    numbers isolate the sibling-output traffic.
    """
    rows = []
    for bw in intra_bw_values:
        for ell in shard_counts:
            def t(n: int, ell=ell, bw=bw) -> float:
                return single_hop_time(
                    n,
                    shard_count=ell,
                    shard_tps=shard_tps,
                    tx_size=tx_size,
                    intra_bw=bw,
                    tx_out_size=tx_out_size,
                    seed=f"intra:{seed}:{ell}:{bw}",
                )

            budget = _regress_block_budget(t, target_seconds)
            bpt = t(max(1, int(round(budget))))
            rows.append((ell, bw, bpt, budget / target_seconds))
    return rows


# ---------------------------------------------------------------------------
# Many-node gossip simulation with a leader/microblock workload


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Everything a gossip run depends on; the seed pins all randomness."""

    node_count: int = 100
    shards_per_node: int = 1
    peers_per_node: int = 8
    total_bw: float = 40e6  # bits/s per node
    intra_bw: float = math.inf  # bits/s per shard, inside a node
    latency: float = 0.05  # seconds, fixed per link
    shard_tps: float = 1700.0
    tx_size: float = 250.0
    tx_out_size: float = 152.0
    block_txs: int = 10_000  # transactions per microblock
    keyblock_interval: float = 600.0  # mean of the exponential era length
    microblock_interval: float = 10.0
    duration: float = 600.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise InvalidConfigError("need at least two nodes")
        if not 1 <= self.peers_per_node < self.node_count:
            raise InvalidConfigError("peers per node out of range")
        if self.shards_per_node < 1:
            raise InvalidConfigError("need at least one shard per node")
        for name in (
            "total_bw",
            "intra_bw",
            "latency",
            "shard_tps",
            "tx_size",
            "tx_out_size",
            "keyblock_interval",
            "microblock_interval",
            "duration",
        ):
            value = getattr(self, name)
            if name == "latency":
                if value < 0:
                    raise InvalidConfigError("latency cannot be negative")
            elif not value > 0:
                raise InvalidConfigError(f"{name} must be strictly positive")
        if self.block_txs < 1:
            raise InvalidConfigError("microblocks must carry transactions")


@dataclass(slots=True)
class _SimBlock:
    block_id: int
    kind: str  # "key" or "micro"
    parent: int | None
    generator: int
    gen_time: float
    tx_count: int
    keyblocks: int  # keyblocks on the path, the fork-choice weight
    height: int


@dataclass(frozen=True, slots=True)
class BlockRecord:
    """Per-block aggregate over all nodes that finished validating it."""

    block_id: int
    kind: str
    generator: int
    gen_time: float
    tx_count: int
    validated_nodes: int
    arrival_p50: float
    arrival_p90: float
    arrival_p99: float
    mean_btt: float
    mean_bpt: float


@dataclass(frozen=True, slots=True)
class Metrics:
    """What a gossip run produced; consumed by the CSV emitters and tests."""

    blocks: tuple[BlockRecord, ...]
    throughput_tps: float
    fork_count: int
    propagation_p50: float
    propagation_p90: float
    propagation_p99: float
    total_txs_generated: int
    total_txs_confirmed: int

    BLOCK_HEADER = (
        "block_id",
        "kind",
        "generator",
        "gen_time",
        "tx_count",
        "validated_nodes",
        "arrival_p50",
        "arrival_p90",
        "arrival_p99",
        "mean_btt",
        "mean_bpt",
    )

    def block_rows(self) -> list[tuple]:
        return [
            (
                b.block_id,
                b.kind,
                b.generator,
                b.gen_time,
                b.tx_count,
                b.validated_nodes,
                b.arrival_p50,
                b.arrival_p90,
                b.arrival_p99,
                b.mean_btt,
                b.mean_bpt,
            )
            for b in self.blocks
        ]

    SUMMARY_HEADER = (
        "throughput_tps",
        "fork_count",
        "propagation_p50",
        "propagation_p90",
        "propagation_p99",
        "total_txs_generated",
        "total_txs_confirmed",
    )

    def summary_row(self) -> tuple:
        return (
            self.throughput_tps,
            self.fork_count,
            self.propagation_p50,
            self.propagation_p90,
            self.propagation_p99,
            self.total_txs_generated,
            self.total_txs_confirmed,
        )


def _random_topology(cfg: SimConfig) -> list[tuple[int, int]]:
    """Connected graph where every node dials `peers_per_node` others."""
    rng = np.random.default_rng(derive_seed_int(f"{cfg.seed}:topology"))
    edges: set[tuple[int, int]] = set()
    for a in range(cfg.node_count):
        others = [b for b in range(cfg.node_count) if b != a]
        picks = rng.choice(len(others), size=cfg.peers_per_node, replace=False)
        for i in sorted(int(p) for p in picks):
            b = others[i]
            edges.add((min(a, b), max(a, b)))
    # splice any disconnected components together (rare at 8 peers)
    parent = list(range(cfg.node_count))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in sorted(edges):
        parent[find(a)] = find(b)
    roots = sorted({find(x) for x in range(cfg.node_count)})
    for extra in roots[1:]:
        edges.add((min(roots[0], extra), max(roots[0], extra)))
        parent[find(extra)] = find(roots[0])
    return sorted(edges)


class _SimNode:
    __slots__ = (
        "node_id",
        "cfg",
        "peers",
        "held",
        "known",
        "tip",
        "queue",
        "busy",
        "place_rng",
        "btt",
        "bpt",
        "done_time",
    )

    def __init__(self, node_id: int, cfg: SimConfig) -> None:
        self.node_id = node_id
        self.cfg = cfg
        self.peers: list[int] = []
        self.held: set[int] = set()
        self.known: set[int] = set()
        self.tip: int | None = None
        self.queue: deque[tuple[int, int, float]] = deque()  # block, from, req time
        self.busy = False
        self.place_rng = _rng(f"{cfg.seed}:place:{node_id}")
        self.btt: dict[int, float] = {}
        self.bpt: dict[int, float] = {}
        self.done_time: dict[int, float] = {}


def run_simulation(
    cfg: SimConfig, topology: Sequence[tuple[int, int]] | None = None
) -> Metrics:
    """Gossip a leader/microblock workload through a random peer graph.

    Leaders are elected at exponentially distributed intervals and emit
    fixed-size microblocks on their own tip until the next election.  Every
    node validates a block before offering it onward, so propagation speed
    is governed by per-hop transfer plus processing time.  Returns aggregate
    metrics; see `Metrics`.
    """
    engine = Engine()
    net = Network(engine)
    for n in range(cfg.node_count):
        net.add_endpoint(n, cfg.total_bw)

    nodes = [_SimNode(n, cfg) for n in range(cfg.node_count)]
    for a, b in topology if topology is not None else _random_topology(cfg):
        nodes[a].peers.append(b)
        nodes[b].peers.append(a)
    for node in nodes:
        node.peers.sort()

    blocks: dict[int, _SimBlock] = {}
    cost = _CostParams(cfg.shards_per_node, cfg.shard_tps, cfg.intra_bw, cfg.tx_out_size)

    def better(a: int | None, b: int | None) -> int | None:
        """Fork choice: more keyblocks wins, then longer, then keep first."""
        if a is None:
            return b
        if b is None:
            return a
        ka, kb = blocks[a].keyblocks, blocks[b].keyblocks
        if (kb, blocks[b].height) > (ka, blocks[a].height):
            return b
        return a

    def offer(node: _SimNode, block_id: int) -> None:
        for peer_id in node.peers:
            peer = nodes[peer_id]
            engine.after(
                cfg.latency,
                lambda peer=peer, block_id=block_id, src=node.node_id: receive_offer(
                    peer, block_id, src
                ),
            )

    def receive_offer(node: _SimNode, block_id: int, src: int) -> None:
        if block_id in node.known:
            return
        node.known.add(block_id)
        requested = engine.now
        # the request crosses back (latency), then the body transfers
        size = blocks[block_id].tx_count * cfg.tx_size

        def body_done(node=node, block_id=block_id, src=src, requested=requested):
            node.btt[block_id] = engine.now - requested
            node.queue.append((block_id, src, requested))
            drain(node)

        engine.after(
            cfg.latency,
            lambda: net.transfer(src, node.node_id, size, cfg.latency, body_done),
        )

    def drain(node: _SimNode) -> None:
        if node.busy or not node.queue:
            return
        node.busy = True
        block_id, src, _req = node.queue.popleft()
        loads = sampled_shard_loads(
            blocks[block_id].tx_count, cfg.shards_per_node, node.place_rng
        )
        started = engine.now

        def validated(elapsed: float, node=node, block_id=block_id, started=started):
            node.bpt[block_id] = engine.now - started
            node.done_time[block_id] = engine.now
            node.held.add(block_id)
            node.tip = better(node.tip, block_id)
            node.busy = False
            offer(node, block_id)
            drain(node)

        _process_block(
            engine, net, cost, loads, node.place_rng,
            ("intra", node.node_id), validated,
        )

    # --- workload: leader eras and their microblocks ---------------------
    wl_rng = np.random.default_rng(derive_seed_int(f"{cfg.seed}:workload"))
    era_starts = [0.0]
    while True:
        nxt = era_starts[-1] + float(wl_rng.exponential(cfg.keyblock_interval))
        if nxt >= cfg.duration:
            break
        era_starts.append(nxt)
    leaders = [int(wl_rng.integers(0, cfg.node_count)) for _ in era_starts]
    next_block_id = 0

    def generate(node: _SimNode, kind: str, tx_count: int) -> int:
        nonlocal next_block_id
        block_id = next_block_id
        next_block_id += 1
        parent = node.tip
        keyblocks = (blocks[parent].keyblocks if parent is not None else 0) + (
            1 if kind == "key" else 0
        )
        height = (blocks[parent].height if parent is not None else 0) + 1
        blocks[block_id] = _SimBlock(
            block_id, kind, parent, node.node_id, engine.now, tx_count, keyblocks, height
        )
        # the generator holds its own block at no validation cost
        node.known.add(block_id)
        node.held.add(block_id)
        node.done_time[block_id] = engine.now
        node.tip = better(node.tip, block_id)
        offer(node, block_id)
        return block_id

    for era, (start, leader_id) in enumerate(zip(era_starts, leaders)):
        end = era_starts[era + 1] if era + 1 < len(era_starts) else cfg.duration
        leader = nodes[leader_id]
        engine.at(start, lambda leader=leader: generate(leader, "key", 0))
        t = start + cfg.microblock_interval
        while t < end:
            engine.at(
                t, lambda leader=leader: generate(leader, "micro", cfg.block_txs)
            )
            t += cfg.microblock_interval

    engine.run(cfg.duration)

    # --- metrics ----------------------------------------------------------
    majority = cfg.node_count // 2 + 1
    tip = None
    for block_id in sorted(blocks):
        tip = better(tip, block_id)
    main: set[int] = set()
    walk = tip
    while walk is not None:
        main.add(walk)
        walk = blocks[walk].parent
    fork_count = sum(
        1 for b in blocks.values() if b.kind == "key" and b.block_id not in main
    )

    records = []
    confirmed = 0
    all_delays: list[float] = []
    for block_id in sorted(blocks):
        blk = blocks[block_id]
        delays = sorted(
            node.done_time[block_id] - blk.gen_time
            for node in nodes
            if block_id in node.done_time
        )
        btts = [node.btt[block_id] for node in nodes if block_id in node.btt]
        bpts = [node.bpt[block_id] for node in nodes if block_id in node.bpt]

        def pct(sorted_vals: list[float], q: float) -> float:
            if not sorted_vals:
                return math.nan
            idx = min(len(sorted_vals) - 1, int(math.ceil(q * len(sorted_vals))) - 1)
            return sorted_vals[max(idx, 0)]

        records.append(
            BlockRecord(
                block_id=block_id,
                kind=blk.kind,
                generator=blk.generator,
                gen_time=blk.gen_time,
                tx_count=blk.tx_count,
                validated_nodes=len(delays),
                arrival_p50=pct(delays, 0.50),
                arrival_p90=pct(delays, 0.90),
                arrival_p99=pct(delays, 0.99),
                mean_btt=sum(btts) / len(btts) if btts else math.nan,
                mean_bpt=sum(bpts) / len(bpts) if bpts else math.nan,
            )
        )
        if len(delays) >= majority and block_id in main:
            confirmed += blk.tx_count
            all_delays.extend(delays)

    all_delays.sort()

    def pct_all(q: float) -> float:
        if not all_delays:
            return math.nan
        idx = min(len(all_delays) - 1, int(math.ceil(q * len(all_delays))) - 1)
        return all_delays[max(idx, 0)]

    return Metrics(
        blocks=tuple(records),
        throughput_tps=confirmed / cfg.duration,
        fork_count=fork_count,
        propagation_p50=pct_all(0.50),
        propagation_p90=pct_all(0.90),
        propagation_p99=pct_all(0.99),
        total_txs_generated=sum(b.tx_count for b in blocks.values()),
        total_txs_confirmed=confirmed,
    )
