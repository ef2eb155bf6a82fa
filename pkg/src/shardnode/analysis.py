"""Closed-form performance and attack-cost models, plus the grinding adversary.

Three subjects share this module:

* occupancy math for partitioned-chain designs, where a single partition is
  cheap to flood (`affected_fraction`) and a moderately sized miner ends up
  holding seats in nearly every partition anyway (`miner_alpha`);
* throughput models for a node whose validation work is spread over
  intra-node shards: end-to-end capacity limited by downlink and validation
  rate (`capacity`), and block processing time when the shards talk to each
  other over constrained links (`bpt_intra`);
* the placement-grinding adversary, which brute-forces the transaction nonce
  until the salted hash lands on a chosen shard of every targeted peer
  (`grind_transactions`), and the measured damage a block of such
  transactions does (`slowdown_under_attack`).

Conventions: bandwidth figures are bits per second, sizes are bytes, rates
are per second.  The bits-to-bytes conversion happens in exactly one place,
:func:`_bytes_per_second`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .core import Input, Output, Transaction
from .sharding import SALT_SIZE, shard_of

__all__ = [
    "DegenerateChainCountError",
    "GrindTarget",
    "PerfParams",
    "SlowdownReport",
    "affected_fraction",
    "bpt_intra",
    "capacity",
    "capacity_rows",
    "grind_transactions",
    "intra_rows",
    "miner_alpha",
    "miner_rows",
    "slowdown_under_attack",
    "subchain_rows",
]


class DegenerateChainCountError(ValueError):
    """The miner-share formula needs at least two partitions to be defined."""


def _bytes_per_second(bits_per_second: float) -> float:
    if bits_per_second <= 0:
        raise ValueError("bandwidth must be positive")
    return bits_per_second / 8.0


# ---------------------------------------------------------------------------
# Occupancy math for partitioned-chain ("subchain") designs.


def affected_fraction(chain_count: int, input_count: int) -> float:
    """Fraction of transactions touching one designated chain partition.

    A transaction's output lands on a uniformly random partition and so does
    each of its ``input_count`` inputs; the transaction is affected by an
    attack on one partition when any of those ``input_count + 1`` placements
    hits it.
    """
    if chain_count < 1:
        raise ValueError("need at least one partition")
    if input_count < 0:
        raise ValueError("input count cannot be negative")
    miss = (chain_count - 1) / chain_count
    return 1.0 - miss ** (input_count + 1)


def miner_alpha(chain_count: int, nodes_per_chain: int, target_ratio: float) -> float:
    """Miner size needed to hold seats in a target fraction of partitions.

    Seats are assigned uniformly at random; a miner controlling fraction
    ``alpha`` of the system holds ``alpha * chain_count * nodes_per_chain``
    of them.  Solving "expected occupied partitions = target_ratio *
    chain_count" for alpha gives the closed form returned here.
    """
    if chain_count < 2:
        raise DegenerateChainCountError(
            "occupancy is trivially total with fewer than two partitions"
        )
    if nodes_per_chain < 1:
        raise ValueError("need at least one seat per partition")
    if not 0.0 < target_ratio < 1.0:
        raise ValueError("target ratio must be strictly between 0 and 1")
    miss = 1.0 - 1.0 / chain_count
    return math.log(1.0 - target_ratio) / (
        nodes_per_chain * chain_count * math.log(miss)
    )


# ---------------------------------------------------------------------------
# Node throughput models.


@dataclass(frozen=True, slots=True)
class PerfParams:
    """Inputs to the throughput models; see the module docstring for units."""

    block_size: float = 2_500_000.0  # bytes per block
    tx_size: float = 250.0  # bytes per transaction
    shard_tps: float = 1700.0  # validations per second per shard
    shard_count: int = 1
    total_bw: float = 40e6  # bits/s into the node
    intra_bw: float = math.inf  # bits/s between one shard and its siblings
    tx_out_size: float = 152.0  # bytes of output records exchanged per tx

    def __post_init__(self) -> None:
        for name in (
            "block_size",
            "tx_size",
            "shard_tps",
            "shard_count",
            "total_bw",
            "intra_bw",
            "tx_out_size",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


def capacity(p: PerfParams) -> float:
    """Sustainable transactions per second for one node.

    Every transaction must both cross the node's downlink and be validated
    by one of the shards; the two stages pipeline, so the bottleneck is the
    sum of the per-transaction times.
    """
    transfer = p.tx_size / _bytes_per_second(p.total_bw)
    processing = 1.0 / (p.shard_tps * p.shard_count)
    return 1.0 / (transfer + processing)


def bpt_intra(p: PerfParams) -> float:
    """Block processing time when shards fetch outputs over limited links.

    Each shard validates ``1/shard_count`` of the block's transactions; for
    each, a ``(shard_count-1)/shard_count`` fraction of the referenced
    outputs live on a sibling and cost ``tx_out_size`` bytes of intra-node
    traffic on top of the validation itself.
    """
    txs_per_block = p.block_size / p.tx_size
    remote_fraction = (p.shard_count - 1) / p.shard_count
    per_tx = 1.0 / p.shard_tps + remote_fraction * (
        p.tx_out_size / _bytes_per_second(p.intra_bw)
    )
    return txs_per_block / p.shard_count * per_tx


# ---------------------------------------------------------------------------
# The grinding adversary.


@dataclass(frozen=True, slots=True)
class GrindTarget:
    """One peer the adversary aims at: its salt, shard count, and the shard."""

    salt: bytes
    shard_count: int
    shard_id: int

    def __post_init__(self) -> None:
        if len(self.salt) != SALT_SIZE:
            raise ValueError("salt has the wrong length")
        if not 0 <= self.shard_id < self.shard_count:
            raise ValueError("target shard out of range")


def grind_transactions(
    targets: Mapping[int, GrindTarget],
    count: int,
    *,
    inputs: Sequence[Input] = (),
    outputs: Sequence[Output] | None = None,
    start_nonce: int = 0,
) -> tuple[list[Transaction], int]:
    """Produce transactions that land on the target shard of every peer.

    The nonce field is incremented until the salted hash satisfies all
    targets at once; with ``k`` targeted peers of ``l`` shards each, one hit
    costs ``l**k`` attempts in expectation.  Returns the transactions and
    the total number of candidates hashed.  An empty target map means every
    candidate is a hit.
    """
    if count < 0:
        raise ValueError("count cannot be negative")
    if outputs is None:
        outputs = (Output(1, bytes(32)),)
    wanted = list(targets.values())
    found: list[Transaction] = []
    attempts = 0
    nonce = start_nonce
    while len(found) < count:
        tx = Transaction(tuple(inputs), tuple(outputs), nonce.to_bytes(8, "little"))
        nonce += 1
        attempts += 1
        h = tx.tx_hash
        if all(shard_of(h, t.salt, t.shard_count) == t.shard_id for t in wanted):
            found.append(tx)
    return found, attempts


@dataclass(frozen=True, slots=True)
class SlowdownReport:
    """Processing-time ratios caused by one ground block, per node kind."""

    targeted: float  # the node whose salt the adversary knows
    bystander: float  # a node with an independent salt


def slowdown_under_attack(
    shard_count: int,
    *,
    block_txs: int = 8000,
    shard_tps: float = 1700.0,
    seed: int = 0,
) -> SlowdownReport:
    """Measure what a ground block does to block processing time.

    Grinds a full block against a victim's published salt (every transaction
    steered onto its shard 0), then compares simulated processing time
    against an un-ground block of the same size, both on the victim and on a
    node whose salt the adversary never saw.
    """
    from . import sim  # deferred: pure-formula users shouldn't load the simulator

    victim_salt = sim.derive_seed_bytes(f"slowdown-victim:{seed}")
    bystander_salt = sim.derive_seed_bytes(f"slowdown-bystander:{seed}")
    victim = GrindTarget(victim_salt, shard_count, 0)
    ground, _ = grind_transactions({0: victim}, block_txs, start_nonce=seed << 32)
    plain, _ = grind_transactions({}, block_txs, start_nonce=(seed << 32) + 2**31)
    ground_hashes = [tx.tx_hash for tx in ground]
    plain_hashes = [tx.tx_hash for tx in plain]

    def bpt(hashes: list[bytes], salt: bytes) -> float:
        return sim.processing_time_for_hashes(
            hashes, salt, shard_count=shard_count, shard_tps=shard_tps
        )

    return SlowdownReport(
        targeted=bpt(ground_hashes, victim_salt) / bpt(plain_hashes, victim_salt),
        bystander=bpt(ground_hashes, bystander_salt)
        / bpt(plain_hashes, bystander_salt),
    )


# ---------------------------------------------------------------------------
# Row generators behind the CSV outputs.

SUBCHAIN_HEADER = ("chains", "inputs", "affected_fraction")
MINER_HEADER = ("chains", "nodes_per_chain", "target_ratio", "alpha")
CAPACITY_HEADER = ("shards", "bw_bits", "capacity_tps")
INTRA_HEADER = ("shards", "intra_bw_bits", "bpt_seconds", "throughput_tps")


def subchain_rows(
    chain_counts: Iterable[int], input_counts: Iterable[int]
) -> list[tuple[int, int, float]]:
    return [
        (n, k, affected_fraction(n, k))
        for n in chain_counts
        for k in input_counts
    ]


def miner_rows(
    chain_counts: Iterable[int],
    nodes_per_chain_values: Iterable[int],
    target_ratio: float,
) -> list[tuple[int, int, float, float]]:
    return [
        (n, s, target_ratio, miner_alpha(n, s, target_ratio))
        for s in nodes_per_chain_values
        for n in chain_counts
    ]


def capacity_rows(
    shard_counts: Iterable[int], bw_values: Iterable[float], base: PerfParams
) -> list[tuple[int, float, float]]:
    return [
        (ell, bw, capacity(replace(base, shard_count=ell, total_bw=bw)))
        for bw in bw_values
        for ell in shard_counts
    ]


def intra_rows(
    shard_counts: Iterable[int], intra_bw_values: Iterable[float], base: PerfParams
) -> list[tuple[int, float, float, float]]:
    rows = []
    for bw in intra_bw_values:
        for ell in shard_counts:
            p = replace(base, shard_count=ell, intra_bw=bw)
            t = bpt_intra(p)
            rows.append((ell, bw, t, (p.block_size / p.tx_size) / t))
    return rows
