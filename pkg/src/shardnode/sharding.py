"""Salt-based placement of transactions and outputs across a node's shards.

Placement re-hashes the transaction id together with a per-node salt, so
the mapping is uniform, deterministic for anyone who knows the salt, and
different from every other node's mapping.  A node publishes its salt to
peers (placement is not a secret -- the point is that an adversary cannot
pick one transaction set that lands unevenly on *every* node at once,
since that would require grinding against each salt independently).
"""
from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import HASH_SIZE, Block, OutPoint, Transaction
from .validation import UtxoSet

SALT_SIZE = 32


class ZeroShardsError(ValueError):
    """Shard count must be a positive integer."""


def gen_salt(rng=None) -> bytes:
    """Fresh placement salt; fixed for a node's lifetime once chosen."""
    if rng is None:
        return secrets.token_bytes(SALT_SIZE)
    return rng.randbytes(SALT_SIZE)


def new_tx_hash(tx_hash: bytes, salt: bytes) -> bytes:
    """Salted re-hash of a transaction id: SHA-256 over the 64-byte concat."""
    if len(tx_hash) != HASH_SIZE:
        raise ValueError(f"tx_hash must be {HASH_SIZE} bytes")
    if len(salt) != SALT_SIZE:
        raise ValueError(f"salt must be {SALT_SIZE} bytes")
    return hashlib.sha256(tx_hash + salt).digest()


def shard_of(tx_hash: bytes, salt: bytes, shard_count: int) -> int:
    """Home shard of a transaction under this node's salt.

    The first 8 bytes of the salted re-hash, read as a big-endian unsigned
    integer, reduced modulo the shard count.
    """
    if shard_count < 1:
        raise ZeroShardsError(f"shard_count must be >= 1, got {shard_count}")
    if shard_count == 1:
        if len(tx_hash) != HASH_SIZE or len(salt) != SALT_SIZE:
            raise ValueError("bad tx_hash or salt length")
        return 0
    return int.from_bytes(new_tx_hash(tx_hash, salt)[:8], "big") % shard_count


@dataclass(frozen=True)
class BlockShard:
    """One shard's slice of a block: every transaction it is home to."""

    block_hash: bytes
    shard_id: int
    txs: tuple[Transaction, ...]


def partition_txs(
    txs: Iterable[Transaction], salt: bytes, shard_count: int
) -> list[list[Transaction]]:
    """Split transactions into per-shard lists under a node's salt."""
    if shard_count < 1:
        raise ZeroShardsError(f"shard_count must be >= 1, got {shard_count}")
    slices: list[list[Transaction]] = [[] for _ in range(shard_count)]
    for tx in txs:
        slices[shard_of(tx.tx_hash, salt, shard_count)].append(tx)
    return slices


def partition_block(block: Block, salt: bytes, shard_count: int) -> list[BlockShard]:
    slices = partition_txs(block.txs, salt, shard_count)
    return [
        BlockShard(block.block_hash, shard_id, tuple(txs))
        for shard_id, txs in enumerate(slices)
    ]


def partition_utxo(utxo: UtxoSet, salt: bytes, shard_count: int) -> list[UtxoSet]:
    """Split a UTXO set so each entry lives with its creating transaction.

    An outpoint is keyed by the hash of the transaction that created it,
    so placing it by that hash puts every output in the same shard that
    would have processed its creator -- the invariant the distributed
    validator relies on when resolving references.
    """
    if shard_count < 1:
        raise ZeroShardsError(f"shard_count must be >= 1, got {shard_count}")
    parts: list[dict] = [{} for _ in range(shard_count)]
    for op, out in utxo.items():
        parts[shard_of(op.tx_hash, salt, shard_count)][op] = out
    return [UtxoSet(p) for p in parts]


def owner_shard(op: OutPoint, salt: bytes, shard_count: int) -> int:
    """Shard holding (or owed) the given outpoint under a node's salt."""
    return shard_of(op.tx_hash, salt, shard_count)
