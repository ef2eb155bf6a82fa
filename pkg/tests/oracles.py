"""Independent reference implementations used to cross-check the package.

Everything here is written straight from the data-layout and ledger rules,
on purpose *not* sharing code with ``shardnode``: encoders build bytes with
``int.to_bytes`` instead of ``struct``, the merkle root is a direct
recursion, and block validity is decided set-algebraically with no
iteration order at all.  Tests treat disagreement between these and the
package as a package bug.
"""
from __future__ import annotations

import hashlib

import numpy as np


def u32(n: int) -> bytes:
    return n.to_bytes(4, "little")


def u64(n: int) -> bytes:
    return n.to_bytes(8, "little")


def ref_encode_tx(tx) -> bytes:
    out = u32(len(tx.inputs))
    for inp in tx.inputs:
        out += inp.ref.tx_hash + u32(inp.ref.index) + inp.witness
    out += u32(len(tx.outputs))
    for o in tx.outputs:
        out += u64(o.value) + o.owner
    out += tx.nonce
    return out


def ref_hash_tx(tx) -> bytes:
    return hashlib.sha256(ref_encode_tx(tx)).digest()


def ref_encode_header(h) -> bytes:
    return h.prev_hash + h.merkle_root + u64(h.height) + h.validity_stamp + u64(h.tx_count)


def ref_merkle(hashes) -> bytes:
    """Recursive merkle over sorted leaves, duplicating the odd one out."""
    level = sorted(hashes)
    assert level, "empty leaf set has no root"
    if len(level) == 1:
        return level[0]
    if len(level) % 2:
        level = level + [level[-1]]
    parents = [
        hashlib.sha256(level[i] + level[i + 1]).digest()
        for i in range(0, len(level), 2)
    ]
    return ref_merkle_presorted(parents)


def ref_merkle_presorted(level) -> bytes:
    # inner levels keep pair order; only the leaves are sorted
    if len(level) == 1:
        return level[0]
    if len(level) % 2:
        level = level + [level[-1]]
    parents = [
        hashlib.sha256(level[i] + level[i + 1]).digest()
        for i in range(0, len(level), 2)
    ]
    return ref_merkle_presorted(parents)


def ref_tx_checks(tx, resolved_values, resolved_owners, size_limit=4096) -> bool:
    """Value conservation, witness-owner match, and byte-size cap."""
    size = 8 + 4 + 68 * len(tx.inputs) + 4 + 40 * len(tx.outputs)
    if size > size_limit:
        return False
    if sum(resolved_values) < sum(o.value for o in tx.outputs):
        return False
    for inp, owner in zip(tx.inputs, resolved_owners):
        if inp.witness != owner:
            return False
    return True


def ref_validate_block(txs, utxo: dict, size_limit=4096):
    """Order-free ledger check over a transaction set.

    Returns (True, new_utxo_dict) or (False, None).  A block is valid iff
    (a) created outpoints are globally fresh and mutually distinct,
    (b) every input resolves to the starting set or to an output created in
    the block, with no outpoint consumed twice, and
    (c) every transaction passes the local checks against what it resolved.
    The resulting set is (utxo | created) - consumed.
    """
    created: dict = {}
    for tx in txs:
        h = ref_hash_tx(tx)
        for idx, out in enumerate(tx.outputs):
            op = (h, idx)
            if op in created or op in utxo:
                return False, None
            created[op] = out
    consumed = set()
    for tx in txs:
        values, owners = [], []
        for inp in tx.inputs:
            op = (inp.ref.tx_hash, inp.ref.index)
            if op in consumed:
                return False, None
            if op in utxo:
                src = utxo[op]
            elif op in created:
                src = created[op]
            else:
                return False, None
            consumed.add(op)
            values.append(src.value)
            owners.append(src.owner)
        if not ref_tx_checks(tx, values, owners, size_limit):
            return False, None
    new = {op: out for op, out in utxo.items() if op not in consumed}
    for op, out in created.items():
        if op not in consumed:
            new[op] = out
    return True, new


# ---------------------------------------------------------------------------
# Monte-Carlo oracles for the closed-form formulas.  These deliberately know
# nothing about the analysis module: straight occupancy sampling with numpy.

def mc_hit_fraction(bins: int, items: int, trials: int, rng) -> float:
    """P(one designated bin receives at least one of `items` uniform throws)."""
    draws = rng.integers(0, bins, size=(trials, items), dtype=np.uint8)
    return float((draws == 0).any(axis=1).mean())


def mc_occupied_fraction(bins: int, items: int, trials: int, rng) -> float:
    """Expected fraction of bins hit by `items` uniform throws."""
    draws = rng.integers(0, bins, size=(trials, items))
    occupied = np.zeros((trials, bins), dtype=bool)
    occupied[np.arange(trials)[:, None], draws] = True
    return float(occupied.sum(axis=1).mean() / bins)


def mc_remote_fetch_count(n_txs: int, shards: int, rng) -> list[int]:
    """Per-shard count of input records that live on a sibling shard.

    Each transaction is assigned to a uniform shard, and its single input
    reference independently to a uniform shard; a fetch happens when the two
    differ.
    """
    tx_shard = rng.integers(0, shards, size=n_txs)
    ref_shard = rng.integers(0, shards, size=n_txs)
    remote = tx_shard[tx_shard != ref_shard]
    return [int((remote == s).sum()) for s in range(shards)]


def to_tuple_utxo(utxo: dict) -> dict:
    """Re-key an OutPoint-keyed mapping by raw (hash, index) tuples."""
    return {(op.tx_hash, op.index): out for op, out in utxo.items()}
