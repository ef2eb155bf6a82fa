"""Sharded UTXO block validation and its supporting analysis tooling.

The package splits into three layers:

* content: canonical types and codecs (:mod:`shardnode.core`), single-set
  block validation (:mod:`shardnode.validation`), salt-based transaction
  placement (:mod:`shardnode.sharding`), the wire protocol
  (:mod:`shardnode.wire`), and the coordinator/shard state machines
  (:mod:`shardnode.node`) with their transports (:mod:`shardnode.runtime`).
* analysis: closed-form subchain/capacity formulas, Monte Carlo checks,
  and the salt-grinding attack tooling (:mod:`shardnode.analysis`).
* simulation: a deterministic event-driven network simulator and the
  capacity measurement sweeps built on it (:mod:`shardnode.sim`).
"""

__version__ = "0.1.0"

from .core import (
    Block,
    BlockHeader,
    Input,
    OutPoint,
    Output,
    Transaction,
    build_block,
    encode_tx,
    decode_tx,
    hash_tx,
    merkle_root,
)

__all__ = [
    "Block",
    "BlockHeader",
    "Input",
    "OutPoint",
    "Output",
    "Transaction",
    "build_block",
    "encode_tx",
    "decode_tx",
    "hash_tx",
    "merkle_root",
    "__version__",
]
