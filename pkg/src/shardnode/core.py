"""Value types and canonical byte encodings for transactions and blocks.

Everything that ends up under a hash or on the wire goes through the
fixed-layout encoders in this module: little-endian fixed-width integers,
length prefixes, fields in declaration order.  Two independently built
peers must produce byte-identical encodings, so there is deliberately no
versioning or optional-field machinery here.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

HASH_SIZE = 32
OWNER_SIZE = 32
WITNESS_SIZE = 32
NONCE_SIZE = 8
STAMP_SIZE = 8

#: All-zero hash used as the previous-block reference of a chain's first block.
ZERO_HASH = b"\x00" * HASH_SIZE

#: Default cap on the canonical byte size of a single transaction.
DEFAULT_TX_SIZE_LIMIT = 4096

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_OUTPOINT = struct.Struct("<32sI")          # tx_hash, output index
_OUTPUT = struct.Struct("<Q32s")            # value, owner
_INPUT = struct.Struct("<32sI32s")          # outpoint tx_hash, index, witness
_HEADER = struct.Struct("<32s32sQ8sQ")      # prev, merkle, height, stamp, tx count

OUTPOINT_SIZE = _OUTPOINT.size
OUTPUT_SIZE = _OUTPUT.size
INPUT_SIZE = _INPUT.size
HEADER_SIZE = _HEADER.size


class CodecError(ValueError):
    """Bytes did not parse as a canonical encoding."""


class EmptyBlockError(ValueError):
    """An operation that needs at least one transaction got none."""


@dataclass(frozen=True, slots=True)
class OutPoint:
    """Reference to one output of one transaction."""

    tx_hash: bytes
    index: int

    def __post_init__(self) -> None:
        if len(self.tx_hash) != HASH_SIZE:
            raise ValueError(f"outpoint tx_hash must be {HASH_SIZE} bytes")
        if not 0 <= self.index < 2**32:
            raise ValueError("outpoint index out of range")


@dataclass(frozen=True, slots=True)
class Output:
    """A spendable coin: a value locked to an owner tag."""

    value: int
    owner: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.value < 2**64:
            raise ValueError("output value out of range")
        if len(self.owner) != OWNER_SIZE:
            raise ValueError(f"output owner must be {OWNER_SIZE} bytes")


@dataclass(frozen=True, slots=True)
class Input:
    """Consumes one prior output; the witness must match the owner tag."""

    ref: OutPoint
    witness: bytes

    def __post_init__(self) -> None:
        if len(self.witness) != WITNESS_SIZE:
            raise ValueError(f"input witness must be {WITNESS_SIZE} bytes")


@dataclass(frozen=True)
class Transaction:
    """Immutable transaction; identified by the hash of its encoding.

    ``inputs`` may be empty only for seeding transactions that mint the
    initial coin supply; ``outputs`` is never empty.  Inputs must not
    repeat an outpoint -- that would be a self-evident double spend.
    """

    inputs: tuple[Input, ...]
    outputs: tuple[Output, ...]
    nonce: bytes = b"\x00" * NONCE_SIZE

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.outputs:
            raise ValueError("transaction must create at least one output")
        if len(self.nonce) != NONCE_SIZE:
            raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
        refs = [inp.ref for inp in self.inputs]
        if len(set(refs)) != len(refs):
            raise ValueError("transaction repeats an input outpoint")

    @cached_property
    def tx_hash(self) -> bytes:
        return hashlib.sha256(encode_tx(self)).digest()


@dataclass(frozen=True, slots=True)
class BlockHeader:
    prev_hash: bytes
    merkle_root: bytes
    height: int
    validity_stamp: bytes
    tx_count: int

    def __post_init__(self) -> None:
        if len(self.prev_hash) != HASH_SIZE or len(self.merkle_root) != HASH_SIZE:
            raise ValueError("header hashes must be 32 bytes")
        if len(self.validity_stamp) != STAMP_SIZE:
            raise ValueError(f"validity stamp must be {STAMP_SIZE} bytes")
        if not 0 <= self.height < 2**64 or not 0 <= self.tx_count < 2**64:
            raise ValueError("header counters out of range")


@dataclass(frozen=True)
class Block:
    """Header plus full transaction set, held in canonical (hash) order."""

    header: BlockHeader
    txs: tuple[Transaction, ...]

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.txs, key=lambda tx: tx.tx_hash))
        object.__setattr__(self, "txs", ordered)

    @cached_property
    def block_hash(self) -> bytes:
        return hash_header(self.header)


# ---------------------------------------------------------------------------
# encoding


def encode_outpoint(op: OutPoint) -> bytes:
    return _OUTPOINT.pack(op.tx_hash, op.index)


def decode_outpoint(data: bytes, offset: int = 0) -> tuple[OutPoint, int]:
    try:
        tx_hash, index = _OUTPOINT.unpack_from(data, offset)
    except struct.error as exc:
        raise CodecError(f"truncated outpoint: {exc}") from None
    return OutPoint(tx_hash, index), offset + _OUTPOINT.size


def encode_output(out: Output) -> bytes:
    return _OUTPUT.pack(out.value, out.owner)


def decode_output(data: bytes, offset: int = 0) -> tuple[Output, int]:
    try:
        value, owner = _OUTPUT.unpack_from(data, offset)
    except struct.error as exc:
        raise CodecError(f"truncated output: {exc}") from None
    return Output(value, owner), offset + _OUTPUT.size


def encode_tx(tx: Transaction) -> bytes:
    parts = [_U32.pack(len(tx.inputs))]
    for inp in tx.inputs:
        parts.append(_INPUT.pack(inp.ref.tx_hash, inp.ref.index, inp.witness))
    parts.append(_U32.pack(len(tx.outputs)))
    for out in tx.outputs:
        parts.append(_OUTPUT.pack(out.value, out.owner))
    parts.append(tx.nonce)
    return b"".join(parts)


def read_tx(data: bytes, offset: int = 0) -> tuple[Transaction, int]:
    """Decode one transaction starting at ``offset``; returns (tx, next offset)."""
    try:
        (n_inputs,) = _U32.unpack_from(data, offset)
        offset += _U32.size
        if n_inputs * INPUT_SIZE > len(data) - offset:
            raise CodecError("input count exceeds available bytes")
        inputs = []
        for _ in range(n_inputs):
            tx_hash, index, witness = _INPUT.unpack_from(data, offset)
            inputs.append(Input(OutPoint(tx_hash, index), witness))
            offset += INPUT_SIZE
        (n_outputs,) = _U32.unpack_from(data, offset)
        offset += _U32.size
        if n_outputs * OUTPUT_SIZE > len(data) - offset:
            raise CodecError("output count exceeds available bytes")
        outputs = []
        for _ in range(n_outputs):
            value, owner = _OUTPUT.unpack_from(data, offset)
            outputs.append(Output(value, owner))
            offset += OUTPUT_SIZE
        nonce = data[offset:offset + NONCE_SIZE]
        if len(nonce) != NONCE_SIZE:
            raise CodecError("truncated nonce")
        offset += NONCE_SIZE
    except struct.error as exc:
        raise CodecError(f"truncated transaction: {exc}") from None
    try:
        return Transaction(tuple(inputs), tuple(outputs), nonce), offset
    except ValueError as exc:
        raise CodecError(str(exc)) from None


def decode_tx(data: bytes) -> Transaction:
    tx, end = read_tx(data, 0)
    if end != len(data):
        raise CodecError(f"{len(data) - end} trailing bytes after transaction")
    return tx


def tx_size_bytes(tx: Transaction) -> int:
    return (
        2 * _U32.size
        + len(tx.inputs) * INPUT_SIZE
        + len(tx.outputs) * OUTPUT_SIZE
        + NONCE_SIZE
    )


def hash_tx(tx: Transaction) -> bytes:
    """SHA-256 of the canonical encoding; the transaction's identity everywhere."""
    return tx.tx_hash


def encode_header(header: BlockHeader) -> bytes:
    return _HEADER.pack(
        header.prev_hash,
        header.merkle_root,
        header.height,
        header.validity_stamp,
        header.tx_count,
    )


def decode_header(data: bytes, offset: int = 0) -> tuple[BlockHeader, int]:
    try:
        prev, root, height, stamp, count = _HEADER.unpack_from(data, offset)
    except struct.error as exc:
        raise CodecError(f"truncated header: {exc}") from None
    return BlockHeader(prev, root, height, stamp, count), offset + HEADER_SIZE


def hash_header(header: BlockHeader) -> bytes:
    """Block identity: SHA-256 of the canonical header encoding."""
    return hashlib.sha256(encode_header(header)).digest()


def encode_block(block: Block) -> bytes:
    if block.header.tx_count != len(block.txs):
        raise CodecError("header transaction count does not match body")
    parts = [encode_header(block.header)]
    parts.extend(encode_tx(tx) for tx in block.txs)
    return b"".join(parts)


def decode_block(data: bytes) -> Block:
    header, offset = decode_header(data, 0)
    txs = []
    for _ in range(header.tx_count):
        tx, offset = read_tx(data, offset)
        txs.append(tx)
    if offset != len(data):
        raise CodecError(f"{len(data) - offset} trailing bytes after block")
    return Block(header, tuple(txs))


# ---------------------------------------------------------------------------
# merkle


def merkle_root_from_hashes(hashes: Iterable[bytes]) -> bytes:
    """Merkle root over transaction hashes.

    Leaves are sorted ascending bytewise, so the root is a pure function of
    the transaction *set* -- any party holding the same set computes the
    same root regardless of arrival order.  Odd levels duplicate their last
    entry; a single leaf is its own root.
    """
    level = sorted(hashes)
    if not level:
        raise EmptyBlockError("merkle root of zero transactions is undefined")
    for h in level:
        if len(h) != HASH_SIZE:
            raise ValueError("merkle leaves must be 32-byte hashes")
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            hashlib.sha256(level[i] + level[i + 1]).digest()
            for i in range(0, len(level), 2)
        ]
    return level[0]


def merkle_root(txs: Sequence[Transaction]) -> bytes:
    return merkle_root_from_hashes([tx.tx_hash for tx in txs])


def build_block(
    prev_hash: bytes,
    height: int,
    txs: Sequence[Transaction],
    validity_stamp: bytes = b"\x00" * STAMP_SIZE,
) -> Block:
    """Assemble a block whose header commits to ``txs``."""
    header = BlockHeader(
        prev_hash=prev_hash,
        merkle_root=merkle_root(txs),
        height=height,
        validity_stamp=validity_stamp,
        tx_count=len(txs),
    )
    return Block(header, tuple(txs))
