"""Wire protocol: message types, canonical payload layouts, and framing.

A frame is a 4-byte big-endian payload length, a 1-byte message tag, then
the payload.  Payload integers are little-endian fixed-width, matching the
canonical content encodings in :mod:`shardnode.core`.  Frames are capped
at 4 MiB; bulk transaction transfer chunks into multiple frames well below
that.  The same codec backs both the in-memory test transport (which skips
serialization) and real sockets, so every message type round-trips.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import (
    HASH_SIZE,
    BlockHeader,
    CodecError,
    OutPoint,
    Output,
    Transaction,
    decode_header,
    decode_outpoint,
    decode_output,
    encode_header,
    encode_outpoint,
    encode_output,
    encode_tx,
    read_tx,
)
from .sharding import SALT_SIZE, shard_of

MAX_FRAME = 4 * 1024 * 1024
_LEN = struct.Struct(">I")  # frame length prefix is big-endian on the wire
_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

#: transactions per Transactions frame when chunking a block-shard
TX_CHUNK = 1000

_NO_SHARD = 0xFFFFFFFF  # wire sentinel for "coordinator, not a shard"


class FrameError(CodecError):
    """Frame or payload did not parse."""


class FrameTooLargeError(FrameError):
    """Encoded frame would exceed the 4 MiB cap."""


class MessageKind(enum.IntEnum):
    HELLO = 1
    INVENTORY = 2
    GET_BLOCK_SHARD = 3
    TRANSACTIONS = 4
    TX_HASHES = 5
    OUTPUT_REQUEST = 6
    OUTPUT_RESPONSE = 7
    BAD_BLOCK = 8
    BLOCK_DONE = 9
    GET_HEADERS = 10
    HEADERS = 11


class Role(enum.IntEnum):
    COORDINATOR = 0
    SHARD = 1


@dataclass(frozen=True)
class Hello:
    """Connection opener: who I am, my salt, and how many shards I run."""

    role: Role
    node_id: int
    shard_id: int | None
    salt: bytes
    shard_count: int


@dataclass(frozen=True)
class Inventory:
    """Announcement that ``source_node`` holds a fully validated block."""

    block_hash: bytes
    source_node: int


@dataclass(frozen=True)
class GetBlockShard:
    """Ask a peer shard for my slice of a block, under *my* placement.

    The requester states its own salt and shard count because the serving
    side filters its stored slice through the requester's placement -- the
    two nodes shard the same block differently.
    """

    block_hash: bytes
    requester_shard_id: int
    requester_shard_count: int
    requester_salt: bytes


@dataclass(frozen=True)
class Transactions:
    """One chunk of a transaction stream; ``final`` closes the stream.

    ``error`` with ``final`` means the sender could not serve the request
    (unknown block, malformed placement parameters).
    """

    block_hash: bytes
    txs: tuple[Transaction, ...]
    final: bool = True
    error: bool = False


@dataclass(frozen=True)
class TxHashes:
    """A shard reporting the ids of its validated slice upward."""

    block_hash: bytes
    shard_id: int
    hashes: tuple[bytes, ...]


@dataclass(frozen=True)
class OutputRequest:
    """Sibling-to-sibling: hand over these outpoints, removing them."""

    block_hash: bytes
    requester_shard_id: int
    outpoints: tuple[OutPoint, ...]


@dataclass(frozen=True)
class OutputResponse:
    """Outputs a sibling surrendered; omissions mean it never had them."""

    block_hash: bytes
    responder_shard_id: int
    entries: tuple[tuple[OutPoint, Output], ...]


@dataclass(frozen=True)
class BadBlock:
    """Veto (shard -> coordinator) or abort directive (coordinator -> shard)."""

    block_hash: bytes
    shard_id: int | None
    reason: int = 0


@dataclass(frozen=True)
class BlockDone:
    """Success report (shard -> coordinator) or commit directive (reverse)."""

    block_hash: bytes
    shard_id: int | None


@dataclass(frozen=True)
class GetHeaders:
    """Request headers extending ``from_hash`` (the requester's best tip)."""

    from_hash: bytes


@dataclass(frozen=True)
class Headers:
    headers: tuple[BlockHeader, ...]


Message = (
    Hello
    | Inventory
    | GetBlockShard
    | Transactions
    | TxHashes
    | OutputRequest
    | OutputResponse
    | BadBlock
    | BlockDone
    | GetHeaders
    | Headers
)

_TAGS: dict[type, MessageKind] = {
    Hello: MessageKind.HELLO,
    Inventory: MessageKind.INVENTORY,
    GetBlockShard: MessageKind.GET_BLOCK_SHARD,
    Transactions: MessageKind.TRANSACTIONS,
    TxHashes: MessageKind.TX_HASHES,
    OutputRequest: MessageKind.OUTPUT_REQUEST,
    OutputResponse: MessageKind.OUTPUT_RESPONSE,
    BadBlock: MessageKind.BAD_BLOCK,
    BlockDone: MessageKind.BLOCK_DONE,
    GetHeaders: MessageKind.GET_HEADERS,
    Headers: MessageKind.HEADERS,
}


def _opt_shard(shard_id: int | None) -> int:
    return _NO_SHARD if shard_id is None else shard_id


def _shard_opt(raw: int) -> int | None:
    return None if raw == _NO_SHARD else raw


def _check_hash(h: bytes) -> bytes:
    if len(h) != HASH_SIZE:
        raise FrameError(f"hash field must be {HASH_SIZE} bytes")
    return h


def _encode_payload(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        if len(msg.salt) != SALT_SIZE:
            raise FrameError("hello salt must be 32 bytes")
        return (
            _U8.pack(int(msg.role))
            + _U64.pack(msg.node_id)
            + _U32.pack(_opt_shard(msg.shard_id))
            + msg.salt
            + _U32.pack(msg.shard_count)
        )
    if isinstance(msg, Inventory):
        return _check_hash(msg.block_hash) + _U64.pack(msg.source_node)
    if isinstance(msg, GetBlockShard):
        if len(msg.requester_salt) != SALT_SIZE:
            raise FrameError("requester salt must be 32 bytes")
        return (
            _check_hash(msg.block_hash)
            + _U32.pack(msg.requester_shard_id)
            + _U32.pack(msg.requester_shard_count)
            + msg.requester_salt
        )
    if isinstance(msg, Transactions):
        flags = (1 if msg.final else 0) | (2 if msg.error else 0)
        parts = [
            _check_hash(msg.block_hash),
            _U8.pack(flags),
            _U32.pack(len(msg.txs)),
        ]
        parts.extend(encode_tx(tx) for tx in msg.txs)
        return b"".join(parts)
    if isinstance(msg, TxHashes):
        parts = [
            _check_hash(msg.block_hash),
            _U32.pack(msg.shard_id),
            _U32.pack(len(msg.hashes)),
        ]
        parts.extend(_check_hash(h) for h in msg.hashes)
        return b"".join(parts)
    if isinstance(msg, OutputRequest):
        parts = [
            _check_hash(msg.block_hash),
            _U32.pack(msg.requester_shard_id),
            _U32.pack(len(msg.outpoints)),
        ]
        parts.extend(encode_outpoint(op) for op in msg.outpoints)
        return b"".join(parts)
    if isinstance(msg, OutputResponse):
        parts = [
            _check_hash(msg.block_hash),
            _U32.pack(msg.responder_shard_id),
            _U32.pack(len(msg.entries)),
        ]
        parts.extend(encode_outpoint(op) + encode_output(out) for op, out in msg.entries)
        return b"".join(parts)
    if isinstance(msg, BadBlock):
        return (
            _check_hash(msg.block_hash)
            + _U32.pack(_opt_shard(msg.shard_id))
            + _U8.pack(msg.reason)
        )
    if isinstance(msg, BlockDone):
        return _check_hash(msg.block_hash) + _U32.pack(_opt_shard(msg.shard_id))
    if isinstance(msg, GetHeaders):
        return _check_hash(msg.from_hash)
    if isinstance(msg, Headers):
        parts = [_U32.pack(len(msg.headers))]
        parts.extend(encode_header(h) for h in msg.headers)
        return b"".join(parts)
    raise FrameError(f"not a wire message: {type(msg).__name__}")


def encode_message(msg: Message) -> bytes:
    """Frame a message: big-endian payload length, tag byte, payload."""
    payload = _encode_payload(msg)
    frame_len = _LEN.size + 1 + len(payload)
    if frame_len > MAX_FRAME:
        raise FrameTooLargeError(f"frame of {frame_len} bytes exceeds {MAX_FRAME}")
    return _LEN.pack(len(payload) + 1) + _U8.pack(int(_TAGS[type(msg)])) + payload


def _decode_payload(kind: MessageKind, p: bytes) -> Message:
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(p):
            raise FrameError("truncated payload")
        chunk = p[off : off + n]
        off += n
        return chunk

    def u8() -> int:
        return take(1)[0]

    def u32() -> int:
        return _U32.unpack(take(4))[0]

    def u64() -> int:
        return _U64.unpack(take(8))[0]

    if kind is MessageKind.HELLO:
        role = Role(u8())
        node_id = u64()
        shard_id = _shard_opt(u32())
        salt = take(SALT_SIZE)
        count = u32()
        msg: Message = Hello(role, node_id, shard_id, salt, count)
    elif kind is MessageKind.INVENTORY:
        msg = Inventory(take(HASH_SIZE), u64())
    elif kind is MessageKind.GET_BLOCK_SHARD:
        msg = GetBlockShard(take(HASH_SIZE), u32(), u32(), take(SALT_SIZE))
    elif kind is MessageKind.TRANSACTIONS:
        block_hash = take(HASH_SIZE)
        flags = u8()
        count = u32()
        txs = []
        for _ in range(count):
            tx, off = read_tx(p, off)
            txs.append(tx)
        msg = Transactions(block_hash, tuple(txs), bool(flags & 1), bool(flags & 2))
    elif kind is MessageKind.TX_HASHES:
        block_hash = take(HASH_SIZE)
        shard_id = u32()
        count = u32()
        hashes = tuple(take(HASH_SIZE) for _ in range(count))
        msg = TxHashes(block_hash, shard_id, hashes)
    elif kind is MessageKind.OUTPUT_REQUEST:
        block_hash = take(HASH_SIZE)
        shard_id = u32()
        count = u32()
        ops = []
        for _ in range(count):
            op, off = decode_outpoint(p, off)
            ops.append(op)
        msg = OutputRequest(block_hash, shard_id, tuple(ops))
    elif kind is MessageKind.OUTPUT_RESPONSE:
        block_hash = take(HASH_SIZE)
        shard_id = u32()
        count = u32()
        entries = []
        for _ in range(count):
            op, off = decode_outpoint(p, off)
            out, off = decode_output(p, off)
            entries.append((op, out))
        msg = OutputResponse(block_hash, shard_id, tuple(entries))
    elif kind is MessageKind.BAD_BLOCK:
        msg = BadBlock(take(HASH_SIZE), _shard_opt(u32()), u8())
    elif kind is MessageKind.BLOCK_DONE:
        msg = BlockDone(take(HASH_SIZE), _shard_opt(u32()))
    elif kind is MessageKind.GET_HEADERS:
        msg = GetHeaders(take(HASH_SIZE))
    elif kind is MessageKind.HEADERS:
        count = u32()
        headers = []
        for _ in range(count):
            hdr, off = decode_header(p, off)
            headers.append(hdr)
        msg = Headers(tuple(headers))
    else:  # pragma: no cover - MessageKind is exhaustive
        raise FrameError(f"unknown tag {kind}")
    if off != len(p):
        raise FrameError(f"{len(p) - off} trailing payload bytes")
    return msg


def decode_message(frame: bytes) -> Message:
    msg, end = read_message(frame)
    if msg is None:
        raise FrameError("incomplete frame")
    if end != len(frame):
        raise FrameError(f"{len(frame) - end} trailing bytes after frame")
    return msg


def read_message(buf: bytes, offset: int = 0) -> tuple[Message | None, int]:
    """Parse one frame from a stream buffer.

    Returns ``(message, next_offset)``, or ``(None, offset)`` when the
    buffer does not yet hold a complete frame.  Raises on malformed or
    oversized frames.
    """
    if len(buf) - offset < _LEN.size:
        return None, offset
    (length,) = _LEN.unpack_from(buf, offset)
    if length < 1:
        raise FrameError("frame without a tag byte")
    if _LEN.size + length > MAX_FRAME:
        raise FrameTooLargeError(f"declared frame of {_LEN.size + length} bytes")
    if len(buf) - offset < _LEN.size + length:
        return None, offset
    start = offset + _LEN.size
    try:
        kind = MessageKind(buf[start])
    except ValueError:
        raise FrameError(f"unknown message tag {buf[start]}") from None
    payload = bytes(buf[start + 1 : start + length])
    return _decode_payload(kind, payload), start + length


def chunk_transactions(
    block_hash: bytes,
    txs: Sequence[Transaction],
    *,
    chunk_size: int = TX_CHUNK,
    error: bool = False,
) -> list[Transactions]:
    """Split a transaction list into a final-terminated frame stream."""
    if error:
        return [Transactions(block_hash, (), final=True, error=True)]
    if not txs:
        return [Transactions(block_hash, (), final=True)]
    out = []
    for i in range(0, len(txs), chunk_size):
        chunk = tuple(txs[i : i + chunk_size])
        out.append(Transactions(block_hash, chunk, final=i + chunk_size >= len(txs)))
    return out


def serve_get_block_shard(
    store: Mapping[bytes, Iterable[Transaction]],
    req: GetBlockShard,
    *,
    chunk_size: int = TX_CHUNK,
) -> list[Transactions]:
    """Answer a peer shard's slice request from this shard's block store.

    The stored slice was cut under *this* node's salt; the response is the
    subset that lands on the requester's shard under the requester's
    placement.  An unknown block or malformed placement yields a single
    empty frame with the error flag set -- never silence, so the requester
    can always count terminated streams.
    """
    txs = store.get(req.block_hash)
    bad_req = (
        req.requester_shard_count < 1
        or not 0 <= req.requester_shard_id < req.requester_shard_count
        or len(req.requester_salt) != SALT_SIZE
    )
    if txs is None or bad_req:
        return chunk_transactions(req.block_hash, (), error=True)
    mine = [
        tx
        for tx in txs
        if shard_of(tx.tx_hash, req.requester_salt, req.requester_shard_count)
        == req.requester_shard_id
    ]
    mine.sort(key=lambda tx: tx.tx_hash)
    return chunk_transactions(req.block_hash, mine, chunk_size=chunk_size)


@dataclass(frozen=True)
class Topology:
    """Static peering layout: node shard counts plus undirected peer edges.

    When two nodes peer, their coordinators connect and every shard of one
    connects to every shard of the other (the full bipartite mesh block
    fetching relies on).  ``shard_channels`` enumerates those pairs.
    """

    shard_counts: Mapping[int, int]
    peers: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        norm = frozenset(
            (min(a, b), max(a, b)) for a, b in self.peers if a != b
        )
        object.__setattr__(self, "peers", norm)
        for a, b in norm:
            if a not in self.shard_counts or b not in self.shard_counts:
                raise ValueError(f"peer edge ({a},{b}) references unknown node")

    def peers_of(self, node_id: int) -> list[int]:
        out = []
        for a, b in self.peers:
            if a == node_id:
                out.append(b)
            elif b == node_id:
                out.append(a)
        return sorted(out)

    def shard_channels(self, a: int, b: int) -> list[tuple[int, int]]:
        """All (shard_of_a, shard_of_b) connections between two peers."""
        return [
            (sa, sb)
            for sa in range(self.shard_counts[a])
            for sb in range(self.shard_counts[b])
        ]
