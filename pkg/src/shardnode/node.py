"""Coordinator and shard state machines for a sharded validating node.

A node is one coordinator plus ``shard_count`` shard workers that share
nothing and exchange only wire messages, whether they run in one process
or across sockets.  Block validation is the unordered style from
:mod:`shardnode.validation`, split by the node's salt:

* each shard first registers every output its slice creates,
* then asks each sibling for the outpoints its slice consumes from them
  (one batched request per sibling, always sent, possibly empty),
* serves incoming sibling requests by removing and surrendering entries
  (an absent entry or a second surrender of the same outpoint is a veto),
* and only after all requests are served and all responses are in does it
  settle its own transactions, vetoing on any unresolved reference.

Every mutation during validation is journaled so a veto from any shard
unwinds cleanly, and every removal is logged per block so an accepted
block can later be rolled back without touching any other shard.
"""
from __future__ import annotations

import enum
import hashlib
import json
from collections import ChainMap
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .core import (
    DEFAULT_TX_SIZE_LIMIT,
    ZERO_HASH,
    Block,
    BlockHeader,
    OutPoint,
    Output,
    Transaction,
    hash_header,
    merkle_root_from_hashes,
    tx_size_bytes,
)
from .sharding import gen_salt, owner_shard, partition_txs, partition_utxo, shard_of
from .validation import Reason, UtxoSet, validate_tx
from .wire import (
    BadBlock,
    BlockDone,
    GetBlockShard,
    GetHeaders,
    Headers,
    Hello,
    Inventory,
    Message,
    OutputRequest,
    OutputResponse,
    Role,
    Transactions,
    TxHashes,
    chunk_transactions,
    serve_get_block_shard,
)

# wire codes for Reason values carried in BadBlock frames
REASON_CODES = {
    Reason.MISSING_INPUT: 1,
    Reason.DOUBLE_SPEND: 2,
    Reason.TX_INVALID: 3,
    Reason.MERKLE_MISMATCH: 4,
    Reason.BAD_HEADER: 5,
    Reason.FETCH_FAILED: 6,
}
CODE_REASONS = {v: k for k, v in REASON_CODES.items()}


class NotASuffixError(ValueError):
    """Rollback request does not match the tail of the accepted chain."""


class MempoolVerdict(enum.Enum):
    ACCEPTED = "accepted"
    WRONG_SHARD = "wrong_shard"
    DUPLICATE = "duplicate"
    OVERSIZE = "oversize"


@dataclass(frozen=True, slots=True)
class Address:
    """Routing identity: a node's coordinator (shard_id None) or one shard."""

    node_id: int
    shard_id: int | None = None

    def __repr__(self) -> str:
        tag = "coord" if self.shard_id is None else f"shard{self.shard_id}"
        return f"{self.node_id}/{tag}"


def default_chain_weight(headers: Sequence[BlockHeader]) -> int:
    """Heaviest chain is the longest one unless configured otherwise."""
    return len(headers)


@dataclass
class NodeConfig:
    node_id: int
    shard_count: int
    salt: bytes = field(default_factory=gen_salt)
    tx_size_limit: int = DEFAULT_TX_SIZE_LIMIT
    reorg_depth: int = 100
    genesis_hash: bytes = ZERO_HASH
    stamp_ok: Callable[[BlockHeader], bool] = staticmethod(lambda header: True)
    chain_weight: Callable[[Sequence[BlockHeader]], object] = staticmethod(
        default_chain_weight
    )

    def __post_init__(self) -> None:
        if self.shard_count < 1:
            raise ValueError("a node runs at least one shard")
        if self.reorg_depth < 1:
            raise ValueError("reorg depth must be positive")


@dataclass
class PeerInfo:
    node_id: int
    salt: bytes
    shard_count: int


class _PendingShard:
    """Per-block validation state inside one shard."""

    __slots__ = (
        "txs",
        "source_node",
        "expected_streams",
        "streams_final",
        "started",
        "journal",
        "foreign",
        "awaiting",
        "served",
        "queued_requests",
        "consumed",
        "bad",
        "reported",
        "settled",
    )

    def __init__(self) -> None:
        self.txs: dict[bytes, Transaction] = {}
        self.source_node: int | None = None
        self.expected_streams: int | None = None
        self.streams_final: set[int] = set()
        self.started = False
        self.journal: list[tuple[str, OutPoint, Output]] = []
        self.foreign: dict[OutPoint, Output] = {}
        self.awaiting: set[int] = set()
        self.served: set[int] = set()
        self.queued_requests: list[OutputRequest] = []
        self.consumed: set[OutPoint] = set()
        self.bad: Reason | None = None
        self.reported = False
        self.settled = False


class Shard:
    """One shard worker: owns a UTXO partition, a mempool slice, and the
    per-block validation state for whatever its coordinator is checking."""

    def __init__(self, cfg: NodeConfig, shard_id: int, utxo: UtxoSet | None = None):
        if not 0 <= shard_id < cfg.shard_count:
            raise ValueError("shard id out of range")
        self.cfg = cfg
        self.shard_id = shard_id
        self.address = Address(cfg.node_id, shard_id)
        self.coordinator = Address(cfg.node_id)
        self.utxo = utxo if utxo is not None else UtxoSet()
        self.mempool: dict[bytes, Transaction] = {}
        self.committed: dict[bytes, tuple[Transaction, ...]] = {}
        self.spent_log: dict[bytes, list[tuple[OutPoint, Output]]] = {}
        self.accepted_order: list[bytes] = []
        self.detached: dict[bytes, tuple[Transaction, ...]] = {}
        self.peers: dict[int, PeerInfo] = {}
        self.pending: dict[bytes, _PendingShard] = {}
        self.outbox: list[tuple[Address, Message]] = []

    # -- helpers ------------------------------------------------------

    def _send(self, to: Address, msg: Message) -> None:
        self.outbox.append((to, msg))

    def _siblings(self) -> list[int]:
        return [s for s in range(self.cfg.shard_count) if s != self.shard_id]

    def _is_mine(self, tx_hash: bytes) -> bool:
        return shard_of(tx_hash, self.cfg.salt, self.cfg.shard_count) == self.shard_id

    # -- mempool ------------------------------------------------------

    def mempool_accept(self, tx: Transaction) -> MempoolVerdict:
        if not self._is_mine(tx.tx_hash):
            return MempoolVerdict.WRONG_SHARD
        if tx.tx_hash in self.mempool:
            return MempoolVerdict.DUPLICATE
        if tx_size_bytes(tx) > self.cfg.tx_size_limit:
            return MempoolVerdict.OVERSIZE
        self.mempool[tx.tx_hash] = tx
        return MempoolVerdict.ACCEPTED

    # -- message entry point -------------------------------------------

    def handle(self, sender: Address, msg: Message) -> None:
        if isinstance(msg, Hello):
            self.peers[msg.node_id] = PeerInfo(msg.node_id, msg.salt, msg.shard_count)
        elif isinstance(msg, Inventory):
            if sender == self.coordinator:
                self._on_fetch_directive(msg)
        elif isinstance(msg, Transactions):
            self._on_transactions(sender, msg)
        elif isinstance(msg, GetBlockShard):
            store = ChainMap(self.committed, self.detached)
            for frame in serve_get_block_shard(store, msg):
                self._send(sender, frame)
        elif isinstance(msg, OutputRequest):
            self._on_output_request(sender, msg)
        elif isinstance(msg, OutputResponse):
            self._on_output_response(msg)
        elif isinstance(msg, BlockDone):
            if sender == self.coordinator:
                self._commit(msg.block_hash)
        elif isinstance(msg, BadBlock):
            if sender == self.coordinator:
                self._abort_or_rollback(msg.block_hash)

    # -- block-shard acquisition ---------------------------------------

    def _on_fetch_directive(self, msg: Inventory) -> None:
        h = msg.block_hash
        pv = self.pending.setdefault(h, _PendingShard())
        if pv.started or pv.expected_streams is not None:
            return  # duplicate directive
        pv.source_node = msg.source_node
        if h in self.detached:
            # we validated this block on a previous branch; reuse our slice
            for tx in self.detached[h]:
                pv.txs[tx.tx_hash] = tx
            pv.expected_streams = 0
            self._begin_validation(h, pv)
            return
        peer = self.peers.get(msg.source_node)
        if peer is None:
            pv.expected_streams = 0
            pv.bad = Reason.FETCH_FAILED
            self._begin_validation(h, pv)
            return
        pv.expected_streams = peer.shard_count
        req = GetBlockShard(
            block_hash=h,
            requester_shard_id=self.shard_id,
            requester_shard_count=self.cfg.shard_count,
            requester_salt=self.cfg.salt,
        )
        for sid in range(peer.shard_count):
            self._send(Address(peer.node_id, sid), req)

    def _on_transactions(self, sender: Address, msg: Transactions) -> None:
        if msg.block_hash == ZERO_HASH:
            for tx in msg.txs:
                self.mempool_accept(tx)
            return
        h = msg.block_hash
        pv = self.pending.setdefault(h, _PendingShard())
        if pv.started:
            return  # stream already closed; late duplicate
        if sender == self.coordinator:
            pv.expected_streams = 1  # local delivery from our own coordinator
            stream_id = -1
        else:
            stream_id = sender.shard_id if sender.shard_id is not None else -1
        if msg.error:
            pv.bad = pv.bad or Reason.FETCH_FAILED
        for tx in msg.txs:
            if self._is_mine(tx.tx_hash):  # drop misrouted ones; merkle will judge
                pv.txs.setdefault(tx.tx_hash, tx)
        if msg.final:
            pv.streams_final.add(stream_id)
        if (
            pv.expected_streams is not None
            and len(pv.streams_final) >= pv.expected_streams
        ):
            self._begin_validation(h, pv)

    # -- the validation phases -----------------------------------------

    def _begin_validation(self, h: bytes, pv: _PendingShard) -> None:
        if pv.started:
            return
        pv.started = True
        slice_txs = [pv.txs[k] for k in sorted(pv.txs)]
        # phase 1: register every output this slice creates
        for tx in slice_txs:
            for idx in range(len(tx.outputs)):
                op = OutPoint(tx.tx_hash, idx)
                if op in self.utxo:
                    pv.bad = pv.bad or Reason.TX_INVALID
                    continue
                self.utxo.add(op, tx.outputs[idx])
                pv.journal.append(("add", op, tx.outputs[idx]))
        # phase 2: one batched outpoint request to every sibling, always
        wanted: dict[int, list[OutPoint]] = {s: [] for s in self._siblings()}
        seen: set[OutPoint] = set()
        for tx in slice_txs:
            for inp in tx.inputs:
                home = owner_shard(inp.ref, self.cfg.salt, self.cfg.shard_count)
                if home != self.shard_id and inp.ref not in seen:
                    seen.add(inp.ref)
                    wanted[home].append(inp.ref)
        for sid in self._siblings():
            ops = tuple(sorted(wanted[sid], key=lambda op: (op.tx_hash, op.index)))
            self._send(
                Address(self.cfg.node_id, sid),
                OutputRequest(h, self.shard_id, ops),
            )
            pv.awaiting.add(sid)
        # phase 3: serve whatever arrived before we were ready
        queued, pv.queued_requests = pv.queued_requests, []
        for req in queued:
            self._serve_request(h, pv, req)
        self._maybe_settle(h, pv)

    def _on_output_request(self, sender: Address, msg: OutputRequest) -> None:
        pv = self.pending.setdefault(msg.block_hash, _PendingShard())
        if not pv.started:
            pv.queued_requests.append(msg)  # sibling got its slice before us
            return
        self._serve_request(msg.block_hash, pv, msg)
        self._maybe_settle(msg.block_hash, pv)

    def _serve_request(self, h: bytes, pv: _PendingShard, req: OutputRequest) -> None:
        entries: list[tuple[OutPoint, Output]] = []
        for op in req.outpoints:
            if op in self.utxo:
                out = self.utxo.remove(op)
                pv.journal.append(("remove", op, out))
                pv.consumed.add(op)
                entries.append((op, out))
            elif op in pv.consumed:
                pv.bad = pv.bad or Reason.DOUBLE_SPEND
            else:
                pv.bad = pv.bad or Reason.MISSING_INPUT
        pv.served.add(req.requester_shard_id)
        self._send(
            Address(self.cfg.node_id, req.requester_shard_id),
            OutputResponse(h, self.shard_id, entries=tuple(entries)),
        )
        if pv.bad is not None and not pv.reported:
            # veto straight away; keep serving siblings so everyone drains
            pv.reported = True
            self._send(
                self.coordinator,
                BadBlock(h, self.shard_id, REASON_CODES[pv.bad]),
            )

    def _on_output_response(self, msg: OutputResponse) -> None:
        pv = self.pending.get(msg.block_hash)
        if pv is None or not pv.started:
            return
        pv.awaiting.discard(msg.responder_shard_id)
        for op, out in msg.entries:
            pv.foreign[op] = out
        self._maybe_settle(msg.block_hash, pv)

    def _maybe_settle(self, h: bytes, pv: _PendingShard) -> None:
        ready = (
            pv.started
            and not pv.settled
            and len(pv.served) == self.cfg.shard_count - 1
            and not pv.awaiting
        )
        if not ready:
            return
        pv.settled = True
        if pv.bad is None:
            self._settle_local(pv)
        if pv.bad is None:
            hashes = tuple(sorted(pv.txs))
            self._send(self.coordinator, TxHashes(h, self.shard_id, hashes))
            self._send(self.coordinator, BlockDone(h, self.shard_id))
        elif not pv.reported:
            pv.reported = True
            self._send(
                self.coordinator, BadBlock(h, self.shard_id, REASON_CODES[pv.bad])
            )

    def _settle_local(self, pv: _PendingShard) -> None:
        """Phase 5: consume references and run per-transaction checks."""
        for key in sorted(pv.txs):
            tx = pv.txs[key]
            resolved: list[Output] = []
            for inp in tx.inputs:
                op = inp.ref
                if op in pv.foreign:
                    out = pv.foreign.pop(op)
                elif op in self.utxo:
                    out = self.utxo.remove(op)
                    pv.journal.append(("remove", op, out))
                elif op in pv.consumed:
                    pv.bad = Reason.DOUBLE_SPEND
                    return
                else:
                    pv.bad = Reason.MISSING_INPUT
                    return
                pv.consumed.add(op)
                resolved.append(out)
            if not validate_tx(tx, resolved, size_limit=self.cfg.tx_size_limit):
                pv.bad = Reason.TX_INVALID
                return

    # -- outcome directives from the coordinator -------------------------

    def _commit(self, h: bytes) -> None:
        pv = self.pending.pop(h, None)
        if pv is None:
            return
        slice_txs = tuple(pv.txs[k] for k in sorted(pv.txs))
        self.committed[h] = slice_txs
        self.spent_log[h] = [
            (op, out) for kind, op, out in pv.journal if kind == "remove"
        ]
        self.accepted_order.append(h)
        for tx in slice_txs:
            self.mempool.pop(tx.tx_hash, None)
        while len(self.accepted_order) > self.cfg.reorg_depth:
            old = self.accepted_order.pop(0)
            self.spent_log.pop(old, None)
            self.committed.pop(old, None)

    def _abort_or_rollback(self, h: bytes) -> None:
        pv = self.pending.pop(h, None)
        if pv is not None:
            for kind, op, out in reversed(pv.journal):
                if kind == "add":
                    self.utxo.remove(op)
                else:
                    self.utxo.add(op, out)
            return
        if h in self.committed:
            self._rollback(h)

    def _rollback(self, h: bytes) -> None:
        if not self.accepted_order or self.accepted_order[-1] != h:
            raise NotASuffixError(f"rollback of {h.hex()[:12]} out of order")
        # restore spent entries first, then delete created ones: after the
        # restore pass every outpoint this block created is present again,
        # including any created and spent within the block, so the delete
        # pass can stay strict
        for op, out in self.spent_log[h]:
            self.utxo.add(op, out)
        slice_txs = self.committed[h]
        for tx in slice_txs:
            for idx in range(len(tx.outputs)):
                self.utxo.remove(OutPoint(tx.tx_hash, idx))
        self.accepted_order.pop()
        del self.spent_log[h]
        del self.committed[h]
        self.detached[h] = slice_txs
        while len(self.detached) > self.cfg.reorg_depth:
            self.detached.pop(next(iter(self.detached)))
        self._send(self.coordinator, BlockDone(h, self.shard_id))


class _PendingBlock:
    """Coordinator-side progress of one block through the shards."""

    __slots__ = ("verdicts", "hashes", "reason", "source_node")

    def __init__(self, source_node: int | None) -> None:
        self.verdicts: dict[int, bool] = {}
        self.hashes: dict[int, tuple[bytes, ...]] = {}
        self.reason: Reason | None = None
        self.source_node = source_node


class Coordinator:
    """Drives header sync, block fetch, verdict collection, and reorgs.

    Validation is serialized: one block in flight, always the next one on
    the best-weight header path, so shard UTXO partitions always reflect
    the chain tip the block builds on.
    """

    MAX_HEADERS = 10_000

    def __init__(self, cfg: NodeConfig):
        self.cfg = cfg
        self.address = Address(cfg.node_id)
        self.headers: dict[bytes, BlockHeader] = {}
        self.invalid: set[bytes] = set()
        self.main_chain: list[bytes] = []
        self.sources: dict[bytes, int] = {}
        self.peers: dict[int, PeerInfo] = {}
        self.pending: dict[bytes, _PendingBlock] = {}
        self.rollback_acks: dict[bytes, set[int]] = {}
        self.rejected_log: list[tuple[bytes, Reason]] = []
        self.outbox: list[tuple[Address, Message]] = []

    # -- helpers ------------------------------------------------------

    def _send(self, to: Address, msg: Message) -> None:
        self.outbox.append((to, msg))

    def _shards(self) -> list[Address]:
        return [Address(self.cfg.node_id, s) for s in range(self.cfg.shard_count)]

    @property
    def tip_hash(self) -> bytes:
        return self.main_chain[-1] if self.main_chain else self.cfg.genesis_hash

    @property
    def tip_height(self) -> int:
        return len(self.main_chain)

    def chain_weight_of(self, path: Sequence[bytes]):
        return self.cfg.chain_weight([self.headers[h] for h in path])

    # -- connection setup ----------------------------------------------

    def hello(self) -> Hello:
        return Hello(
            Role.COORDINATOR,
            self.cfg.node_id,
            None,
            self.cfg.salt,
            self.cfg.shard_count,
        )

    # -- message entry point -------------------------------------------

    def handle(self, sender: Address, msg: Message) -> None:
        if isinstance(msg, Hello):
            self.peers[msg.node_id] = PeerInfo(msg.node_id, msg.salt, msg.shard_count)
            for shard in self._shards():  # shards need peer placement to fetch
                self._send(shard, msg)
        elif isinstance(msg, Inventory):
            self.on_inventory(sender, msg)
        elif isinstance(msg, GetHeaders):
            self._serve_headers(sender, msg)
        elif isinstance(msg, Headers):
            self._ingest_headers(msg.headers, source=sender.node_id)
            self._advance()
        elif isinstance(msg, TxHashes):
            pb = self.pending.get(msg.block_hash)
            if pb is not None:
                pb.hashes[msg.shard_id] = msg.hashes
        elif isinstance(msg, BlockDone):
            self._on_block_done(msg)
        elif isinstance(msg, BadBlock):
            self._on_bad_block(msg)

    # -- header chain ----------------------------------------------------

    def _serve_headers(self, sender: Address, msg: GetHeaders) -> None:
        chain = self.main_chain
        if msg.from_hash in self.headers and msg.from_hash in set(chain):
            start = chain.index(msg.from_hash) + 1
        else:
            start = 0  # requester is on a fork or behind genesis: send all
        hdrs = tuple(self.headers[h] for h in chain[start : start + self.MAX_HEADERS])
        self._send(sender, Headers(hdrs))

    def _ingest_headers(
        self, headers: Sequence[BlockHeader], source: int | None = None
    ) -> None:
        for header in headers:
            h = hash_header(header)
            if h in self.headers or h in self.invalid:
                if h in self.headers and source is not None:
                    self.sources.setdefault(h, source)
                continue
            if header.tx_count < 1:
                self.invalid.add(h)
                continue
            if not self.cfg.stamp_ok(header):
                self.invalid.add(h)
                continue
            if header.prev_hash == self.cfg.genesis_hash:
                if header.height != 1:
                    self.invalid.add(h)
                    continue
            else:
                prev = self.headers.get(header.prev_hash)
                if prev is None:
                    continue  # unlinked; sender ordered badly or gap remains
                if header.height != prev.height + 1:
                    self.invalid.add(h)
                    continue
            self.headers[h] = header
            if source is not None:
                self.sources.setdefault(h, source)

    def _chain_path(self, tip: bytes) -> list[bytes] | None:
        path = []
        h = tip
        while h != self.cfg.genesis_hash:
            if h in self.invalid or h not in self.headers:
                return None
            path.append(h)
            h = self.headers[h].prev_hash
            if len(path) > len(self.headers) + 1:
                return None  # defensive: corrupted linkage
        path.reverse()
        return path

    def _best_target(self) -> list[bytes]:
        current = self.main_chain
        best_w = self.chain_weight_of(current)
        best: tuple[object, bytes, list[bytes]] | None = None
        for tip in self.headers:
            if tip in self.invalid:
                continue
            path = self._chain_path(tip)
            if path is None:
                continue
            w = self.chain_weight_of(path)
            if not w > best_w:
                continue  # must strictly outweigh the adopted chain
            # deterministic pick among candidates: max weight, then max tip
            if best is None or (w, tip) > (best[0], best[1]):
                best = (w, tip, path)
        return best[2] if best is not None else list(current)

    # -- inventory / fetch pipeline ---------------------------------------

    def on_inventory(self, sender: Address, msg: Inventory) -> None:
        """A peer holds a validated block we may not know about."""
        h = msg.block_hash
        self.sources.setdefault(h, msg.source_node)
        if h not in self.headers:
            self._send(Address(msg.source_node), GetHeaders(self.tip_hash))
            return
        self._advance()

    def _advance(self) -> None:
        if self.pending or self.rollback_acks:
            return  # strictly one block or one reorg in flight
        target = self._best_target()
        if target == self.main_chain:
            return
        split = 0
        while (
            split < len(target)
            and split < len(self.main_chain)
            and target[split] == self.main_chain[split]
        ):
            split += 1
        if split < len(self.main_chain):
            self.reorg(self.main_chain[split:], target[split:])
            return
        next_h = target[split]
        self._start_validation(next_h)

    def _start_validation(self, h: bytes) -> None:
        header = self.headers[h]
        assert header.prev_hash == self.tip_hash, "pipeline must extend the tip"
        source = self.sources.get(h)
        if source is None or source == self.cfg.node_id:
            source = self.cfg.node_id
        self.pending[h] = _PendingBlock(source)
        directive = Inventory(h, source)
        for shard in self._shards():
            self._send(shard, directive)

    # -- verdict collection ------------------------------------------------

    def _on_block_done(self, msg: BlockDone) -> None:
        h = msg.block_hash
        if h in self.rollback_acks and msg.shard_id is not None:
            acks = self.rollback_acks[h]
            acks.discard(msg.shard_id)
            if not acks:
                del self.rollback_acks[h]
                assert self.main_chain and self.main_chain[-1] == h
                self.main_chain.pop()
                if not self.rollback_acks:
                    self._advance()
            return
        pb = self.pending.get(h)
        if pb is None or msg.shard_id is None:
            return
        pb.verdicts[msg.shard_id] = True
        self._try_finalize(h)

    def _on_bad_block(self, msg: BadBlock) -> None:
        pb = self.pending.get(msg.block_hash)
        if pb is None or msg.shard_id is None:
            return
        pb.verdicts[msg.shard_id] = False
        if pb.reason is None:
            pb.reason = CODE_REASONS.get(msg.reason, Reason.TX_INVALID)
        self._try_finalize(msg.block_hash)

    def _try_finalize(self, h: bytes) -> None:
        pb = self.pending[h]
        if len(pb.verdicts) < self.cfg.shard_count:
            return
        header = self.headers[h]
        if not all(pb.verdicts.values()):
            self._reject(h, pb.reason or Reason.TX_INVALID)
            return
        leaves = [leaf for sid in sorted(pb.hashes) for leaf in pb.hashes[sid]]
        ok = (
            len(pb.hashes) == self.cfg.shard_count
            and len(leaves) == header.tx_count
            and len(set(leaves)) == len(leaves)
            and merkle_root_from_hashes(leaves) == header.merkle_root
        )
        if not ok:
            self._reject(h, Reason.MERKLE_MISMATCH)
            return
        del self.pending[h]
        self.main_chain.append(h)
        done = BlockDone(h, None)
        for shard in self._shards():
            self._send(shard, done)
        announce = Inventory(h, self.cfg.node_id)
        for peer_id in self.peers:
            self._send(Address(peer_id), announce)
        self._advance()

    def _reject(self, h: bytes, reason: Reason) -> None:
        del self.pending[h]
        self.invalid.add(h)
        self.rejected_log.append((h, reason))
        abort = BadBlock(h, None, REASON_CODES.get(reason, 0))
        for shard in self._shards():
            self._send(shard, abort)
        self._advance()

    # -- reorg -------------------------------------------------------------

    def reorg(self, rollback: Sequence[bytes], new_hashes: Sequence[bytes]) -> None:
        """Unwind ``rollback`` (oldest..tip of the current chain) and adopt
        ``new_hashes`` as the replacement branch.

        Rollback directives go out tip-first, one BadBlock per block per
        shard; each shard restores from its own spent log with no sibling
        traffic at all.  The new branch then validates through the normal
        fetch pipeline.
        """
        rollback = list(rollback)
        if rollback != self.main_chain[len(self.main_chain) - len(rollback) :]:
            raise NotASuffixError("rollback hashes are not the chain's tail")
        if len(rollback) > self.cfg.reorg_depth:
            raise NotASuffixError("rollback deeper than retained spent logs")
        for h in new_hashes:
            if h not in self.headers:
                raise KeyError(f"unknown replacement block {h.hex()[:12]}")
        prefix = self.main_chain[: len(self.main_chain) - len(rollback)]
        new_w = self.chain_weight_of(list(prefix) + list(new_hashes))
        if not new_w > self.chain_weight_of(self.main_chain):
            raise ValueError("replacement branch is not heavier")
        for h in reversed(rollback):
            self.rollback_acks[h] = set(range(self.cfg.shard_count))
            directive = BadBlock(h, None, 0)
            for shard in self._shards():
                self._send(shard, directive)

    # -- mining entry point --------------------------------------------------

    def submit_block(self, block: Block) -> bytes:
        """Inject a locally built block into the validation pipeline."""
        if self.pending or self.rollback_acks:
            raise RuntimeError("a block or reorg is already in flight")
        header = block.header
        h = block.block_hash
        if header.prev_hash != self.tip_hash:
            raise ValueError("submitted block must extend the current tip")
        if header.height != self.tip_height + 1:
            raise ValueError("submitted block has the wrong height")
        if header.tx_count < 1:
            raise ValueError("blocks must carry at least one transaction")
        if not self.cfg.stamp_ok(header):
            raise ValueError("validity stamp rejected by configuration")
        self.headers[h] = header
        self.sources[h] = self.cfg.node_id
        self.pending[h] = _PendingBlock(self.cfg.node_id)
        slices = partition_txs(block.txs, self.cfg.salt, self.cfg.shard_count)
        for sid, slice_txs in enumerate(slices):
            for frame in chunk_transactions(h, slice_txs):
                self._send(Address(self.cfg.node_id, sid), frame)
        return h


# ---------------------------------------------------------------------------
# genesis helpers


def genesis_utxo(records: Sequence[tuple[int, bytes]]) -> UtxoSet:
    """Build the starting set from (value, owner) records.

    Outpoints are derived deterministically from the record index so every
    node that loads the same records holds the same set.
    """
    utxo = UtxoSet()
    for i, (value, owner) in enumerate(records):
        op = OutPoint(hashlib.sha256(b"seed-record:%d" % i).digest(), 0)
        utxo.add(op, Output(value, owner))
    return utxo


def load_genesis(path) -> UtxoSet:
    """Read a JSON list of {"value": int, "owner": hex} records."""
    with open(path) as f:
        data = json.load(f)
    records = [(int(rec["value"]), bytes.fromhex(rec["owner"])) for rec in data]
    return genesis_utxo(records)


def make_node(cfg: NodeConfig, genesis: UtxoSet | None = None):
    """Construct a coordinator plus its shards, genesis pre-partitioned."""
    coordinator = Coordinator(cfg)
    parts = (
        partition_utxo(genesis, cfg.salt, cfg.shard_count)
        if genesis is not None
        else [None] * cfg.shard_count
    )
    shards = [Shard(cfg, sid, parts[sid]) for sid in range(cfg.shard_count)]
    return coordinator, shards
