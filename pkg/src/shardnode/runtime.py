"""Deterministic in-process transport and cluster assembly.

The :class:`Router` delivers messages between registered state machines
through a single FIFO queue, so a run is a pure function of the initial
state -- the property the equivalence fuzzing and replay tests lean on.
The same state machines run unmodified over real sockets via
:mod:`shardnode.sockets`.
"""
from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import Block, Transaction, build_block
from .node import Address, Coordinator, NodeConfig, Shard, make_node
from .sharding import gen_salt
from .validation import Reason, UtxoSet, ValidationResult
from .wire import Message


class RouterStall(RuntimeError):
    """The message queue did not drain within the step budget."""


class Router:
    """Single-queue deterministic message switch.

    Messages are delivered strictly in post order; an actor's outbox is
    drained into the queue immediately after it handles a message.  Counts
    are kept per message kind and for intra-node shard-to-shard traffic,
    which the rollback tests assert stays at zero.
    """

    def __init__(self) -> None:
        self.actors: dict[Address, object] = {}
        self.queue: deque[tuple[Address, Address, Message]] = deque()
        self.kind_counts: Counter[str] = Counter()
        self.intra_shard_counts: Counter[int] = Counter()
        self.delivered = 0

    def register(self, actor, address: Address | None = None) -> None:
        addr = address if address is not None else actor.address
        if addr in self.actors:
            raise ValueError(f"address {addr} already registered")
        self.actors[addr] = actor

    def post(self, src: Address, dst: Address, msg: Message) -> None:
        self.queue.append((src, dst, msg))

    def kick(self, actor) -> None:
        """Move an actor's queued outbox into the delivery queue."""
        for dst, msg in actor.outbox:
            self.post(actor.address, dst, msg)
        actor.outbox.clear()

    def run(
        self,
        max_steps: int = 5_000_000,
        until: Callable[[], bool] | None = None,
    ) -> int:
        """Deliver until the queue drains, ``until`` holds, or the budget dies."""
        steps = 0
        while self.queue:
            if until is not None and until():
                break
            if steps >= max_steps:
                raise RouterStall(f"queue still live after {max_steps} deliveries")
            src, dst, msg = self.queue.popleft()
            actor = self.actors.get(dst)
            if actor is None:
                raise KeyError(f"message for unregistered address {dst}")
            self.kind_counts[type(msg).__name__] += 1
            if (
                src.shard_id is not None
                and dst.shard_id is not None
                and src.node_id == dst.node_id
            ):
                self.intra_shard_counts[src.node_id] += 1
            actor.handle(src, msg)
            self.kick(actor)
            steps += 1
            self.delivered += 1
        return steps


@dataclass
class NodeHandle:
    coordinator: Coordinator
    shards: list[Shard]

    @property
    def cfg(self) -> NodeConfig:
        return self.coordinator.cfg

    def union_utxo(self) -> UtxoSet:
        """Disjoint union of all shard partitions (the node's full set)."""
        merged: dict = {}
        for shard in self.shards:
            for op, out in shard.utxo.items():
                if op in merged:
                    raise AssertionError("shard partitions overlap")
                merged[op] = out
        return UtxoSet(merged)

    def chain(self) -> list[bytes]:
        return list(self.coordinator.main_chain)


def add_node(router: Router, cfg: NodeConfig, genesis: UtxoSet | None = None) -> NodeHandle:
    coordinator, shards = make_node(cfg, genesis)
    router.register(coordinator)
    for shard in shards:
        router.register(shard)
    return NodeHandle(coordinator, shards)


def connect(router: Router, a: NodeHandle, b: NodeHandle) -> None:
    """Introduce two nodes: coordinators exchange hellos, which each side
    forwards to its shards so they learn the peer's salt and shard count."""
    router.post(a.coordinator.address, b.coordinator.address, a.coordinator.hello())
    router.post(b.coordinator.address, a.coordinator.address, b.coordinator.hello())
    router.run()


def submit_and_run(router: Router, node: NodeHandle, block: Block) -> None:
    node.coordinator.submit_block(block)
    router.kick(node.coordinator)
    router.run()


def distributed_validate(
    txs: Sequence[Transaction],
    utxo: UtxoSet,
    shard_count: int,
    salt: bytes | None = None,
    seed: int | None = None,
) -> ValidationResult:
    """Validate one block with a fresh single node split into shards.

    Builds a correctly committed block over ``txs``, runs the full
    coordinator/shard message flow in a deterministic router, and returns
    the accept/reject outcome plus, on acceptance, the union of the shard
    partitions afterwards.  Header-level interference is impossible here,
    so the verdict reflects content alone -- directly comparable with the
    single-set validators.
    """
    if salt is None:
        salt = gen_salt(random.Random(seed))
    cfg = NodeConfig(node_id=0, shard_count=shard_count, salt=salt)
    router = Router()
    node = add_node(router, cfg, genesis=utxo)
    block = build_block(cfg.genesis_hash, 1, txs)
    submit_and_run(router, node, block)
    if node.coordinator.main_chain == [block.block_hash]:
        return ValidationResult.accept(node.union_utxo())
    reasons = [r for h, r in node.coordinator.rejected_log if h == block.block_hash]
    return ValidationResult.reject(reasons[0] if reasons else Reason.TX_INVALID)
