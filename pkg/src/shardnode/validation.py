"""Block validation against a UTXO set, in two interchangeable styles.

``validate_block_topological`` replays transactions in dependency order;
``validate_block_unordered`` first registers every output the block
creates and then settles transactions in whatever order they arrive.
The two agree on every input: registering all created outputs up front
makes in-block references resolvable regardless of position, and a
missing or twice-consumed outpoint fails in either style.  The
distributed validator in :mod:`shardnode.node` is the unordered form
with the set split across shards, so this module is the semantic ground
truth the rest of the package is tested against.
"""
from __future__ import annotations

import enum
import heapq
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .core import (
    DEFAULT_TX_SIZE_LIMIT,
    OutPoint,
    Output,
    Transaction,
    tx_size_bytes,
)


class UtxoError(KeyError):
    """A UTXO-set operation hit an absent or duplicate outpoint."""


class CycleDetectedError(ValueError):
    """Dependency cycle among transactions (impossible for honest hashes)."""


class ArityMismatchError(ValueError):
    """resolved_inputs does not line up with the transaction's inputs."""


class Reason(enum.Enum):
    """Why a block was rejected.  Informative only: the accept/reject
    outcome and resulting set are what the equivalence guarantees cover."""

    MISSING_INPUT = "missing_input"
    DOUBLE_SPEND = "double_spend"
    TX_INVALID = "tx_invalid"
    MERKLE_MISMATCH = "merkle_mismatch"
    BAD_HEADER = "bad_header"
    FETCH_FAILED = "fetch_failed"


class UtxoSet:
    """Mapping of outpoints to unspent outputs with strict add/remove.

    Removing an absent outpoint or re-adding an existing one raises
    rather than silently proceeding: both indicate either corruption or
    a double spend, and every caller is expected to have checked first.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[OutPoint, Output] | None = None) -> None:
        self._entries: dict[OutPoint, Output] = dict(entries) if entries else {}

    def add(self, outpoint: OutPoint, output: Output) -> None:
        if outpoint in self._entries:
            raise UtxoError(f"outpoint already present: {outpoint}")
        self._entries[outpoint] = output

    def remove(self, outpoint: OutPoint) -> Output:
        try:
            return self._entries.pop(outpoint)
        except KeyError:
            raise UtxoError(f"outpoint not present: {outpoint}") from None

    def get(self, outpoint: OutPoint) -> Output | None:
        return self._entries.get(outpoint)

    def __contains__(self, outpoint: OutPoint) -> bool:
        return outpoint in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[OutPoint]:
        return iter(self._entries)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, UtxoSet):
            return self._entries == other._entries
        return NotImplemented

    def items(self):
        return self._entries.items()

    def as_dict(self) -> dict[OutPoint, Output]:
        return dict(self._entries)

    def copy(self) -> "UtxoSet":
        return UtxoSet(self._entries)

    def total_value(self) -> int:
        return sum(out.value for out in self._entries.values())

    def __repr__(self) -> str:
        return f"UtxoSet({len(self._entries)} entries)"


@dataclass(frozen=True)
class ValidationResult:
    accepted: bool
    utxo: UtxoSet | None = None
    reason: Reason | None = None

    @classmethod
    def accept(cls, utxo: UtxoSet) -> "ValidationResult":
        return cls(True, utxo=utxo)

    @classmethod
    def reject(cls, reason: Reason) -> "ValidationResult":
        return cls(False, reason=reason)


def validate_tx(
    tx: Transaction,
    resolved_inputs: Sequence[Output],
    *,
    size_limit: int = DEFAULT_TX_SIZE_LIMIT,
) -> bool:
    """Local checks once every input has been resolved to an output.

    Value may not inflate (the shortfall is an implicit fee), each
    witness must equal the owner tag of the output it spends, and the
    canonical encoding must fit the size cap.
    """
    if len(resolved_inputs) != len(tx.inputs):
        raise ArityMismatchError(
            f"{len(resolved_inputs)} resolved outputs for {len(tx.inputs)} inputs"
        )
    if tx_size_bytes(tx) > size_limit:
        return False
    if sum(o.value for o in resolved_inputs) < sum(o.value for o in tx.outputs):
        return False
    for inp, src in zip(tx.inputs, resolved_inputs):
        if inp.witness != src.owner:
            return False
    return True


def topo_sort(txs: Iterable[Transaction]) -> list[Transaction]:
    """Producers before consumers; ties broken by ascending tx hash.

    Only references *within* the given set create edges.  A cycle would
    need a transaction whose hash appears in its own ancestry, which
    honest SHA-256 content cannot produce, but the check stays as a
    defense against corrupted inputs.
    """
    txs = list(txs)
    producer = {tx.tx_hash: i for i, tx in enumerate(txs)}
    children: dict[int, list[int]] = defaultdict(list)
    indegree = [0] * len(txs)
    for i, tx in enumerate(txs):
        deps = {
            producer[inp.ref.tx_hash]
            for inp in tx.inputs
            if inp.ref.tx_hash in producer
        }
        deps.discard(i)
        for dep in deps:
            children[dep].append(i)
        indegree[i] = len(deps)
    heap = [(txs[i].tx_hash, i) for i in range(len(txs)) if indegree[i] == 0]
    heapq.heapify(heap)
    order: list[Transaction] = []
    while heap:
        _, i = heapq.heappop(heap)
        order.append(txs[i])
        for child in children[i]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(heap, (txs[child].tx_hash, child))
    if len(order) != len(txs):
        raise CycleDetectedError("transaction references form a cycle")
    return order


def validate_block_topological(
    txs: Sequence[Transaction],
    utxo: UtxoSet,
    *,
    size_limit: int = DEFAULT_TX_SIZE_LIMIT,
) -> ValidationResult:
    """Replay the block in dependency order against a copy of ``utxo``."""
    ordered = topo_sort(txs)
    work = utxo.as_dict()
    consumed: set[OutPoint] = set()
    for tx in ordered:
        resolved: list[Output] = []
        for inp in tx.inputs:
            out = work.pop(inp.ref, None)
            if out is None:
                reason = (
                    Reason.DOUBLE_SPEND if inp.ref in consumed else Reason.MISSING_INPUT
                )
                return ValidationResult.reject(reason)
            consumed.add(inp.ref)
            resolved.append(out)
        for idx in range(len(tx.outputs)):
            op = OutPoint(tx.tx_hash, idx)
            # freshness: an outpoint may never be created twice, even if its
            # first incarnation was already spent earlier in this block
            if op in work or op in consumed:
                return ValidationResult.reject(Reason.TX_INVALID)
            work[op] = tx.outputs[idx]
        if not validate_tx(tx, resolved, size_limit=size_limit):
            return ValidationResult.reject(Reason.TX_INVALID)
    return ValidationResult.accept(UtxoSet(work))


def validate_block_unordered(
    txs: Sequence[Transaction],
    utxo: UtxoSet,
    *,
    size_limit: int = DEFAULT_TX_SIZE_LIMIT,
) -> ValidationResult:
    """Settle the block with no ordering pass at all.

    Phase one registers every output the block creates, so a reference
    to a sibling transaction resolves no matter where that sibling sits
    in the list.  Phase two consumes inputs and runs the local checks in
    the order given -- the verdict and resulting set are the same for
    every permutation.
    """
    work = utxo.as_dict()
    for tx in txs:
        for idx in range(len(tx.outputs)):
            op = OutPoint(tx.tx_hash, idx)
            if op in work:
                return ValidationResult.reject(Reason.TX_INVALID)
            work[op] = tx.outputs[idx]
    consumed: set[OutPoint] = set()
    for tx in txs:
        resolved: list[Output] = []
        failed: Reason | None = None
        for inp in tx.inputs:
            out = work.pop(inp.ref, None)
            if out is None:
                failed = (
                    Reason.DOUBLE_SPEND if inp.ref in consumed else Reason.MISSING_INPUT
                )
                break
            consumed.add(inp.ref)
            resolved.append(out)
        if failed is not None:
            return ValidationResult.reject(failed)
        if not validate_tx(tx, resolved, size_limit=size_limit):
            return ValidationResult.reject(Reason.TX_INVALID)
    return ValidationResult.accept(UtxoSet(work))
