"""Randomized ledger workloads and three-way validator agreement checks.

``gen_instance`` produces a starting UTXO set plus a transaction list with
real internal dependency structure: transactions spend both pre-existing
outputs and outputs created earlier in the same block, and the final list
is shuffled so consumers can precede their producers.  A configurable
fraction of instances carries one or more planted faults drawn from the
interesting failure families: dangling references, in-block double spends,
corrupted witnesses, and value inflation.

``run_fuzz`` feeds a stream of such instances to the dependency-ordered
validator, the unordered validator, and the coordinator/shard pipeline at
each requested shard width, and records every disagreement in verdict or
in the accepted state.  Any divergence at all is a bug in one of them.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .core import Input, OutPoint, Output, Transaction
from .runtime import distributed_validate
from .sharding import gen_salt
from .validation import UtxoSet, validate_block_topological, validate_block_unordered

FAULT_KINDS = ("dangling", "double_spend", "bad_witness", "bad_value")


@dataclass
class Instance:
    utxo: dict            # OutPoint -> Output
    txs: list             # shuffled Transaction list
    faults: list = field(default_factory=list)

    @property
    def should_accept(self) -> bool:
        return not self.faults


def _split_value(rng: random.Random, total: int, parts: int) -> list[int]:
    if parts == 1:
        return [rng.randint(0, total)]
    cuts = sorted(rng.randint(0, total) for _ in range(parts - 1))
    vals = []
    prev = 0
    for c in cuts:
        vals.append(c - prev)
        prev = c
    vals.append(rng.randint(0, total - prev))
    return vals


def gen_instance(
    rng: random.Random,
    max_txs: int = 200,
    adversarial_rate: float = 0.3,
    min_txs: int = 1,
) -> Instance:
    n_txs = rng.randint(min_txs, max_txs)
    n_seed = n_txs + rng.randint(4, n_txs + 8)

    utxo: dict[OutPoint, Output] = {}
    pool: list[tuple[OutPoint, Output]] = []
    for _ in range(n_seed):
        op = OutPoint(rng.randbytes(32), rng.randrange(4))
        out = Output(rng.randint(1, 10**6), rng.randbytes(32))
        utxo[op] = out
        pool.append((op, out))
    rng.shuffle(pool)

    adversarial = rng.random() < adversarial_rate
    fault_txs: dict[int, str] = {}
    if adversarial:
        for idx in rng.sample(range(n_txs), k=min(n_txs, rng.randint(1, 3))):
            fault_txs[idx] = rng.choice(FAULT_KINDS)

    consumed: list[tuple[OutPoint, Output]] = []
    faults: list[str] = []
    txs: list[Transaction] = []
    for i in range(n_txs):
        n_in = min(rng.randint(1, 3), len(pool))
        if n_in == 0:
            # pool exhausted: mint-style tx spending nothing
            picks = []
        else:
            picks = [pool.pop() for _ in range(n_in)]
        inputs = [Input(op, out.owner) for op, out in picks]
        total = sum(out.value for _, out in picks)
        fault = fault_txs.get(i)

        if fault == "double_spend" and not consumed:
            fault = "dangling"
        if fault == "dangling":
            victim = rng.randrange(len(inputs)) if inputs else None
            ghost = Input(OutPoint(rng.randbytes(32), 0), rng.randbytes(32))
            if victim is None:
                inputs = [ghost]
            else:
                inputs[victim] = ghost
            faults.append(fault)
        elif fault == "double_spend":
            op, out = rng.choice(consumed)
            inputs.append(Input(op, out.owner))
            total += out.value
            faults.append(fault)
        elif fault == "bad_witness" and inputs:
            victim = rng.randrange(len(inputs))
            inputs[victim] = Input(inputs[victim].ref, rng.randbytes(32))
            faults.append(fault)

        n_out = rng.randint(1, 3)
        values = _split_value(rng, total, n_out)
        outputs = [Output(v, rng.randbytes(32)) for v in values]
        if fault == "bad_value":
            victim = rng.randrange(len(outputs))
            bumped = outputs[victim].value + total + rng.randint(1, 1000)
            outputs[victim] = Output(bumped, outputs[victim].owner)
            faults.append(fault)

        tx = Transaction(tuple(inputs), tuple(outputs), rng.randbytes(8))
        referenced = {inp.ref for inp in inputs}
        consumed.extend((op, out) for op, out in picks if op in referenced)
        for idx, out in enumerate(tx.outputs):
            pool.append((OutPoint(tx.tx_hash, idx), out))
        rng.shuffle(pool)
        txs.append(tx)

    rng.shuffle(txs)  # forward references: consumers may precede producers
    return Instance(utxo=utxo, txs=txs, faults=faults)


@dataclass(frozen=True)
class FuzzReport:
    iterations: int
    accepted: int
    rejected: int
    divergences: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.divergences


def run_fuzz(
    iterations: int,
    seed: int,
    max_txs: int = 60,
    shard_counts: Sequence[int] = (1, 2, 3, 4, 8),
    adversarial_rate: float = 0.3,
) -> FuzzReport:
    """Compare all three validators on ``iterations`` random instances."""
    if iterations < 1:
        raise ValueError("iterations must be positive")
    rng = random.Random(seed)
    accepted = rejected = 0
    divergences: list[str] = []
    for i in range(iterations):
        inst = gen_instance(rng, max_txs=max_txs, adversarial_rate=adversarial_rate)
        base = UtxoSet(inst.utxo)
        ordered = validate_block_topological(inst.txs, base)
        unordered = validate_block_unordered(inst.txs, base)
        if ordered.accepted != unordered.accepted:
            divergences.append(
                f"iteration {i}: verdicts split "
                f"ordered={ordered.accepted} unordered={unordered.accepted}"
            )
        elif ordered.accepted and ordered.utxo != unordered.utxo:
            divergences.append(f"iteration {i}: accepted states differ")
        if ordered.accepted:
            accepted += 1
        else:
            rejected += 1

        salt = gen_salt(rng)
        for ell in shard_counts:
            dist = distributed_validate(inst.txs, UtxoSet(inst.utxo), ell, salt=salt)
            if dist.accepted != ordered.accepted:
                divergences.append(
                    f"iteration {i}: {ell}-shard verdict {dist.accepted} "
                    f"vs ordered {ordered.accepted}"
                )
            elif dist.accepted and dist.utxo != ordered.utxo:
                divergences.append(f"iteration {i}: {ell}-shard state differs")
    return FuzzReport(iterations, accepted, rejected, tuple(divergences))
