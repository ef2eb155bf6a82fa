"""Command-line front end: analysis tables, simulations, fuzzing, grinding,
and a socket-backed node launcher.

Every subcommand is non-interactive, prints a one-line summary to stdout,
and optionally writes CSV (``--out``).  Exit codes: 0 on success, 1 when an
internal check fails (e.g. validator divergence), 2 on usage errors.  All
randomness flows from the ``--seed`` flags, so re-running a command with
the same arguments produces byte-identical files.

Integer sweep flags accept comma lists and inclusive ranges (``1,2,8`` or
``1..32`` or a mix); bandwidth lists accept ``inf``.  ``simulate`` reads a
config file -- an INI ``[simulation]`` section or a flat JSON object --
whose keys are the :class:`~shardnode.sim.SimConfig` field names.
``run-node`` reads a cluster file (INI ``[cluster]``/``[node.N]`` sections
or the JSON equivalent) and serves one coordinator or one shard over TCP:
the coordinator listens on the node's base port, shard ``s`` on
``base_port + 1 + s``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import signal
import sys
import threading
from pathlib import Path

from . import analysis, sim
from .analysis import GrindTarget, PerfParams, bpt_intra, capacity
from .fuzz import run_fuzz
from .node import Address, Coordinator, NodeConfig, Shard, load_genesis
from .sharding import partition_utxo
from .sockets import SocketHost

CAPACITY_CSV_HEADER = ("shards", "bw_bits", "model_tps", "simulated_tps")
INTRA_CSV_HEADER = (
    "shards",
    "intra_bw_bits",
    "model_bpt_seconds",
    "simulated_bpt_seconds",
    "simulated_tps",
)
FUZZ_CSV_HEADER = ("iterations", "accepted", "rejected", "divergences")
GRIND_CSV_HEADER = ("index", "nonce", "tx_hash")


def _parse_ints(text: str) -> list[int]:
    """``1,2,8`` / ``1..32`` / ``1..4,8`` -> explicit int list."""
    values: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if ".." in token:
            lo, hi = token.split("..", 1)
            if int(lo) > int(hi):
                raise ValueError(f"empty range {token!r}")
            values.extend(range(int(lo), int(hi) + 1))
        elif token:
            values.append(int(token))
    if not values:
        raise ValueError(f"no values in {text!r}")
    return values


def _parse_floats(text: str) -> list[float]:
    values = [float(token) for token in text.split(",") if token.strip()]
    if not values:
        raise ValueError(f"no values in {text!r}")
    return values


def _ints_arg(text: str) -> list[int]:
    try:
        return _parse_ints(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats_arg(text: str) -> list[float]:
    try:
        return _parse_floats(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# -- analysis tables -----------------------------------------------------


def _cmd_analyze_subchain(args) -> int:
    rows = analysis.subchain_rows(args.n, args.k)
    _write_csv(args.out, analysis.SUBCHAIN_HEADER, rows)
    wrote = [f"{len(rows)} affected-fraction rows -> {args.out}"]
    if args.miner_out:
        # occupancy is trivially total with one chain, so the share model
        # starts at two
        chains = [n for n in args.n if n >= 2]
        miner = analysis.miner_rows(chains, [args.nodes_per_chain], args.target_ratio)
        _write_csv(args.miner_out, analysis.MINER_HEADER, miner)
        wrote.append(f"{len(miner)} miner-share rows -> {args.miner_out}")
    print("; ".join(wrote))
    return 0


def _cmd_capacity(args) -> int:
    measured = sim.measure_capacity(
        args.shards,
        args.bw,
        shard_tps=args.shard_tps,
        tx_size=args.tx_size,
        target_seconds=args.target_seconds,
        seed=args.seed,
    )
    base = PerfParams(shard_tps=args.shard_tps, tx_size=args.tx_size)
    rows = []
    worst = 0.0
    for ell, bw, simulated in measured:
        model = capacity(
            dataclasses.replace(base, shard_count=ell, total_bw=bw)
        )
        worst = max(worst, abs(simulated - model) / model)
        rows.append((ell, bw, model, simulated))
    _write_csv(args.out, CAPACITY_CSV_HEADER, rows)
    print(
        f"{len(rows)} capacity points -> {args.out}; "
        f"max deviation from model {worst * 100:.1f}%"
    )
    return 0


def _cmd_intra_bw(args) -> int:
    measured = sim.measure_intra_bw(
        args.shards,
        args.intra_bw,
        shard_tps=args.shard_tps,
        tx_size=args.tx_size,
        tx_out_size=args.tx_out_size,
        target_seconds=args.target_seconds,
        seed=args.seed,
    )
    rows = []
    worst = 0.0
    for ell, bw, simulated_bpt, tps in measured:
        model_bpt = bpt_intra(
            PerfParams(
                block_size=tps * args.target_seconds * args.tx_size,
                tx_size=args.tx_size,
                shard_tps=args.shard_tps,
                shard_count=ell,
                intra_bw=bw,
                tx_out_size=args.tx_out_size,
            )
        )
        worst = max(worst, abs(simulated_bpt - model_bpt) / model_bpt)
        rows.append((ell, bw, model_bpt, simulated_bpt, tps))
    _write_csv(args.out, INTRA_CSV_HEADER, rows)
    print(
        f"{len(rows)} intra-bandwidth points -> {args.out}; "
        f"max processing-time deviation {worst * 100:.1f}%"
    )
    return 0


# -- simulation ----------------------------------------------------------

_SIM_FIELDS = {f.name: f for f in dataclasses.fields(sim.SimConfig)}


def _load_sim_config(path: str, parser: argparse.ArgumentParser) -> dict:
    p = Path(path)
    if not p.exists():
        parser.error(f"config file not found: {path}")
    if p.suffix == ".json":
        raw = json.loads(p.read_text())
        if not isinstance(raw, dict):
            parser.error("JSON config must be a flat object")
    else:
        ini = configparser.ConfigParser()
        ini.read(path)
        if not ini.has_section("simulation"):
            parser.error("INI config needs a [simulation] section")
        raw = dict(ini["simulation"])
    out = {}
    for key, value in raw.items():
        f = _SIM_FIELDS.get(key)
        if f is None:
            parser.error(f"unknown simulation setting {key!r}")
        out[key] = int(value) if isinstance(f.default, int) else float(value)
    return out


def _cmd_simulate(args) -> int:
    settings = _load_sim_config(args.config, args.parser)
    if args.seed is not None:
        settings["seed"] = args.seed
    try:
        cfg = sim.SimConfig(**settings)
    except sim.InvalidConfigError as exc:
        args.parser.error(str(exc))
    metrics = sim.run_simulation(cfg)
    _write_csv(args.out, sim.Metrics.BLOCK_HEADER, metrics.block_rows())
    if args.summary_out:
        _write_csv(
            args.summary_out, sim.Metrics.SUMMARY_HEADER, [metrics.summary_row()]
        )
    print(
        f"{len(metrics.blocks)} blocks -> {args.out}; "
        f"throughput {metrics.throughput_tps:.1f} tx/s "
        f"({metrics.total_txs_confirmed}/{metrics.total_txs_generated} txs), "
        f"{metrics.fork_count} forks, "
        f"propagation p50 {metrics.propagation_p50:.2f}s "
        f"p99 {metrics.propagation_p99:.2f}s"
    )
    return 0


# -- fuzzing ---------------------------------------------------------------


def _cmd_fuzz(args) -> int:
    report = run_fuzz(
        args.iterations,
        args.seed,
        max_txs=args.max_txs,
        shard_counts=args.shard_counts,
        adversarial_rate=args.adversarial_rate,
    )
    if args.out:
        _write_csv(
            args.out,
            FUZZ_CSV_HEADER,
            [
                (
                    report.iterations,
                    report.accepted,
                    report.rejected,
                    len(report.divergences),
                )
            ],
        )
    print(
        f"{report.iterations} iterations, {report.accepted} accepted, "
        f"{report.rejected} rejected, {len(report.divergences)} divergences"
    )
    if not report.ok:
        for line in report.divergences:
            print(f"DIVERGENCE: {line}", file=sys.stderr)
        return 1
    return 0


# -- grinding ----------------------------------------------------------------


def _cmd_grind(args) -> int:
    salts = []
    for lineno, line in enumerate(Path(args.salts).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if len(line) != 64:
            args.parser.error(f"salts file line {lineno}: want 64 hex chars")
        try:
            salts.append(bytes.fromhex(line))
        except ValueError:
            args.parser.error(f"salts file line {lineno}: not hex")
    if not salts:
        args.parser.error("salts file is empty")
    targets = {
        i: GrindTarget(salt, args.shards, args.shard_id)
        for i, salt in enumerate(salts)
    }
    txs, attempts = analysis.grind_transactions(
        targets, args.count, start_nonce=args.start_nonce
    )
    if args.out:
        rows = [
            (i, int.from_bytes(tx.nonce, "little"), tx.tx_hash.hex())
            for i, tx in enumerate(txs)
        ]
        _write_csv(args.out, GRIND_CSV_HEADER, rows)
    model = float(args.shards) ** len(salts)
    print(
        f"ground {len(txs)} txs onto shard {args.shard_id} of {len(salts)} "
        f"peer(s) in {attempts} attempts "
        f"(mean {attempts / len(txs):.2f}/tx, model {model:.2f})"
    )
    return 0


# -- socket-backed node -------------------------------------------------------


def _load_cluster_config(path: str, parser: argparse.ArgumentParser) -> dict:
    p = Path(path)
    if not p.exists():
        parser.error(f"config file not found: {path}")
    if p.suffix == ".json":
        raw = json.loads(p.read_text())
        cluster = raw.get("cluster", {})
        nodes = {int(k): v for k, v in raw.get("nodes", {}).items()}
    else:
        ini = configparser.ConfigParser()
        ini.read(path)
        if not ini.has_section("cluster"):
            parser.error("cluster config needs a [cluster] section")
        cluster = dict(ini["cluster"])
        nodes = {}
        for section in ini.sections():
            if section.startswith("node."):
                nodes[int(section.split(".", 1)[1])] = dict(ini[section])
    if not nodes:
        parser.error("cluster config defines no nodes")
    spec = {
        "shard_count": int(cluster["shard_count"]),
        "genesis": cluster.get("genesis"),
        "nodes": {},
    }
    for node_id, fields in sorted(nodes.items()):
        salt = bytes.fromhex(fields["salt"])
        if len(salt) != 32:
            parser.error(f"node {node_id}: salt must be 64 hex chars")
        spec["nodes"][node_id] = {
            "host": fields.get("host", "127.0.0.1"),
            "base_port": int(fields["base_port"]),
            "salt": salt,
        }
    return spec


def _cluster_directory(spec: dict) -> dict[Address, tuple[str, int]]:
    directory: dict[Address, tuple[str, int]] = {}
    for node_id, node in spec["nodes"].items():
        directory[Address(node_id)] = (node["host"], node["base_port"])
        for s in range(spec["shard_count"]):
            directory[Address(node_id, s)] = (node["host"], node["base_port"] + 1 + s)
    return directory


def _cmd_run_node(args) -> int:
    spec = _load_cluster_config(args.config, args.parser)
    if args.node_id not in spec["nodes"]:
        args.parser.error(f"node {args.node_id} not in cluster config")
    me = spec["nodes"][args.node_id]
    cfg = NodeConfig(
        node_id=args.node_id, shard_count=spec["shard_count"], salt=me["salt"]
    )
    genesis = load_genesis(spec["genesis"]) if spec["genesis"] else None

    if args.role == "shard":
        if args.shard_id is None:
            args.parser.error("--shard-id is required for --role shard")
        part = None
        if genesis is not None:
            part = partition_utxo(genesis, cfg.salt, cfg.shard_count)[args.shard_id]
        actor = Shard(cfg, args.shard_id, part)
        port = me["base_port"] + 1 + args.shard_id
    else:
        if args.shard_id is not None:
            args.parser.error("--shard-id only applies to --role shard")
        actor = Coordinator(cfg)
        port = me["base_port"]

    host = SocketHost(actor, _cluster_directory(spec), host=me["host"], port=port)
    host.start()
    print(
        f"ready role={args.role} node={args.node_id}"
        f" shard={'-' if args.shard_id is None else args.shard_id}"
        f" listening on {host.host}:{host.port}",
        flush=True,
    )

    stop = threading.Event()
    for signum in (signal.SIGINT, signal.SIGTERM):
        signal.signal(signum, lambda *_: stop.set())

    others = [n for n in spec["nodes"] if n != args.node_id]
    try:
        while not stop.is_set():
            if args.role == "coordinator":
                # re-hello every round: peers that boot late miss early
                # frames (sends are fire-and-forget), and each received
                # hello is re-forwarded to the local shards, so repetition
                # repairs any startup-order gap
                msg = host.call(lambda c: c.hello())
                for node_id in others:
                    host.post(Address(node_id), msg)
            stop.wait(1.0)
    finally:
        if args.role == "coordinator":
            peers, chain = host.call(lambda c: (len(c.peers), len(c.main_chain)))
            summary = f"peers={peers} chain={chain}"
        else:
            peers, utxos = host.call(lambda s: (len(s.peers), len(s.utxo)))
            summary = f"peers={peers} utxo={utxos}"
        host.stop()
        print(f"done role={args.role} node={args.node_id} {summary}", flush=True)
    return 0


# -- wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shardnode",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "analyze-subchain",
        help="partition-hit probability table, optionally with miner shares",
    )
    p.add_argument("--n", type=_ints_arg, default=list(range(1, 33)),
                   help="chain counts, e.g. 1..32")
    p.add_argument("--k", type=_ints_arg, default=list(range(1, 6)),
                   help="input counts, e.g. 1..5")
    p.add_argument("--nodes-per-chain", type=int, default=300)
    p.add_argument("--target-ratio", type=float, default=0.9)
    p.add_argument("--out", required=True, help="CSV path for hit fractions")
    p.add_argument("--miner-out", help="CSV path for miner-share rows")
    p.set_defaults(func=_cmd_analyze_subchain)

    p = sub.add_parser("capacity", help="single-hop capacity: model vs simulation")
    p.add_argument("--shards", type=_ints_arg, default=[1, 2, 4, 8])
    p.add_argument("--bw", type=_floats_arg, default=[40e6, 160e6, math.inf],
                   help="per-node bandwidths in bit/s; inf allowed")
    p.add_argument("--shard-tps", type=float, default=1700.0)
    p.add_argument("--tx-size", type=float, default=250.0)
    p.add_argument("--target-seconds", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_capacity)

    p = sub.add_parser(
        "intra-bw", help="shard-interconnect sweep: processing time and throughput"
    )
    p.add_argument("--shards", type=_ints_arg, default=[1, 2, 4, 8])
    p.add_argument("--intra-bw", type=_floats_arg,
                   default=[256e3, 1e6, 5e6, math.inf],
                   help="per-shard link bandwidths in bit/s; inf allowed")
    p.add_argument("--shard-tps", type=float, default=1700.0)
    p.add_argument("--tx-size", type=float, default=250.0)
    p.add_argument("--tx-out-size", type=float, default=152.0)
    p.add_argument("--target-seconds", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_intra_bw)

    p = sub.add_parser("simulate", help="run the gossip network simulation")
    p.add_argument("--config", required=True,
                   help="INI [simulation] section or flat JSON object")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="per-block CSV path")
    p.add_argument("--summary-out", help="one-row summary CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser(
        "fuzz-equivalence",
        help="random blocks through all three validators; fails on divergence",
    )
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-txs", type=int, default=60)
    p.add_argument("--shard-counts", type=_ints_arg, default=[1, 2, 3, 4, 8])
    p.add_argument("--adversarial-rate", type=float, default=0.3)
    p.add_argument("--out", help="optional one-row summary CSV")
    p.set_defaults(func=_cmd_fuzz)

    p = sub.add_parser(
        "grind", help="mine transactions onto one shard of salted peers"
    )
    p.add_argument("--salts", required=True,
                   help="file with one 64-hex-char salt per line")
    p.add_argument("--shards", type=int, required=True,
                   help="shard count of the targeted nodes")
    p.add_argument("--shard-id", type=int, default=0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--start-nonce", type=int, default=0)
    p.add_argument("--out", help="optional CSV of (index, nonce, tx_hash)")
    p.set_defaults(func=_cmd_grind)

    p = sub.add_parser(
        "run-node", help="serve one coordinator or shard over TCP"
    )
    p.add_argument("--role", choices=("coordinator", "shard"), required=True)
    p.add_argument("--config", required=True, help="cluster config file")
    p.add_argument("--node-id", type=int, required=True)
    p.add_argument("--shard-id", type=int)
    p.set_defaults(func=_cmd_run_node)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
