"""TCP transport running the node state machines over real sockets.

Connections are one-directional message pipes.  A dialing endpoint first
sends a 12-byte envelope naming its own address -- node id as a
little-endian u64, then shard id as a little-endian u32 (``0xFFFFFFFF``
for a coordinator) -- and from then on nothing but framed messages.  The
receiving side stamps every decoded message with the enveloped address
and hands it to its actor, so :class:`~shardnode.node.Coordinator` and
:class:`~shardnode.node.Shard` run unmodified over sockets or the
in-process router.

One :class:`SocketHost` owns one actor: a listener thread accepts inbound
pipes, a reader thread per pipe feeds a single work queue, and one
consumer thread applies messages to the actor and flushes its outbox,
dialing destinations lazily from a shared address directory.  The actor
itself therefore stays single-threaded; ``call`` is the only way other
threads may touch it.
"""
from __future__ import annotations

import queue
import socket
import struct
import threading
from typing import Callable, MutableMapping

from .node import Address
from .wire import Message, encode_message, read_message

_NO_SHARD = 0xFFFFFFFF
ENVELOPE = struct.Struct("<QI")

Directory = MutableMapping[Address, tuple[str, int]]


def encode_envelope(addr: Address) -> bytes:
    shard = _NO_SHARD if addr.shard_id is None else addr.shard_id
    return ENVELOPE.pack(addr.node_id, shard)


def decode_envelope(raw: bytes) -> Address:
    node_id, shard = ENVELOPE.unpack(raw)
    return Address(node_id, None if shard == _NO_SHARD else shard)


# Blocked recv/accept calls on Linux do not wake when another thread closes
# the socket, so every blocking call runs with this timeout and loops on a
# stop flag instead.
_POLL_INTERVAL = 0.25


def _recv_exact(sock: socket.socket, n: int, stopping: threading.Event) -> bytes | None:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout:
            if stopping.is_set():
                return None
            continue
        if not chunk:
            return None
        buf += chunk
    return buf


def _shutdown(sock: socket.socket) -> None:
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass


class SocketHost:
    """Serves one coordinator or shard behind a listening TCP socket."""

    def __init__(
        self,
        actor,
        directory: Directory,
        host: str = "127.0.0.1",
        port: int = 0,
    ) -> None:
        self.actor = actor
        self.directory = directory
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(_POLL_INTERVAL)
        self.host, self.port = self._listener.getsockname()
        self._inbox: queue.Queue = queue.Queue()
        self._outbound: dict[Address, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._readers: list[socket.socket] = []
        self._lock = threading.Lock()
        self._stopping = threading.Event()

    # -- lifecycle ------------------------------------------------------

    def start(self) -> "SocketHost":
        self.directory.setdefault(self.actor.address, (self.host, self.port))
        for target, name in (
            (self._accept_loop, "accept"),
            (self._consume_loop, "consume"),
        ):
            t = threading.Thread(
                target=target, name=f"{name}@{self.actor.address}", daemon=True
            )
            t.start()
            self._threads.append(t)
        return self

    def stop(self, timeout: float = 5.0) -> None:
        self._stopping.set()
        self._inbox.put(None)
        _shutdown(self._listener)
        with self._lock:
            sockets = self._readers + list(self._outbound.values())
            self._outbound.clear()
            self._readers.clear()
        for s in sockets:
            _shutdown(s)
        for t in self._threads:
            t.join(timeout)

    # -- cross-thread access to the actor -------------------------------

    def call(self, fn: Callable):
        """Run ``fn(actor)`` on the consumer thread and return its result."""
        done = threading.Event()
        box: list = [None, None]

        def job():
            try:
                box[0] = fn(self.actor)
            except Exception as exc:  # surfaced to the caller
                box[1] = exc
            done.set()

        self._inbox.put(job)
        if not done.wait(timeout=30.0):
            raise TimeoutError("actor thread did not pick up the call")
        if box[1] is not None:
            raise box[1]
        return box[0]

    def post(self, dst: Address, msg: Message) -> None:
        """Queue one message from this actor to ``dst`` and flush."""
        self.call(lambda actor: actor.outbox.append((dst, msg)))

    # -- threads ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(_POLL_INTERVAL)
            with self._lock:
                self._readers.append(conn)
            t = threading.Thread(
                target=self._read_loop,
                args=(conn,),
                name=f"read@{self.actor.address}",
                daemon=True,
            )
            t.start()
            self._threads.append(t)

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            raw = _recv_exact(conn, ENVELOPE.size, self._stopping)
            if raw is None:
                return
            sender = decode_envelope(raw)
            buf = b""
            offset = 0
            while not self._stopping.is_set():
                msg, offset = read_message(buf, offset)
                if msg is not None:
                    self._inbox.put((sender, msg))
                    continue
                buf = buf[offset:]
                offset = 0
                try:
                    chunk = conn.recv(65536)
                except socket.timeout:
                    continue
                if not chunk:
                    return
                buf += chunk
        except (OSError, ValueError):
            return  # connection torn down or garbled; drop the pipe
        finally:
            _shutdown(conn)

    def _consume_loop(self) -> None:
        while True:
            item = self._inbox.get()
            if item is None:
                return
            if callable(item):
                item()
            else:
                sender, msg = item
                self.actor.handle(sender, msg)
            self._flush_outbox()

    def _flush_outbox(self) -> None:
        for dst, msg in self.actor.outbox:
            try:
                self._dial(dst).sendall(encode_message(msg))
            except (OSError, KeyError):
                self._outbound.pop(dst, None)  # happy path: drop on failure
        self.actor.outbox.clear()

    def _dial(self, dst: Address) -> socket.socket:
        sock = self._outbound.get(dst)
        if sock is not None:
            return sock
        host, port = self.directory[dst]
        sock = socket.create_connection((host, port), timeout=10.0)
        sock.sendall(encode_envelope(self.actor.address))
        self._outbound[dst] = sock
        return sock


def host_node(coordinator, shards, directory: Directory) -> list[SocketHost]:
    """Put one node's coordinator and shards each behind its own socket."""
    hosts = [SocketHost(coordinator, directory)] + [
        SocketHost(shard, directory) for shard in shards
    ]
    for h in hosts:
        h.directory.setdefault(h.actor.address, (h.host, h.port))
    for h in hosts:
        h.start()
    return hosts
